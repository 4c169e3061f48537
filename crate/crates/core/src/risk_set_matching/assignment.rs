//! Minimum-cost bipartite assignment for the per-year matching step.
//!
//! The solver is the shortest-augmenting-path algorithm with dual potentials
//! (Jonker-Volgenant), followed by a canonicalization pass that picks the
//! lexicographically smallest optimal assignment by (row, column) so that
//! matching output is reproducible across runs and tie configurations.

use crate::error::{Error, Result};

/// Relative tolerance for treating two assignment totals as equal cost.
const COST_TOL: f64 = 1e-9;

/// Result of one year's assignment: matched `(row, column, cost)` triples
/// plus the rows left unmatched when controls run out.
#[derive(Debug, Clone, PartialEq)]
pub struct YearAssignment {
    pub pairs: Vec<(usize, usize, f64)>,
    pub unmatched_rows: Vec<usize>,
}

/// Solves the rectangular assignment problem for `cost` (rows are treated
/// women, columns are controls). Every row is matched to a distinct column
/// when `rows <= cols`; otherwise the excess rows with the largest
/// row-minimum costs are reported unmatched (ties dropped from the highest
/// row index down). Among minimum-total-cost assignments the
/// lexicographically smallest one by (row, column) is returned.
pub fn assign_min_cost(cost: &[Vec<f64>]) -> Result<YearAssignment> {
    let n_rows = cost.len();
    let n_cols = cost.first().map_or(0, |r| r.len());
    if n_cols == 0 {
        return Ok(YearAssignment {
            pairs: Vec::new(),
            unmatched_rows: (0..n_rows).collect(),
        });
    }
    for (i, row) in cost.iter().enumerate() {
        if row.len() != n_cols {
            return Err(Error::Validation(format!(
                "cost matrix row {i} has {} entries, expected {n_cols}",
                row.len()
            )));
        }
        if let Some(bad) = row.iter().find(|c| !c.is_finite()) {
            return Err(Error::Validation(format!(
                "non-finite cost {bad} in row {i}"
            )));
        }
    }

    // keep the rows with the smallest row minima when controls are scarce
    let mut kept: Vec<usize> = (0..n_rows).collect();
    let mut unmatched = Vec::new();
    if n_rows > n_cols {
        let row_min = |r: usize| cost[r].iter().cloned().fold(f64::INFINITY, f64::min);
        let mut order: Vec<usize> = (0..n_rows).collect();
        order.sort_by(|&a, &b| row_min(a).partial_cmp(&row_min(b)).unwrap().then(a.cmp(&b)));
        unmatched = order.split_off(n_cols);
        unmatched.sort_unstable();
        order.sort_unstable();
        kept = order;
    }

    let sub: Vec<&[f64]> = kept.iter().map(|&r| cost[r].as_slice()).collect();
    let assigned = lexicographic_min_assignment(&sub);
    let pairs = kept
        .iter()
        .zip(&assigned)
        .map(|(&r, &c)| (r, c, cost[r][c]))
        .collect();
    Ok(YearAssignment {
        pairs,
        unmatched_rows: unmatched,
    })
}

/// Total cost of assigning row i to column `assigned[i]`.
fn assignment_total(cost: &[&[f64]], assigned: &[usize]) -> f64 {
    assigned.iter().enumerate().map(|(r, &c)| cost[r][c]).sum()
}

/// Lexicographically smallest minimum-cost assignment: rows are fixed in
/// order, and each row takes the lowest column index that still permits an
/// optimal completion of the remaining rows.
fn lexicographic_min_assignment(cost: &[&[f64]]) -> Vec<usize> {
    let n_rows = cost.len();
    let n_cols = cost[0].len();
    let base = shortest_augmenting_path(cost);
    let mut target = assignment_total(cost, &base);
    let tol = COST_TOL * (1.0 + target.abs());

    let mut result = vec![usize::MAX; n_rows];
    let mut used = vec![false; n_cols];
    for r in 0..n_rows {
        let mut chosen = None;
        for j in 0..n_cols {
            if used[j] {
                continue;
            }
            let completion = if r + 1 == n_rows {
                0.0
            } else {
                let mut col_map = Vec::with_capacity(n_cols - 1);
                for (col, &used_col) in used.iter().enumerate() {
                    if !used_col && col != j {
                        col_map.push(col);
                    }
                }
                let sub: Vec<Vec<f64>> = (r + 1..n_rows)
                    .map(|row| col_map.iter().map(|&col| cost[row][col]).collect())
                    .collect();
                let sub_refs: Vec<&[f64]> = sub.iter().map(|v| v.as_slice()).collect();
                let sub_assigned = shortest_augmenting_path(&sub_refs);
                assignment_total(&sub_refs, &sub_assigned)
            };
            if cost[r][j] + completion <= target + tol {
                chosen = Some(j);
                target = completion;
                break;
            }
        }
        let j = chosen.expect("an optimal column always exists");
        result[r] = j;
        used[j] = true;
    }
    result
}

/// Shortest-augmenting-path assignment with dual potentials; requires
/// `rows <= cols` and finite costs. Returns the column matched to each row.
fn shortest_augmenting_path(cost: &[&[f64]]) -> Vec<usize> {
    let n_rows = cost.len();
    let n_cols = cost[0].len();
    debug_assert!(n_rows <= n_cols);

    let mut u = vec![0.0f64; n_rows];
    let mut v = vec![0.0f64; n_cols];
    let mut col_of_row = vec![usize::MAX; n_rows];
    let mut row_of_col = vec![usize::MAX; n_cols];

    for cur_row in 0..n_rows {
        let mut min_val = 0.0f64;
        let mut i = cur_row;
        let mut scanned_rows = vec![false; n_rows];
        let mut scanned_cols = vec![false; n_cols];
        let mut path_costs = vec![f64::INFINITY; n_cols];
        let mut predecessor = vec![usize::MAX; n_cols];
        let sink;
        loop {
            scanned_rows[i] = true;
            let mut lowest = f64::INFINITY;
            let mut index = usize::MAX;
            for j in 0..n_cols {
                if scanned_cols[j] {
                    continue;
                }
                let reduced = min_val + cost[i][j] - u[i] - v[j];
                if reduced < path_costs[j] {
                    predecessor[j] = i;
                    path_costs[j] = reduced;
                }
                // prefer an unassigned column on ties so augmenting ends early
                if path_costs[j] < lowest
                    || (path_costs[j] == lowest && row_of_col[j] == usize::MAX)
                {
                    lowest = path_costs[j];
                    index = j;
                }
            }
            min_val = lowest;
            let j = index;
            scanned_cols[j] = true;
            if row_of_col[j] == usize::MAX {
                sink = j;
                break;
            }
            i = row_of_col[j];
        }

        u[cur_row] += min_val;
        for (row, &scanned) in scanned_rows.iter().enumerate() {
            if scanned && row != cur_row {
                u[row] += min_val - path_costs[col_of_row[row]];
            }
        }
        for (col, &scanned) in scanned_cols.iter().enumerate() {
            if scanned {
                v[col] -= min_val - path_costs[col];
            }
        }

        // augment along the found path
        let mut j = sink;
        loop {
            let i = predecessor[j];
            row_of_col[j] = i;
            std::mem::swap(&mut col_of_row[i], &mut j);
            if i == cur_row {
                break;
            }
        }
    }
    col_of_row
}
