//! Rank-based robust Mahalanobis distance and the propensity-score caliper
//! penalty.
//!
//! Covariate columns are replaced by their average ranks, the rank covariance
//! matrix is pre- and post-multiplied by the diagonal of untied-to-tied rank
//! standard-deviation ratios, and distances are (squared) Mahalanobis on the
//! ranks under the adjusted covariance. Ranking caps the influence any single
//! outlying observation can exert on the metric.

use crate::error::{Error, Result};
use crate::ranks::average_ranks;
use nalgebra::DMatrix;

/// Base ridge added to a singular adjusted covariance, scaled by
/// trace / dimension.
const RIDGE: f64 = 1e-8;

/// Pairwise distance function over the rows the metric was built from.
#[derive(Debug, Clone)]
pub struct RobustMahalanobis {
    ranks: Vec<Vec<f64>>,
    inv_cov: DMatrix<f64>,
}

/// Builds the robust distance over `rows` (observations x covariates).
/// Requires at least 2 rows and 1 column.
pub fn robust_mahalanobis(rows: &[Vec<f64>]) -> Result<RobustMahalanobis> {
    let n = rows.len();
    if n < 2 {
        return Err(Error::InvalidParameter(format!(
            "robust distance needs at least 2 rows, got {n}"
        )));
    }
    let p = rows[0].len();
    if p == 0 {
        return Err(Error::InvalidParameter(
            "robust distance needs at least 1 covariate column".into(),
        ));
    }
    for (i, row) in rows.iter().enumerate() {
        if row.len() != p {
            return Err(Error::Validation(format!(
                "covariate row {i} has {} entries, expected {p}",
                row.len()
            )));
        }
        if let Some(bad) = row.iter().find(|x| !x.is_finite()) {
            return Err(Error::Validation(format!(
                "non-finite covariate {bad} in row {i}"
            )));
        }
    }

    // rank each column over all rows
    let mut rank_cols: Vec<Vec<f64>> = Vec::with_capacity(p);
    for j in 0..p {
        let col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
        rank_cols.push(average_ranks(&col));
    }

    let means: Vec<f64> = rank_cols
        .iter()
        .map(|c| c.iter().sum::<f64>() / n as f64)
        .collect();
    let mut cov = DMatrix::zeros(p, p);
    for a in 0..p {
        for b in a..p {
            let s: f64 = (0..n)
                .map(|i| (rank_cols[a][i] - means[a]) * (rank_cols[b][i] - means[b]))
                .sum();
            let value = s / (n - 1) as f64;
            cov[(a, b)] = value;
            cov[(b, a)] = value;
        }
    }

    // sample variance of untied ranks 1..n is n(n+1)/12
    let var_untied = (n * (n + 1)) as f64 / 12.0;
    let ratios: Vec<f64> = (0..p)
        .map(|j| {
            let var_tied = cov[(j, j)];
            if var_tied > 0.0 {
                (var_untied / var_tied).sqrt()
            } else {
                1.0 // fully tied column: its rank differences are all zero
            }
        })
        .collect();
    for a in 0..p {
        for b in 0..p {
            cov[(a, b)] *= ratios[a] * ratios[b];
        }
    }

    let inv_cov = invert_with_ridge(cov)?;
    let ranks: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..p).map(|j| rank_cols[j][i]).collect())
        .collect();
    Ok(RobustMahalanobis { ranks, inv_cov })
}

fn invert_with_ridge(mut cov: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let p = cov.nrows();
    if let Some(chol) = cov.clone().cholesky() {
        return Ok(chol.inverse());
    }
    let trace: f64 = cov.trace();
    if trace <= 0.0 {
        // all-constant covariates: every rank difference is zero, so any
        // positive-definite matrix yields the same (zero) distances
        return Ok(DMatrix::identity(p, p));
    }
    let mut ridge = RIDGE * trace / p as f64;
    for _ in 0..8 {
        let mut bumped = cov.clone();
        for j in 0..p {
            bumped[(j, j)] += ridge;
        }
        if let Some(chol) = bumped.clone().cholesky() {
            return Ok(chol.inverse());
        }
        ridge *= 10.0;
        cov = bumped;
    }
    Err(Error::Validation(
        "adjusted rank covariance could not be inverted even with a ridge".into(),
    ))
}

impl RobustMahalanobis {
    pub fn n_rows(&self) -> usize {
        self.ranks.len()
    }

    /// Squared Mahalanobis distance between rows `i` and `j` on the adjusted
    /// rank scale. Clamped at zero against rounding.
    pub fn distance(&self, i: usize, j: usize) -> f64 {
        let p = self.inv_cov.nrows();
        let mut quad = 0.0;
        for a in 0..p {
            let da = self.ranks[i][a] - self.ranks[j][a];
            if da == 0.0 {
                continue;
            }
            for b in 0..p {
                let db = self.ranks[i][b] - self.ranks[j][b];
                quad += da * self.inv_cov[(a, b)] * db;
            }
        }
        quad.max(0.0)
    }
}

/// Penalty added to the distance when two propensity scores are further
/// apart than the caliper `w`: 1000 * max(0, |score_l - score_k| - w).
pub fn caliper_penalty(score_l: f64, score_k: f64, w: f64) -> f64 {
    1000.0 * ((score_l - score_k).abs() - w).max(0.0)
}

/// Caliper width: 50% of the pooled within-group standard deviation of the
/// propensity scores, sqrt((s2_treated + s2_control) / 2). Groups with fewer
/// than two members contribute zero variance.
pub fn pooled_sd_caliper(treated_scores: &[f64], control_scores: &[f64]) -> f64 {
    0.5 * ((sample_var(treated_scores) + sample_var(control_scores)) / 2.0).sqrt()
}

fn sample_var(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_rows_have_zero_distance() {
        let rows = vec![vec![1.0, 5.0], vec![1.0, 5.0], vec![2.0, 3.0]];
        let md = robust_mahalanobis(&rows).unwrap();
        assert_eq!(md.distance(0, 1), 0.0);
        assert!(md.distance(0, 2) > 0.0);
    }

    #[test]
    fn invariant_under_monotone_transforms() {
        let raw: Vec<Vec<f64>> = vec![
            vec![0.3, 12.0],
            vec![1.8, 3.0],
            vec![0.9, 44.0],
            vec![2.4, 27.0],
        ];
        // x -> exp(x) on column 0, x -> x^3 on column 1: ranks unchanged
        let transformed: Vec<Vec<f64>> =
            raw.iter().map(|r| vec![r[0].exp(), r[1].powi(3)]).collect();
        let a = robust_mahalanobis(&raw).unwrap();
        let b = robust_mahalanobis(&transformed).unwrap();
        for i in 0..raw.len() {
            for j in 0..raw.len() {
                assert_eq!(a.distance(i, j), b.distance(i, j));
            }
        }
    }

    #[test]
    fn outlier_barely_moves_other_distances() {
        let mut rows = vec![
            vec![0.1, 4.0],
            vec![0.5, 2.0],
            vec![0.9, 7.0],
            vec![1.3, 5.0],
            vec![1.7, 6.0],
        ];
        let before = robust_mahalanobis(&rows).unwrap();
        let d_before = before.distance(0, 1);
        // inflate the last row's first covariate a million-fold: its rank
        // does not change, so other pairwise distances are untouched
        rows[4][0] *= 1e6;
        let after = robust_mahalanobis(&rows).unwrap();
        let d_after = after.distance(0, 1);
        assert!(((d_after - d_before) / d_before).abs() < 1e-9);
    }

    #[test]
    fn constant_column_is_ignored() {
        let rows = vec![vec![1.0, 7.0], vec![2.0, 7.0], vec![3.0, 7.0]];
        let md = robust_mahalanobis(&rows).unwrap();
        // distances come from the first column only and stay finite
        assert!(md.distance(0, 1).is_finite());
        assert!(md.distance(0, 2) > md.distance(0, 1));
    }

    #[test]
    fn duplicated_column_handled_by_ridge() {
        let rows = vec![
            vec![1.0, 1.0],
            vec![2.0, 2.0],
            vec![3.0, 3.0],
            vec![4.0, 4.0],
        ];
        let md = robust_mahalanobis(&rows).unwrap();
        assert!(md.distance(0, 3).is_finite());
        assert!(md.distance(0, 3) > 0.0);
    }

    #[test]
    fn too_few_rows_rejected() {
        assert!(robust_mahalanobis(&[vec![1.0]]).is_err());
        assert!(robust_mahalanobis(&[]).is_err());
    }

    #[test]
    fn caliper_penalty_plug_in() {
        assert!((caliper_penalty(0.5, 0.2, 0.1) - 200.0).abs() < 1e-9);
        assert_eq!(caliper_penalty(0.5, 0.45, 0.1), 0.0);
        assert!((caliper_penalty(0.2, 0.5, 0.1) - 200.0).abs() < 1e-9);
    }

    #[test]
    fn caliper_width_is_half_pooled_sd() {
        let treated = [1.0, 2.0, 3.0];
        let control = [2.0, 4.0, 6.0, 8.0];
        let s2t = 1.0;
        let s2c = 20.0 / 3.0;
        let expected = 0.5 * ((s2t + s2c) / 2.0f64).sqrt();
        assert!((pooled_sd_caliper(&treated, &control) - expected).abs() < 1e-12);
        // singleton group contributes zero variance
        assert_eq!(pooled_sd_caliper(&[1.0], &[1.0]), 0.0);
    }
}
