//! Time-dependent Cox proportional-hazards fitting by Newton maximization of
//! the Breslow partial likelihood.
//!
//! The hazard model is h_m(t) = h0(t) * exp(beta' X_m(t)). Event time is the
//! year of a subject's first event; the risk set at an event year holds every
//! subject whose covariates are observed that year and whose own event (if
//! any) has not yet occurred. The baseline hazard h0 cancels from the partial
//! likelihood and is not estimated.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

const GRADIENT_TOL: f64 = 1e-8;
const MAX_ITERATIONS: usize = 50;
const MAX_STEP_HALVINGS: usize = 30;

/// One cohort member prepared for hazard fitting: covariate vectors per
/// observed year and the year of the first event, if one occurred.
#[derive(Debug, Clone)]
pub struct CoxSubject {
    pub trajectories: std::collections::BTreeMap<i32, Vec<f64>>,
    pub event_year: Option<i32>,
}

/// Fitted coefficients of the proportional-hazards model.
#[derive(Debug, Clone)]
pub struct CoxModel {
    pub beta: Vec<f64>,
    pub iterations: usize,
    pub loglik: f64,
}

impl CoxModel {
    /// Fitted propensity score beta' x.
    pub fn linear_predictor(&self, covariates: &[f64]) -> f64 {
        self.beta.iter().zip(covariates).map(|(b, x)| b * x).sum()
    }
}

/// Risk-set evaluation of one event year, with covariates restricted to the
/// free (non-constant) columns.
struct EventBlock {
    /// covariate vectors of everyone at risk that year
    at_risk: Vec<Vec<f64>>,
    /// indices into `at_risk` of the subjects whose event is that year
    events: Vec<usize>,
}

/// Maximizes the Breslow partial likelihood with time-varying covariates.
///
/// Covariate columns that are constant within every risk set cancel from the
/// likelihood and are pinned at coefficient zero; a design that is collinear
/// among the remaining columns yields a singular information error.
pub fn fit_time_dependent_cox(subjects: &[CoxSubject]) -> Result<CoxModel> {
    let n_events = subjects.iter().filter(|s| s.event_year.is_some()).count();
    if n_events == 0 {
        return Err(Error::EmptyInput("cox fit requires at least one event"));
    }
    let p_full = subjects
        .iter()
        .flat_map(|s| s.trajectories.values())
        .map(|x| x.len())
        .next()
        .ok_or(Error::EmptyInput("cox fit requires covariate trajectories"))?;
    for (i, s) in subjects.iter().enumerate() {
        for (year, x) in &s.trajectories {
            if x.len() != p_full {
                return Err(Error::Validation(format!(
                    "subject {i} has {} covariates at year {year}, expected {p_full}",
                    x.len()
                )));
            }
            if let Some(bad) = x.iter().find(|v| !v.is_finite()) {
                return Err(Error::Validation(format!(
                    "non-finite covariate {bad} for subject {i} at year {year}"
                )));
            }
        }
    }

    let mut event_years: Vec<i32> = subjects.iter().filter_map(|s| s.event_year).collect();
    event_years.sort_unstable();
    event_years.dedup();

    // assemble risk sets per event year over the full covariate space
    let mut full_blocks = Vec::with_capacity(event_years.len());
    for &year in &event_years {
        let mut at_risk = Vec::new();
        let mut events = Vec::new();
        for (i, s) in subjects.iter().enumerate() {
            let still_at_risk = s.event_year.is_none_or(|e| e >= year);
            if !still_at_risk {
                continue;
            }
            let Some(x) = s.trajectories.get(&year) else {
                if s.event_year == Some(year) {
                    return Err(Error::Validation(format!(
                        "subject {i} has an event at year {year} but no covariates that year"
                    )));
                }
                continue;
            };
            if s.event_year == Some(year) {
                events.push(at_risk.len());
            }
            at_risk.push(x.clone());
        }
        if !events.is_empty() {
            full_blocks.push(EventBlock { at_risk, events });
        }
    }
    if full_blocks.is_empty() {
        return Err(Error::EmptyInput("no event year has usable covariates"));
    }

    // pin covariates that are constant within every risk set (for example a
    // covariate that is identically zero, or one that tracks calendar time in
    // a same-age cohort): such a column factors out of every risk-set ratio,
    // the likelihood is exactly flat in it, and its coefficient is zero
    let mut free_cols = Vec::new();
    for j in 0..p_full {
        let varies_within_a_block = full_blocks.iter().any(|b| {
            let first = b.at_risk[0][j];
            b.at_risk.iter().any(|x| x[j] != first)
        });
        if varies_within_a_block {
            free_cols.push(j);
        }
    }
    let p = free_cols.len();
    if p == 0 {
        // every covariate is constant; any beta gives the same likelihood
        let blocks = project_blocks(&full_blocks, &free_cols);
        let loglik = partial_loglik_stats(&blocks, &DVector::zeros(0)).0;
        return Ok(CoxModel {
            beta: vec![0.0; p_full],
            iterations: 0,
            loglik,
        });
    }
    let blocks = project_blocks(&full_blocks, &free_cols);

    // Newton with step halving on likelihood decrease
    let mut beta: DVector<f64> = DVector::zeros(p);
    let (mut loglik, mut grad, mut info) = full_stats(&blocks, &beta);
    let mut trace = vec![loglik];
    for iteration in 1..=MAX_ITERATIONS {
        let grad_norm = grad.amax();
        if grad_norm < GRADIENT_TOL {
            let mut full_beta = vec![0.0; p_full];
            for (slot, &col) in free_cols.iter().enumerate() {
                full_beta[col] = beta[slot];
            }
            return Ok(CoxModel {
                beta: full_beta,
                iterations: iteration - 1,
                loglik,
            });
        }
        let chol = info.clone().cholesky().ok_or_else(|| {
            Error::SingularInformation(format!(
                "information matrix is not positive definite at iteration {iteration}"
            ))
        })?;
        let direction = chol.solve(&grad);
        let mut step = 1.0;
        let mut halvings = 0;
        loop {
            let candidate = &beta + step * &direction;
            let (cand_loglik, cand_grad, cand_info) = full_stats(&blocks, &candidate);
            if cand_loglik.is_finite() && cand_loglik >= loglik - 1e-12 {
                beta = candidate;
                loglik = cand_loglik;
                grad = cand_grad;
                info = cand_info;
                break;
            }
            halvings += 1;
            if halvings > MAX_STEP_HALVINGS {
                return Err(Error::NonConvergence {
                    iterations: iteration,
                    grad_norm,
                    trace,
                });
            }
            step /= 2.0;
        }
        trace.push(loglik);
    }
    Err(Error::NonConvergence {
        iterations: MAX_ITERATIONS,
        grad_norm: grad.amax(),
        trace,
    })
}

fn project_blocks(blocks: &[EventBlock], free_cols: &[usize]) -> Vec<EventBlock> {
    blocks
        .iter()
        .map(|b| EventBlock {
            at_risk: b
                .at_risk
                .iter()
                .map(|x| free_cols.iter().map(|&j| x[j]).collect())
                .collect(),
            events: b.events.clone(),
        })
        .collect()
}

/// Log partial likelihood only (used when no free columns remain).
fn partial_loglik_stats(blocks: &[EventBlock], beta: &DVector<f64>) -> (f64,) {
    let (ll, _, _) = full_stats(blocks, beta);
    (ll,)
}

/// Breslow log partial likelihood, gradient, and observed information.
/// Risk-set sums are centered on the maximum linear predictor so the
/// exponentials cannot overflow.
fn full_stats(blocks: &[EventBlock], beta: &DVector<f64>) -> (f64, DVector<f64>, DMatrix<f64>) {
    let p = beta.len();
    let mut loglik = 0.0;
    let mut grad: DVector<f64> = DVector::zeros(p);
    let mut info: DMatrix<f64> = DMatrix::zeros(p, p);

    for block in blocks {
        let lp: Vec<f64> = block
            .at_risk
            .iter()
            .map(|x| x.iter().zip(beta.iter()).map(|(xi, bi)| xi * bi).sum())
            .collect();
        let max_lp = lp.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = lp.iter().map(|v| (v - max_lp).exp()).collect();
        let sum_w: f64 = weights.iter().sum();

        let mut mean: DVector<f64> = DVector::zeros(p);
        for (x, &w) in block.at_risk.iter().zip(&weights) {
            for a in 0..p {
                mean[a] += w * x[a];
            }
        }
        mean /= sum_w;

        let mut second: DMatrix<f64> = DMatrix::zeros(p, p);
        for (x, &w) in block.at_risk.iter().zip(&weights) {
            let w_norm = w / sum_w;
            for a in 0..p {
                for b in a..p {
                    second[(a, b)] += w_norm * x[a] * x[b];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                second[(a, b)] = second[(b, a)];
            }
        }

        let d = block.events.len() as f64;
        loglik -= d * (max_lp + sum_w.ln());
        for &e in &block.events {
            loglik += lp[e];
            for a in 0..p {
                grad[a] += block.at_risk[e][a];
            }
        }
        for a in 0..p {
            grad[a] -= d * mean[a];
            for b in 0..p {
                info[(a, b)] += d * (second[(a, b)] - mean[a] * mean[b]);
            }
        }
    }
    (loglik, grad, info)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    /// Subject observed every year from `start` with a fixed covariate
    /// vector, optionally having its first event in `event`.
    fn subject(
        x: Vec<f64>,
        years: std::ops::RangeInclusive<i32>,
        event: Option<i32>,
    ) -> CoxSubject {
        let trajectories: BTreeMap<i32, Vec<f64>> = years.map(|y| (y, x.clone())).collect();
        CoxSubject {
            trajectories,
            event_year: event,
        }
    }

    fn binary_cohort() -> Vec<CoxSubject> {
        // 40 subjects, single binary covariate; carriers get earlier events
        let mut subjects = Vec::new();
        for i in 0..40 {
            let exposed = i % 2 == 0;
            let x = vec![if exposed { 1.0 } else { 0.0 }];
            let event = match i % 8 {
                0 => Some(1958 + (i / 8)),
                2 => Some(1961 + (i / 8)),
                4 if exposed => Some(1964),
                1 | 5 => Some(1966 + (i / 10)),
                _ => None,
            };
            subjects.push(subject(x, 1955..=1975, event));
        }
        subjects
    }

    /// Independent likelihood evaluator for the 1-D oracle: a direct
    /// transcription of the Breslow formula with no shared code.
    fn loglik_1d(subjects: &[CoxSubject], beta: f64) -> f64 {
        let mut years: Vec<i32> = subjects.iter().filter_map(|s| s.event_year).collect();
        years.sort_unstable();
        years.dedup();
        let mut ll = 0.0;
        for &t in &years {
            let mut denom = 0.0;
            let mut d = 0;
            let mut event_lp = 0.0;
            for s in subjects {
                if s.event_year.is_none_or(|e| e >= t) {
                    if let Some(x) = s.trajectories.get(&t) {
                        denom += (beta * x[0]).exp();
                        if s.event_year == Some(t) {
                            d += 1;
                            event_lp += beta * x[0];
                        }
                    }
                }
            }
            ll += event_lp - d as f64 * denom.ln();
        }
        ll
    }

    #[test]
    fn single_covariate_matches_grid_scan() {
        let subjects = binary_cohort();
        let model = fit_time_dependent_cox(&subjects).unwrap();

        // golden-section search over the same partial likelihood
        let (mut lo, mut hi) = (-5.0, 5.0);
        let phi = (5.0f64.sqrt() - 1.0) / 2.0;
        for _ in 0..200 {
            let a = hi - phi * (hi - lo);
            let b = lo + phi * (hi - lo);
            if loglik_1d(&subjects, a) < loglik_1d(&subjects, b) {
                lo = a;
            } else {
                hi = b;
            }
        }
        let oracle_beta = (lo + hi) / 2.0;
        assert!(
            (model.beta[0] - oracle_beta).abs() < 1e-4,
            "newton {} vs scan {}",
            model.beta[0],
            oracle_beta
        );
        assert!((loglik_1d(&subjects, model.beta[0]) - model.loglik).abs() < 1e-8);
    }

    #[test]
    fn zero_covariate_gets_zero_coefficient() {
        let mut subjects = binary_cohort();
        for s in &mut subjects {
            for x in s.trajectories.values_mut() {
                x.push(0.0);
            }
        }
        let model = fit_time_dependent_cox(&subjects).unwrap();
        assert_eq!(model.beta.len(), 2);
        assert_eq!(model.beta[1], 0.0);
    }

    #[test]
    fn duplicated_covariate_is_singular() {
        let mut subjects = binary_cohort();
        for s in &mut subjects {
            for x in s.trajectories.values_mut() {
                let first = x[0];
                x.push(first);
            }
        }
        let err = fit_time_dependent_cox(&subjects).unwrap_err();
        assert!(matches!(err, Error::SingularInformation(_)));
    }

    #[test]
    fn no_events_is_an_error() {
        let subjects = vec![subject(vec![1.0], 1950..=1960, None)];
        assert!(fit_time_dependent_cox(&subjects).is_err());
    }

    #[test]
    fn time_varying_covariate_uses_value_at_event_year() {
        // two subjects whose covariate swaps between years; the fit must
        // read the year-specific value, not a per-subject constant
        let mut a = BTreeMap::new();
        a.insert(1960, vec![0.0]);
        a.insert(1961, vec![1.0]);
        let mut b = BTreeMap::new();
        b.insert(1960, vec![1.0]);
        b.insert(1961, vec![0.0]);
        let subjects = vec![
            CoxSubject {
                trajectories: a,
                event_year: Some(1961),
            },
            CoxSubject {
                trajectories: b,
                event_year: None,
            },
            subject(vec![0.5], 1960..=1961, Some(1960)),
        ];
        let model = fit_time_dependent_cox(&subjects).unwrap();
        assert!(model.beta[0].is_finite());
    }
}
