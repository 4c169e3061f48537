//! Familywise-error-controlling procedures, one-sided p-value combiners, and
//! false-coverage-rate confidence-level arithmetic.

use crate::error::{Error, Result};
use crate::paired_inference::PValueTriple;
use std::collections::BTreeSet;

/// A family of p-values with positive weights and a target FWER level.
///
/// Weights sum to the family size m; the step-down thresholds are invariant
/// to rescaling, so this normalization is a convention, not a constraint on
/// behavior.
#[derive(Debug, Clone)]
pub struct WeightedFamily {
    pvalues: Vec<f64>,
    weights: Vec<f64>,
    alpha: f64,
}

impl WeightedFamily {
    pub fn new(pvalues: Vec<f64>, weights: Vec<f64>, alpha: f64) -> Result<Self> {
        if pvalues.len() != weights.len() {
            return Err(Error::MismatchedInput(format!(
                "{} p-values but {} weights",
                pvalues.len(),
                weights.len()
            )));
        }
        validate_alpha(alpha)?;
        validate_pvalues(&pvalues)?;
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "weights must be positive and finite, got {w}"
            )));
        }
        let m = pvalues.len() as f64;
        let sum: f64 = weights.iter().sum();
        if !pvalues.is_empty() && (sum - m).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "weights must sum to the family size {m}, got {sum}"
            )));
        }
        Ok(Self {
            pvalues,
            weights,
            alpha,
        })
    }

    /// Builds a family from arbitrary positive weights by rescaling them to
    /// sum to the family size.
    pub fn from_unnormalized(pvalues: Vec<f64>, weights: Vec<f64>, alpha: f64) -> Result<Self> {
        if weights.is_empty() {
            return Self::new(pvalues, weights, alpha);
        }
        let sum: f64 = weights.iter().sum();
        if !(sum.is_finite() && sum > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "weight sum must be positive, got {sum}"
            )));
        }
        let m = weights.len() as f64;
        let scaled = weights.iter().map(|w| w * m / sum).collect();
        Self::new(pvalues, scaled, alpha)
    }
}

/// Rejected hypothesis indices along with the step-down threshold each
/// p-value was (or would have been) compared against.
#[derive(Debug, Clone, PartialEq)]
pub struct RejectionSet {
    pub rejected: BTreeSet<usize>,
    pub thresholds: Vec<f64>,
}

impl RejectionSet {
    fn empty() -> Self {
        Self {
            rejected: BTreeSet::new(),
            thresholds: Vec::new(),
        }
    }

    pub fn is_rejected(&self, index: usize) -> bool {
        self.rejected.contains(&index)
    }
}

// alpha = 0 is allowed in the step-down procedures: every threshold becomes
// zero and nothing is rejected
fn validate_alpha(alpha: f64) -> Result<()> {
    if !(alpha.is_finite() && (0.0..1.0).contains(&alpha)) {
        return Err(Error::InvalidParameter(format!(
            "alpha must lie in [0, 1), got {alpha}"
        )));
    }
    Ok(())
}

fn validate_positive_alpha(alpha: f64) -> Result<()> {
    if !(alpha.is_finite() && alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    Ok(())
}

fn validate_pvalues(pvalues: &[f64]) -> Result<()> {
    if let Some(p) = pvalues.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::InvalidParameter(format!(
            "p-values must lie in [0, 1], got {p}"
        )));
    }
    Ok(())
}

/// Holm's step-down procedure at level `alpha`.
///
/// P-values are sorted ascending (ties kept in hypothesis-index order) and
/// the first i hypotheses are rejected where every j <= i satisfies
/// p_(j) <= alpha / (m - j + 1); the walk stops at the first failure.
/// An empty family yields an empty rejection set.
pub fn holm(pvalues: &[f64], alpha: f64) -> Result<RejectionSet> {
    validate_alpha(alpha)?;
    validate_pvalues(pvalues)?;
    let weights = vec![1.0; pvalues.len()];
    step_down(pvalues, &weights, alpha)
}

/// Weighted Holm: reject H_(i) if p_(j) <= w_(j) * alpha / sum_{k>=j} w_(k)
/// for all j <= i, with p-values sorted ascending and weights carried
/// alongside their hypotheses.
pub fn weighted_holm(family: &WeightedFamily) -> Result<RejectionSet> {
    step_down(&family.pvalues, &family.weights, family.alpha)
}

fn step_down(pvalues: &[f64], weights: &[f64], alpha: f64) -> Result<RejectionSet> {
    let m = pvalues.len();
    if m == 0 {
        return Ok(RejectionSet::empty());
    }
    let mut order: Vec<usize> = (0..m).collect();
    // stable order by hypothesis index for equal p-values
    order.sort_by(|&a, &b| pvalues[a].partial_cmp(&pvalues[b]).unwrap().then(a.cmp(&b)));

    // suffix sums of sorted weights
    let mut tail = vec![0.0; m + 1];
    for j in (0..m).rev() {
        tail[j] = tail[j + 1] + weights[order[j]];
    }

    let mut thresholds = vec![0.0; m];
    let mut rejected = BTreeSet::new();
    let mut blocked = false;
    for (j, &idx) in order.iter().enumerate() {
        let threshold = weights[idx] * alpha / tail[j];
        thresholds[idx] = threshold;
        if !blocked && pvalues[idx] <= threshold {
            rejected.insert(idx);
        } else {
            blocked = true;
        }
    }
    Ok(RejectionSet {
        rejected,
        thresholds,
    })
}

/// Fisher's combination of two independent one-sided p-values: the
/// chi-square (4 df) upper-tail probability at -2(ln p1 + ln p2).
///
/// Inputs must lie in (0, 1]; exact zeros from enumeration should be floored
/// with [`floor_permutation_pvalue`] first.
pub fn fisher_combine_onesided(p1: f64, p2: f64) -> Result<f64> {
    for p in [p1, p2] {
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "Fisher combination requires p in (0, 1], got {p}"
            )));
        }
    }
    let x = -2.0 * (p1.ln() + p2.ln());
    Ok(chi_square_4df_survival(x))
}

/// Upper-tail probability of the chi-square distribution with 4 degrees of
/// freedom: exp(-x/2) * (1 + x/2).
fn chi_square_4df_survival(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    ((-x / 2.0).exp() * (1.0 + x / 2.0)).min(1.0)
}

/// Floors a permutation p-value of zero at 1 / (enumerated assignments + 1)
/// so it can enter a log combination.
pub fn floor_permutation_pvalue(p: f64, n_assignments: u64) -> f64 {
    p.max(1.0 / (n_assignments as f64 + 1.0))
}

/// Concordant Fisher global-null p-value across two subgroups:
/// 2 * min(F(left_1, left_2), F(right_1, right_2)), capped at 1, where F is
/// [`fisher_combine_onesided`]. Small only when both subgroups carry
/// same-direction evidence.
pub fn concordant_fisher_global(t: &PValueTriple, u: &PValueTriple) -> Result<f64> {
    let down = fisher_combine_onesided(t.left, u.left)?;
    let up = fisher_combine_onesided(t.right, u.right)?;
    Ok((2.0 * down.min(up)).min(1.0))
}

/// Valid p-value for the union null across two subgroups:
/// 2 * min(max(right_1, right_2), max(left_1, left_2)), capped at 1.
pub fn max_p_replicability(t: &PValueTriple, u: &PValueTriple) -> f64 {
    let up = t.right.max(u.right);
    let down = t.left.max(u.left);
    (2.0 * up.min(down)).min(1.0)
}

/// Confidence-level rule for the selected-parameter intervals of one
/// subgroup, spending alpha/2 on that subgroup's interval family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FcrMode {
    /// FCR <= alpha/2 for independent statistics: level 1 - r*alpha/(2m).
    Bh,
    /// Simultaneous coverage under any dependency: level 1 - alpha/(2m).
    Simultaneous,
    /// FCR <= alpha/2 under any dependency: level
    /// 1 - r*alpha/(2m * sum_{l=1..m} 1/l).
    General,
}

impl std::str::FromStr for FcrMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bh" => Ok(FcrMode::Bh),
            "simultaneous" => Ok(FcrMode::Simultaneous),
            "general" => Ok(FcrMode::General),
            other => Err(Error::InvalidParameter(format!(
                "unknown FCR mode {other:?} (expected bh, simultaneous, or general)"
            ))),
        }
    }
}

/// Per-interval confidence level, or a sentinel when no intervals are
/// requested.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FcrLevel {
    NoIntervals,
    Level(f64),
}

/// Per-interval confidence level for `r_ci` intervals selected out of a
/// family of `m_ci` candidates, at overall level `alpha` split evenly
/// between the two subgroups.
pub fn fcr_levels(m_ci: usize, r_ci: usize, alpha: f64, mode: FcrMode) -> Result<FcrLevel> {
    validate_positive_alpha(alpha)?;
    if m_ci == 0 {
        return Err(Error::InvalidParameter(
            "interval family size must be at least 1".into(),
        ));
    }
    if r_ci > m_ci {
        return Err(Error::InvalidParameter(format!(
            "selected intervals {r_ci} exceed family size {m_ci}"
        )));
    }
    if r_ci == 0 {
        return Ok(FcrLevel::NoIntervals);
    }
    let m = m_ci as f64;
    let r = r_ci as f64;
    let level = match mode {
        FcrMode::Bh => 1.0 - r * alpha / (2.0 * m),
        FcrMode::Simultaneous => 1.0 - alpha / (2.0 * m),
        FcrMode::General => {
            let harmonic: f64 = (1..=m_ci).map(|l| 1.0 / l as f64).sum();
            1.0 - r * alpha / (2.0 * m * harmonic)
        }
    };
    Ok(FcrLevel::Level(level))
}
