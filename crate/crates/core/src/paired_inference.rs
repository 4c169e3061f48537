//! Test statistics on matched-pair differences and their randomization and
//! sensitivity-adjusted one-sided p-values.
//!
//! The sensitivity model bounds the within-pair odds of treatment by a factor
//! gamma >= 1, so under the worst allowed bias each pair contributes a
//! positive sign independently with probability gamma / (1 + gamma). The
//! right-sided p-value is the resulting upper bound on P(T >= observed); the
//! left-sided p-value is the same bound applied to the negated differences.
//! gamma = 1 recovers plain randomization inference.

use crate::error::{Error, Result};
use crate::ranks::average_ranks;
use statrs::distribution::{ContinuousCDF, Normal};

/// Exact enumeration walks all 2^n sign assignments; beyond this many pairs
/// the caller must use the normal approximation.
pub const MAX_EXACT_PAIRS: usize = 25;

/// Pair count at or below which `Mode::Auto` enumerates exactly.
pub const AUTO_EXACT_THRESHOLD: usize = 20;

/// Treated-minus-control differences for one outcome in one subgroup.
///
/// Pairs with a missing outcome are dropped before construction, so the
/// vector length is the per-outcome number of informative pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedDifferences {
    pub outcome_id: String,
    pub subgroup_id: String,
    diffs: Vec<f64>,
}

impl PairedDifferences {
    pub fn new(
        outcome_id: impl Into<String>,
        subgroup_id: impl Into<String>,
        diffs: Vec<f64>,
    ) -> Result<Self> {
        if diffs.is_empty() {
            return Err(Error::EmptyInput("paired differences"));
        }
        if let Some(bad) = diffs.iter().find(|d| !d.is_finite()) {
            return Err(Error::Validation(format!(
                "non-finite paired difference {bad}"
            )));
        }
        Ok(Self {
            outcome_id: outcome_id.into(),
            subgroup_id: subgroup_id.into(),
            diffs,
        })
    }

    pub fn diffs(&self) -> &[f64] {
        &self.diffs
    }

    /// The same pairs with every difference negated.
    pub fn negated(&self) -> Self {
        Self {
            outcome_id: self.outcome_id.clone(),
            subgroup_id: self.subgroup_id.clone(),
            diffs: self.diffs.iter().map(|d| -d).collect(),
        }
    }
}

/// Bound on the within-pair odds ratio of treatment due to unobserved bias.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensitivityParams {
    gamma: f64,
}

impl SensitivityParams {
    pub fn new(gamma: f64) -> Result<Self> {
        if !gamma.is_finite() || gamma < 1.0 {
            return Err(Error::InvalidParameter(format!(
                "gamma must be finite and >= 1, got {gamma}"
            )));
        }
        Ok(Self { gamma })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Worst-case probability that a pair contributes a positive sign.
    pub fn pi_plus(&self) -> f64 {
        self.gamma / (1.0 + self.gamma)
    }
}

/// Right-sided, left-sided, and minimum one-sided p-values for one outcome.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PValueTriple {
    /// p: evidence toward a positive effect, P(T >= observed).
    pub right: f64,
    /// q: evidence toward a negative effect, the right-sided bound on -d.
    pub left: f64,
    /// min(right, left).
    pub min_two: f64,
}

impl PValueTriple {
    fn new(right: f64, left: f64) -> Self {
        Self {
            right,
            left,
            min_two: right.min(left),
        }
    }

    /// Two-sided p-value 2*min(right, left), capped at 1.
    pub fn two_sided(&self) -> f64 {
        (2.0 * self.min_two).min(1.0)
    }
}

/// A sign-score decomposition of a paired test statistic: nonnegative scores
/// (signed-rank ranks or absolute differences), the signs of the surviving
/// differences, and the observed statistic, the sum of positively signed
/// scores.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredStatistic {
    scores: Vec<f64>,
    signs: Vec<i8>,
    observed: f64,
}

impl ScoredStatistic {
    fn from_parts(scores: Vec<f64>, signs: Vec<i8>) -> Self {
        let observed = sum_where(&scores, &signs, 1);
        Self {
            scores,
            signs,
            observed,
        }
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn signs(&self) -> &[i8] {
        &self.signs
    }

    pub fn observed(&self) -> f64 {
        self.observed
    }

    pub fn n_pairs(&self) -> usize {
        self.scores.len()
    }

    /// Sum of all scores (the maximal attainable statistic).
    pub fn total(&self) -> f64 {
        self.scores.iter().sum()
    }

    /// Observed statistic of the negated differences: the sum of negatively
    /// signed scores, accumulated in the same index order as `observed`.
    pub fn observed_negated(&self) -> f64 {
        sum_where(&self.scores, &self.signs, -1)
    }

    /// Sign of the centered statistic 2*observed - total: positive when the
    /// positively signed scores outweigh the negative ones. For absolute-
    /// difference scores this is the sign of the mean difference. Exact
    /// balance counts as positive.
    pub fn center_sign(&self) -> i8 {
        if 2.0 * self.observed >= self.total() {
            1
        } else {
            -1
        }
    }
}

fn sum_where(scores: &[f64], signs: &[i8], sign: i8) -> f64 {
    scores
        .iter()
        .zip(signs)
        .filter(|(_, &s)| s == sign)
        .map(|(q, _)| q)
        .sum()
}

fn nonzero_diffs(d: &PairedDifferences) -> Result<(Vec<f64>, Vec<i8>)> {
    let mut magnitudes = Vec::with_capacity(d.diffs.len());
    let mut signs = Vec::with_capacity(d.diffs.len());
    for &x in &d.diffs {
        if x != 0.0 {
            magnitudes.push(x.abs());
            signs.push(if x > 0.0 { 1 } else { -1 });
        }
    }
    if magnitudes.is_empty() {
        return Err(Error::DegenerateStatistic);
    }
    Ok((magnitudes, signs))
}

/// Wilcoxon signed-rank scores: zero differences are dropped, the remaining
/// absolute differences are ranked with average ranks for ties, and the
/// observed statistic is the rank sum of the positive differences.
pub fn wilcoxon_scores(d: &PairedDifferences) -> Result<ScoredStatistic> {
    let (magnitudes, signs) = nonzero_diffs(d)?;
    let ranks = average_ranks(&magnitudes);
    Ok(ScoredStatistic::from_parts(ranks, signs))
}

/// Permutational t scores: zero differences are dropped, each remaining pair
/// scores its absolute difference, and the observed statistic is the sum of
/// the positive differences.
pub fn ttest_scores(d: &PairedDifferences) -> Result<ScoredStatistic> {
    let (magnitudes, signs) = nonzero_diffs(d)?;
    Ok(ScoredStatistic::from_parts(magnitudes, signs))
}

/// Which sign-score statistic to compute from paired differences.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Statistic {
    Wilcoxon,
    TTest,
}

impl Statistic {
    pub fn scores(&self, d: &PairedDifferences) -> Result<ScoredStatistic> {
        match self {
            Statistic::Wilcoxon => wilcoxon_scores(d),
            Statistic::TTest => ttest_scores(d),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Statistic::Wilcoxon => "wilcoxon",
            Statistic::TTest => "ttest",
        }
    }
}

impl std::str::FromStr for Statistic {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "wilcoxon" => Ok(Statistic::Wilcoxon),
            "ttest" => Ok(Statistic::TTest),
            other => Err(Error::InvalidParameter(format!(
                "unknown statistic {other:?} (expected wilcoxon or ttest)"
            ))),
        }
    }
}

/// How the tail probability is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Enumerate all 2^n sign assignments (n <= [`MAX_EXACT_PAIRS`]).
    Exact,
    /// Normal deviate (observed - pi*sum q) / sqrt(pi*(1-pi)*sum q^2),
    /// no continuity correction.
    Normal,
    /// Exact for n <= [`AUTO_EXACT_THRESHOLD`], normal otherwise.
    Auto,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(Mode::Exact),
            "normal" => Ok(Mode::Normal),
            "auto" => Ok(Mode::Auto),
            other => Err(Error::InvalidParameter(format!(
                "unknown p-value mode {other:?} (expected exact, normal, or auto)"
            ))),
        }
    }
}

/// Worst-case one-sided p-values for a sign-score statistic under the
/// odds-of-treatment bound `g`.
///
/// Both tails use the inclusive convention (probability of a statistic at
/// least / at most the observed value). The left-sided value is computed as
/// the right-sided bound applied to the negated differences, so
/// `left(d) == right(-d)` holds exactly.
pub fn sensitivity_pvalues(
    stat: &ScoredStatistic,
    g: SensitivityParams,
    mode: Mode,
) -> Result<PValueTriple> {
    let n = stat.n_pairs();
    let exact = match mode {
        Mode::Exact => {
            if n > MAX_EXACT_PAIRS {
                return Err(Error::InvalidParameter(format!(
                    "exact enumeration supports at most {MAX_EXACT_PAIRS} pairs, got {n}"
                )));
            }
            true
        }
        Mode::Normal => false,
        Mode::Auto => n <= AUTO_EXACT_THRESHOLD,
    };

    let pi = g.pi_plus();
    let (right, left) = if exact {
        (
            exact_upper_tail(stat.scores(), stat.observed(), pi),
            exact_upper_tail(stat.scores(), stat.observed_negated(), pi),
        )
    } else {
        (
            normal_upper_tail(stat.scores(), stat.observed(), pi),
            normal_upper_tail(stat.scores(), stat.observed_negated(), pi),
        )
    };
    Ok(PValueTriple::new(right, left))
}

/// Randomization-inference p-values: the gamma = 1 sensitivity analysis.
pub fn randomization_pvalues(
    d: &PairedDifferences,
    statistic: Statistic,
    mode: Mode,
) -> Result<PValueTriple> {
    let stat = statistic.scores(d)?;
    sensitivity_pvalues(&stat, SensitivityParams::new(1.0)?, mode)
}

/// P(sum of positively signed scores >= threshold) when each score is signed
/// positive independently with probability `pi`, by full enumeration.
fn exact_upper_tail(scores: &[f64], threshold: f64, pi: f64) -> f64 {
    let n = scores.len();
    debug_assert!(n <= MAX_EXACT_PAIRS);
    // weight of an assignment with k positive signs
    let weights: Vec<f64> = (0..=n)
        .map(|k| pi.powi(k as i32) * (1.0 - pi).powi((n - k) as i32))
        .collect();

    let mut tail = 0.0;
    for mask in 0u64..(1u64 << n) {
        let mut sum = 0.0;
        let mut positives = 0usize;
        for (i, q) in scores.iter().enumerate() {
            if (mask >> i) & 1 == 1 {
                sum += q;
                positives += 1;
            }
        }
        if sum >= threshold {
            tail += weights[positives];
        }
    }
    tail.clamp(0.0, 1.0)
}

/// Normal approximation to the same upper tail.
fn normal_upper_tail(scores: &[f64], observed: f64, pi: f64) -> f64 {
    let sum_q: f64 = scores.iter().sum();
    let sum_q2: f64 = scores.iter().map(|q| q * q).sum();
    let mean = pi * sum_q;
    let sd = (pi * (1.0 - pi) * sum_q2).sqrt();
    if sd == 0.0 {
        // no randomness left; the tail is 0/1 by comparison with the mean
        return if observed <= mean { 1.0 } else { 0.0 };
    }
    let z = (observed - mean) / sd;
    let std_normal = Normal::new(0.0, 1.0).expect("standard normal");
    // upper tail via the lower tail at -z to keep precision for large z
    std_normal.cdf(-z)
}
