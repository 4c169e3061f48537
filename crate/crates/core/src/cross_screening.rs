//! Two-subgroup screening procedures: each subgroup's data selects the
//! hypotheses, directions, and weights used to test the other subgroup, so
//! that replicated findings and global-null discoveries carry familywise
//! error control.

use crate::error::{Error, Result};
use crate::multiple_testing::{
    concordant_fisher_global, holm, max_p_replicability, weighted_holm, WeightedFamily,
};
use crate::paired_inference::{
    sensitivity_pvalues, Mode, PValueTriple, PairedDifferences, ScoredStatistic, SensitivityParams,
    Statistic,
};
use std::collections::{BTreeMap, BTreeSet};

/// Per-outcome evidence for one subgroup at a fixed sensitivity parameter.
#[derive(Debug, Clone)]
pub struct OutcomeEvidence {
    pub triple: PValueTriple,
    pub statistic: ScoredStatistic,
}

/// All outcomes of one subgroup, with p-value triples computed at a single
/// gamma. Screening runs require the same outcome set in both subgroups.
#[derive(Debug, Clone)]
pub struct SubgroupEvidence {
    subgroup_id: String,
    gamma: f64,
    outcomes: BTreeMap<String, OutcomeEvidence>,
}

impl SubgroupEvidence {
    pub fn new(
        subgroup_id: impl Into<String>,
        gamma: f64,
        outcomes: BTreeMap<String, OutcomeEvidence>,
    ) -> Result<Self> {
        if outcomes.is_empty() {
            return Err(Error::EmptyInput("subgroup evidence"));
        }
        Ok(Self {
            subgroup_id: subgroup_id.into(),
            gamma,
            outcomes,
        })
    }

    /// Computes scores and sensitivity-adjusted p-values for each outcome's
    /// paired differences.
    pub fn from_differences(
        subgroup_id: impl Into<String>,
        differences: &[PairedDifferences],
        statistic: Statistic,
        gamma: SensitivityParams,
        mode: Mode,
    ) -> Result<Self> {
        let mut outcomes = BTreeMap::new();
        for d in differences {
            let context = |e: Error| {
                Error::Validation(format!(
                    "outcome {:?} in subgroup {:?}: {e}",
                    d.outcome_id, d.subgroup_id
                ))
            };
            let stat = statistic.scores(d).map_err(context)?;
            let triple = sensitivity_pvalues(&stat, gamma, mode).map_err(context)?;
            if outcomes
                .insert(
                    d.outcome_id.clone(),
                    OutcomeEvidence {
                        triple,
                        statistic: stat,
                    },
                )
                .is_some()
            {
                return Err(Error::MismatchedInput(format!(
                    "outcome {:?} appears twice in subgroup {:?}",
                    d.outcome_id, d.subgroup_id
                )));
            }
        }
        Self::new(subgroup_id, gamma.gamma(), outcomes)
    }

    pub fn subgroup_id(&self) -> &str {
        &self.subgroup_id
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn outcome_ids(&self) -> impl Iterator<Item = &String> {
        self.outcomes.keys()
    }

    pub fn evidence(&self, outcome: &str) -> Option<&OutcomeEvidence> {
        self.outcomes.get(outcome)
    }
}

/// Direction of the alternative suggested by a p-value triple: right-sided
/// when the right-sided p-value is smaller, with ties resolved rightward.
pub fn direction_from_triple(t: &PValueTriple) -> i8 {
    if t.right <= t.left {
        1
    } else {
        -1
    }
}

/// One subgroup's half of a screening run: the direction assigned to each of
/// its hypotheses, which hypotheses were screened in, the one-sided p-value
/// tested, the step-down threshold applied, and the signed rejection status.
#[derive(Debug, Clone)]
pub struct SubgroupScreen {
    pub subgroup_id: String,
    /// Direction of the alternative tested in this subgroup (chosen by the
    /// other subgroup's data).
    pub direction: BTreeMap<String, i8>,
    /// Outcomes screened in for testing in this subgroup.
    pub selected: BTreeSet<String>,
    /// One-sided p-value in the assigned direction, for every outcome.
    pub tested_pvalue: BTreeMap<String, f64>,
    /// Threshold each family member was compared against.
    pub threshold: BTreeMap<String, f64>,
    /// +1 / -1 for rejected hypotheses (carrying the tested direction),
    /// 0 for everything else.
    pub status: BTreeMap<String, i8>,
}

/// Outcome of a two-subgroup screening run.
#[derive(Debug, Clone)]
pub struct ScreeningResult {
    pub alpha: f64,
    pub gamma: f64,
    /// Per-subgroup detail, in the order the subgroups were supplied.
    pub screens: [SubgroupScreen; 2],
    /// Direction per outcome: the agreed sign when both subgroups reject,
    /// otherwise the sign of whichever rejected, otherwise the direction
    /// assigned to the second subgroup by the first subgroup's screen.
    pub direction: BTreeMap<String, i8>,
    /// Outcomes rejected in both subgroups with the same direction.
    pub replicated: BTreeSet<String>,
    /// Outcomes rejected in at least one subgroup.
    pub global_discoveries: BTreeSet<String>,
}

impl ScreeningResult {
    pub fn status(&self, subgroup_id: &str, outcome: &str) -> Option<i8> {
        self.screens
            .iter()
            .find(|s| s.subgroup_id == subgroup_id)
            .and_then(|s| s.status.get(outcome).copied())
    }
}

fn common_outcomes(a: &SubgroupEvidence, b: &SubgroupEvidence) -> Result<Vec<String>> {
    if a.gamma != b.gamma {
        return Err(Error::MismatchedInput(format!(
            "subgroup {:?} evidence at gamma {} but subgroup {:?} at gamma {}",
            a.subgroup_id, a.gamma, b.subgroup_id, b.gamma
        )));
    }
    let ids_a: Vec<&String> = a.outcomes.keys().collect();
    let ids_b: Vec<&String> = b.outcomes.keys().collect();
    if ids_a != ids_b {
        let only_a: Vec<&&String> = ids_a
            .iter()
            .filter(|k| !b.outcomes.contains_key(**k))
            .collect();
        let only_b: Vec<&&String> = ids_b
            .iter()
            .filter(|k| !a.outcomes.contains_key(**k))
            .collect();
        return Err(Error::MismatchedInput(format!(
            "outcome sets differ between subgroups (only in {:?}: {:?}; only in {:?}: {:?})",
            a.subgroup_id, only_a, b.subgroup_id, only_b
        )));
    }
    Ok(ids_a.into_iter().cloned().collect())
}

fn one_sided(t: &PValueTriple, direction: i8) -> f64 {
    if direction == 1 {
        t.right
    } else {
        t.left
    }
}

fn assemble(
    alpha: f64,
    gamma: f64,
    screens: [SubgroupScreen; 2],
    outcomes: &[String],
) -> ScreeningResult {
    let mut replicated = BTreeSet::new();
    let mut global = BTreeSet::new();
    let mut direction = BTreeMap::new();
    for k in outcomes {
        let s0 = screens[0].status[k];
        let s1 = screens[1].status[k];
        if s0 * s1 == 1 {
            replicated.insert(k.clone());
        }
        if s0 != 0 || s1 != 0 {
            global.insert(k.clone());
        }
        let d = if s0 != 0 {
            s0
        } else if s1 != 0 {
            s1
        } else {
            screens[1].direction[k]
        };
        direction.insert(k.clone(), d);
    }
    ScreeningResult {
        alpha,
        gamma,
        screens,
        direction,
        replicated,
        global_discoveries: global,
    }
}

/// One direction of automated cross-screening: `screener` chooses directions
/// and hypotheses, `tested` is analyzed with Holm at level alpha/2.
fn automated_pass(
    screener: &SubgroupEvidence,
    tested: &SubgroupEvidence,
    outcomes: &[String],
    alpha: f64,
) -> SubgroupScreen {
    let mut direction = BTreeMap::new();
    let mut selected = BTreeSet::new();
    let mut tested_pvalue = BTreeMap::new();
    let mut family_ids = Vec::new();
    let mut family_pvalues = Vec::new();
    for k in outcomes {
        let screen_triple = &screener.outcomes[k].triple;
        let d = direction_from_triple(screen_triple);
        direction.insert(k.clone(), d);
        let p = one_sided(&tested.outcomes[k].triple, d);
        tested_pvalue.insert(k.clone(), p);
        if screen_triple.min_two <= alpha / 2.0 {
            selected.insert(k.clone());
            family_ids.push(k.clone());
            family_pvalues.push(p);
        }
    }

    let rejection = holm(&family_pvalues, alpha / 2.0).expect("validated inputs");
    let mut status: BTreeMap<String, i8> = outcomes.iter().map(|k| (k.clone(), 0)).collect();
    let mut threshold = BTreeMap::new();
    for (pos, k) in family_ids.iter().enumerate() {
        threshold.insert(k.clone(), rejection.thresholds[pos]);
        if rejection.is_rejected(pos) {
            status.insert(k.clone(), direction[k]);
        }
    }
    SubgroupScreen {
        subgroup_id: tested.subgroup_id.clone(),
        direction,
        selected,
        tested_pvalue,
        threshold,
        status,
    }
}

/// Automated cross-screening for replicability.
///
/// Each subgroup screens the other: the screening subgroup's one-sided
/// p-values pick the direction per outcome (right-sided when p <= q), its
/// two-sided p-value min(p, q) <= alpha/2 selects the hypotheses, and Holm at
/// alpha/2 runs on the other subgroup's one-sided p-values in the selected
/// directions. An outcome is replicated when both subgroups reject it with
/// the same sign.
pub fn automated_cross_screen(
    a: &SubgroupEvidence,
    b: &SubgroupEvidence,
    alpha: f64,
) -> Result<ScreeningResult> {
    validate_level(alpha)?;
    let outcomes = common_outcomes(a, b)?;
    let screen_b = automated_pass(a, b, &outcomes, alpha);
    let screen_a = automated_pass(b, a, &outcomes, alpha);
    Ok(assemble(alpha, a.gamma, [screen_a, screen_b], &outcomes))
}

fn validate_level(alpha: f64) -> Result<()> {
    if !(alpha.is_finite() && (0.0..1.0).contains(&alpha)) {
        return Err(Error::InvalidParameter(format!(
            "alpha must lie in [0, 1), got {alpha}"
        )));
    }
    Ok(())
}

/// One direction of weighted cross-screening: directions come from the
/// screener's statistic signs, weights from the screener's directed
/// p-values, and weighted Holm at alpha/2 runs on the tested subgroup.
///
/// With m outcomes of which s have screener p-value <= alpha/2, a screened-in
/// hypothesis gets weight m / (s + c(m - s)) and a screened-out hypothesis
/// gets that weight times c. At c = 0 the screened-out hypotheses have weight
/// zero and are removed from the family (they are unrejectable); at c = 1 all
/// weights are 1 and the step-down is plain Holm over all m hypotheses.
fn weighted_pass(
    screener: &SubgroupEvidence,
    tested: &SubgroupEvidence,
    outcomes: &[String],
    c: f64,
    alpha: f64,
) -> SubgroupScreen {
    let m = outcomes.len() as f64;
    let mut direction = BTreeMap::new();
    let mut selected = BTreeSet::new();
    let mut tested_pvalue = BTreeMap::new();
    let mut screener_pvalue = BTreeMap::new();
    for k in outcomes {
        // the tested subgroup's own statistic sign fixes the direction of
        // the screener's p-value, and vice versa
        let d_for_tested = screener.outcomes[k].statistic.center_sign();
        let d_for_screener = tested.outcomes[k].statistic.center_sign();
        direction.insert(k.clone(), d_for_tested);
        tested_pvalue.insert(
            k.clone(),
            one_sided(&tested.outcomes[k].triple, d_for_tested),
        );
        let sp = one_sided(&screener.outcomes[k].triple, d_for_screener);
        screener_pvalue.insert(k.clone(), sp);
        if sp <= alpha / 2.0 {
            selected.insert(k.clone());
        }
    }

    let s = selected.len() as f64;
    let denom = s + c * (m - s);
    let mut family_ids = Vec::new();
    let mut family_pvalues = Vec::new();
    let mut family_weights = Vec::new();
    if denom > 0.0 {
        for k in outcomes {
            let share = if selected.contains(k) { 1.0 } else { c };
            let weight = m * share / denom;
            if weight > 0.0 {
                family_ids.push(k.clone());
                family_pvalues.push(tested_pvalue[k]);
                family_weights.push(weight);
            }
        }
    }

    let mut status: BTreeMap<String, i8> = outcomes.iter().map(|k| (k.clone(), 0)).collect();
    let mut threshold = BTreeMap::new();
    if !family_ids.is_empty() {
        let family = WeightedFamily::from_unnormalized(family_pvalues, family_weights, alpha / 2.0)
            .expect("validated inputs");
        let rejection = weighted_holm(&family).expect("validated inputs");
        for (pos, k) in family_ids.iter().enumerate() {
            threshold.insert(k.clone(), rejection.thresholds[pos]);
            if rejection.is_rejected(pos) {
                status.insert(k.clone(), direction[k]);
            }
        }
    }
    SubgroupScreen {
        subgroup_id: tested.subgroup_id.clone(),
        direction,
        selected,
        tested_pvalue,
        threshold,
        status,
    }
}

fn weighted_cross_screen(
    a: &SubgroupEvidence,
    b: &SubgroupEvidence,
    c: f64,
    alpha: f64,
) -> Result<ScreeningResult> {
    validate_level(alpha)?;
    if !(0.0..=1.0).contains(&c) || !c.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "screening weight parameter c must lie in [0, 1], got {c}"
        )));
    }
    let outcomes = common_outcomes(a, b)?;
    let screen_b = weighted_pass(a, b, &outcomes, c, alpha);
    let screen_a = weighted_pass(b, a, &outcomes, c, alpha);
    Ok(assemble(alpha, a.gamma, [screen_a, screen_b], &outcomes))
}

/// Weighted cross-screening for replicability: directions come from the
/// other subgroup's statistic signs, weights soften the screening selection
/// through the parameter c in [0, 1], and an outcome is replicated when both
/// subgroups reject with the same sign.
pub fn weighted_cross_screen_replicability(
    a: &SubgroupEvidence,
    b: &SubgroupEvidence,
    c: f64,
    alpha: f64,
) -> Result<ScreeningResult> {
    weighted_cross_screen(a, b, c, alpha)
}

/// Weighted cross-screening for global nulls: runs the replicability steps
/// and reports the union of the two subgroup rejection sets as discoveries
/// of an effect in at least one subgroup.
pub fn weighted_cross_screen_global(
    a: &SubgroupEvidence,
    b: &SubgroupEvidence,
    c: f64,
    alpha: f64,
) -> Result<ScreeningResult> {
    weighted_cross_screen(a, b, c, alpha)
}

/// One hypothesis row of a global-null test, for reporting.
#[derive(Debug, Clone)]
pub struct GlobalNullRow {
    pub outcome_id: String,
    /// Which subgroup the p-value belongs to; `None` for a combined p-value.
    pub subgroup_id: Option<String>,
    pub pvalue: f64,
    pub threshold: f64,
    pub rejected: bool,
}

/// Result of a Holm-based global-null analysis.
#[derive(Debug, Clone)]
pub struct GlobalNullResult {
    pub alpha: f64,
    pub gamma: f64,
    pub rows: Vec<GlobalNullRow>,
    /// Outcomes declared affected in at least one subgroup.
    pub discoveries: BTreeSet<String>,
}

/// Concordant-Fisher global-null testing: per outcome, combine the two
/// subgroups' one-sided p-values through the chi-square(4) tail in each
/// direction, take twice the smaller combination, and apply Holm at level
/// alpha. Rejected outcomes are affected in at least one subgroup.
pub fn holm_global_nulls(
    a: &SubgroupEvidence,
    b: &SubgroupEvidence,
    alpha: f64,
) -> Result<GlobalNullResult> {
    validate_level(alpha)?;
    let outcomes = common_outcomes(a, b)?;
    let mut pvalues = Vec::with_capacity(outcomes.len());
    for k in &outcomes {
        pvalues.push(concordant_fisher_global(
            &a.outcomes[k].triple,
            &b.outcomes[k].triple,
        )?);
    }
    let rejection = holm(&pvalues, alpha)?;
    let mut rows = Vec::with_capacity(outcomes.len());
    let mut discoveries = BTreeSet::new();
    for (pos, k) in outcomes.iter().enumerate() {
        let rejected = rejection.is_rejected(pos);
        if rejected {
            discoveries.insert(k.clone());
        }
        rows.push(GlobalNullRow {
            outcome_id: k.clone(),
            subgroup_id: None,
            pvalue: pvalues[pos],
            threshold: rejection.thresholds[pos],
            rejected,
        });
    }
    Ok(GlobalNullResult {
        alpha,
        gamma: a.gamma,
        rows,
        discoveries,
    })
}

/// Holm at level alpha on the per-outcome maximum p-values
/// 2 * min(max(p1, p2), max(q1, q2)): a screening-free competitor whose
/// rejections are replicability claims.
pub fn holm_max_p(
    a: &SubgroupEvidence,
    b: &SubgroupEvidence,
    alpha: f64,
) -> Result<GlobalNullResult> {
    validate_level(alpha)?;
    let outcomes = common_outcomes(a, b)?;
    let pvalues: Vec<f64> = outcomes
        .iter()
        .map(|k| max_p_replicability(&a.outcomes[k].triple, &b.outcomes[k].triple))
        .collect();
    let rejection = holm(&pvalues, alpha)?;
    let mut rows = Vec::with_capacity(outcomes.len());
    let mut discoveries = BTreeSet::new();
    for (pos, k) in outcomes.iter().enumerate() {
        let rejected = rejection.is_rejected(pos);
        if rejected {
            discoveries.insert(k.clone());
        }
        rows.push(GlobalNullRow {
            outcome_id: k.clone(),
            subgroup_id: None,
            pvalue: pvalues[pos],
            threshold: rejection.thresholds[pos],
            rejected,
        });
    }
    Ok(GlobalNullResult {
        alpha,
        gamma: a.gamma,
        rows,
        discoveries,
    })
}

/// Plain Holm at level alpha on the pooled family of two-sided p-values
/// (2 * min(p, q), capped at 1) over both subgroups; an outcome is
/// discovered when either of its two hypotheses is rejected.
pub fn holm_twosided_global(
    a: &SubgroupEvidence,
    b: &SubgroupEvidence,
    alpha: f64,
) -> Result<GlobalNullResult> {
    validate_level(alpha)?;
    let outcomes = common_outcomes(a, b)?;
    let mut ids = Vec::with_capacity(2 * outcomes.len());
    let mut pvalues = Vec::with_capacity(2 * outcomes.len());
    for evidence in [a, b] {
        for k in &outcomes {
            ids.push((k.clone(), evidence.subgroup_id.clone()));
            pvalues.push(evidence.outcomes[k].triple.two_sided());
        }
    }
    let rejection = holm(&pvalues, alpha)?;
    let mut rows = Vec::with_capacity(ids.len());
    let mut discoveries = BTreeSet::new();
    for (pos, (outcome, subgroup)) in ids.iter().enumerate() {
        let rejected = rejection.is_rejected(pos);
        if rejected {
            discoveries.insert(outcome.clone());
        }
        rows.push(GlobalNullRow {
            outcome_id: outcome.clone(),
            subgroup_id: Some(subgroup.clone()),
            pvalue: pvalues[pos],
            threshold: rejection.thresholds[pos],
            rejected,
        });
    }
    Ok(GlobalNullResult {
        alpha,
        gamma: a.gamma,
        rows,
        discoveries,
    })
}
