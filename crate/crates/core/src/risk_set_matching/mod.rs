//! Sequential risk-set matching of a longitudinal cohort.
//!
//! Matching proceeds year by year: at each earliest year with a first
//! unintended birth, the newly treated women are paired to not-yet-treated
//! women on covariate history up to that year, using a rank-based robust
//! Mahalanobis distance plus a propensity-score caliper penalty from a
//! time-dependent proportional-hazards model. Matched pairs leave the pool
//! before the next year is processed.

mod assignment;
mod cox;
mod distance;

pub use assignment::{assign_min_cost, YearAssignment};
pub use cox::{fit_time_dependent_cox, CoxModel, CoxSubject};
pub use distance::{caliper_penalty, pooled_sd_caliper, robust_mahalanobis, RobustMahalanobis};

use crate::error::{Error, Result};
use rayon::prelude::*;
use std::collections::{BTreeMap, BTreeSet};

/// Covariate order used throughout matching, balance reporting, and the
/// hazard model: nine fixed covariates followed by five time-varying ones.
pub const COVARIATE_NAMES: [&str; 14] = [
    "hs_rank",
    "iq",
    "ses",
    "town_pop",
    "agree",
    "consc",
    "extra",
    "neuro",
    "open",
    "children",
    "age",
    "married",
    "educ_years",
    "prior_depression",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Religion {
    Catholic,
    NonCatholic,
}

impl Religion {
    pub fn name(&self) -> &'static str {
        match self {
            Religion::Catholic => "catholic",
            Religion::NonCatholic => "non_catholic",
        }
    }
}

impl std::str::FromStr for Religion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "catholic" => Ok(Religion::Catholic),
            "non_catholic" => Ok(Religion::NonCatholic),
            other => Err(Error::InvalidParameter(format!(
                "unknown religion {other:?} (expected catholic or non_catholic)"
            ))),
        }
    }
}

/// One recorded birth.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Birth {
    pub year: i32,
    pub unintended: bool,
}

/// Time-varying covariates observed in one calendar year.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryPoint {
    pub children: u32,
    pub age: f64,
    pub married: bool,
    pub educ_years: f64,
    pub prior_depression: bool,
}

/// Fixed pre-treatment covariates: childhood measures and the five
/// personality scales (personality is treated as stable, so the 1992
/// measurements serve as fixed covariates).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedCovariates {
    pub hs_rank: f64,
    pub iq: f64,
    pub ses: f64,
    pub town_pop: f64,
    pub agree: f64,
    pub consc: f64,
    pub extra: f64,
    pub neuro: f64,
    pub open: f64,
}

/// One cohort member with her covariate history and birth record.
#[derive(Debug, Clone, PartialEq)]
pub struct WomanRecord {
    id: String,
    religion: Religion,
    fixed: FixedCovariates,
    births: Vec<Birth>,
    trajectories: BTreeMap<i32, TrajectoryPoint>,
}

/// Years of education at a given age: min(E, age - 6), where E is the
/// completed equivalent years of regular education.
pub fn educ_years_from(completed: f64, age: f64) -> f64 {
    completed.min(age - 6.0)
}

impl WomanRecord {
    pub fn new(
        id: impl Into<String>,
        religion: Religion,
        fixed: FixedCovariates,
        births: Vec<Birth>,
        trajectories: BTreeMap<i32, TrajectoryPoint>,
    ) -> Result<Self> {
        let id = id.into();
        for w in births.windows(2) {
            if w[1].year < w[0].year {
                return Err(Error::Validation(format!(
                    "woman {id}: birth years must be nondecreasing ({} after {})",
                    w[1].year, w[0].year
                )));
            }
        }
        if trajectories.is_empty() {
            return Err(Error::Validation(format!(
                "woman {id}: at least one trajectory year is required"
            )));
        }
        for (&year, point) in &trajectories {
            let expected = births.iter().filter(|b| b.year <= year).count() as u32;
            if point.children != expected {
                return Err(Error::Validation(format!(
                    "woman {id}: children-so-far at year {year} is {}, but {expected} births \
                     occurred by then",
                    point.children
                )));
            }
            let values = [
                point.age,
                point.educ_years,
                fixed.hs_rank,
                fixed.iq,
                fixed.ses,
                fixed.town_pop,
                fixed.agree,
                fixed.consc,
                fixed.extra,
                fixed.neuro,
                fixed.open,
            ];
            if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
                return Err(Error::Validation(format!(
                    "woman {id}: non-finite covariate {bad} at year {year}"
                )));
            }
        }
        Ok(Self {
            id,
            religion,
            fixed,
            births,
            trajectories,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn religion(&self) -> Religion {
        self.religion
    }

    pub fn fixed_covariates(&self) -> &FixedCovariates {
        &self.fixed
    }

    pub fn births(&self) -> &[Birth] {
        &self.births
    }

    pub fn trajectories(&self) -> &BTreeMap<i32, TrajectoryPoint> {
        &self.trajectories
    }

    /// Year of the first birth from an unintended pregnancy, if any.
    pub fn first_unintended_year(&self) -> Option<i32> {
        self.births.iter().find(|b| b.unintended).map(|b| b.year)
    }

    /// True when no birth up to and including `year` was unintended.
    pub fn free_of_unintended_through(&self, year: i32) -> bool {
        !self.births.iter().any(|b| b.unintended && b.year <= year)
    }

    /// The covariate vector describing the woman's state entering `year`,
    /// ordered as [`COVARIATE_NAMES`].
    ///
    /// Children are counted from births strictly before the year
    /// (left-continuous), so the comparison between a woman giving birth at
    /// `year` and one who is not is made on their prior child counts, not on
    /// the event itself. The stored trajectory's inclusive children count is
    /// what the record invariant checks; this accessor derives the entering
    /// state from the birth list.
    pub fn covariate_vector(&self, year: i32) -> Option<Vec<f64>> {
        let t = self.trajectories.get(&year)?;
        let children_prior = self.births.iter().filter(|b| b.year < year).count();
        Some(vec![
            self.fixed.hs_rank,
            self.fixed.iq,
            self.fixed.ses,
            self.fixed.town_pop,
            self.fixed.agree,
            self.fixed.consc,
            self.fixed.extra,
            self.fixed.neuro,
            self.fixed.open,
            children_prior as f64,
            t.age,
            if t.married { 1.0 } else { 0.0 },
            t.educ_years,
            if t.prior_depression { 1.0 } else { 0.0 },
        ])
    }

    /// Trajectory year closest to `year` (ties resolved to the earlier one).
    fn nearest_trajectory_year(&self, year: i32) -> i32 {
        let mut best = *self.trajectories.keys().next().expect("validated nonempty");
        for &y in self.trajectories.keys() {
            let d = (y - year).abs();
            let best_d = (best - year).abs();
            if d < best_d {
                best = y;
            }
        }
        best
    }
}

/// One treated-control pair formed at year `t_star`.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchedPair {
    pub treated_id: String,
    pub control_id: String,
    pub t_star: i32,
    pub distance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnmatchedReason {
    /// No eligible control remained at the matching year.
    NoControls,
    /// Fewer controls than treated women; this woman had the costliest
    /// nearest option.
    ControlsExhausted,
    /// The woman has no covariate trajectory at her own matching year.
    MissingCovariates,
}

impl UnmatchedReason {
    pub fn name(&self) -> &'static str {
        match self {
            UnmatchedReason::NoControls => "no_controls",
            UnmatchedReason::ControlsExhausted => "controls_exhausted",
            UnmatchedReason::MissingCovariates => "missing_covariates",
        }
    }
}

/// Treated woman who could not be paired.
#[derive(Debug, Clone, PartialEq)]
pub struct UnmatchedWoman {
    pub id: String,
    pub t_star: i32,
    pub reason: UnmatchedReason,
}

/// Full output of a matching run.
#[derive(Debug, Clone)]
pub struct MatchResult {
    pub pairs: Vec<MatchedPair>,
    pub unmatched: Vec<UnmatchedWoman>,
    /// Hazard model fitted once on the full cohort before matching; absent
    /// when the cohort has no unintended births.
    pub cox: Option<CoxModel>,
}

/// The earliest year in which at least one birth from an unintended
/// pregnancy occurred among `women`; `None` terminates the matching loop.
pub fn find_earliest_unintended_year<'a, I>(women: I) -> Option<i32>
where
    I: IntoIterator<Item = &'a WomanRecord>,
{
    women
        .into_iter()
        .flat_map(|w| w.births.iter())
        .filter(|b| b.unintended)
        .map(|b| b.year)
        .min()
}

/// Splits the still-active women at `t_star` into the treated set (first
/// unintended birth exactly at `t_star`) and the control pool (no births at
/// all, or only intended births, through `t_star`). The sets are disjoint.
pub fn build_risk_sets<'a>(
    women: &[&'a WomanRecord],
    t_star: i32,
) -> (Vec<&'a WomanRecord>, Vec<&'a WomanRecord>) {
    let mut treated = Vec::new();
    let mut controls = Vec::new();
    for &w in women {
        if w.first_unintended_year() == Some(t_star) {
            treated.push(w);
        } else if w.free_of_unintended_through(t_star) {
            controls.push(w);
        }
    }
    (treated, controls)
}

/// Pairs each treated woman (row) with a distinct control (column) at
/// minimum total cost; with more treated women than controls, the excess
/// with the largest row-minimum costs are reported unmatched.
pub fn match_year<'a>(
    treated: &[&'a WomanRecord],
    controls: &[&'a WomanRecord],
    cost: &[Vec<f64>],
    t_star: i32,
) -> Result<(Vec<MatchedPair>, Vec<UnmatchedWoman>)> {
    let assignment = assign_min_cost(cost)?;
    let pairs = assignment
        .pairs
        .iter()
        .map(|&(r, c, d)| MatchedPair {
            treated_id: treated[r].id.clone(),
            control_id: controls[c].id.clone(),
            t_star,
            distance: d,
        })
        .collect();
    let unmatched = assignment
        .unmatched_rows
        .iter()
        .map(|&r| UnmatchedWoman {
            id: treated[r].id.clone(),
            t_star,
            reason: UnmatchedReason::ControlsExhausted,
        })
        .collect();
    Ok((pairs, unmatched))
}

fn cox_subjects(cohort: &[WomanRecord]) -> Vec<CoxSubject> {
    cohort
        .iter()
        .map(|w| CoxSubject {
            trajectories: w
                .trajectories
                .keys()
                .map(|&year| (year, w.covariate_vector(year).expect("year from own map")))
                .collect(),
            event_year: w.first_unintended_year(),
        })
        .collect()
}

/// Runs the sequential matching loop over the whole cohort.
///
/// The hazard model is fitted once on the full pre-matching cohort. Each
/// iteration finds the earliest remaining unintended-birth year, builds the
/// risk sets, prices every treated-control pair as robust distance plus
/// caliper penalty (caliper width recomputed from that year's linear
/// predictors), solves the assignment, and removes the matched pairs and the
/// unmatchable treated women before repeating. Deterministic given the input
/// records; ties break lexicographically by (treated id, control id).
pub fn risk_set_match(cohort: &[WomanRecord]) -> Result<MatchResult> {
    let mut seen = BTreeSet::new();
    for w in cohort {
        if !seen.insert(&w.id) {
            return Err(Error::Validation(format!("duplicate woman id {:?}", w.id)));
        }
    }

    let mut result = MatchResult {
        pairs: Vec::new(),
        unmatched: Vec::new(),
        cox: None,
    };
    if find_earliest_unintended_year(cohort.iter()).is_none() {
        return Ok(result);
    }
    let cox = fit_time_dependent_cox(&cox_subjects(cohort))?;

    let mut active: Vec<&WomanRecord> = cohort.iter().collect();
    while let Some(t_star) = find_earliest_unintended_year(active.iter().copied()) {
        let (mut treated, mut controls) = build_risk_sets(&active, t_star);
        treated.sort_by(|a, b| a.id.cmp(&b.id));
        controls.sort_by(|a, b| a.id.cmp(&b.id));
        controls.retain(|w| w.trajectories.contains_key(&t_star));

        let mut removed: BTreeSet<&str> = BTreeSet::new();
        treated.retain(|w| {
            if w.trajectories.contains_key(&t_star) {
                true
            } else {
                result.unmatched.push(UnmatchedWoman {
                    id: w.id.clone(),
                    t_star,
                    reason: UnmatchedReason::MissingCovariates,
                });
                removed.insert(w.id.as_str());
                false
            }
        });

        if !treated.is_empty() && controls.is_empty() {
            for w in &treated {
                result.unmatched.push(UnmatchedWoman {
                    id: w.id.clone(),
                    t_star,
                    reason: UnmatchedReason::NoControls,
                });
                removed.insert(w.id.as_str());
            }
            treated.clear();
        }

        if !treated.is_empty() {
            let rows: Vec<Vec<f64>> = treated
                .iter()
                .chain(controls.iter())
                .map(|w| w.covariate_vector(t_star).expect("trajectory checked"))
                .collect();
            let md = robust_mahalanobis(&rows)?;
            let scores: Vec<f64> = rows.iter().map(|x| cox.linear_predictor(x)).collect();
            let (treated_scores, control_scores) = scores.split_at(treated.len());
            let w = pooled_sd_caliper(treated_scores, control_scores);

            let cost: Vec<Vec<f64>> = (0..treated.len())
                .into_par_iter()
                .map(|i| {
                    (0..controls.len())
                        .map(|j| {
                            md.distance(i, treated.len() + j)
                                + caliper_penalty(treated_scores[i], control_scores[j], w)
                        })
                        .collect()
                })
                .collect();

            let (pairs, unmatched) = match_year(&treated, &controls, &cost, t_star)?;
            for p in &pairs {
                removed.insert(
                    treated
                        .iter()
                        .find(|w| w.id == p.treated_id)
                        .unwrap()
                        .id
                        .as_str(),
                );
                removed.insert(
                    controls
                        .iter()
                        .find(|w| w.id == p.control_id)
                        .unwrap()
                        .id
                        .as_str(),
                );
            }
            for u in &unmatched {
                removed.insert(treated.iter().find(|w| w.id == u.id).unwrap().id.as_str());
            }
            result.pairs.extend(pairs);
            result.unmatched.extend(unmatched);
        }

        active.retain(|w| !removed.contains(w.id.as_str()));
    }
    result.cox = Some(cox);
    Ok(result)
}

/// Covariate balance row: standardized mean differences before and after
/// matching, in pooled-standard-deviation units.
#[derive(Debug, Clone, PartialEq)]
pub struct BalanceRow {
    pub covariate: String,
    pub pre_std_diff: f64,
    pub post_std_diff: f64,
    /// Set when the pooled variance was zero with unequal means; the
    /// corresponding value is +/- infinity.
    pub pre_degenerate: bool,
    pub post_degenerate: bool,
}

/// Balance table over all matching covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct BalanceTable {
    pub rows: Vec<BalanceRow>,
}

fn std_diff(treated: &[f64], control: &[f64]) -> (f64, bool) {
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    let var = |xs: &[f64], m: f64| {
        if xs.len() < 2 {
            0.0
        } else {
            xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
        }
    };
    let (mt, mc) = (mean(treated), mean(control));
    let pooled = ((var(treated, mt) + var(control, mc)) / 2.0).sqrt();
    let diff = mt - mc;
    if pooled == 0.0 {
        if diff == 0.0 {
            (0.0, false)
        } else {
            (diff.signum() * f64::INFINITY, true)
        }
    } else {
        (diff / pooled, false)
    }
}

/// Standardized differences before and after matching.
///
/// Post-matching compares the treated and control members of the pairs, with
/// covariates evaluated at each pair's matching year. Pre-matching compares
/// every ever-treated woman against every never-treated woman at the cohort
/// reference year (the rounded mean first-unintended-birth year), each
/// clamped to her nearest observed trajectory year.
pub fn standardized_differences(
    cohort: &[WomanRecord],
    pairs: &[MatchedPair],
) -> Result<BalanceTable> {
    if pairs.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "balance needs at least 2 pairs, got {}",
            pairs.len()
        )));
    }
    let by_id: BTreeMap<&str, &WomanRecord> = cohort.iter().map(|w| (w.id.as_str(), w)).collect();
    let lookup = |id: &str| {
        by_id
            .get(id)
            .copied()
            .ok_or_else(|| Error::Validation(format!("pair references unknown woman id {id:?}")))
    };

    // post: pair members at the pair's matching year
    let mut post_treated: Vec<Vec<f64>> = Vec::with_capacity(pairs.len());
    let mut post_control: Vec<Vec<f64>> = Vec::with_capacity(pairs.len());
    for p in pairs {
        let t = lookup(&p.treated_id)?;
        let c = lookup(&p.control_id)?;
        let tx = t.covariate_vector(p.t_star).ok_or_else(|| {
            Error::Validation(format!(
                "treated {:?} has no trajectory at year {}",
                p.treated_id, p.t_star
            ))
        })?;
        let cx = c.covariate_vector(p.t_star).ok_or_else(|| {
            Error::Validation(format!(
                "control {:?} has no trajectory at year {}",
                p.control_id, p.t_star
            ))
        })?;
        post_treated.push(tx);
        post_control.push(cx);
    }

    // pre: ever-treated vs never-treated at the cohort reference year
    let event_years: Vec<i32> = cohort
        .iter()
        .filter_map(|w| w.first_unintended_year())
        .collect();
    if event_years.is_empty() {
        return Err(Error::EmptyInput("no unintended births in cohort"));
    }
    let reference = (event_years.iter().map(|&y| y as f64).sum::<f64>() / event_years.len() as f64)
        .round() as i32;
    let mut pre_treated: Vec<Vec<f64>> = Vec::new();
    let mut pre_control: Vec<Vec<f64>> = Vec::new();
    for w in cohort {
        let year = w.nearest_trajectory_year(reference);
        let x = w.covariate_vector(year).expect("nearest year exists");
        if w.first_unintended_year().is_some() {
            pre_treated.push(x);
        } else {
            pre_control.push(x);
        }
    }
    if pre_treated.is_empty() || pre_control.is_empty() {
        return Err(Error::EmptyInput("both groups are required for balance"));
    }

    let column = |rows: &[Vec<f64>], j: usize| rows.iter().map(|r| r[j]).collect::<Vec<f64>>();
    let rows = COVARIATE_NAMES
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let (pre, pre_degenerate) =
                std_diff(&column(&pre_treated, j), &column(&pre_control, j));
            let (post, post_degenerate) =
                std_diff(&column(&post_treated, j), &column(&post_control, j));
            BalanceRow {
                covariate: name.to_string(),
                pre_std_diff: pre,
                post_std_diff: post,
                pre_degenerate,
                post_degenerate,
            }
        })
        .collect();
    Ok(BalanceTable { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn splitmix(state: &mut u64) -> u64 {
        *state = state.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = *state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    }

    fn unit(state: &mut u64) -> f64 {
        (splitmix(state) >> 11) as f64 / (1u64 << 53) as f64
    }

    /// Deterministic pseudo-random woman keyed by `key`; covariates vary
    /// independently so the hazard fit stays well conditioned.
    fn woman_keyed(id: &str, key: u64, births: Vec<Birth>) -> WomanRecord {
        woman_keyed_range(id, key, births, 1955..=1970)
    }

    fn woman_keyed_range(
        id: &str,
        key: u64,
        births: Vec<Birth>,
        years: std::ops::RangeInclusive<i32>,
    ) -> WomanRecord {
        let mut state = key.wrapping_mul(0x2545f4914f6cdd1d).wrapping_add(1);
        let fixed = FixedCovariates {
            hs_rank: 100.0 * unit(&mut state),
            iq: 85.0 + 30.0 * unit(&mut state),
            ses: 40.0 * unit(&mut state),
            town_pop: 500.0 + 20000.0 * unit(&mut state),
            agree: 1.0 + 4.0 * unit(&mut state),
            consc: 1.0 + 4.0 * unit(&mut state),
            extra: 1.0 + 4.0 * unit(&mut state),
            neuro: 1.0 + 4.0 * unit(&mut state),
            open: 1.0 + 4.0 * unit(&mut state),
        };
        let born = 1936 + (splitmix(&mut state) % 6) as i32;
        let completed_educ = 10.0 + (splitmix(&mut state) % 7) as f64;
        let married_from = 1955 + (splitmix(&mut state) % 8) as i32;
        let depressed_from = if splitmix(&mut state).is_multiple_of(4) {
            Some(1956 + (splitmix(&mut state) % 8) as i32)
        } else {
            None
        };
        let trajectories = years
            .map(|y| {
                let age = (y - born) as f64;
                (
                    y,
                    TrajectoryPoint {
                        children: births.iter().filter(|b| b.year <= y).count() as u32,
                        age,
                        married: y >= married_from,
                        educ_years: educ_years_from(completed_educ, age),
                        prior_depression: depressed_from.is_some_and(|d| d <= y - 2),
                    },
                )
            })
            .collect();
        WomanRecord::new(id, Religion::Catholic, fixed, births, trajectories).unwrap()
    }

    fn unintended(year: i32) -> Vec<Birth> {
        vec![Birth {
            year,
            unintended: true,
        }]
    }

    #[test]
    fn earliest_unintended_year_is_min_over_flags() {
        let a = woman_keyed(
            "a",
            1,
            vec![
                Birth {
                    year: 1958,
                    unintended: false,
                },
                Birth {
                    year: 1961,
                    unintended: true,
                },
            ],
        );
        let b = woman_keyed("b", 2, unintended(1959));
        assert_eq!(
            find_earliest_unintended_year([&a, &b].into_iter().cloned().collect::<Vec<_>>().iter()),
            Some(1959)
        );
    }

    #[test]
    fn no_unintended_births_returns_none() {
        let a = woman_keyed(
            "a",
            1,
            vec![Birth {
                year: 1958,
                unintended: false,
            }],
        );
        assert_eq!(find_earliest_unintended_year(std::iter::once(&a)), None);
    }

    #[test]
    fn risk_sets_classify_members() {
        let planned = woman_keyed(
            "c1",
            1,
            vec![
                Birth {
                    year: 1958,
                    unintended: false,
                },
                Birth {
                    year: 1960,
                    unintended: false,
                },
            ],
        );
        let childless = woman_keyed("c2", 2, vec![]);
        let treated_now = woman_keyed("t1", 3, unintended(1961));
        let treated_before = woman_keyed("x", 4, unintended(1959));
        let later_treated = woman_keyed("c3", 5, unintended(1965));
        let refs: Vec<&WomanRecord> = vec![
            &planned,
            &childless,
            &treated_now,
            &treated_before,
            &later_treated,
        ];
        let (treated, controls) = build_risk_sets(&refs, 1961);
        let treated_ids: Vec<&str> = treated.iter().map(|w| w.id()).collect();
        let control_ids: Vec<&str> = controls.iter().map(|w| w.id()).collect();
        assert_eq!(treated_ids, vec!["t1"]);
        // the not-yet-treated woman is a valid control at 1961
        assert_eq!(control_ids, vec!["c1", "c2", "c3"]);
    }

    #[test]
    fn children_consistency_enforced() {
        let good = woman_keyed(
            "ok",
            9,
            vec![Birth {
                year: 1958,
                unintended: false,
            }],
        );
        let mut traj = good.trajectories().clone();
        traj.get_mut(&1959).unwrap().children = 5;
        let r = WomanRecord::new(
            "bad",
            Religion::Catholic,
            FixedCovariates {
                hs_rank: 1.0,
                iq: 1.0,
                ses: 1.0,
                town_pop: 1.0,
                agree: 1.0,
                consc: 1.0,
                extra: 1.0,
                neuro: 1.0,
                open: 1.0,
            },
            vec![Birth {
                year: 1958,
                unintended: false,
            }],
            traj,
        );
        assert!(r.is_err());
    }

    #[test]
    fn decreasing_birth_years_rejected() {
        let births = vec![
            Birth {
                year: 1960,
                unintended: false,
            },
            Birth {
                year: 1958,
                unintended: true,
            },
        ];
        let template = woman_keyed("ok", 9, vec![]);
        let r = WomanRecord::new(
            "bad",
            Religion::Catholic,
            FixedCovariates {
                hs_rank: 1.0,
                iq: 1.0,
                ses: 1.0,
                town_pop: 1.0,
                agree: 1.0,
                consc: 1.0,
                extra: 1.0,
                neuro: 1.0,
                open: 1.0,
            },
            births,
            template.trajectories().clone(),
        );
        assert!(r.is_err());
    }

    #[test]
    fn twin_cohort_matches_at_zero_distance() {
        // every treated woman has an exact covariate twin whose birth in the
        // same year came from a planned pregnancy
        let mut cohort = Vec::new();
        for i in 0..16u64 {
            let year = 1957 + (i % 8) as i32;
            let treated = woman_keyed(&format!("t{i:02}"), i, unintended(year));
            let twin = WomanRecord::new(
                format!("c{i:02}"),
                treated.religion(),
                *treated.fixed_covariates(),
                vec![Birth {
                    year,
                    unintended: false,
                }],
                treated.trajectories().clone(),
            )
            .unwrap();
            cohort.push(treated);
            cohort.push(twin);
        }
        let result = risk_set_match(&cohort).unwrap();
        assert_eq!(result.pairs.len(), 16);
        assert!(result.unmatched.is_empty());
        for p in &result.pairs {
            assert_eq!(&p.treated_id[1..], &p.control_id[1..]);
            assert!(
                p.distance < 1e-9,
                "pair {:?} distance {}",
                p.treated_id,
                p.distance
            );
        }
    }

    #[test]
    fn empty_cohort_matches_nothing() {
        let result = risk_set_match(&[]).unwrap();
        assert!(result.pairs.is_empty());
        assert!(result.unmatched.is_empty());
        assert!(result.cox.is_none());
    }

    #[test]
    fn pair_invariants_hold() {
        let mut cohort = Vec::new();
        for i in 0..12u64 {
            cohort.push(woman_keyed(
                &format!("t{i:02}"),
                i,
                unintended(1957 + (i % 4) as i32),
            ));
        }
        for i in 0..28u64 {
            let births = if i % 2 == 0 {
                vec![Birth {
                    year: 1956,
                    unintended: false,
                }]
            } else {
                vec![]
            };
            cohort.push(woman_keyed(&format!("c{i:02}"), 100 + i, births));
        }
        let result = risk_set_match(&cohort).unwrap();
        // later-treated women may be consumed as controls first, so the
        // pair count is at most the treated count
        assert!(result.pairs.len() >= 8 && result.pairs.len() <= 12);
        // no woman in more than one pair
        let mut everyone = BTreeSet::new();
        for p in &result.pairs {
            assert!(everyone.insert(p.treated_id.clone()));
            assert!(everyone.insert(p.control_id.clone()));
        }
        let by_id: BTreeMap<&str, &WomanRecord> = cohort.iter().map(|w| (w.id(), w)).collect();
        for p in &result.pairs {
            assert_eq!(
                by_id[p.treated_id.as_str()].first_unintended_year(),
                Some(p.t_star)
            );
            assert!(by_id[p.control_id.as_str()].free_of_unintended_through(p.t_star));
        }
    }

    #[test]
    fn all_treated_same_year_without_controls_reported() {
        let cohort: Vec<WomanRecord> = (0..16u64)
            .map(|i| woman_keyed(&format!("t{i:02}"), i, unintended(1960)))
            .collect();
        let result = risk_set_match(&cohort).unwrap();
        assert!(result.pairs.is_empty());
        assert_eq!(result.unmatched.len(), 16);
        assert!(result
            .unmatched
            .iter()
            .all(|u| u.reason == UnmatchedReason::NoControls));
    }

    #[test]
    fn controls_exhausted_reported_unmatched() {
        // 10 treated at 1958 consume 10 of the 19 controls; the 12 treated
        // at 1960 (whose records begin in 1959, keeping them out of the
        // earlier pool) then compete for the 9 that remain
        let mut cohort = Vec::new();
        for i in 0..10u64 {
            cohort.push(woman_keyed(&format!("a{i:02}"), i, unintended(1958)));
        }
        for i in 0..12u64 {
            cohort.push(woman_keyed_range(
                &format!("b{i:02}"),
                50 + i,
                unintended(1960),
                1959..=1970,
            ));
        }
        for i in 0..19u64 {
            cohort.push(woman_keyed(&format!("c{i:02}"), 200 + i, vec![]));
        }
        let result = risk_set_match(&cohort).unwrap();
        let exhausted: Vec<&UnmatchedWoman> = result
            .unmatched
            .iter()
            .filter(|u| u.reason == UnmatchedReason::ControlsExhausted)
            .collect();
        assert_eq!(exhausted.len(), 3);
        assert!(exhausted.iter().all(|u| u.t_star == 1960));
        assert_eq!(result.pairs.len(), 19);
    }

    #[test]
    fn rerun_is_deterministic() {
        let mut cohort = Vec::new();
        for i in 0..36u64 {
            let births = if i % 3 == 0 {
                unintended(1957 + (i % 5) as i32)
            } else {
                vec![]
            };
            cohort.push(woman_keyed(&format!("w{i:02}"), i * 7 + 3, births));
        }
        let a = risk_set_match(&cohort).unwrap();
        let b = risk_set_match(&cohort).unwrap();
        assert_eq!(a.pairs, b.pairs);
        assert_eq!(a.unmatched, b.unmatched);
        assert!(!a.pairs.is_empty());
    }

    #[test]
    fn balance_of_twin_pairs_is_tight() {
        let mut cohort = Vec::new();
        for i in 0..16u64 {
            let year = 1957 + (i % 6) as i32;
            let treated = woman_keyed(&format!("t{i:02}"), i, unintended(year));
            let twin = WomanRecord::new(
                format!("c{i:02}"),
                treated.religion(),
                *treated.fixed_covariates(),
                vec![Birth {
                    year,
                    unintended: false,
                }],
                treated.trajectories().clone(),
            )
            .unwrap();
            cohort.push(treated);
            cohort.push(twin);
        }
        let result = risk_set_match(&cohort).unwrap();
        let table = standardized_differences(&cohort, &result.pairs).unwrap();
        for row in &table.rows {
            assert!(
                row.post_std_diff.abs() < 1e-9,
                "covariate {} diff {}",
                row.covariate,
                row.post_std_diff
            );
        }
    }

    #[test]
    fn std_diff_unit_case() {
        // means 1 vs 0, both variances 1 -> standardized difference 1
        let treated = [0.0, 1.0, 2.0];
        let control = [-1.0, 0.0, 1.0];
        let (d, degenerate) = std_diff(&treated, &control);
        assert!((d - 1.0).abs() < 1e-12);
        assert!(!degenerate);
    }

    #[test]
    fn degenerate_pooled_variance_flagged() {
        let (d, flag) = std_diff(&[1.0, 1.0], &[0.0, 0.0]);
        assert!(d.is_infinite() && flag);
        let (z, flag0) = std_diff(&[1.0, 1.0], &[1.0, 1.0]);
        assert_eq!(z, 0.0);
        assert!(!flag0);
    }

    #[test]
    fn balance_requires_two_pairs() {
        let cohort = vec![
            woman_keyed("t0", 1, unintended(1960)),
            woman_keyed("c0", 2, vec![]),
        ];
        assert!(standardized_differences(&cohort, &[]).is_err());
    }
}
