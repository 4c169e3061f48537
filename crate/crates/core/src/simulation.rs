//! Monte-Carlo power study: generates paired differences for two
//! subpopulations over a grid of configurations, runs the competing
//! replicability and global-null procedures, and estimates power and
//! familywise error with Monte-Carlo standard errors.
//!
//! Per hypothesis (outcome k, subpopulation j) with truth flag h, the
//! generator draws I treatment-minus-control differences from
//! Normal(mu * h / sqrt(I), 1). Every draw stream is derived from
//! (seed, replication, outcome, subgroup), so results are independent of
//! scheduling and worker-thread count.

use crate::cross_screening::{
    automated_cross_screen, holm_global_nulls, holm_max_p, holm_twosided_global,
    weighted_cross_screen_global, weighted_cross_screen_replicability, OutcomeEvidence,
    SubgroupEvidence,
};
use crate::error::{Error, Result};
use crate::paired_inference::{
    sensitivity_pvalues, Mode, PairedDifferences, SensitivityParams, Statistic,
};
use crate::svg::{line_chart, Series};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use std::collections::BTreeSet;

/// One simulation cell: a truth configuration, effect size, pair count,
/// sensitivity parameter, and replication budget.
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub n_outcomes: usize,
    /// Per-outcome truth flags (h1, h2): true means the alternative holds in
    /// that subpopulation.
    pub truth: Vec<(bool, bool)>,
    /// Effect size; the per-pair mean shift is mu * h / sqrt(n_pairs).
    pub mu: f64,
    pub n_pairs: usize,
    pub gamma: f64,
    pub alpha: f64,
    pub replications: usize,
    pub seed: u64,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_outcomes == 0 || self.truth.len() != self.n_outcomes {
            return Err(Error::Config(format!(
                "truth vector has {} entries for {} outcomes",
                self.truth.len(),
                self.n_outcomes
            )));
        }
        if self.n_pairs == 0 {
            return Err(Error::Config("n_pairs must be at least 1".into()));
        }
        if self.replications == 0 {
            return Err(Error::Config("replications must be at least 1".into()));
        }
        if !(self.mu.is_finite() && self.mu >= 0.0) {
            return Err(Error::Config(format!(
                "mu must be nonnegative, got {}",
                self.mu
            )));
        }
        if !(self.gamma.is_finite() && self.gamma >= 1.0) {
            return Err(Error::Config(format!(
                "gamma must be >= 1, got {}",
                self.gamma
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!(
                "alpha must lie in (0,1), got {}",
                self.alpha
            )));
        }
        Ok(())
    }

    /// Number of outcomes with a true effect in both subpopulations.
    pub fn k11(&self) -> usize {
        self.truth.iter().filter(|(a, b)| *a && *b).count()
    }
}

/// Truth vector with the first `k11` outcomes replicable and the rest null
/// in both subpopulations.
pub fn truth_with_replicable(n_outcomes: usize, k11: usize) -> Vec<(bool, bool)> {
    (0..n_outcomes).map(|k| (k < k11, k < k11)).collect()
}

/// The procedures under comparison.
#[derive(Debug, Clone, PartialEq)]
pub enum Method {
    AutomatedCrossScreen,
    WeightedReplicability { c: f64 },
    HolmMaxP,
    WeightedGlobal { c: f64 },
    HolmGlobalNulls,
    HolmTwoSided,
}

/// Whether a method claims replicated effects (both subpopulations) or
/// global discoveries (at least one subpopulation).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Claim {
    Replicability,
    Global,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::AutomatedCrossScreen => "automated-cross-screen",
            Method::WeightedReplicability { .. } => "wcs-replicability",
            Method::HolmMaxP => "holm-max-p",
            Method::WeightedGlobal { .. } => "wcs-global",
            Method::HolmGlobalNulls => "holm-global-nulls",
            Method::HolmTwoSided => "holm-twosided",
        }
    }

    pub fn c(&self) -> Option<f64> {
        match self {
            Method::WeightedReplicability { c } | Method::WeightedGlobal { c } => Some(*c),
            _ => None,
        }
    }

    pub fn claim(&self) -> Claim {
        match self {
            Method::AutomatedCrossScreen
            | Method::WeightedReplicability { .. }
            | Method::HolmMaxP => Claim::Replicability,
            Method::WeightedGlobal { .. } | Method::HolmGlobalNulls | Method::HolmTwoSided => {
                Claim::Global
            }
        }
    }
}

/// What a run estimates: the expected true-positive proportion for one of
/// the two claim types, or the probability of any false claim.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    ReplicabilityPower,
    GlobalPower,
    Fwer,
}

impl Metric {
    pub fn name(&self) -> &'static str {
        match self {
            Metric::ReplicabilityPower => "replicability-power",
            Metric::GlobalPower => "global-power",
            Metric::Fwer => "fwer",
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "replicability" | "replicability-power" => Ok(Metric::ReplicabilityPower),
            "global" | "global-power" => Ok(Metric::GlobalPower),
            "fwer" => Ok(Metric::Fwer),
            other => Err(Error::Config(format!(
                "unknown metric {other:?} (expected replicability, global, or fwer)"
            ))),
        }
    }
}

fn outcome_name(k: usize) -> String {
    format!("o{:03}", k + 1)
}

fn stream_seed(seed: u64, replication: u64, outcome: u64, subgroup: u64) -> [u8; 32] {
    let mut bytes = [0u8; 32];
    bytes[0..8].copy_from_slice(&seed.to_le_bytes());
    bytes[8..16].copy_from_slice(&replication.to_le_bytes());
    bytes[16..24].copy_from_slice(&outcome.to_le_bytes());
    bytes[24..32].copy_from_slice(&subgroup.to_le_bytes());
    bytes
}

/// Draws the per-outcome paired differences of one replication for both
/// subpopulations. Deterministic in (seed, replication_index, outcome,
/// subgroup): the same tuple always yields bitwise-identical draws.
pub fn generate_differences(
    cfg: &SimConfig,
    replication_index: usize,
) -> Result<[Vec<PairedDifferences>; 2]> {
    cfg.validate()?;
    let scale = (cfg.n_pairs as f64).sqrt();
    let mut out: [Vec<PairedDifferences>; 2] = [Vec::new(), Vec::new()];
    for (j, side) in out.iter_mut().enumerate() {
        for (k, &truth) in cfg.truth.iter().enumerate() {
            let h = if j == 0 { truth.0 } else { truth.1 };
            let mean = cfg.mu * (h as u8 as f64) / scale;
            let normal = Normal::new(mean, 1.0).expect("valid normal");
            let mut rng = ChaCha8Rng::from_seed(stream_seed(
                cfg.seed,
                replication_index as u64,
                k as u64,
                j as u64,
            ));
            let diffs: Vec<f64> = (0..cfg.n_pairs).map(|_| normal.sample(&mut rng)).collect();
            side.push(PairedDifferences::new(
                outcome_name(k),
                format!("s{}", j + 1),
                diffs,
            )?);
        }
    }
    Ok(out)
}

fn build_evidence(cfg: &SimConfig, replication_index: usize) -> Result<[SubgroupEvidence; 2]> {
    let gamma = SensitivityParams::new(cfg.gamma)?;
    let [d1, d2] = generate_differences(cfg, replication_index)?;
    let to_evidence = |diffs: Vec<PairedDifferences>, id: &str| -> Result<SubgroupEvidence> {
        let mut outcomes = std::collections::BTreeMap::new();
        for d in &diffs {
            let stat = Statistic::TTest.scores(d)?;
            let triple = sensitivity_pvalues(&stat, gamma, Mode::Auto)?;
            outcomes.insert(
                d.outcome_id.clone(),
                OutcomeEvidence {
                    triple,
                    statistic: stat,
                },
            );
        }
        SubgroupEvidence::new(id, cfg.gamma, outcomes)
    };
    Ok([to_evidence(d1, "s1")?, to_evidence(d2, "s2")?])
}

fn run_method(
    method: &Method,
    a: &SubgroupEvidence,
    b: &SubgroupEvidence,
    alpha: f64,
) -> Result<BTreeSet<String>> {
    Ok(match method {
        Method::AutomatedCrossScreen => automated_cross_screen(a, b, alpha)?.replicated,
        Method::WeightedReplicability { c } => {
            weighted_cross_screen_replicability(a, b, *c, alpha)?.replicated
        }
        Method::HolmMaxP => holm_max_p(a, b, alpha)?.discoveries,
        Method::WeightedGlobal { c } => {
            weighted_cross_screen_global(a, b, *c, alpha)?.global_discoveries
        }
        Method::HolmGlobalNulls => holm_global_nulls(a, b, alpha)?.discoveries,
        Method::HolmTwoSided => holm_twosided_global(a, b, alpha)?.discoveries,
    })
}

/// One row of the power table.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerRow {
    pub metric: Metric,
    pub method: String,
    pub gamma: f64,
    pub c: Option<f64>,
    pub k11: usize,
    pub power_estimate: f64,
    pub mc_standard_error: f64,
}

/// Number of outcomes whose discovery is correct for a claim type.
fn n_true_signals(cfg: &SimConfig, claim: Claim) -> usize {
    cfg.truth
        .iter()
        .filter(|(h1, h2)| match claim {
            Claim::Replicability => *h1 && *h2,
            Claim::Global => *h1 || *h2,
        })
        .count()
}

/// Estimates the chosen metric for every method over shared replications.
///
/// The generated data of each replication is reused across methods, and
/// counts are accumulated as integers, so estimates are identical for any
/// worker-thread count.
pub fn estimate_power_many(
    cfg: &SimConfig,
    methods: &[Method],
    metric: Metric,
) -> Result<Vec<PowerRow>> {
    cfg.validate()?;
    for method in methods {
        if metric != Metric::Fwer && n_true_signals(cfg, method.claim()) == 0 {
            return Err(Error::Config(format!(
                "method {} has no true signals under this truth configuration; \
                 use the fwer metric instead",
                method.name()
            )));
        }
    }

    // per-method (true-discovery count, any-false-claim count), summed as
    // integers over replications so the estimates are schedule independent
    let totals: Result<Vec<(u64, u64)>> = (0..cfg.replications)
        .into_par_iter()
        .map(|rep| -> Result<Vec<(u64, u64)>> {
            let [a, b] = build_evidence(cfg, rep)?;
            let mut per_method = Vec::with_capacity(methods.len());
            for method in methods {
                let discoveries = run_method(method, &a, &b, cfg.alpha)?;
                let claim = method.claim();
                let mut true_count = 0u64;
                let mut false_any = 0u64;
                for name in &discoveries {
                    let k: usize = name[1..].parse::<usize>().expect("generated name") - 1;
                    let (h1, h2) = cfg.truth[k];
                    let is_true = match claim {
                        Claim::Replicability => h1 && h2,
                        Claim::Global => h1 || h2,
                    };
                    if is_true {
                        true_count += 1;
                    } else {
                        false_any = 1;
                    }
                }
                per_method.push((true_count, false_any));
            }
            Ok(per_method)
        })
        .try_reduce(
            || vec![(0u64, 0u64); methods.len()],
            |mut acc, item| {
                for (a, b) in acc.iter_mut().zip(item) {
                    a.0 += b.0;
                    a.1 += b.1;
                }
                Ok(acc)
            },
        );
    let totals = totals?;

    let reps = cfg.replications as f64;
    Ok(methods
        .iter()
        .zip(totals)
        .map(|(method, (true_total, false_total))| {
            let estimate = match metric {
                Metric::Fwer => false_total as f64 / reps,
                _ => {
                    let signals = n_true_signals(cfg, method.claim()) as f64;
                    true_total as f64 / (reps * signals)
                }
            };
            PowerRow {
                metric,
                method: method.name().to_string(),
                gamma: cfg.gamma,
                c: method.c(),
                k11: cfg.k11(),
                power_estimate: estimate,
                mc_standard_error: (estimate * (1.0 - estimate) / reps).sqrt(),
            }
        })
        .collect())
}

/// Estimates one method; see [`estimate_power_many`].
pub fn estimate_power(cfg: &SimConfig, method: &Method, metric: Metric) -> Result<PowerRow> {
    Ok(
        estimate_power_many(cfg, std::slice::from_ref(method), metric)?
            .pop()
            .expect("one method yields one row"),
    )
}

/// Grid specification for a full study.
#[derive(Debug, Clone)]
pub struct StudyConfig {
    pub metric: Metric,
    pub n_outcomes: usize,
    pub k11_grid: Vec<usize>,
    pub gamma_grid: Vec<f64>,
    pub c_grid: Vec<f64>,
    /// Effect size; `None` picks the per-metric default (4 for
    /// replicability power, 3 for global power, 0 under the complete null).
    pub mu: Option<f64>,
    pub n_pairs: usize,
    pub alpha: f64,
    pub replications: usize,
    pub seed: u64,
}

impl StudyConfig {
    pub fn defaults(metric: Metric) -> Self {
        StudyConfig {
            metric,
            n_outcomes: 16,
            k11_grid: vec![1, 3, 6, 10, 13, 16],
            gamma_grid: vec![1.0, 1.2, 1.5],
            c_grid: (0..=10).map(|i| i as f64 / 10.0).collect(),
            mu: None,
            n_pairs: 100,
            alpha: 0.05,
            replications: if metric == Metric::Fwer {
                20_000
            } else {
                2_500
            },
            seed: 20_2408,
        }
    }

    pub fn effect_size(&self) -> f64 {
        self.mu.unwrap_or(match self.metric {
            Metric::ReplicabilityPower => 4.0,
            Metric::GlobalPower => 3.0,
            Metric::Fwer => 0.0,
        })
    }

    /// Methods compared under this metric.
    pub fn methods(&self) -> Vec<Method> {
        match self.metric {
            Metric::ReplicabilityPower => {
                let mut m: Vec<Method> = self
                    .c_grid
                    .iter()
                    .map(|&c| Method::WeightedReplicability { c })
                    .collect();
                m.push(Method::HolmMaxP);
                m.push(Method::AutomatedCrossScreen);
                m
            }
            Metric::GlobalPower => {
                let mut m: Vec<Method> = self
                    .c_grid
                    .iter()
                    .map(|&c| Method::WeightedGlobal { c })
                    .collect();
                m.push(Method::HolmGlobalNulls);
                m.push(Method::HolmTwoSided);
                m
            }
            Metric::Fwer => {
                let mut m = vec![Method::AutomatedCrossScreen];
                for &c in &[0.0, 0.5, 1.0] {
                    m.push(Method::WeightedReplicability { c });
                }
                m.push(Method::HolmGlobalNulls);
                m.push(Method::HolmMaxP);
                m.push(Method::HolmTwoSided);
                m
            }
        }
    }

    /// Parses the key=value study configuration format. Unknown keys are
    /// rejected by name. Lists are comma separated; `#` starts a comment.
    pub fn from_key_values(text: &str) -> Result<Self> {
        let mut cfg = StudyConfig::defaults(Metric::ReplicabilityPower);
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key = value", lineno + 1))
            })?;
            let (key, value) = (key.trim(), value.trim());
            let bad =
                |what: &str| Error::Config(format!("key {key:?}: {what} (line {})", lineno + 1));
            match key {
                "metric" => cfg.metric = value.parse()?,
                "n_outcomes" => {
                    cfg.n_outcomes = value.parse().map_err(|_| bad("expected a count"))?
                }
                "k11_grid" => {
                    cfg.k11_grid = parse_list(value).map_err(|_| bad("expected counts"))?
                }
                "gamma_grid" => {
                    cfg.gamma_grid = parse_list(value).map_err(|_| bad("expected numbers"))?
                }
                "c_grid" => cfg.c_grid = parse_list(value).map_err(|_| bad("expected numbers"))?,
                "mu" => cfg.mu = Some(value.parse().map_err(|_| bad("expected a number"))?),
                "n_pairs" => cfg.n_pairs = value.parse().map_err(|_| bad("expected a count"))?,
                "alpha" => cfg.alpha = value.parse().map_err(|_| bad("expected a number"))?,
                "replications" => {
                    cfg.replications = value.parse().map_err(|_| bad("expected a count"))?
                }
                "seed" => cfg.seed = value.parse().map_err(|_| bad("expected an integer"))?,
                other => {
                    return Err(Error::Config(format!(
                        "unknown config key {other:?} (line {})",
                        lineno + 1
                    )))
                }
            }
        }
        if cfg.metric == Metric::Fwer {
            cfg.k11_grid = vec![0];
        }
        Ok(cfg)
    }
}

fn parse_list<T: std::str::FromStr>(value: &str) -> std::result::Result<Vec<T>, T::Err> {
    value.split(',').map(|v| v.trim().parse()).collect()
}

/// Runs the full Cartesian sweep over (K11, gamma) cells, evaluating every
/// method of the metric in each cell.
pub fn run_power_study(study: &StudyConfig) -> Result<Vec<PowerRow>> {
    let methods = study.methods();
    let mut rows = Vec::new();
    let k11_grid: Vec<usize> = if study.metric == Metric::Fwer {
        vec![0]
    } else {
        study.k11_grid.clone()
    };
    for &k11 in &k11_grid {
        if k11 > study.n_outcomes {
            return Err(Error::Config(format!(
                "k11 {} exceeds n_outcomes {}",
                k11, study.n_outcomes
            )));
        }
        for &gamma in &study.gamma_grid {
            let cfg = SimConfig {
                n_outcomes: study.n_outcomes,
                truth: truth_with_replicable(study.n_outcomes, k11),
                mu: study.effect_size(),
                n_pairs: study.n_pairs,
                gamma,
                alpha: study.alpha,
                replications: study.replications,
                seed: study.seed,
            };
            rows.extend(estimate_power_many(&cfg, &methods, study.metric)?);
        }
    }
    Ok(rows)
}

/// Renders the per-cell chart: the weighted procedure's power as a function
/// of c, with the c-independent competitors drawn as dashed horizontal
/// lines.
pub fn cell_chart(rows: &[PowerRow], k11: usize, gamma: f64, metric: Metric) -> String {
    let cell: Vec<&PowerRow> = rows
        .iter()
        .filter(|r| r.k11 == k11 && r.gamma == gamma && r.metric == metric)
        .collect();
    let mut series = Vec::new();
    let mut curve: Vec<(f64, f64)> = cell
        .iter()
        .filter(|r| r.c.is_some())
        .map(|r| (r.c.unwrap(), r.power_estimate))
        .collect();
    curve.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    if !curve.is_empty() {
        let label = cell
            .iter()
            .find(|r| r.c.is_some())
            .map(|r| r.method.clone())
            .unwrap_or_default();
        series.push(Series {
            label,
            points: curve,
            dashed: false,
        });
    }
    let mut flat_methods: Vec<&PowerRow> = cell.iter().filter(|r| r.c.is_none()).copied().collect();
    flat_methods.sort_by(|a, b| a.method.cmp(&b.method));
    for r in flat_methods {
        series.push(Series {
            label: r.method.clone(),
            points: vec![(0.0, r.power_estimate), (1.0, r.power_estimate)],
            dashed: true,
        });
    }
    let title = format!("{} | K11 = {k11}, gamma = {gamma}", metric.name());
    line_chart(&title, "c", metric.name(), &series)
}
