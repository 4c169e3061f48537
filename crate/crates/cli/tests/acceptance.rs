//! Acceptance suite. Each test exercises one acceptance criterion end to
//! end at its stated tolerance and prints one pass/fail line (run with
//! `cargo test --test acceptance -- --nocapture` to see them).

use crossmatch_core::cross_screening::{weighted_cross_screen_replicability, SubgroupEvidence};
use crossmatch_core::multiple_testing::{holm, weighted_holm, WeightedFamily};
use crossmatch_core::outcome_scoring::{
    derive_alcohol_measures, score_cesd, score_pwb, CesdItemMap, CesdResponse, PwbItemMap,
    PwbResponse,
};
use crossmatch_core::paired_inference::{
    sensitivity_pvalues, Mode, PairedDifferences, SensitivityParams, Statistic,
};
use crossmatch_core::risk_set_matching::{
    fit_time_dependent_cox, risk_set_match, standardized_differences, CoxSubject,
};
use crossmatch_core::simulation::{
    estimate_power_many, run_power_study, truth_with_replicable, Method, Metric, PowerRow,
    SimConfig, StudyConfig,
};
use crossmatch_core::synthetic::{
    confounded_cohort, single_covariate_cox_cohort, CONFOUNDED_COVARIATES,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::collections::BTreeSet;
use std::path::Path;
use std::process::Command;

const ALPHA: f64 = 0.05;
const STUDY_SEED: u64 = 202_408;

fn pass(criterion: &str, detail: &str) {
    println!("acceptance {criterion}: PASS ({detail})");
}

fn study(metric: Metric, replications: usize) -> StudyConfig {
    StudyConfig {
        metric,
        gamma_grid: vec![1.0, 1.2],
        replications,
        seed: STUDY_SEED,
        ..StudyConfig::defaults(metric)
    }
}

fn cell<'a>(rows: &'a [PowerRow], method: &str, k11: usize, gamma: f64) -> Vec<&'a PowerRow> {
    rows.iter()
        .filter(|r| r.method == method && r.k11 == k11 && r.gamma == gamma)
        .collect()
}

/// Smallest c attaining the maximum power of the weighted curve.
fn argmax_c(rows: &[PowerRow], method: &str, k11: usize, gamma: f64) -> f64 {
    let mut curve: Vec<(f64, f64)> = cell(rows, method, k11, gamma)
        .iter()
        .map(|r| (r.c.expect("weighted rows carry c"), r.power_estimate))
        .collect();
    curve.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let best = curve
        .iter()
        .map(|&(_, p)| p)
        .fold(f64::NEG_INFINITY, f64::max);
    curve
        .iter()
        .find(|&&(_, p)| p == best)
        .map(|&(c, _)| c)
        .expect("nonempty curve")
}

#[test]
fn acceptance_1_replicability_figure() {
    // n_outcomes = 16, mu = 4, I = 100, alpha = 0.05, 2500 replications,
    // K11 in {1,3,6,10,13,16}, gamma in {1, 1.2}, 11-point c grid
    let rows = run_power_study(&study(Metric::ReplicabilityPower, 2_500)).unwrap();

    // (a) at K11 = 1, gamma = 1.2: weighted screening at c = 0 beats Holm on
    // maximum p-values by at least 0.3, beyond 3 combined MC standard errors
    let wcs = cell(&rows, "wcs-replicability", 1, 1.2)
        .into_iter()
        .find(|r| r.c == Some(0.0))
        .unwrap();
    let hmp = cell(&rows, "holm-max-p", 1, 1.2)[0];
    let gain = wcs.power_estimate - hmp.power_estimate;
    let se = (wcs.mc_standard_error.powi(2) + hmp.mc_standard_error.powi(2)).sqrt();
    assert!(
        gain - 3.0 * se >= 0.3,
        "gain {gain:.4} with 3se {:.4} does not clear 0.3",
        3.0 * se
    );

    // (b) the best c never moves left as the number of replicable effects
    // grows from 1 to 16
    for gamma in [1.0, 1.2] {
        let sparse = argmax_c(&rows, "wcs-replicability", 1, gamma);
        let dense = argmax_c(&rows, "wcs-replicability", 16, gamma);
        assert!(
            dense >= sparse,
            "gamma {gamma}: argmax c fell from {sparse} to {dense}"
        );
        // sparse regime: the best c is at or adjacent to 0 on the 11-point grid
        assert!(
            sparse <= 0.1 + 1e-12,
            "gamma {gamma}: sparse-regime argmax c is {sparse}"
        );
    }
    pass(
        "1 (replicability figure)",
        &format!(
            "gain at K11=1, gamma=1.2 is {gain:.3} (3se {:.3})",
            3.0 * se
        ),
    );
}

#[test]
fn acceptance_2_global_figure() {
    // mu = 3, same grid: Holm for global nulls is the most powerful at every
    // c grid point, each margin no worse than -3 combined MC-SE
    let rows = run_power_study(&study(Metric::GlobalPower, 2_500)).unwrap();
    let mut worst: f64 = f64::INFINITY;
    for gamma in [1.0, 1.2] {
        for k11 in [1usize, 3, 6, 10, 13, 16] {
            let hg = cell(&rows, "holm-global-nulls", k11, gamma)[0];
            for wcs in cell(&rows, "wcs-global", k11, gamma) {
                let margin = hg.power_estimate - wcs.power_estimate;
                let se = (hg.mc_standard_error.powi(2) + wcs.mc_standard_error.powi(2)).sqrt();
                assert!(
                    margin >= -3.0 * se,
                    "K11 {k11} gamma {gamma} c {:?}: margin {margin:.4} below -3se {:.4}",
                    wcs.c,
                    -3.0 * se
                );
                worst = worst.min(margin + 3.0 * se);
            }
        }
    }
    pass(
        "2 (global-null figure)",
        &format!("holm-global-nulls dominates; worst slack {worst:.4}"),
    );
}

#[test]
fn acceptance_3_fwer_validity() {
    // complete null, 20,000 replications, gamma in {1, 1.2, 2.0}: every
    // procedure's familywise error stays within 0.05 + 3 MC-SE
    let methods = vec![
        Method::AutomatedCrossScreen,
        Method::WeightedReplicability { c: 0.0 },
        Method::WeightedReplicability { c: 0.5 },
        Method::WeightedReplicability { c: 1.0 },
        Method::HolmGlobalNulls,
        Method::HolmMaxP,
        Method::HolmTwoSided,
    ];
    let mut max_fwer: f64 = 0.0;
    for gamma in [1.0, 1.2, 2.0] {
        let cfg = SimConfig {
            n_outcomes: 16,
            truth: truth_with_replicable(16, 0),
            mu: 0.0,
            n_pairs: 100,
            gamma,
            alpha: ALPHA,
            replications: 20_000,
            seed: STUDY_SEED,
        };
        for row in estimate_power_many(&cfg, &methods, Metric::Fwer).unwrap() {
            let bound = ALPHA + 3.0 * row.mc_standard_error.max(1e-6);
            assert!(
                row.power_estimate <= bound,
                "gamma {gamma} {} c {:?}: FWER {:.5} above {bound:.5}",
                row.method,
                row.c,
                row.power_estimate
            );
            max_fwer = max_fwer.max(row.power_estimate);
        }
    }
    pass(
        "3 (FWER validity)",
        &format!("max empirical FWER {max_fwer:.4} across 21 procedure/gamma cells"),
    );
}

/// Independent weighted enumeration over explicit sign vectors: the
/// probability of each vector is a running product of per-pair factors.
fn oracle_weighted_tail(scores: &[f64], threshold: f64, pi: f64, lower: bool) -> f64 {
    let n = scores.len();
    let mut total = 0.0;
    for mask in 0u64..(1 << n) {
        let mut t = 0.0;
        let mut prob = 1.0;
        for (i, q) in scores.iter().enumerate() {
            if (mask >> i) & 1 == 1 {
                t += q;
                prob *= pi;
            } else {
                prob *= 1.0 - pi;
            }
        }
        let hit = if lower {
            t <= threshold
        } else {
            t >= threshold
        };
        if hit {
            total += prob;
        }
    }
    total
}

#[test]
fn acceptance_4_exact_oracle_equivalence() {
    let mut rng = ChaCha8Rng::seed_from_u64(4_001);
    let normal = Normal::new(0.2, 1.0).unwrap();
    let mut worst: f64 = 0.0;
    for trial in 0..200 {
        let n = 1 + trial % 12;
        let sample: Vec<f64> = (0..n).map(|_| normal.sample(&mut rng)).collect();
        if sample.iter().all(|x| *x == 0.0) {
            continue;
        }
        let d = PairedDifferences::new("o", "s", sample).unwrap();
        for statistic in [Statistic::Wilcoxon, Statistic::TTest] {
            let stat = statistic.scores(&d).unwrap();

            // randomization inference at gamma 1: exact equality with the
            // equiprobable enumeration
            let triple =
                sensitivity_pvalues(&stat, SensitivityParams::new(1.0).unwrap(), Mode::Exact)
                    .unwrap();
            let count_right = oracle_weighted_tail(stat.scores(), stat.observed(), 0.5, false);
            let count_left = oracle_weighted_tail(stat.scores(), stat.observed(), 0.5, true);
            assert_eq!(
                triple.right, count_right,
                "trial {trial} {statistic:?} right"
            );
            assert_eq!(triple.left, count_left, "trial {trial} {statistic:?} left");

            // sensitivity-adjusted tails match the weighted enumeration with
            // P(positive sign) = gamma / (1 + gamma) to 1e-12
            for gamma in [1.2, 2.0, 3.7] {
                let g = SensitivityParams::new(gamma).unwrap();
                let triple = sensitivity_pvalues(&stat, g, Mode::Exact).unwrap();
                let oracle_right =
                    oracle_weighted_tail(stat.scores(), stat.observed(), g.pi_plus(), false);
                let oracle_left =
                    oracle_weighted_tail(stat.scores(), stat.observed(), 1.0 / (1.0 + gamma), true);
                worst = worst
                    .max((triple.right - oracle_right).abs())
                    .max((triple.left - oracle_left).abs());
                assert!(
                    (triple.right - oracle_right).abs() <= 1e-12,
                    "trial {trial} {statistic:?} gamma {gamma}: {} vs {}",
                    triple.right,
                    oracle_right
                );
                assert!(
                    (triple.left - oracle_left).abs() <= 1e-12,
                    "trial {trial} {statistic:?} gamma {gamma} left: {} vs {}",
                    triple.left,
                    oracle_left
                );
            }
        }
    }
    pass(
        "4 (exact-oracle equivalence)",
        &format!("200 vectors, n <= 12; worst sensitivity-tail deviation {worst:.2e}"),
    );
}

#[test]
fn acceptance_5_reduction_identities() {
    // (i) weighted cross-screening at c = 1 equals Holm at alpha/2 on all
    // directed one-sided p-values, per subgroup, on 500 random instances
    let mut rng = ChaCha8Rng::seed_from_u64(5_001);
    for instance in 0..500 {
        let n_outcomes = 3 + (instance % 14);
        let names: Vec<String> = (0..n_outcomes).map(|k| format!("k{k:02}")).collect();
        let mut make_subgroup = |id: &str| -> SubgroupEvidence {
            let diffs: Vec<PairedDifferences> = names
                .iter()
                .map(|k| {
                    let mean = rng.gen_range(-1.0f64..1.0);
                    let normal = Normal::new(mean, 1.0).unwrap();
                    let v: Vec<f64> = (0..30).map(|_| normal.sample(&mut rng)).collect();
                    PairedDifferences::new(k.clone(), id, v).unwrap()
                })
                .collect();
            SubgroupEvidence::from_differences(
                id,
                &diffs,
                Statistic::TTest,
                SensitivityParams::new(1.0).unwrap(),
                Mode::Normal,
            )
            .unwrap()
        };
        let a = make_subgroup("a");
        let b = make_subgroup("b");
        let result = weighted_cross_screen_replicability(&a, &b, 1.0, ALPHA).unwrap();

        for (tested, other) in [(&a, &b), (&b, &a)] {
            // direction for the tested subgroup comes from the other
            // subgroup's centered statistic sign
            let pvalues: Vec<f64> = names
                .iter()
                .map(|k| {
                    let dir = other.evidence(k).unwrap().statistic.center_sign();
                    let t = &tested.evidence(k).unwrap().triple;
                    if dir == 1 {
                        t.right
                    } else {
                        t.left
                    }
                })
                .collect();
            let plain = holm(&pvalues, ALPHA / 2.0).unwrap();
            let expected: BTreeSet<String> = names
                .iter()
                .enumerate()
                .filter(|(i, _)| plain.is_rejected(*i))
                .map(|(_, k)| k.clone())
                .collect();
            let screen = result
                .screens
                .iter()
                .find(|s| s.subgroup_id == tested.subgroup_id())
                .unwrap();
            let got: BTreeSet<String> = screen
                .status
                .iter()
                .filter(|(_, &s)| s != 0)
                .map(|(k, _)| k.clone())
                .collect();
            assert_eq!(
                got,
                expected,
                "instance {instance} subgroup {}",
                tested.subgroup_id()
            );
        }
    }

    // (ii) weighted Holm with unit weights equals Holm on 1000 instances
    let mut rng = ChaCha8Rng::seed_from_u64(5_002);
    for _ in 0..1000 {
        let m = rng.gen_range(1..=40);
        let pvalues: Vec<f64> = (0..m).map(|_| rng.gen()).collect();
        let plain = holm(&pvalues, ALPHA).unwrap();
        let family = WeightedFamily::new(pvalues, vec![1.0; m], ALPHA).unwrap();
        assert_eq!(plain, weighted_holm(&family).unwrap());
    }
    pass(
        "5 (reduction identities)",
        "c=1 equals per-subgroup Holm on 500 instances; unit-weight wHolm equals Holm on 1000",
    );
}

/// Breslow partial log-likelihood for a single covariate, written directly
/// from the formula with no shared code with the fitting path.
fn loglik_scan(subjects: &[CoxSubject], beta: f64) -> f64 {
    let mut years: Vec<i32> = subjects.iter().filter_map(|s| s.event_year).collect();
    years.sort_unstable();
    years.dedup();
    let mut ll = 0.0;
    for &t in &years {
        let mut denom = 0.0;
        let mut events = 0usize;
        let mut event_lp = 0.0;
        for s in subjects {
            if s.event_year.is_none_or(|e| e >= t) {
                if let Some(x) = s.trajectories.get(&t) {
                    denom += (beta * x[0]).exp();
                    if s.event_year == Some(t) {
                        events += 1;
                        event_lp += beta * x[0];
                    }
                }
            }
        }
        ll += event_lp - events as f64 * denom.ln();
    }
    ll
}

#[test]
fn acceptance_6_matching_quality() {
    // 400-woman confounded cohort, fixed seed 13
    let cohort = confounded_cohort(400, 13);
    let result = risk_set_match(&cohort).unwrap();
    assert!(
        result.pairs.len() >= 50,
        "only {} pairs",
        result.pairs.len()
    );
    let table = standardized_differences(&cohort, &result.pairs).unwrap();
    let mut max_post: f64 = 0.0;
    for row in &table.rows {
        assert!(
            row.post_std_diff.abs() <= 0.2,
            "{}: post-matching standardized difference {}",
            row.covariate,
            row.post_std_diff
        );
        max_post = max_post.max(row.post_std_diff.abs());
    }
    for name in CONFOUNDED_COVARIATES {
        let row = table.rows.iter().find(|r| r.covariate == name).unwrap();
        assert!(
            row.post_std_diff.abs() < row.pre_std_diff.abs(),
            "{name}: post {} not below pre {}",
            row.post_std_diff,
            row.pre_std_diff
        );
    }

    // hazard-fit oracle: Newton against a golden-section scan of the same
    // partial likelihood on the single-covariate cohort
    let subjects = single_covariate_cox_cohort(40, 6_006);
    let model = fit_time_dependent_cox(&subjects).unwrap();
    let (mut lo, mut hi) = (-5.0f64, 5.0f64);
    let phi = (5.0f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let a = hi - phi * (hi - lo);
        let b = lo + phi * (hi - lo);
        if loglik_scan(&subjects, a) < loglik_scan(&subjects, b) {
            lo = a;
        } else {
            hi = b;
        }
    }
    let scan_beta = (lo + hi) / 2.0;
    assert!(
        (model.beta[0] - scan_beta).abs() < 1e-4,
        "newton {} vs scan {scan_beta}",
        model.beta[0]
    );
    pass(
        "6 (matching quality)",
        &format!(
            "{} pairs, max |post| standardized difference {max_post:.3}, cox delta {:.2e}",
            result.pairs.len(),
            (model.beta[0] - scan_beta).abs()
        ),
    );
}

#[test]
fn acceptance_7_scoring_ranges() {
    let cesd_map = CesdItemMap::default();
    let mut top = [7u8; 20];
    for &i in &cesd_map.reverse_items {
        top[i - 1] = 0;
    }
    assert_eq!(score_cesd(&CesdResponse::new(top, &cesd_map).unwrap()), 140);
    let mut bottom = [0u8; 20];
    for &i in &cesd_map.reverse_items {
        bottom[i - 1] = 7;
    }
    assert_eq!(
        score_cesd(&CesdResponse::new(bottom, &cesd_map).unwrap()),
        0
    );

    let pwb_map = PwbItemMap::default();
    let scores = score_pwb(&PwbResponse::new([6; 42]).unwrap(), &pwb_map);
    assert_eq!(scores.subscales, [42; 6]);

    // boundary rules: exactly avg 3 with exactly 4 drinking days is at
    // risk; exactly two consequences is possible dependence
    assert!(derive_alcohol_measures(4, 3.0, [false; 5]).unwrap().at_risk);
    assert!(!derive_alcohol_measures(3, 3.0, [false; 5]).unwrap().at_risk);
    assert!(
        !derive_alcohol_measures(4, 2.99, [false; 5])
            .unwrap()
            .at_risk
    );
    let two = [true, true, false, false, false];
    let one = [true, false, false, false, false];
    assert!(
        derive_alcohol_measures(0, 0.0, two)
            .unwrap()
            .possible_dependence
    );
    assert!(
        !derive_alcohol_measures(0, 0.0, one)
            .unwrap()
            .possible_dependence
    );

    pass(
        "7 (scoring ranges)",
        "depression score spans [0, 140]; all well-being subscales reach 42; alcohol boundaries hold",
    );
}

fn run_cli(args: &[&str], extra: &[(&Path, &str)]) {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_crossmatch"));
    cmd.args(args);
    for (path, flag) in extra {
        cmd.arg(flag).arg(path);
    }
    let status = cmd.status().unwrap();
    assert!(status.success(), "command {args:?} failed");
}

#[test]
fn acceptance_8_thread_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();

    // simulate
    let config = root.join("sim.cfg");
    std::fs::write(
        &config,
        "metric = replicability\nn_outcomes = 8\nk11_grid = 1, 3\ngamma_grid = 1, 1.2\n\
         c_grid = 0, 0.5, 1\nn_pairs = 60\nreplications = 300\nseed = 42\n",
    )
    .unwrap();
    for threads in ["1", "8"] {
        let out = root.join(format!("sim_{threads}"));
        run_cli(
            &[
                "simulate",
                "--threads",
                threads,
                "--config",
                config.to_str().unwrap(),
                "--out-dir",
                out.to_str().unwrap(),
            ],
            &[],
        );
    }
    let sim1 = std::fs::read(root.join("sim_1/power.csv")).unwrap();
    let sim8 = std::fs::read(root.join("sim_8/power.csv")).unwrap();
    assert_eq!(sim1, sim8, "power.csv differs across thread counts");

    // match
    let cohort = confounded_cohort(300, 13);
    let cohort_path = root.join("cohort.csv");
    let births_path = root.join("births.csv");
    crossmatch_core::io::write_cohort_csv(&cohort_path, &cohort).unwrap();
    crossmatch_core::io::write_births_csv(&births_path, &cohort).unwrap();
    for threads in ["1", "8"] {
        let out = root.join(format!("match_{threads}"));
        run_cli(
            &[
                "match",
                "--threads",
                threads,
                "--cohort",
                cohort_path.to_str().unwrap(),
                "--births",
                births_path.to_str().unwrap(),
                "--religion",
                "catholic",
                "--out-dir",
                out.to_str().unwrap(),
            ],
            &[],
        );
    }
    let pairs1 = std::fs::read(root.join("match_1/pairs.csv")).unwrap();
    let pairs8 = std::fs::read(root.join("match_8/pairs.csv")).unwrap();
    assert_eq!(pairs1, pairs8, "pairs.csv differs across thread counts");

    // screen
    let mut rows = vec!["outcome_id,subgroup_id,pair_id,diff".to_string()];
    let mut rng = ChaCha8Rng::seed_from_u64(8_001);
    for sub in ["a", "b"] {
        for (k, shift) in [("k1", 0.7), ("k2", 0.0), ("k3", -0.7)] {
            let normal = Normal::new(shift, 1.0).unwrap();
            for pair in 1..=40 {
                rows.push(format!("{k},{sub},{pair},{}", normal.sample(&mut rng)));
            }
        }
    }
    let differences = root.join("differences.csv");
    std::fs::write(&differences, rows.join("\n") + "\n").unwrap();
    for threads in ["1", "8"] {
        let out = root.join(format!("screen_{threads}"));
        run_cli(
            &[
                "screen",
                "--threads",
                threads,
                "--differences",
                differences.to_str().unwrap(),
                "--out-dir",
                out.to_str().unwrap(),
            ],
            &[],
        );
    }
    let report1 = std::fs::read(root.join("screen_1/report.csv")).unwrap();
    let report8 = std::fs::read(root.join("screen_8/report.csv")).unwrap();
    assert_eq!(report1, report8, "report.csv differs across thread counts");

    pass(
        "8 (thread determinism)",
        "power.csv, pairs.csv, and report.csv byte-identical at 1 and 8 threads",
    );
}
