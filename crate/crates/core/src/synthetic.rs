//! Synthetic cohort generators for demonstrations and end-to-end checks.
//!
//! The confounded cohort deliberately ties the annual chance of a first
//! unintended birth to three covariates (low high-school rank, low parental
//! SES, high neuroticism), so the raw treated/control comparison is
//! imbalanced on exactly those covariates and a successful matching run must
//! shrink their standardized differences.

use crate::risk_set_matching::{
    educ_years_from, Birth, CoxSubject, FixedCovariates, Religion, TrajectoryPoint, WomanRecord,
};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::collections::BTreeMap;

/// Covariates whose pre-matching imbalance is built into the generator.
pub const CONFOUNDED_COVARIATES: [&str; 3] = ["hs_rank", "ses", "neuro"];

/// Years over which a first unintended birth may occur.
const RISK_YEARS: std::ops::RangeInclusive<i32> = 1956..=1967;
/// Years covered by every woman's covariate trajectory.
const TRAJECTORY_YEARS: std::ops::RangeInclusive<i32> = 1955..=1970;

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn woman_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut bytes = [0u8; 32];
    bytes[0..8].copy_from_slice(&seed.to_le_bytes());
    bytes[8..16].copy_from_slice(&index.to_le_bytes());
    bytes[16..24].copy_from_slice(b"cohortgn");
    ChaCha8Rng::from_seed(bytes)
}

/// Generates `n_women` records with a fixed seed.
///
/// Fixed covariates are drawn independently per woman. The yearly hazard of
/// a first unintended birth is logistic(-3.4 - 0.5 z_rank - 0.45 z_ses +
/// 0.5 z_neuro) where z are standardized covariates, so roughly a third of
/// the cohort is eventually treated and the treated group skews toward low
/// rank, low SES, and high neuroticism. Intended births, marriage timing,
/// education, and depression onset vary independently.
pub fn confounded_cohort(n_women: usize, seed: u64) -> Vec<WomanRecord> {
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut cohort = Vec::with_capacity(n_women);
    for i in 0..n_women {
        let mut rng = woman_rng(seed, i as u64);

        let z_rank: f64 = std_normal.sample(&mut rng);
        let z_ses: f64 = std_normal.sample(&mut rng);
        let z_neuro: f64 = std_normal.sample(&mut rng);
        let fixed = FixedCovariates {
            hs_rank: (50.0 + 20.0 * z_rank).clamp(1.0, 99.0),
            iq: (100.0 + 12.0 * std_normal.sample(&mut rng)).clamp(60.0, 145.0),
            ses: (50.0 + 16.0 * z_ses).clamp(5.0, 97.0),
            town_pop: (800.0 + 9_000.0 * rng.gen::<f64>()).round(),
            agree: (3.5 + 0.8 * std_normal.sample(&mut rng)).clamp(1.0, 6.0),
            consc: (3.5 + 0.8 * std_normal.sample(&mut rng)).clamp(1.0, 6.0),
            extra: (3.5 + 0.8 * std_normal.sample(&mut rng)).clamp(1.0, 6.0),
            neuro: (3.5 + 0.8 * z_neuro).clamp(1.0, 6.0),
            open: (3.5 + 0.8 * std_normal.sample(&mut rng)).clamp(1.0, 6.0),
        };

        let risk = -3.4 - 0.45 * z_rank - 0.4 * z_ses + 0.45 * z_neuro;
        let hazard = logistic(risk);
        let mut births = Vec::new();
        for year in RISK_YEARS {
            if rng.gen::<f64>() < hazard {
                births.push(Birth {
                    year,
                    unintended: true,
                });
                break;
            }
        }

        // up to two intended births at independent years
        for _ in 0..2 {
            if rng.gen::<f64>() < 0.35 {
                let year = 1956 + rng.gen_range(0..12);
                births.push(Birth {
                    year,
                    unintended: false,
                });
            }
        }
        births.sort_by_key(|b| b.year);

        let born = 1936 + rng.gen_range(0..5);
        let married_from = 1955 + rng.gen_range(0..9);
        let completed_educ = 8.0 + rng.gen_range(0..11) as f64;
        let depression_onset = if rng.gen::<f64>() < 0.2 {
            Some(1955 + rng.gen_range(0..12))
        } else {
            None
        };
        let religion = if rng.gen::<f64>() < 0.5 {
            Religion::Catholic
        } else {
            Religion::NonCatholic
        };

        let trajectories: BTreeMap<i32, TrajectoryPoint> = TRAJECTORY_YEARS
            .map(|year| {
                let age = (year - born) as f64;
                (
                    year,
                    TrajectoryPoint {
                        children: births.iter().filter(|b| b.year <= year).count() as u32,
                        age,
                        married: year >= married_from,
                        educ_years: educ_years_from(completed_educ, age),
                        prior_depression: depression_onset.is_some_and(|d| d <= year - 2),
                    },
                )
            })
            .collect();

        cohort.push(
            WomanRecord::new(format!("w{i:04}"), religion, fixed, births, trajectories)
                .expect("generator invariants hold"),
        );
    }
    cohort
}

/// Subjects with a single binary covariate and a covariate-dependent event
/// hazard, for checking the hazard fit against a 1-D likelihood scan.
pub fn single_covariate_cox_cohort(n: usize, seed: u64) -> Vec<CoxSubject> {
    let mut subjects = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = woman_rng(seed ^ 0x5eed_c0c5, i as u64);
        let exposed = i % 2 == 0;
        let x = vec![if exposed { 1.0 } else { 0.0 }];
        let hazard = logistic(if exposed { -2.0 } else { -3.0 });
        let mut event_year = None;
        for year in RISK_YEARS {
            if rng.gen::<f64>() < hazard {
                event_year = Some(year);
                break;
            }
        }
        let trajectories: BTreeMap<i32, Vec<f64>> =
            TRAJECTORY_YEARS.map(|y| (y, x.clone())).collect();
        subjects.push(CoxSubject {
            trajectories,
            event_year,
        });
    }
    subjects
}
