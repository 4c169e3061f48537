//! Observational-study analysis machinery: risk-set matching of longitudinal
//! cohorts, sensitivity-adjusted paired randomization tests, cross-screening
//! for replicability and global-null discovery, outcome scoring, and a
//! Monte-Carlo power harness.

pub mod cross_screening;
pub mod error;
pub mod io;
pub mod multiple_testing;
pub mod outcome_scoring;
pub mod paired_inference;
pub mod ranks;
pub mod risk_set_matching;
pub mod simulation;
pub mod svg;
pub mod synthetic;

pub use error::{Error, Result};
