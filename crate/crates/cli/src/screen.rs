//! The `screen` subcommand: builds per-subgroup evidence from a paired
//! differences file and writes one report block per sensitivity parameter.

use crate::manifest::RunManifest;
use crossmatch_core::cross_screening::{
    automated_cross_screen, holm_global_nulls, holm_max_p, holm_twosided_global,
    weighted_cross_screen_global, weighted_cross_screen_replicability, SubgroupEvidence,
};
use crossmatch_core::error::{Error, Result};
use crossmatch_core::io::{
    read_differences_csv, report_rows_from_global, report_rows_from_screening, write_report_csv,
    ReportRow,
};
use crossmatch_core::paired_inference::{Mode, PairedDifferences, SensitivityParams, Statistic};
use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

pub struct Request {
    pub differences: PathBuf,
    pub alpha: f64,
    pub gammas: Vec<f64>,
    pub method: String,
    pub c: f64,
    pub statistic: String,
    pub mode: String,
    pub out_dir: PathBuf,
    pub threads: Option<usize>,
}

pub fn run(req: Request) -> Result<()> {
    if !(req.alpha >= 0.0 && req.alpha < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "alpha must lie in [0, 1), got {}",
            req.alpha
        )));
    }
    let statistic: Statistic = req.statistic.parse()?;
    let mode: Mode = req.mode.parse()?;
    if req.gammas.is_empty() {
        return Err(Error::InvalidParameter(
            "at least one gamma is required".into(),
        ));
    }

    let all_diffs = read_differences_csv(&req.differences)?;
    let mut by_subgroup: BTreeMap<String, Vec<PairedDifferences>> = BTreeMap::new();
    for d in all_diffs {
        by_subgroup
            .entry(d.subgroup_id.clone())
            .or_default()
            .push(d);
    }
    let subgroups: Vec<String> = by_subgroup.keys().cloned().collect();
    if subgroups.len() != 2 {
        return Err(Error::MismatchedInput(format!(
            "screening requires exactly two subgroups, found {:?}",
            subgroups
        )));
    }

    // keep only outcomes present in both subgroups
    let outcome_sets: Vec<BTreeSet<String>> = subgroups
        .iter()
        .map(|s| {
            by_subgroup[s]
                .iter()
                .map(|d| d.outcome_id.clone())
                .collect()
        })
        .collect();
    let common: BTreeSet<String> = outcome_sets[0]
        .intersection(&outcome_sets[1])
        .cloned()
        .collect();
    for (subgroup, set) in subgroups.iter().zip(&outcome_sets) {
        for missing in set.difference(&common) {
            eprintln!(
                "warning: outcome {missing:?} appears only in subgroup {subgroup:?}; excluded"
            );
        }
    }
    if common.is_empty() {
        return Err(Error::MismatchedInput(
            "no outcome appears in both subgroups".into(),
        ));
    }
    for list in by_subgroup.values_mut() {
        list.retain(|d| common.contains(&d.outcome_id));
    }

    let mut rows: Vec<ReportRow> = Vec::new();
    for &gamma in &req.gammas {
        let g = SensitivityParams::new(gamma)?;
        let evidence: Vec<SubgroupEvidence> = subgroups
            .iter()
            .map(|s| {
                SubgroupEvidence::from_differences(s.clone(), &by_subgroup[s], statistic, g, mode)
            })
            .collect::<Result<_>>()?;
        let (a, b) = (&evidence[0], &evidence[1]);
        let block = match req.method.as_str() {
            "automated" => {
                report_rows_from_screening(&automated_cross_screen(a, b, req.alpha)?, "automated")
            }
            "weighted-rep" => report_rows_from_screening(
                &weighted_cross_screen_replicability(a, b, req.c, req.alpha)?,
                "weighted-rep",
            ),
            "weighted-global" => report_rows_from_screening(
                &weighted_cross_screen_global(a, b, req.c, req.alpha)?,
                "weighted-global",
            ),
            "holm-global" => {
                report_rows_from_global(&holm_global_nulls(a, b, req.alpha)?, "holm-global", false)
            }
            "holm-max-p" => {
                report_rows_from_global(&holm_max_p(a, b, req.alpha)?, "holm-max-p", true)
            }
            "holm-twosided" => report_rows_from_global(
                &holm_twosided_global(a, b, req.alpha)?,
                "holm-twosided",
                false,
            ),
            other => {
                return Err(Error::InvalidParameter(format!(
                    "unknown method {other:?} (expected automated, weighted-rep, \
                     weighted-global, holm-global, holm-max-p, or holm-twosided)"
                )))
            }
        };
        rows.extend(block);
    }

    std::fs::create_dir_all(&req.out_dir)?;
    let report_path = req.out_dir.join("report.csv");
    write_report_csv(&report_path, &rows)?;

    let mut manifest = RunManifest::new("screen");
    manifest.input(&req.differences)?;
    manifest
        .parameter("alpha", req.alpha)
        .parameter(
            "gamma",
            req.gammas
                .iter()
                .map(|g| g.to_string())
                .collect::<Vec<_>>()
                .join(","),
        )
        .parameter("method", &req.method)
        .parameter("c", req.c)
        .parameter("statistic", statistic.name())
        .parameter("mode", &req.mode)
        .parameter("threads", crate::format_threads(req.threads))
        .output(&report_path);
    manifest.write(&req.out_dir)?;
    eprintln!(
        "screened {} outcomes x {} gamma values -> {}",
        common.len(),
        req.gammas.len(),
        report_path.display()
    );
    Ok(())
}
