//! The `match` subcommand: per-religion risk-set matching with pair,
//! unmatched, and balance outputs.

use crate::manifest::RunManifest;
use crossmatch_core::error::{Error, Result};
use crossmatch_core::io::{
    read_cohort_csv, write_balance_csv, write_pairs_csv, write_unmatched_csv,
};
use crossmatch_core::risk_set_matching::{
    risk_set_match, standardized_differences, Religion, WomanRecord,
};
use std::path::Path;

fn match_subgroup(
    cohort: &[WomanRecord],
    religion: Religion,
    out_dir: &Path,
    suffix: &str,
    manifest: &mut RunManifest,
) -> Result<usize> {
    let subgroup: Vec<WomanRecord> = cohort
        .iter()
        .filter(|w| w.religion() == religion)
        .cloned()
        .collect();
    if subgroup.is_empty() {
        eprintln!(
            "warning: no {} women in the cohort; writing empty outputs",
            religion.name()
        );
    }
    let result = if subgroup.is_empty() {
        crossmatch_core::risk_set_matching::MatchResult {
            pairs: Vec::new(),
            unmatched: Vec::new(),
            cox: None,
        }
    } else {
        risk_set_match(&subgroup)?
    };

    let pairs_path = out_dir.join(format!("pairs{suffix}.csv"));
    write_pairs_csv(&pairs_path, &result.pairs)?;
    manifest.output(&pairs_path);

    let unmatched_path = out_dir.join(format!("unmatched{suffix}.csv"));
    write_unmatched_csv(&unmatched_path, &result.unmatched)?;
    manifest.output(&unmatched_path);

    let balance_path = out_dir.join(format!("balance{suffix}.csv"));
    if result.pairs.len() >= 2 {
        let table = standardized_differences(&subgroup, &result.pairs)?;
        write_balance_csv(&balance_path, &table)?;
    } else {
        eprintln!(
            "warning: fewer than 2 {} pairs; balance{suffix}.csv left empty",
            religion.name()
        );
        write_balance_csv(
            &balance_path,
            &crossmatch_core::risk_set_matching::BalanceTable { rows: Vec::new() },
        )?;
    }
    manifest.output(&balance_path);
    eprintln!(
        "{}: {} pairs, {} unmatched -> {}",
        religion.name(),
        result.pairs.len(),
        result.unmatched.len(),
        pairs_path.display()
    );
    Ok(result.pairs.len())
}

pub fn run(
    cohort_path: &Path,
    births_path: &Path,
    religion: &str,
    out_dir: &Path,
    threads: Option<usize>,
) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let cohort = read_cohort_csv(cohort_path, births_path)?;

    let mut manifest = RunManifest::new("match");
    manifest.input(cohort_path)?;
    manifest.input(births_path)?;
    manifest
        .parameter("religion", religion)
        .parameter("threads", crate::format_threads(threads));

    match religion {
        "both" => {
            match_subgroup(
                &cohort,
                Religion::Catholic,
                out_dir,
                "_catholic",
                &mut manifest,
            )?;
            match_subgroup(
                &cohort,
                Religion::NonCatholic,
                out_dir,
                "_non_catholic",
                &mut manifest,
            )?;
        }
        one => {
            let religion: Religion = one.parse().map_err(|_| {
                Error::InvalidParameter(format!(
                    "unknown religion {one:?} (expected catholic, non_catholic, or both)"
                ))
            })?;
            match_subgroup(&cohort, religion, out_dir, "", &mut manifest)?;
        }
    }
    manifest.write(out_dir)?;
    Ok(())
}
