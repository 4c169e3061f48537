//! CSV schemas shared by the library and the command-line tool. All files
//! are RFC-4180 style with a required header row; numeric fields use the
//! shortest round-trip decimal form.

use crate::cross_screening::{GlobalNullResult, ScreeningResult};
use crate::error::{Error, Result};
use crate::paired_inference::PairedDifferences;
use crate::risk_set_matching::{
    BalanceTable, Birth, FixedCovariates, MatchedPair, Religion, TrajectoryPoint, UnmatchedWoman,
    WomanRecord,
};
use crate::simulation::PowerRow;
use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

fn open_reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::schema(path.display().to_string(), format!("cannot open: {e}")))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(file))
}

fn header_index(
    headers: &csv::StringRecord,
    required: &[&str],
    location: &str,
) -> Result<BTreeMap<String, usize>> {
    let mut index = BTreeMap::new();
    for (i, name) in headers.iter().enumerate() {
        index.insert(name.trim().to_string(), i);
    }
    for name in required {
        if !index.contains_key(*name) {
            return Err(Error::schema(
                location,
                format!("missing required column {name:?} (found {:?})", headers),
            ));
        }
    }
    Ok(index)
}

fn field<'r>(
    record: &'r csv::StringRecord,
    index: &BTreeMap<String, usize>,
    name: &str,
    location: &str,
) -> Result<&'r str> {
    record
        .get(index[name])
        .ok_or_else(|| Error::schema(location, format!("row too short for column {name:?}")))
}

fn parse_f64(raw: &str, name: &str, location: &str) -> Result<f64> {
    raw.trim()
        .parse()
        .map_err(|_| Error::schema(location, format!("column {name:?}: invalid number {raw:?}")))
}

fn parse_i32(raw: &str, name: &str, location: &str) -> Result<i32> {
    raw.trim().parse().map_err(|_| {
        Error::schema(
            location,
            format!("column {name:?}: invalid integer {raw:?}"),
        )
    })
}

fn parse_flag(raw: &str, name: &str, location: &str) -> Result<bool> {
    match raw.trim() {
        "0" | "false" => Ok(false),
        "1" | "true" => Ok(true),
        other => Err(Error::schema(
            location,
            format!("column {name:?}: expected 0/1, got {other:?}"),
        )),
    }
}

fn location_of(path: &Path, record: &csv::StringRecord) -> String {
    match record.position() {
        Some(pos) => format!("{}:{}", path.display(), pos.line()),
        None => path.display().to_string(),
    }
}

/// Reads `differences.csv` (columns outcome_id, subgroup_id, pair_id, diff)
/// into per-(outcome, subgroup) difference vectors. Rows with an empty diff
/// are skipped, so pair counts may differ across outcomes.
pub fn read_differences_csv(path: &Path) -> Result<Vec<PairedDifferences>> {
    let mut rdr = open_reader(path)?;
    let headers = rdr.headers()?.clone();
    let index = header_index(
        &headers,
        &["outcome_id", "subgroup_id", "pair_id", "diff"],
        &path.display().to_string(),
    )?;

    let mut groups: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
    for record in rdr.records() {
        let record = record?;
        let loc = location_of(path, &record);
        let outcome = field(&record, &index, "outcome_id", &loc)?
            .trim()
            .to_string();
        let subgroup = field(&record, &index, "subgroup_id", &loc)?
            .trim()
            .to_string();
        if outcome.is_empty() || subgroup.is_empty() {
            return Err(Error::schema(loc, "empty outcome_id or subgroup_id"));
        }
        let raw_diff = field(&record, &index, "diff", &loc)?.trim();
        if raw_diff.is_empty() {
            continue; // missing outcome for this pair
        }
        let diff = parse_f64(raw_diff, "diff", &loc)?;
        groups.entry((outcome, subgroup)).or_default().push(diff);
    }

    groups
        .into_iter()
        .map(|((outcome, subgroup), diffs)| PairedDifferences::new(outcome, subgroup, diffs))
        .collect()
}

/// Reads the woman-year covariate file and the births file into validated
/// records. `cohort.csv` columns: id, religion, year, children, age,
/// married, educ_years, prior_depression, hs_rank, iq, ses, town_pop,
/// agree, consc, extra, neuro, open. `births.csv` columns: id, year,
/// unintended.
pub fn read_cohort_csv(cohort_path: &Path, births_path: &Path) -> Result<Vec<WomanRecord>> {
    let mut births: BTreeMap<String, Vec<Birth>> = BTreeMap::new();
    {
        let mut rdr = open_reader(births_path)?;
        let headers = rdr.headers()?.clone();
        let index = header_index(
            &headers,
            &["id", "year", "unintended"],
            &births_path.display().to_string(),
        )?;
        for record in rdr.records() {
            let record = record?;
            let loc = location_of(births_path, &record);
            let id = field(&record, &index, "id", &loc)?.trim().to_string();
            let year = parse_i32(field(&record, &index, "year", &loc)?, "year", &loc)?;
            let unintended = parse_flag(
                field(&record, &index, "unintended", &loc)?,
                "unintended",
                &loc,
            )?;
            births
                .entry(id)
                .or_default()
                .push(Birth { year, unintended });
        }
    }
    for list in births.values_mut() {
        list.sort_by_key(|b| b.year);
    }

    struct Partial {
        religion: Religion,
        fixed: FixedCovariates,
        trajectories: BTreeMap<i32, TrajectoryPoint>,
        first_line: String,
    }
    let mut partials: BTreeMap<String, Partial> = BTreeMap::new();

    let mut rdr = open_reader(cohort_path)?;
    let headers = rdr.headers()?.clone();
    let required = [
        "id",
        "religion",
        "year",
        "children",
        "age",
        "married",
        "educ_years",
        "prior_depression",
        "hs_rank",
        "iq",
        "ses",
        "town_pop",
        "agree",
        "consc",
        "extra",
        "neuro",
        "open",
    ];
    let index = header_index(&headers, &required, &cohort_path.display().to_string())?;
    for record in rdr.records() {
        let record = record?;
        let loc = location_of(cohort_path, &record);
        let id = field(&record, &index, "id", &loc)?.trim().to_string();
        if id.is_empty() {
            return Err(Error::schema(loc, "empty id"));
        }
        let religion: Religion = field(&record, &index, "religion", &loc)?
            .trim()
            .parse()
            .map_err(|e| Error::schema(&loc, format!("{e}")))?;
        let year = parse_i32(field(&record, &index, "year", &loc)?, "year", &loc)?;
        let num = |name: &str| parse_f64(field(&record, &index, name, &loc)?, name, &loc);
        let flag = |name: &str| parse_flag(field(&record, &index, name, &loc)?, name, &loc);
        let fixed = FixedCovariates {
            hs_rank: num("hs_rank")?,
            iq: num("iq")?,
            ses: num("ses")?,
            town_pop: num("town_pop")?,
            agree: num("agree")?,
            consc: num("consc")?,
            extra: num("extra")?,
            neuro: num("neuro")?,
            open: num("open")?,
        };
        let children_raw = parse_i32(field(&record, &index, "children", &loc)?, "children", &loc)?;
        if children_raw < 0 {
            return Err(Error::schema(loc, "negative children count"));
        }
        let point = TrajectoryPoint {
            children: children_raw as u32,
            age: num("age")?,
            married: flag("married")?,
            educ_years: num("educ_years")?,
            prior_depression: flag("prior_depression")?,
        };

        match partials.get_mut(&id) {
            None => {
                let mut trajectories = BTreeMap::new();
                trajectories.insert(year, point);
                partials.insert(
                    id,
                    Partial {
                        religion,
                        fixed,
                        trajectories,
                        first_line: loc,
                    },
                );
            }
            Some(p) => {
                if p.religion != religion {
                    return Err(Error::schema(
                        loc,
                        format!("religion differs from earlier row at {}", p.first_line),
                    ));
                }
                if p.fixed != fixed {
                    return Err(Error::schema(
                        loc,
                        format!(
                            "fixed covariates differ from earlier row at {}",
                            p.first_line
                        ),
                    ));
                }
                if p.trajectories.insert(year, point).is_some() {
                    return Err(Error::schema(loc, format!("duplicate year {year}")));
                }
            }
        }
    }

    partials
        .into_iter()
        .map(|(id, p)| {
            let woman_births = births.remove(&id).unwrap_or_default();
            WomanRecord::new(id, p.religion, p.fixed, woman_births, p.trajectories)
        })
        .collect()
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    Ok(csv::Writer::from_writer(std::fs::File::create(path)?))
}

pub fn write_cohort_csv(path: &Path, cohort: &[WomanRecord]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record([
        "id",
        "religion",
        "year",
        "children",
        "age",
        "married",
        "educ_years",
        "prior_depression",
        "hs_rank",
        "iq",
        "ses",
        "town_pop",
        "agree",
        "consc",
        "extra",
        "neuro",
        "open",
    ])?;
    for woman in cohort {
        let f = woman.fixed_covariates();
        for (&year, t) in woman.trajectories() {
            w.write_record([
                woman.id().to_string(),
                woman.religion().name().to_string(),
                year.to_string(),
                t.children.to_string(),
                t.age.to_string(),
                u8::from(t.married).to_string(),
                t.educ_years.to_string(),
                u8::from(t.prior_depression).to_string(),
                f.hs_rank.to_string(),
                f.iq.to_string(),
                f.ses.to_string(),
                f.town_pop.to_string(),
                f.agree.to_string(),
                f.consc.to_string(),
                f.extra.to_string(),
                f.neuro.to_string(),
                f.open.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_births_csv(path: &Path, cohort: &[WomanRecord]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["id", "year", "unintended"])?;
    for woman in cohort {
        for b in woman.births() {
            w.write_record([
                woman.id().to_string(),
                b.year.to_string(),
                u8::from(b.unintended).to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_pairs_csv(path: &Path, pairs: &[MatchedPair]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["treated_id", "control_id", "t_star", "distance"])?;
    for p in pairs {
        w.write_record([
            p.treated_id.clone(),
            p.control_id.clone(),
            p.t_star.to_string(),
            p.distance.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_unmatched_csv(path: &Path, unmatched: &[UnmatchedWoman]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["id", "t_star", "reason"])?;
    for u in unmatched {
        w.write_record([
            u.id.clone(),
            u.t_star.to_string(),
            u.reason.name().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_balance_csv(path: &Path, table: &BalanceTable) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["covariate", "pre_std_diff", "post_std_diff"])?;
    for row in &table.rows {
        w.write_record([
            row.covariate.clone(),
            row.pre_std_diff.to_string(),
            row.post_std_diff.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Serializes a step-down outcome as `hypothesis_id, p, threshold, rejected`
/// rows.
pub fn write_rejection_csv(
    path: &Path,
    hypothesis_ids: &[String],
    pvalues: &[f64],
    rejection: &crate::multiple_testing::RejectionSet,
) -> Result<()> {
    if hypothesis_ids.len() != pvalues.len() || pvalues.len() != rejection.thresholds.len() {
        return Err(Error::MismatchedInput(format!(
            "{} ids, {} p-values, {} thresholds",
            hypothesis_ids.len(),
            pvalues.len(),
            rejection.thresholds.len()
        )));
    }
    let mut w = writer(path)?;
    w.write_record(["hypothesis_id", "p", "threshold", "rejected"])?;
    for (i, id) in hypothesis_ids.iter().enumerate() {
        w.write_record([
            id.clone(),
            pvalues[i].to_string(),
            rejection.thresholds[i].to_string(),
            rejection.is_rejected(i).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub const REPORT_HEADER: [&str; 11] = [
    "gamma",
    "method",
    "outcome_id",
    "subgroup",
    "direction",
    "selected",
    "p_onesided",
    "holm_threshold",
    "rejected",
    "replicated",
    "global_discovery",
];

/// One row of the screening report; empty strings stand for fields a method
/// does not populate.
#[derive(Debug, Clone)]
pub struct ReportRow {
    pub gamma: f64,
    pub method: String,
    pub outcome_id: String,
    pub subgroup: String,
    pub direction: String,
    pub selected: String,
    pub p_onesided: String,
    pub holm_threshold: String,
    pub rejected: String,
    pub replicated: String,
    pub global_discovery: String,
}

pub fn report_rows_from_screening(result: &ScreeningResult, method: &str) -> Vec<ReportRow> {
    let mut rows = Vec::new();
    for screen in &result.screens {
        for (outcome, &direction) in &screen.direction {
            rows.push(ReportRow {
                gamma: result.gamma,
                method: method.to_string(),
                outcome_id: outcome.clone(),
                subgroup: screen.subgroup_id.clone(),
                direction: direction.to_string(),
                selected: screen.selected.contains(outcome).to_string(),
                p_onesided: screen.tested_pvalue[outcome].to_string(),
                holm_threshold: screen
                    .threshold
                    .get(outcome)
                    .map(|t| t.to_string())
                    .unwrap_or_default(),
                rejected: (screen.status[outcome] != 0).to_string(),
                replicated: result.replicated.contains(outcome).to_string(),
                global_discovery: result.global_discoveries.contains(outcome).to_string(),
            });
        }
    }
    rows.sort_by(|a, b| (&a.outcome_id, &a.subgroup).cmp(&(&b.outcome_id, &b.subgroup)));
    rows
}

/// `claims_replicability` marks methods (Holm on maximum p-values) whose
/// rejections are replicability claims rather than global discoveries.
pub fn report_rows_from_global(
    result: &GlobalNullResult,
    method: &str,
    claims_replicability: bool,
) -> Vec<ReportRow> {
    let mut rows: Vec<ReportRow> = result
        .rows
        .iter()
        .map(|r| ReportRow {
            gamma: result.gamma,
            method: method.to_string(),
            outcome_id: r.outcome_id.clone(),
            subgroup: r.subgroup_id.clone().unwrap_or_default(),
            direction: String::new(),
            selected: "true".to_string(),
            p_onesided: r.pvalue.to_string(),
            holm_threshold: r.threshold.to_string(),
            rejected: r.rejected.to_string(),
            replicated: if claims_replicability {
                result.discoveries.contains(&r.outcome_id).to_string()
            } else {
                String::new()
            },
            global_discovery: if claims_replicability {
                String::new()
            } else {
                result.discoveries.contains(&r.outcome_id).to_string()
            },
        })
        .collect();
    rows.sort_by(|a, b| (&a.outcome_id, &a.subgroup).cmp(&(&b.outcome_id, &b.subgroup)));
    rows
}

pub fn write_report_csv(path: &Path, rows: &[ReportRow]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(REPORT_HEADER)?;
    for r in rows {
        w.write_record([
            r.gamma.to_string(),
            r.method.clone(),
            r.outcome_id.clone(),
            r.subgroup.clone(),
            r.direction.clone(),
            r.selected.clone(),
            r.p_onesided.clone(),
            r.holm_threshold.clone(),
            r.rejected.clone(),
            r.replicated.clone(),
            r.global_discovery.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_power_csv(path: &Path, rows: &[PowerRow]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record([
        "metric",
        "method",
        "gamma",
        "c",
        "k11",
        "power_estimate",
        "mc_standard_error",
    ])?;
    for r in rows {
        w.write_record([
            r.metric.name().to_string(),
            r.method.clone(),
            r.gamma.to_string(),
            r.c.map(|c| c.to_string()).unwrap_or_default(),
            r.k11.to_string(),
            r.power_estimate.to_string(),
            r.mc_standard_error.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Copies a file's bytes through a hasher-friendly reader; used by the CLI
/// for manifest input hashes and by tests for byte-identity checks.
pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    Ok(buf)
}

/// Writes a string atomically enough for test purposes.
pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(text.as_bytes())?;
    Ok(())
}
