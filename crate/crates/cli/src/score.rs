//! The `score` subcommand: derives the study outcomes from raw survey item
//! columns, with per-score missingness (a missing item empties exactly the
//! scores that need it).

use crossmatch_core::error::{Error, Result};
use crossmatch_core::outcome_scoring::{
    derive_alcohol_measures, poverty_percentage, CesdItemMap, PwbItemMap, CESD_ITEMS,
    CESD_MAX_FREQUENCY, CESD_SUBSCALE_NAMES, PWB_ASPECT_NAMES, PWB_ITEMS,
};
use std::collections::BTreeMap;
use std::path::Path;

pub const CONSEQUENCE_COLUMNS: [&str; 5] = [
    "conseq_guilt",
    "conseq_criticism",
    "conseq_work",
    "conseq_family",
    "conseq_help",
];

fn required_columns() -> Vec<String> {
    let mut cols = vec!["id".to_string(), "wave_year".to_string()];
    cols.extend((1..=CESD_ITEMS).map(|i| format!("cesd_{i}")));
    cols.extend((1..=PWB_ITEMS).map(|i| format!("pwb_{i}")));
    cols.push("drink_days".into());
    cols.push("avg_drinks".into());
    cols.extend(CONSEQUENCE_COLUMNS.iter().map(|c| c.to_string()));
    cols.push("household_income".into());
    cols.push("poverty_guideline".into());
    cols
}

fn output_header() -> Vec<String> {
    let mut cols = vec![
        "id".to_string(),
        "wave_year".to_string(),
        "cesd_total".to_string(),
    ];
    cols.extend(CESD_SUBSCALE_NAMES.iter().map(|n| format!("cesd_{n}")));
    cols.extend(PWB_ASPECT_NAMES.iter().map(|n| format!("pwb_{n}")));
    cols.push("pwb_total".into());
    cols.push("drinking_days".into());
    cols.push("at_risk_drinker".into());
    cols.push("possible_alcohol_dependence".into());
    cols.push("poverty_pct".into());
    cols.push("smoking_packs".into());
    cols.push("pcs12".into());
    cols
}

struct Schema {
    index: BTreeMap<String, usize>,
    smoking: Option<usize>,
    pcs12: Option<usize>,
}

fn schema_from(headers: &csv::StringRecord, location: &str) -> Result<Schema> {
    let mut index = BTreeMap::new();
    for (i, name) in headers.iter().enumerate() {
        index.insert(name.trim().to_string(), i);
    }
    for name in required_columns() {
        if !index.contains_key(&name) {
            return Err(Error::Schema {
                location: location.to_string(),
                message: format!("missing required column {name:?}"),
            });
        }
    }
    let smoking = index.get("smoking_packs").copied();
    let pcs12 = index.get("pcs12").copied();
    Ok(Schema {
        index,
        smoking,
        pcs12,
    })
}

fn cell(record: &csv::StringRecord, index: usize) -> &str {
    record.get(index).unwrap_or("").trim()
}

fn parse_opt<T: std::str::FromStr>(raw: &str, column: &str, loc: &str) -> Result<Option<T>> {
    if raw.is_empty() {
        return Ok(None);
    }
    raw.parse::<T>().map(Some).map_err(|_| Error::Schema {
        location: loc.to_string(),
        message: format!("column {column:?}: invalid value {raw:?}"),
    })
}

fn parse_opt_flag(raw: &str, column: &str, loc: &str) -> Result<Option<bool>> {
    match raw {
        "" => Ok(None),
        "0" | "false" => Ok(Some(false)),
        "1" | "true" => Ok(Some(true)),
        other => Err(Error::Schema {
            location: loc.to_string(),
            message: format!("column {column:?}: expected 0/1, got {other:?}"),
        }),
    }
}

fn fmt_opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn run(
    input: &Path,
    output: &Path,
    cesd_map: &CesdItemMap,
    pwb_map: &PwbItemMap,
) -> Result<usize> {
    let file = std::fs::File::open(input).map_err(|e| Error::Schema {
        location: input.display().to_string(),
        message: format!("cannot open: {e}"),
    })?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(file);
    let schema = schema_from(&rdr.headers()?.clone(), &input.display().to_string())?;

    let mut writer = csv::Writer::from_writer(std::fs::File::create(output)?);
    writer.write_record(output_header())?;

    let mut rows = 0usize;
    for record in rdr.records() {
        let record = record?;
        let loc = match record.position() {
            Some(pos) => format!("{}:{}", input.display(), pos.line()),
            None => input.display().to_string(),
        };
        let col = |name: &str| cell(&record, schema.index[name]);

        // depression items
        let mut cesd: Vec<Option<u8>> = Vec::with_capacity(CESD_ITEMS);
        for i in 1..=CESD_ITEMS {
            let name = format!("cesd_{i}");
            let v: Option<u8> = parse_opt(col(&name), &name, &loc)?;
            if let Some(x) = v {
                if x > CESD_MAX_FREQUENCY {
                    return Err(Error::Schema {
                        location: loc.clone(),
                        message: format!("column {name:?}: frequency {x} exceeds 7"),
                    });
                }
            }
            cesd.push(v);
        }
        let cesd_sum = |items: &[usize]| -> Option<u32> {
            items
                .iter()
                .map(|&i| cesd[i - 1].map(|v| cesd_map.corrected_frequency(i, v)))
                .sum()
        };
        let all_items: Vec<usize> = (1..=CESD_ITEMS).collect();
        let cesd_total = cesd_sum(&all_items);
        let cesd_subscales: Vec<Option<u32>> =
            cesd_map.subscales.iter().map(|g| cesd_sum(g)).collect();

        // well-being items
        let mut pwb: Vec<Option<u8>> = Vec::with_capacity(PWB_ITEMS);
        for i in 1..=PWB_ITEMS {
            let name = format!("pwb_{i}");
            let v: Option<u8> = parse_opt(col(&name), &name, &loc)?;
            if let Some(x) = v {
                if !(1..=6).contains(&x) {
                    return Err(Error::Schema {
                        location: loc.clone(),
                        message: format!("column {name:?}: value {x} outside 1..=6"),
                    });
                }
            }
            pwb.push(v);
        }
        let pwb_sum = |items: &[usize]| -> Option<u32> {
            items.iter().map(|&i| pwb[i - 1].map(|v| v as u32)).sum()
        };
        let pwb_aspects: Vec<Option<u32>> = pwb_map.aspects.iter().map(|g| pwb_sum(g)).collect();
        let pwb_total: Option<u32> = pwb_aspects.iter().copied().sum();

        // alcohol
        let drink_days: Option<u8> = parse_opt(col("drink_days"), "drink_days", &loc)?;
        let avg_drinks: Option<f64> = parse_opt(col("avg_drinks"), "avg_drinks", &loc)?;
        let mut consequences = [None; 5];
        for (slot, name) in CONSEQUENCE_COLUMNS.iter().enumerate() {
            consequences[slot] = parse_opt_flag(col(name), name, &loc)?;
        }
        let flags: Option<[bool; 5]> = if consequences.iter().all(Option::is_some) {
            let mut f = [false; 5];
            for (slot, c) in consequences.iter().enumerate() {
                f[slot] = c.unwrap();
            }
            Some(f)
        } else {
            None
        };
        let (drinking_days, at_risk) = match (drink_days, avg_drinks) {
            (Some(days), Some(avg)) => {
                let m =
                    derive_alcohol_measures(days, avg, [false; 5]).map_err(|e| Error::Schema {
                        location: loc.clone(),
                        message: e.to_string(),
                    })?;
                (Some(m.drinking_days), Some(m.at_risk))
            }
            _ => (None, None),
        };
        let dependence = flags.map(|f| {
            derive_alcohol_measures(0, 0.0, f)
                .expect("flags-only derivation is infallible")
                .possible_dependence
        });

        // economic well-being
        let income: Option<f64> = parse_opt(col("household_income"), "household_income", &loc)?;
        let guideline: Option<f64> =
            parse_opt(col("poverty_guideline"), "poverty_guideline", &loc)?;
        let poverty = match (income, guideline) {
            (Some(i), Some(g)) => Some(poverty_percentage(i, g).map_err(|e| Error::Schema {
                location: loc.clone(),
                message: e.to_string(),
            })?),
            _ => None,
        };

        let smoking = schema
            .smoking
            .map(|i| cell(&record, i).to_string())
            .unwrap_or_default();
        let pcs12 = schema
            .pcs12
            .map(|i| cell(&record, i).to_string())
            .unwrap_or_default();

        let mut out: Vec<String> = vec![
            col("id").to_string(),
            col("wave_year").to_string(),
            fmt_opt(cesd_total),
        ];
        out.extend(cesd_subscales.iter().map(|s| fmt_opt(*s)));
        out.extend(pwb_aspects.iter().map(|s| fmt_opt(*s)));
        out.push(fmt_opt(pwb_total));
        out.push(fmt_opt(drinking_days));
        out.push(fmt_opt(at_risk));
        out.push(fmt_opt(dependence));
        out.push(fmt_opt(poverty));
        out.push(smoking);
        out.push(pcs12);
        writer.write_record(&out)?;
        rows += 1;
    }
    writer.flush()?;
    Ok(rows)
}
