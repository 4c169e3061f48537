//! Writes a ready-to-run demo data set: a synthetic confounded cohort, a
//! paired-differences file with mixed signals, a raw survey item file, and a
//! small study configuration.
//!
//! Usage: cargo run -p crossmatch-core --example demo_inputs -- <out-dir>

use crossmatch_core::io::{write_births_csv, write_cohort_csv, write_text};
use crossmatch_core::synthetic::confounded_cohort;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::path::Path;

fn main() {
    let out = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "demo".to_string());
    let out = Path::new(&out);
    std::fs::create_dir_all(out).unwrap();

    let cohort = confounded_cohort(400, 13);
    write_cohort_csv(&out.join("cohort.csv"), &cohort).unwrap();
    write_births_csv(&out.join("births.csv"), &cohort).unwrap();

    // paired differences: a positive signal, a null, a negative signal
    let mut rng = ChaCha8Rng::seed_from_u64(4242);
    let mut rows = vec!["outcome_id,subgroup_id,pair_id,diff".to_string()];
    for subgroup in ["catholic", "non_catholic"] {
        for (outcome, shift) in [("cesd", 0.6), ("pwb_total", 0.0), ("poverty_pct", -0.5)] {
            let normal = Normal::new(shift, 1.0).unwrap();
            for pair in 1..=60 {
                rows.push(format!(
                    "{outcome},{subgroup},{pair},{:.6}",
                    normal.sample(&mut rng)
                ));
            }
        }
    }
    write_text(&out.join("differences.csv"), &(rows.join("\n") + "\n")).unwrap();

    // raw survey items for two respondents
    let mut cols = vec!["id".to_string(), "wave_year".to_string()];
    cols.extend((1..=20).map(|i| format!("cesd_{i}")));
    cols.extend((1..=42).map(|i| format!("pwb_{i}")));
    for c in [
        "drink_days",
        "avg_drinks",
        "conseq_guilt",
        "conseq_criticism",
        "conseq_work",
        "conseq_family",
        "conseq_help",
        "household_income",
        "poverty_guideline",
        "smoking_packs",
        "pcs12",
    ] {
        cols.push(c.to_string());
    }
    let mut item_rows = vec![cols.join(",")];
    for (id, cesd, pwb) in [("r1", 2u8, 4u8), ("r2", 5, 2)] {
        let mut cells = vec![id.to_string(), "1992".to_string()];
        cells.extend((1..=20).map(|_| cesd.to_string()));
        cells.extend((1..=42).map(|_| pwb.to_string()));
        for v in [
            "6", "2.5", "1", "0", "0", "0", "0", "31500", "14500", "0.5", "48.2",
        ] {
            cells.push(v.to_string());
        }
        item_rows.push(cells.join(","));
    }
    write_text(&out.join("raw_items.csv"), &(item_rows.join("\n") + "\n")).unwrap();

    write_text(
        &out.join("study.cfg"),
        "# power study over the default grids\n\
         metric = replicability\n\
         n_outcomes = 16\n\
         k11_grid = 1, 3, 6, 10, 13, 16\n\
         gamma_grid = 1, 1.2\n\
         c_grid = 0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0\n\
         n_pairs = 100\n\
         replications = 2500\n\
         seed = 202408\n",
    )
    .unwrap();

    eprintln!("demo inputs written to {}", out.display());
}
