use crossmatch_core::io::{write_births_csv, write_cohort_csv};
use crossmatch_core::synthetic::confounded_cohort;
use std::path::Path;

fn main() {
    let out = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "/tmp/demo".to_string());
    let out = Path::new(&out);
    std::fs::create_dir_all(out).unwrap();
    let cohort = confounded_cohort(400, 13);
    write_cohort_csv(&out.join("cohort.csv"), &cohort).unwrap();
    write_births_csv(&out.join("births.csv"), &cohort).unwrap();
    eprintln!("wrote cohort ({} women)", cohort.len());
}
