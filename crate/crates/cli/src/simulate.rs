//! The `simulate` subcommand: full power-study sweep from a key=value
//! configuration, with one chart per (K11, gamma) cell.

use crate::manifest::RunManifest;
use crossmatch_core::error::{Error, Result};
use crossmatch_core::io::write_power_csv;
use crossmatch_core::simulation::{cell_chart, run_power_study, Metric, StudyConfig};
use std::path::Path;

/// Environment variable that overrides the configured seed.
pub const SEED_ENV: &str = "CROSSMATCH_SEED";

pub fn run(config_path: &Path, out_dir: &Path, threads: Option<usize>) -> Result<()> {
    let text = std::fs::read_to_string(config_path).map_err(|e| Error::Schema {
        location: config_path.display().to_string(),
        message: format!("cannot open: {e}"),
    })?;
    let mut study = StudyConfig::from_key_values(&text)?;
    if let Ok(raw) = std::env::var(SEED_ENV) {
        study.seed = raw.parse().map_err(|_| {
            Error::Config(format!(
                "{SEED_ENV} must be an unsigned integer, got {raw:?}"
            ))
        })?;
    }

    let rows = run_power_study(&study)?;
    std::fs::create_dir_all(out_dir)?;
    let power_path = out_dir.join("power.csv");
    write_power_csv(&power_path, &rows)?;

    let mut manifest = RunManifest::new("simulate");
    manifest.input(config_path)?;
    manifest.seed = Some(study.seed);
    manifest
        .parameter("metric", study.metric.name())
        .parameter("n_outcomes", study.n_outcomes)
        .parameter(
            "k11_grid",
            study
                .k11_grid
                .iter()
                .map(|k| k.to_string())
                .collect::<Vec<_>>()
                .join(","),
        )
        .parameter(
            "gamma_grid",
            study
                .gamma_grid
                .iter()
                .map(|g| g.to_string())
                .collect::<Vec<_>>()
                .join(","),
        )
        .parameter(
            "c_grid",
            study
                .c_grid
                .iter()
                .map(|c| c.to_string())
                .collect::<Vec<_>>()
                .join(","),
        )
        .parameter("mu", study.effect_size())
        .parameter("n_pairs", study.n_pairs)
        .parameter("alpha", study.alpha)
        .parameter("replications", study.replications)
        .parameter("seed", study.seed)
        .parameter("threads", crate::format_threads(threads))
        .output(&power_path);

    let k11_cells: Vec<usize> = if study.metric == Metric::Fwer {
        vec![0]
    } else {
        study.k11_grid.clone()
    };
    for &k11 in &k11_cells {
        for &gamma in &study.gamma_grid {
            let chart = cell_chart(&rows, k11, gamma, study.metric);
            let path = out_dir.join(format!("power_{k11}_{gamma}.svg"));
            std::fs::write(&path, chart)?;
            manifest.output(&path);
        }
    }
    manifest.write(out_dir)?;
    eprintln!(
        "{} rows over {} cells -> {}",
        rows.len(),
        k11_cells.len() * study.gamma_grid.len(),
        power_path.display()
    );
    Ok(())
}
