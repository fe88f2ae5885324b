//! Percentile bands of the gap on a shared data-pass grid.

use std::path::{Path, PathBuf};

use crate::config::Experiment;
use crate::error::{CliError, Result};
use crate::runner::{write_atomic, Outcome};
use crate::stats::{carry_forward, grid, nearest_rank};
use crate::trace::format_real;

pub const COLUMNS: [&str; 5] = ["variant", "effective_data_passes", "p25", "p50", "p75"];

#[derive(Debug, Clone, PartialEq)]
pub struct BandRow {
    pub variant: String,
    pub passes: f64,
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
}

/// One row per (variant, grid point), variants in configuration order. Each
/// run contributes the gap of its last row at or before the grid point.
pub fn bands(experiment: &Experiment, outcomes: &[Outcome]) -> Vec<BandRow> {
    let points = grid(experiment.budget(), experiment.grid_points);
    let mut rows = Vec::new();
    for v in &experiment.variants {
        let resampled: Vec<Vec<f64>> = outcomes
            .iter()
            .filter(|o| o.summary.variant == v.name)
            .map(|o| {
                let xs: Vec<f64> = o.rows.iter().map(|r| r.effective_data_passes).collect();
                let ys: Vec<f64> = o.rows.iter().map(|r| r.f_gap).collect();
                carry_forward(&xs, &ys, &points)
            })
            .collect();
        for (k, &passes) in points.iter().enumerate() {
            let at: Vec<f64> = resampled.iter().map(|r| r[k]).collect();
            let q = |q| nearest_rank(&at, q).unwrap_or(f64::NAN);
            rows.push(BandRow {
                variant: v.name.clone(),
                passes,
                p25: q(25.0),
                p50: q(50.0),
                p75: q(75.0),
            });
        }
    }
    rows
}

pub fn write_bands(out: &Path, rows: &[BandRow]) -> Result<PathBuf> {
    let path = out.join("sweep.csv");
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let wrap = |e| CliError::Csv {
        path: path.clone(),
        source: e,
    };
    w.write_record(COLUMNS).map_err(wrap)?;
    for r in rows {
        w.write_record([
            r.variant.clone(),
            format_real(r.passes),
            format_real(r.p25),
            format_real(r.p50),
            format_real(r.p75),
        ])
        .map_err(wrap)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::io(&path, e.into_error()))?;
    write_atomic(&path, &bytes)?;
    Ok(path)
}
