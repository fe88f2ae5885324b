//! Idealized parallel rounds `batches · ⌈r/μ⌉` to reach each tolerance.

use std::path::{Path, PathBuf};

use sam_core::problem::rounds_metric;

use crate::error::{CliError, Result};
use crate::runner::{write_atomic, RunSummary, RUNS_DIR};
use crate::stats::nearest_rank;
use crate::trace::{format_real, read_csv};

pub const COLUMNS: [&str; 7] = [
    "variant",
    "resource_size",
    "machine_size",
    "tolerance",
    "median_log2_rounds",
    "reached",
    "censored",
];

/// A finished run as read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredRun {
    pub variant: String,
    pub resource_size: usize,
    pub gaps: Vec<f64>,
    pub batch_counts: Vec<u64>,
}

impl StoredRun {
    /// Cumulative batches at the first row with gap at most `tol`.
    pub fn batches_to(&self, tol: f64) -> Option<u64> {
        self.gaps
            .iter()
            .position(|&g| g <= tol)
            .map(|k| self.batch_counts[k])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundsRow {
    pub variant: String,
    pub resource_size: usize,
    pub machine_size: usize,
    pub tolerance: f64,
    /// Nearest-rank median over runs that reached the tolerance; NaN if none did.
    pub median_log2_rounds: f64,
    pub reached: usize,
    pub censored: usize,
}

/// Reads every `runs/*.json` record and its trace CSV, sorted by file name.
pub fn load_runs(out: &Path) -> Result<Vec<StoredRun>> {
    let dir = out.join(RUNS_DIR);
    let entries = std::fs::read_dir(&dir).map_err(|_| CliError::MissingTraces(dir.clone()))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::MissingTraces(dir));
    }
    paths
        .iter()
        .map(|path| {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            let summary: RunSummary = serde_json::from_str(&text).map_err(|e| CliError::Json {
                path: path.clone(),
                source: e,
            })?;
            let csv_path = path.with_extension("csv");
            if !csv_path.exists() {
                return Err(CliError::MissingTraces(csv_path));
            }
            let rows = read_csv(&csv_path)?;
            if rows.len() != summary.batch_counts.len() {
                return Err(CliError::Trace {
                    path: csv_path,
                    reason: format!(
                        "{} rows but {} batch counts in the run record",
                        rows.len(),
                        summary.batch_counts.len()
                    ),
                });
            }
            Ok(StoredRun {
                variant: summary.variant,
                resource_size: summary.resource_size,
                gaps: rows.iter().map(|r| r.f_gap).collect(),
                batch_counts: summary.batch_counts,
            })
        })
        .collect()
}

/// One row per (variant, μ, τ). Variants appear in order of first occurrence.
pub fn table(runs: &[StoredRun], machine_sizes: &[usize], tolerances: &[f64]) -> Vec<RoundsRow> {
    let mut variants: Vec<(&str, usize)> = Vec::new();
    for r in runs {
        if !variants.iter().any(|(v, _)| *v == r.variant) {
            variants.push((&r.variant, r.resource_size));
        }
    }
    let mut rows = Vec::new();
    for &(variant, r) in &variants {
        let group: Vec<&StoredRun> = runs.iter().filter(|s| s.variant == variant).collect();
        for &mu in machine_sizes {
            for &tol in tolerances {
                let logs: Vec<f64> = group
                    .iter()
                    .filter_map(|s| s.batches_to(tol))
                    .map(|b| (rounds_metric(b, r, mu) as f64).log2())
                    .collect();
                rows.push(RoundsRow {
                    variant: variant.to_owned(),
                    resource_size: r,
                    machine_size: mu,
                    tolerance: tol,
                    median_log2_rounds: nearest_rank(&logs, 50.0).unwrap_or(f64::NAN),
                    reached: logs.len(),
                    censored: group.len() - logs.len(),
                });
            }
        }
    }
    rows
}

pub fn write_table(out: &Path, rows: &[RoundsRow]) -> Result<PathBuf> {
    let path = out.join("rounds.csv");
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
            r.resource_size.to_string(),
            r.machine_size.to_string(),
            format_real(r.tolerance),
            format_real(r.median_log2_rounds),
            r.reached.to_string(),
            r.censored.to_string(),
        ])
        .map_err(wrap)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::io(&path, e.into_error()))?;
    write_atomic(&path, &bytes)?;
    Ok(path)
}
