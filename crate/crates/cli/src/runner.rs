//! Runs every (instance, seed, variant) combination and writes one trace CSV
//! and one JSON record per run.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use sam_core::solver::{run, LipschitzMode, RunResult, SamplingMode, StopReason};
use sam_core::testbed::{gen_cube, gen_logistic, gen_rosenbrock, random_init, Family, GeneratedProblem};
use sam_core::Point;

use crate::config::{Experiment, Init, Variant};
use crate::error::{CliError, Result};
use crate::trace::{to_csv_bytes, TraceRow};

pub const RUNS_DIR: &str = "runs";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reached {
    pub tolerance: f64,
    pub passes: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub variant: String,
    pub instance_seed: u64,
    pub seed: u64,
    pub sampling_mode: SamplingMode,
    pub lipschitz_mode: LipschitzMode,
    pub resource_size: usize,
    pub final_gap: f64,
    pub final_value: f64,
    pub total_evaluations: u64,
    pub batch_count: u64,
    pub iterations: usize,
    pub stop: StopReason,
    pub reached: Vec<Reached>,
    /// Cumulative batches at every trace row. Only in the per-run files.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub batch_counts: Vec<u64>,
}

pub struct Job<'a> {
    pub instance: usize,
    pub seed: u64,
    pub variant: &'a Variant,
}

impl Job<'_> {
    pub fn stem(&self, experiment: &Experiment) -> String {
        format!(
            "{}_i{}_s{}",
            self.variant.name, experiment.instance_seeds[self.instance], self.seed
        )
    }
}

pub struct Outcome {
    pub summary: RunSummary,
    pub rows: Vec<TraceRow>,
}

pub fn generate(experiment: &Experiment, instance_seed: u64) -> Result<GeneratedProblem> {
    Ok(match experiment.family {
        Family::Logistic => gen_logistic(experiment.n, experiment.p, experiment.lambda, experiment.mode, instance_seed)?,
        Family::Rosenbrock => gen_rosenbrock(experiment.p, experiment.mode)?,
        Family::Cube => gen_cube(experiment.p, experiment.mode)?,
    })
}

fn start(experiment: &Experiment, instance_seed: u64) -> Result<Point> {
    match experiment.init {
        Init::Uniform { low, high } => Ok(random_init(experiment.n, low, high, instance_seed)?),
        Init::Zeros => Ok(Point::zeros(experiment.n)),
    }
}

/// Writes through a temporary file so readers never see partial output.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, bytes).map_err(|e| CliError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

pub fn to_json_bytes<T: Serialize>(value: &T, path: &Path) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| CliError::Json {
        path: path.into(),
        source: e,
    })?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn summarize(job: &Job<'_>, experiment: &Experiment, result: &RunResult) -> RunSummary {
    let solver = &job.variant.solver;
    RunSummary {
        variant: job.variant.name.clone(),
        instance_seed: experiment.instance_seeds[job.instance],
        seed: job.seed,
        sampling_mode: solver.sampling_mode,
        lipschitz_mode: solver.lipschitz_mode,
        resource_size: solver.resource_size,
        final_gap: result.final_gap(),
        final_value: result.final_value,
        total_evaluations: result.total_evaluations,
        batch_count: result.batch_count,
        iterations: result.iterations,
        stop: result.stop,
        reached: experiment
            .tolerances
            .iter()
            .map(|&tolerance| Reached {
                tolerance,
                passes: result.passes_to(tolerance),
            })
            .collect(),
        batch_counts: result.trace.iter().map(|r| r.batch_count).collect(),
    }
}

/// Runs all jobs on `jobs` worker threads (0 picks the default) and writes
/// `out/runs/<variant>_i<instance>_s<seed>.{csv,json}`. Outcomes are returned
/// in job order.
pub fn run_all(experiment: &Experiment, out: &Path, jobs: usize) -> Result<Vec<Outcome>> {
    let problems = experiment
        .instance_seeds
        .iter()
        .map(|&s| Ok((generate(experiment, s)?, start(experiment, s)?)))
        .collect::<Result<Vec<_>>>()?;
    for v in &experiment.variants {
        v.solver
            .validate(problems[0].0.problem())
            .map_err(|e| CliError::field(format!("variant `{}`", v.name), e.to_string()))?;
    }
    let runs_dir = out.join(RUNS_DIR);
    std::fs::create_dir_all(&runs_dir).map_err(|e| CliError::io(&runs_dir, e))?;

    let mut work = Vec::new();
    for instance in 0..problems.len() {
        for &seed in &experiment.seeds {
            for variant in &experiment.variants {
                work.push(Job { instance, seed, variant });
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Config(format!("cannot start {jobs} workers: {e}")))?;
    pool.install(|| {
        work.par_iter()
            .map(|job| {
                let (g, x0) = &problems[job.instance];
                let mut config = job.variant.solver.clone();
                config.seed = job.seed;
                let result = run(g.problem(), x0, g.f_star, &config)?;
                let p = g.problem().num_components();
                let rows: Vec<TraceRow> = result.trace.iter().map(|r| TraceRow::from_record(r, p)).collect();
                let summary = summarize(job, experiment, &result);
                let stem = job.stem(experiment);
                let csv_path = runs_dir.join(format!("{stem}.csv"));
                write_atomic(&csv_path, &to_csv_bytes(&rows)?)?;
                let json_path = runs_dir.join(format!("{stem}.json"));
                write_atomic(&json_path, &to_json_bytes(&summary, &json_path)?)?;
                Ok(Outcome { summary, rows })
            })
            .collect()
    })
}

/// `out/summary.json` without the per-row batch counts.
pub fn write_summary(out: &Path, outcomes: &[Outcome]) -> Result<PathBuf> {
    let summaries: Vec<RunSummary> = outcomes
        .iter()
        .map(|o| RunSummary {
            batch_counts: Vec::new(),
            ..o.summary.clone()
        })
        .collect();
    let path = out.join("summary.json");
    write_atomic(&path, &to_json_bytes(&summaries, &path)?)?;
    Ok(path)
}
