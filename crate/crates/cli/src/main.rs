use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sam_bench::config::{output_dir, Experiment};
use sam_bench::{rounds, runner, sweep, CliError, Result};
use sam_core::testbed::{DatasetMode, Family};

#[derive(Parser)]
#[command(name = "sam-bench", version, about = "Seeded experiments for stochastic average model solvers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (instance, seed, variant) and write traces plus summary.json.
    Run(Common),
    /// Run, then write 25/50/75 percentile bands of the gap to sweep.csv.
    Sweep(Common),
    /// Tabulate median log2 rounds from traces written by `run`.
    Rounds(Common),
    /// List problem families and dataset modes.
    ListProblems,
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides SAM_OUT_DIR and the config file.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads, 0 for one per core.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// Added to every instance and solver seed.
    #[arg(long, default_value_t = 0)]
    seed_offset: u64,
}

impl Common {
    fn load(&self) -> Result<(Experiment, PathBuf)> {
        let experiment = Experiment::load(&self.config)?.with_seed_offset(self.seed_offset);
        let out = output_dir(self.out.as_deref(), experiment.output.as_deref());
        Ok((experiment, out))
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(args) => {
            let (experiment, out) = args.load()?;
            ensure_dir(&out)?;
            let outcomes = runner::run_all(&experiment, &out, args.jobs)?;
            let path = runner::write_summary(&out, &outcomes)?;
            println!("{} runs, summary in {}", outcomes.len(), path.display());
        }
        Command::Sweep(args) => {
            let (experiment, out) = args.load()?;
            ensure_dir(&out)?;
            let outcomes = runner::run_all(&experiment, &out, args.jobs)?;
            runner::write_summary(&out, &outcomes)?;
            let path = sweep::write_bands(&out, &sweep::bands(&experiment, &outcomes))?;
            println!("{} runs, bands in {}", outcomes.len(), path.display());
        }
        Command::Rounds(args) => {
            let (experiment, out) = args.load()?;
            if experiment.machine_sizes.is_empty() {
                return Err(CliError::field("machine_sizes", "rounds needs at least one"));
            }
            if experiment.tolerances.is_empty() {
                return Err(CliError::field("tolerances", "rounds needs at least one"));
            }
            let runs = rounds::load_runs(&out)?;
            let table = rounds::table(&runs, &experiment.machine_sizes, &experiment.tolerances);
            let path = rounds::write_table(&out, &table)?;
            println!("{} runs, table in {}", runs.len(), path.display());
        }
        Command::ListProblems => {
            let modes: Vec<&str> = DatasetMode::ALL.iter().map(|m| m.name()).collect();
            for family in Family::ALL {
                let shape = match family {
                    Family::Logistic => "n=32 p=32 lambda=0.1 (defaults)",
                    Family::Rosenbrock | Family::Cube => "n=p=16 (default)",
                };
                println!("{family}\t{}\t{shape}", modes.join(","));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("sam-bench: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
