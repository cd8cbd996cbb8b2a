use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ergodyn_cli::config::RawConfig;
use ergodyn_cli::{CliError, Experiment, ExperimentKind, TheoremKind};

#[derive(Parser)]
#[command(name = "ergodyn", version, about = "SGD dynamics laboratory: runs, diagnostics, measures and theorem checks")]
struct Cli {
    /// Experiment configuration (`key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides `seed` in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides `out_dir` in the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Concurrent sweep sub-runs; overrides `workers` in the config.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured dynamics and store the trajectory.
    Simulate,
    /// Simulate, then write diagnostics.csv (and epochs.csv, precision.csv when configured).
    Diagnose,
    /// Simulate, then report time averages and the vanishing-change statistic.
    Measure,
    /// Run one theorem checker.
    Theorem {
        #[arg(value_parser = parse_theorem)]
        which: TheoremKind,
    },
    /// One sub-run per value of `sweep_axis`, aggregated into sweep.csv.
    Sweep,
    /// Write a Gaussian-blob dataset as CSV.
    GenData,
    /// One SVG per numeric column of a CSV file.
    Plot {
        /// CSV to plot, e.g. a diagnostics.csv.
        input: PathBuf,
    },
}

fn parse_theorem(s: &str) -> Result<TheoremKind, String> {
    s.parse()
}

fn experiment(cli: &Cli) -> Result<Experiment, CliError> {
    let mut raw = match &cli.config {
        Some(path) => RawConfig::from_file(path)?,
        None => RawConfig::parse("")?,
    };
    if let Some(w) = cli.workers {
        raw.set("workers", w.to_string());
    }
    Experiment::new(raw, cli.seed, cli.out.clone())
}

fn run(cli: &Cli) -> Result<i32, CliError> {
    let (kind, theorem) = match &cli.command {
        Command::Simulate => (ExperimentKind::Simulate, None),
        Command::Diagnose => (ExperimentKind::Diagnose, None),
        Command::Measure => (ExperimentKind::Measure, None),
        Command::Theorem { which } => (ExperimentKind::Theorem, Some(*which)),
        Command::Sweep => (ExperimentKind::Sweep, None),
        Command::GenData => {
            let mut exp = experiment(cli)?;
            if let Some(seed) = cli.seed {
                exp = exp.with_override("data_seed", &seed.to_string(), exp.out_dir.clone())?;
            }
            let out = ergodyn_cli::run::generate_dataset(&exp)?;
            println!("{}", out.summary);
            return Ok(out.exit_code);
        }
        Command::Plot { input } => {
            let out_dir = cli.out.clone().unwrap_or_else(|| input.parent().map(PathBuf::from).unwrap_or_default());
            for path in ergodyn_cli::plot::plot_csv(input, &out_dir)? {
                println!("{}", path.display());
            }
            return Ok(0);
        }
    };
    let out = experiment(cli)?.run(kind, theorem)?;
    if kind != ExperimentKind::Theorem {
        println!("{}", out.summary);
    }
    Ok(out.exit_code)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code as u8)
        }
    }
}
