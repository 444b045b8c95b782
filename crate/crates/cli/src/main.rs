use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dmdp::harness::report::{load_records, save_record};
use dmdp::harness::sweep::with_workers;
use dmdp::harness::{
    emit_report, run_experiment, sweep, ExperimentConfig, ReportFormat, SweepConfig,
};
use dmdp::Error;
use rayon::prelude::*;

/// Delayed-feedback adversarial MDP experiments.
///
/// Set DMDP_WORKERS to cap the number of worker threads.
#[derive(Debug, Parser)]
#[command(name = "dmdp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one experiment for each configured seed and save the records.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Run only this seed instead of the configured list.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory; overrides the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a grid of experiments and write sweep.csv and sweep.json.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Turn saved records into CSV tables, a JSON summary or an SVG plot.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value = "csv")]
        format: String,
        /// Output directory; defaults to the input directory.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        log_log: bool,
    },
}

fn print_paths(paths: &[PathBuf]) {
    for p in paths {
        println!("{}", p.display());
    }
}

fn run(config: &Path, seed: Option<u64>, out: Option<PathBuf>) -> Result<(), Error> {
    let cfg = ExperimentConfig::load(config)?;
    let seeds = match seed {
        Some(s) => vec![s],
        None => cfg.seeds.clone(),
    };
    let dir = out
        .or_else(|| cfg.output.dir.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    let records = with_workers(|| {
        seeds
            .par_iter()
            .map(|&s| run_experiment(&cfg, s))
            .collect::<Result<Vec<_>, Error>>()
    })??;
    for rec in &records {
        print_paths(&save_record(rec, &dir)?);
    }
    Ok(())
}

fn run_sweep(config: &Path, out: Option<PathBuf>) -> Result<(), Error> {
    let cfg = SweepConfig::load(config)?;
    cfg.base.validate()?;
    let table = sweep(&cfg)?;
    let dir = out
        .or_else(|| cfg.output.dir.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    print_paths(&table.emit(&dir)?);
    Ok(())
}

fn report(input: &Path, format: &str, out: Option<PathBuf>, log_log: bool) -> Result<(), Error> {
    let format: ReportFormat = format.parse()?;
    let records = load_records(input)?;
    let dir = out.unwrap_or_else(|| input.to_path_buf());
    print_paths(&emit_report(&records, &dir, format, log_log)?);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, seed, out } => run(&config, seed, out),
        Command::Sweep { config, out } => run_sweep(&config, out),
        Command::Report {
            input,
            format,
            out,
            log_log,
        } => report(&input, &format, out, log_log),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let body = serde_json::json!({"error": e.kind(), "message": e.to_string()});
            eprintln!("{body}");
            ExitCode::FAILURE
        }
    }
}
