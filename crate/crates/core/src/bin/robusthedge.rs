use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;

use robusthedge::cli::{exit_code, result_record, run, ExperimentConfig, Mode};
use robusthedge::EngineError;

/// Robust super-replication pricing experiments.
#[derive(Parser, Debug)]
#[command(name = "robusthedge", version)]
struct Args {
    /// Experiment config file (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Override the config's mode: price, dual, gap, lift-check,
    /// kusuoka-check, scaling-study.
    #[arg(long)]
    mode: Option<String>,
    /// Override the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Result record path (default: config's `output`, else stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker-thread cap (recorded; the engine is single-threaded).
    #[arg(long)]
    threads: Option<usize>,
    /// Evaluation budget for search-based modes.
    #[arg(long)]
    budget: Option<usize>,
}

fn execute(args: &Args) -> Result<(), EngineError> {
    let text = fs::read_to_string(&args.config)?;
    let mut config = ExperimentConfig::parse(&text)?;
    if let Some(mode) = &args.mode {
        config.mode = mode.parse::<Mode>()?;
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(budget) = args.budget {
        if budget == 0 {
            return Err(EngineError::Config("budget must be >= 1".into()));
        }
        config.budget = Some(budget);
    }
    let started = Instant::now();
    let outcome = run(&config)?;
    let wall_ms = started.elapsed().as_millis();
    let mut record = result_record(&config, &outcome, wall_ms);
    if let Some(threads) = args.threads {
        record["threads"] = threads.into();
    }
    let record_text = serde_json::to_string_pretty(&record).expect("record serializes");
    let out_path = args.out.clone().or_else(|| config.output.clone().map(PathBuf::from));
    match &out_path {
        Some(path) => fs::write(path, record_text + "\n")?,
        None => println!("{record_text}"),
    }
    if let Some(csv) = &outcome.csv {
        match &out_path {
            Some(path) => fs::write(path.with_extension("csv"), csv)?,
            None => print!("{csv}"),
        }
    }
    if let Some(path) = &out_path {
        eprintln!("wrote {}", Path::new(path).display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    match execute(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err) as u8)
        }
    }
}
