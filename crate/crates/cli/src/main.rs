//! `kflab` — config-driven experiment runner.
//!
//! Usage: `kflab <kind> --config <file> --out <dir> [--seed N] [--depth N]`.
//! Exit codes: 0 success, 2 invalid configuration, 3 failed numerical
//! self-check, 1 anything else.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use kflab_cli::config::{parse_raw, validate, ExperimentKind};
use kflab_cli::run::{dispatch, RunError};

#[derive(Parser, Debug)]
#[command(
    name = "kflab",
    about = "Experiment runner for measure-geometric operators and gap diffusions"
)]
struct Cli {
    /// Experiment kind: spectrum | transfer | counting | simulate | exit | walkdim
    kind: String,

    /// JSON configuration file
    #[arg(long)]
    config: PathBuf,

    /// Output directory for artifacts and the manifest
    #[arg(long)]
    out: PathBuf,

    /// Overrides the seed from the config
    #[arg(long)]
    seed: Option<u64>,

    /// Overrides the atomization depth from the config
    #[arg(long)]
    depth: Option<u32>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();

    if let Ok(threads) = std::env::var("KFLAB_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build_global();
        }
    }

    let text = match std::fs::read_to_string(&cli.config) {
        Ok(text) => text,
        Err(e) => {
            eprintln!("kflab: cannot read {}: {e}", cli.config.display());
            return ExitCode::from(1);
        }
    };

    let mut raw = match parse_raw(&text) {
        Ok(raw) => raw,
        Err(e) => {
            eprintln!("kflab: invalid config: {e}");
            return ExitCode::from(2);
        }
    };

    let requested = match ExperimentKind::parse(&cli.kind) {
        Ok(kind) => kind,
        Err(e) => {
            eprintln!("kflab: {e}");
            return ExitCode::from(2);
        }
    };
    if raw.kind != requested.name() {
        eprintln!(
            "kflab: /kind: config says '{}' but '{}' was requested",
            raw.kind, requested.name()
        );
        return ExitCode::from(2);
    }
    if let Some(seed) = cli.seed {
        raw.seed = Some(seed);
    }
    if let Some(depth) = cli.depth {
        raw.depth = Some(depth);
    }

    let config = match validate(raw) {
        Ok(config) => config,
        Err(e) => {
            eprintln!("kflab: invalid config: {e}");
            return ExitCode::from(2);
        }
    };

    match dispatch(&config, &cli.out) {
        Ok(manifest) => {
            println!(
                "kflab: {} finished in {} ms; {} artifacts in {}",
                manifest.kind,
                manifest.wall_time_ms,
                manifest.outputs.len(),
                cli.out.display()
            );
            ExitCode::SUCCESS
        }
        Err(RunError::Validation(e)) => {
            eprintln!("kflab: invalid config: {e}");
            ExitCode::from(2)
        }
        Err(RunError::Tolerance(m)) => {
            eprintln!("kflab: self-check failed: {m}");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("kflab: {e}");
            ExitCode::from(1)
        }
    }
}
