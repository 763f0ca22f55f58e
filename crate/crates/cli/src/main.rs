//! `mfsim` runs batch simulations and verification experiments for the
//! mean-field multi-agent lab from a plain-text configuration file.

mod config;
mod runner;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

#[derive(Parser)]
#[command(
    name = "mfsim",
    version,
    about = "Mean-field multi-agent simulation lab",
    after_help = "Exit status: 0 all verdicts pass, 1 experiment failure or runtime error, \
                  2 configuration error."
)]
struct Args {
    /// Run configuration file (sectioned key = value text; see README)
    config: PathBuf,

    /// Override the root seed from the config
    #[arg(long)]
    seed: Option<u64>,

    /// Override the output directory from the config
    #[arg(long)]
    out: Option<PathBuf>,

    /// Emit diagnostic SVG plots alongside the CSV artifacts
    #[arg(long)]
    emit_svg: bool,

    /// Worker-thread hint for replicate-level parallelism; never changes
    /// results
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let text = match std::fs::read_to_string(&args.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("mfsim: cannot read {}: {e}", args.config.display());
            return ExitCode::from(2);
        }
    };
    let mut cfg = match config::parse_config(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("mfsim: {}: {e}", args.config.display());
            return ExitCode::from(2);
        }
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = args.out {
        cfg.out = out;
    }
    if args.emit_svg {
        cfg.emit_svg = true;
    }
    if let Some(threads) = args.threads {
        cfg.threads = Some(threads);
    }
    if let Some(threads) = cfg.threads {
        if threads > 0 {
            // determinism does not depend on the pool size
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build_global();
        }
    }

    match runner::run(&cfg) {
        Ok(outcome) => {
            print!("{}", outcome.report);
            if outcome.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("mfsim: {e:#}");
            ExitCode::from(1)
        }
    }
}
