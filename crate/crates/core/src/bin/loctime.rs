//! Command-line runner: `loctime --config run.json [--seed S] [--threads T] [--out DIR] [--assert]`.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use loctime::error::Error;
use loctime::run::{run, RunConfig};

#[derive(Parser, Debug)]
#[command(version, about = "Local-time experiments on wired lattice domains")]
struct Args {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configuration's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; affects speed only.
    #[arg(long)]
    threads: Option<usize>,
    /// Overrides the configuration's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Exit with status 3 if any recorded assertion fails.
    #[arg(long = "assert")]
    assert_mode: bool,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let text = match std::fs::read_to_string(&args.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", args.config.display());
            return ExitCode::from(2);
        }
    };
    let mut config = match RunConfig::from_json(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(out) = args.out {
        config.out = out;
    }
    if let Some(threads) = args.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("error: cannot start {threads} threads: {e}");
            return ExitCode::from(2);
        }
    }
    match run(&config) {
        Ok(manifest) => {
            for a in &manifest.assertions {
                println!("{} {}: {}", if a.passed { "PASS" } else { "FAIL" }, a.name, a.detail);
            }
            println!("outputs {} in {}", manifest.output_digest(), config.out.display());
            if args.assert_mode && !manifest.passed() {
                return ExitCode::from(3);
            }
            ExitCode::SUCCESS
        }
        Err(e @ (Error::Config(_) | Error::InvalidParameter(_) | Error::InvalidDomain(_) | Error::DomainTooSmall { .. })) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
