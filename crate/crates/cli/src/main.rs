use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use levy_neumann_cli::{build_config, resolve_output_dir, run, Overrides, OUT_ENV};

/// Monte Carlo solver for Neumann problems with Lévy-type operators.
#[derive(Parser, Debug)]
#[command(name = "levy-neumann", version)]
struct Args {
    /// Run configuration (JSON). Optional for `selftest` and `list-oracles`.
    config: Option<PathBuf>,
    /// Overrides the mode: solve, solve-penalized, sweep-n, sweep-alpha,
    /// sweep-coeff, skorokhod, selftest or list-oracles.
    #[arg(long)]
    mode: Option<String>,
    /// Overrides the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the number of Monte Carlo paths.
    #[arg(long)]
    paths: Option<usize>,
    /// Writes this many reflected trajectories as CSV (debugging).
    #[arg(long)]
    dump_trajectories: Option<usize>,
    /// Output directory; defaults to the config field, then the environment.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let overrides = Overrides { mode: args.mode, seed: args.seed, paths: args.paths, dump_trajectories: args.dump_trajectories };
    let result = build_config(args.config.as_ref(), &overrides).and_then(|config| {
        let dir = resolve_output_dir(args.out, &config, std::env::var_os(OUT_ENV));
        run(&config, &dir)
    });
    match result {
        Ok(outcome) => {
            for line in &outcome.stdout {
                println!("{line}");
            }
            for w in &outcome.warnings {
                eprintln!("warning: {w}");
            }
            println!("results: {}", outcome.results_path.display());
            println!("manifest: {}", outcome.manifest_path.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.line());
            ExitCode::from(2)
        }
    }
}
