//! Command-line front end of `levy-neumann`: JSON run configs, results CSV,
//! run manifests and SVG error curves.

pub mod config;
pub mod error;
pub mod report;
pub mod run;

pub use config::{Mode, PathInput, RunConfig};
pub use error::CliError;
pub use report::{render_report, results_csv, ResultRow, CSV_HEADER, MANIFEST_FILE, RESULTS_FILE};
pub use run::{resolve_output_dir, run, selftest, Check, RunOutcome, DEFAULT_OUT, OUT_ENV};

use std::path::PathBuf;

/// Scalar overrides given on the command line.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub mode: Option<String>,
    pub seed: Option<u64>,
    pub paths: Option<usize>,
    pub dump_trajectories: Option<usize>,
}

/// Reads the config (or starts from an empty one for problem-free modes)
/// and applies the overrides.
pub fn build_config(path: Option<&PathBuf>, overrides: &Overrides) -> Result<RunConfig, CliError> {
    let mut config = match (path, &overrides.mode) {
        (Some(p), _) => RunConfig::load(p)?,
        (None, Some(m)) => RunConfig::new(Mode::parse(m)?),
        (None, None) => return Err(CliError::new("usage", "give a config file or --mode")),
    };
    if let Some(m) = &overrides.mode {
        config.mode = Mode::parse(m)?;
    }
    if let Some(s) = overrides.seed {
        config.mc.seed = s;
    }
    if let Some(n) = overrides.paths {
        config.mc.n_paths = n;
    }
    if let Some(n) = overrides.dump_trajectories {
        config.dump_trajectories = n;
    }
    Ok(config)
}
