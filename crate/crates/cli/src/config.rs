//! Run configuration: one JSON document per run.

use std::path::{Path, PathBuf};

use levy_neumann::{CadlagPath, Interpolation, McConfig, NeumannProblem, Sweep};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// What a run does.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// `u` at each point.
    Solve,
    /// `u_n` at each point for the configured penalty.
    SolvePenalized,
    /// Penalized solutions against `u` over a list of penalties.
    SweepN,
    /// Stable solutions against their Gaussian limit over a list of indices.
    SweepAlpha,
    /// Perturbed problems against the unperturbed one.
    SweepCoeff,
    /// Deterministic reflection of a user path, cross-checked by the reference solver.
    Skorokhod,
    /// Reference cases and invariant smoke checks.
    Selftest,
    /// Prints the reference catalog.
    ListOracles,
}

impl Mode {
    pub const ALL: [Mode; 8] = [
        Mode::Solve,
        Mode::SolvePenalized,
        Mode::SweepN,
        Mode::SweepAlpha,
        Mode::SweepCoeff,
        Mode::Skorokhod,
        Mode::Selftest,
        Mode::ListOracles,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Solve => "solve",
            Mode::SolvePenalized => "solve-penalized",
            Mode::SweepN => "sweep-n",
            Mode::SweepAlpha => "sweep-alpha",
            Mode::SweepCoeff => "sweep-coeff",
            Mode::Skorokhod => "skorokhod",
            Mode::Selftest => "selftest",
            Mode::ListOracles => "list-oracles",
        }
    }

    pub fn parse(s: &str) -> Result<Mode, CliError> {
        Mode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| CliError::new("config", format!("unknown mode {s}")))
    }

    fn needs_problem(self) -> bool {
        !matches!(self, Mode::Selftest | Mode::ListOracles)
    }
}

/// Input path of the `skorokhod` mode. Rows of `values` are the stamps;
/// a nonzero row of `jumps` marks a jump of that size at the stamp.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathInput {
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jumps: Option<Vec<Vec<f64>>>,
    #[serde(default = "default_interpolation")]
    pub interpolation: Interpolation,
}

fn default_interpolation() -> Interpolation {
    Interpolation::PiecewiseLinear
}

impl PathInput {
    pub fn to_path(&self) -> Result<CadlagPath, CliError> {
        let dim = self.values.first().map_or(0, Vec::len);
        if self.values.iter().any(|r| r.len() != dim) {
            return Err(CliError::new("config", "path rows differ in length"));
        }
        let values: Vec<f64> = self.values.concat();
        let (flags, jumps) = match &self.jumps {
            None => (vec![false; self.times.len()], vec![0.0; values.len()]),
            Some(rows) => {
                if rows.len() != self.times.len() || rows.iter().any(|r| r.len() != dim) {
                    return Err(CliError::new("config", "jump rows must match the path rows"));
                }
                (rows.iter().map(|r| r.iter().any(|v| *v != 0.0)).collect(), rows.concat())
            }
        };
        Ok(CadlagPath::with_jumps(dim, self.times.clone(), values, flags, jumps, self.interpolation)?)
    }
}

/// A complete run description. Absent optional fields stay absent after a
/// round trip, so serializing a parsed config reproduces it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem: Option<NeumannProblem>,
    /// Evaluation points.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub points: Vec<Vec<f64>>,
    /// Paths, horizon, step and master seed.
    #[serde(default)]
    pub mc: McConfig,
    /// Penalty of `solve-penalized` and of the penalized reference in `skorokhod`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub penalty: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Sweep>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathInput>,
    /// Reflected trajectories written as CSV for the first point (debugging).
    #[serde(default, skip_serializing_if = "is_zero")]
    pub dump_trajectories: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

fn is_zero(n: &usize) -> bool {
    *n == 0
}

impl RunConfig {
    /// A config with defaults for everything but the mode.
    pub fn new(mode: Mode) -> Self {
        RunConfig {
            mode,
            problem: None,
            points: Vec::new(),
            mc: McConfig::default(),
            penalty: None,
            sweep: None,
            path: None,
            dump_trajectories: 0,
            output_dir: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::new("config", format!("malformed config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::new("io", format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Pretty JSON; field order is fixed by the type, so equal configs give
    /// equal text.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// The problem of modes that need one, validated against the standing
    /// assumptions.
    pub fn checked_problem(&self) -> Result<&NeumannProblem, CliError> {
        let p = self
            .problem
            .as_ref()
            .ok_or_else(|| CliError::new("config", format!("mode {} needs a problem", self.mode.name())))?;
        p.validate()?;
        Ok(p)
    }

    /// Checks that the fields the mode reads are present and consistent.
    pub fn validate(&self) -> Result<(), CliError> {
        self.mc.validate()?;
        if !self.mode.needs_problem() {
            return Ok(());
        }
        let problem = self.checked_problem()?;
        let dim = problem.dim();
        if self.mode != Mode::Skorokhod {
            if self.points.is_empty() {
                return Err(CliError::new("config", format!("mode {} needs evaluation points", self.mode.name())));
            }
            if let Some(p) = self.points.iter().find(|p| p.len() != dim || p.iter().any(|v| !v.is_finite())) {
                return Err(CliError::new("config", format!("point {p:?} is not a finite {dim}-vector")));
            }
        }
        let sweep_ok = match (self.mode, &self.sweep) {
            (Mode::SweepN, Some(Sweep::Penalization { penalties })) => !penalties.is_empty(),
            (Mode::SweepAlpha, Some(Sweep::Alpha { alphas })) => !alphas.is_empty(),
            (Mode::SweepCoeff, Some(Sweep::Coefficients { shifts })) => !shifts.is_empty(),
            (Mode::SweepN | Mode::SweepAlpha | Mode::SweepCoeff, _) => false,
            _ => true,
        };
        if !sweep_ok {
            return Err(CliError::new("config", format!("mode {} needs a nonempty sweep of its kind", self.mode.name())));
        }
        if self.mode == Mode::SolvePenalized && !self.penalty.is_some_and(|n| n.is_finite() && n > 0.0) {
            return Err(CliError::new("config", "mode solve-penalized needs a positive penalty"));
        }
        if self.mode == Mode::Skorokhod {
            let path = self.path.as_ref().ok_or_else(|| CliError::new("config", "mode skorokhod needs a path"))?;
            let y = path.to_path()?;
            if y.dim() != dim {
                return Err(CliError::new("config", format!("path has dimension {}, domain {dim}", y.dim())));
            }
        }
        Ok(())
    }
}
