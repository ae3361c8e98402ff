//! Reflected and penalized jump-diffusions.
//!
//! One step from `t_prev` to `t`, with `ΔW ~ N(0, dt I_m)` and driver
//! increments `(cont, jump)`:
//!
//! * reflected: `x⁻ = Π(x + σ(x)ΔW + b(x)dt + cont)`, then `x = Π(x⁻ + jump)`;
//! * penalized: `pre = x + σ(x)ΔW + b(x)dt + cont`, relax along the exact flow
//!   `x⁻ = Π(pre) + (pre - Π(pre)) e^{-n dt}`, then `x = x⁻ + jump`.
//!
//! Both schemes consume the Brownian stream and the driver identically, so
//! runs with the same [`StreamId`] are coupled.

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::geometry::ConvexDomain;
use crate::levy::{DriverSampler, DriverSource, LevyDriverSpec, StableSampler};
use crate::paths::{norm, BVPath, CadlagPath, Interpolation, TimeGrid};
use crate::rng::{Channel, StreamId};
use crate::skorokhod::{PenalizedSolution, SkorokhodSolution};

/// Diffusion matrix field `σ: R^d → R^{d×m}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MatrixField {
    Zero,
    ScaledIdentity { scale: f64 },
    /// Constant `d×m` matrix given by rows.
    Constant { rows: Vec<Vec<f64>> },
    /// `(base + amplitude·sin(⟨wave, x⟩))·I`.
    Modulated { base: f64, amplitude: f64, wave: Vec<f64> },
    /// `base(x) + shift·I` (identity padded to `d×m`).
    Shifted { base: Box<MatrixField>, shift: f64 },
}

/// Drift field `b: R^d → R^d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum VectorField {
    Zero,
    Constant { value: Vec<f64> },
    /// `-strength·tanh(x_i - center_i)` componentwise.
    TanhRestoring {
        strength: f64,
        #[serde(default)]
        center: Vec<f64>,
    },
    /// `base(x) + shift·(1, …, 1)`.
    Shifted { base: Box<VectorField>, shift: f64 },
}

impl MatrixField {
    /// Number of Brownian channels `m` for state dimension `d`.
    pub fn channels(&self, d: usize) -> usize {
        match self {
            MatrixField::Zero => 0,
            MatrixField::Constant { rows } => rows.first().map_or(0, |r| r.len()),
            MatrixField::Shifted { base, .. } => match base.channels(d) {
                0 => d,
                m => m,
            },
            _ => d,
        }
    }

    fn validate(&self, d: usize) -> Result<()> {
        let bad = |m: &str| Err(Error::Assumption { assumption: "A1", reason: m.to_string() });
        match self {
            MatrixField::Zero => Ok(()),
            MatrixField::ScaledIdentity { scale } if !scale.is_finite() => bad("diffusion scale must be finite"),
            MatrixField::ScaledIdentity { .. } => Ok(()),
            MatrixField::Constant { rows } => {
                check_dim(d, rows.len())?;
                let m = rows[0].len();
                if m == 0 || rows.iter().any(|r| r.len() != m || r.iter().any(|v| !v.is_finite())) {
                    return bad("diffusion rows must be finite with a common positive length");
                }
                Ok(())
            }
            MatrixField::Modulated { base, amplitude, wave } => {
                check_dim(d, wave.len())?;
                if !base.is_finite() || !amplitude.is_finite() || wave.iter().any(|w| !w.is_finite()) {
                    return bad("modulated diffusion parameters must be finite");
                }
                Ok(())
            }
            MatrixField::Shifted { base, shift } => {
                if !shift.is_finite() {
                    return bad("diffusion shift must be finite");
                }
                base.validate(d)
            }
        }
    }

    /// Writes `σ(x)` row-major into `out` (`d·m` entries).
    fn eval_into(&self, x: &[f64], d: usize, m: usize, out: &mut [f64]) {
        match self {
            MatrixField::Zero => out.iter_mut().for_each(|v| *v = 0.0),
            MatrixField::ScaledIdentity { scale } => diag_into(*scale, d, m, out),
            MatrixField::Constant { rows } => {
                for (i, r) in rows.iter().enumerate() {
                    out[i * m..(i + 1) * m].copy_from_slice(r);
                }
            }
            MatrixField::Modulated { base, amplitude, wave } => {
                let phase: f64 = wave.iter().zip(x).map(|(w, xi)| w * xi).sum();
                diag_into(base + amplitude * phase.sin(), d, m, out);
            }
            MatrixField::Shifted { base, shift } => {
                if matches!(**base, MatrixField::Zero) {
                    out.iter_mut().for_each(|v| *v = 0.0);
                } else {
                    base.eval_into(x, d, m, out);
                }
                for i in 0..d.min(m) {
                    out[i * m + i] += shift;
                }
            }
        }
    }

    /// Bound on the Frobenius norm of `σ(x)` over all `x`.
    pub fn sup_bound(&self, d: usize) -> f64 {
        let sd = (d as f64).sqrt();
        match self {
            MatrixField::Zero => 0.0,
            MatrixField::ScaledIdentity { scale } => scale.abs() * sd,
            MatrixField::Constant { rows } => rows.iter().flatten().map(|v| v * v).sum::<f64>().sqrt(),
            MatrixField::Modulated { base, amplitude, .. } => (base.abs() + amplitude.abs()) * sd,
            MatrixField::Shifted { base, shift } => {
                base.sup_bound(d) + shift.abs() * (d.min(self.channels(d)) as f64).sqrt()
            }
        }
    }

    /// Lipschitz constant in the Frobenius norm.
    pub fn lipschitz(&self, d: usize) -> f64 {
        match self {
            MatrixField::Modulated { amplitude, wave, .. } => amplitude.abs() * norm(wave) * (d as f64).sqrt(),
            MatrixField::Shifted { base, .. } => base.lipschitz(d),
            _ => 0.0,
        }
    }
}

fn diag_into(value: f64, d: usize, m: usize, out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    for i in 0..d.min(m) {
        out[i * m + i] = value;
    }
}

impl VectorField {
    fn validate(&self, d: usize) -> Result<()> {
        let bad = |m: &str| Err(Error::Assumption { assumption: "A1", reason: m.to_string() });
        match self {
            VectorField::Zero => Ok(()),
            VectorField::Constant { value } => {
                check_dim(d, value.len())?;
                if value.iter().any(|v| !v.is_finite()) {
                    return bad("drift must be finite");
                }
                Ok(())
            }
            VectorField::TanhRestoring { strength, center } => {
                if !center.is_empty() {
                    check_dim(d, center.len())?;
                }
                if !strength.is_finite() || center.iter().any(|c| !c.is_finite()) {
                    return bad("restoring drift parameters must be finite");
                }
                Ok(())
            }
            VectorField::Shifted { base, shift } => {
                if !shift.is_finite() {
                    return bad("drift shift must be finite");
                }
                base.validate(d)
            }
        }
    }

    fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        match self {
            VectorField::Zero => out.iter_mut().for_each(|v| *v = 0.0),
            VectorField::Constant { value } => out.copy_from_slice(value),
            VectorField::TanhRestoring { strength, center } => {
                for (i, o) in out.iter_mut().enumerate() {
                    let c = center.get(i).copied().unwrap_or(0.0);
                    *o = -strength * (x[i] - c).tanh();
                }
            }
            VectorField::Shifted { base, shift } => {
                base.eval_into(x, out);
                out.iter_mut().for_each(|o| *o += shift);
            }
        }
    }

    pub fn sup_bound(&self, d: usize) -> f64 {
        let sd = (d as f64).sqrt();
        match self {
            VectorField::Zero => 0.0,
            VectorField::Constant { value } => norm(value),
            VectorField::TanhRestoring { strength, .. } => strength.abs() * sd,
            VectorField::Shifted { base, shift } => base.sup_bound(d) + shift.abs() * sd,
        }
    }

    pub fn lipschitz(&self, d: usize) -> f64 {
        match self {
            VectorField::TanhRestoring { strength, .. } => strength.abs(),
            VectorField::Shifted { base, .. } => base.lipschitz(d),
            _ => 0.0,
        }
    }

    fn is_zero(&self) -> bool {
        matches!(self, VectorField::Zero)
    }
}

/// Bounded Lipschitz coefficients `σ` and `b`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SdeCoefficients {
    pub dim: usize,
    pub sigma: MatrixField,
    pub drift: VectorField,
}

impl SdeCoefficients {
    pub fn new(dim: usize, sigma: MatrixField, drift: VectorField) -> Result<Self> {
        let c = SdeCoefficients { dim, sigma, drift };
        c.validate()?;
        Ok(c)
    }

    /// `σ = 0`, `b = 0`.
    pub fn zero(dim: usize) -> Self {
        SdeCoefficients { dim, sigma: MatrixField::Zero, drift: VectorField::Zero }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::InvalidCoefficients("dimension must be positive".into()));
        }
        self.sigma.validate(self.dim)?;
        self.drift.validate(self.dim)
    }

    pub fn channels(&self) -> usize {
        self.sigma.channels(self.dim)
    }

    /// Declared bounds `(sup ‖σ‖_F, sup |b|)`.
    pub fn sup_bounds(&self) -> (f64, f64) {
        (self.sigma.sup_bound(self.dim), self.drift.sup_bound(self.dim))
    }

    /// Declared Lipschitz constants `(σ, b)`.
    pub fn lipschitz(&self) -> (f64, f64) {
        (self.sigma.lipschitz(self.dim), self.drift.lipschitz(self.dim))
    }

    /// `σ + ε_σ I`, `b + ε_b 1`.
    pub fn perturbed(&self, sigma_shift: f64, drift_shift: f64) -> Self {
        let mut c = self.clone();
        if sigma_shift != 0.0 {
            c.sigma = MatrixField::Shifted { base: Box::new(c.sigma), shift: sigma_shift };
        }
        if drift_shift != 0.0 {
            c.drift = VectorField::Shifted { base: Box::new(c.drift), shift: drift_shift };
        }
        c
    }

    /// `a = σσ^T` at `x`, row-major.
    pub fn diffusion_matrix(&self, x: &[f64]) -> Vec<f64> {
        let (d, m) = (self.dim, self.channels());
        let mut s = vec![0.0; d * m];
        self.sigma.eval_into(x, d, m, &mut s);
        let mut a = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                a[i * d + j] = (0..m).map(|k| s[i * m + k] * s[j * m + k]).sum();
            }
        }
        a
    }
}

/// How the regulator is applied.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Scheme {
    Reflected,
    Penalized { penalty: f64 },
}

/// Everything an observer may need about one step.
#[derive(Debug)]
pub struct StepRecord<'a> {
    pub t_prev: f64,
    pub t: f64,
    pub x_prev: &'a [f64],
    /// `x_prev` plus the continuous increment.
    pub pre: &'a [f64],
    /// `Π(pre)`.
    pub anchor: &'a [f64],
    /// State just before the jump at `t`.
    pub x_minus: &'a [f64],
    /// State at `t`.
    pub x: &'a [f64],
    /// Continuous regulator increment `x_minus - pre`.
    pub push: &'a [f64],
    /// Regulator jump at `t` (reflected scheme only; zero otherwise).
    pub jump_push: &'a [f64],
    /// Driver jump at `t`.
    pub jump: &'a [f64],
    pub jumped: bool,
}

/// Receives the steps of one path.
pub trait StepObserver {
    /// `x0` is the requested start, `x_start` the state at time 0 and `k0`
    /// the initial regulator atom.
    fn start(&mut self, _x0: &[f64], _x_start: &[f64], _k0: &[f64]) {}
    fn step(&mut self, record: &StepRecord<'_>);
}

impl<A: StepObserver, B: StepObserver> StepObserver for (A, B) {
    fn start(&mut self, x0: &[f64], x_start: &[f64], k0: &[f64]) {
        self.0.start(x0, x_start, k0);
        self.1.start(x0, x_start, k0);
    }

    fn step(&mut self, record: &StepRecord<'_>) {
        self.0.step(record);
        self.1.step(record);
    }
}

/// Counters gathered while stepping.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PathStats {
    pub steps: u64,
    /// States where `‖σ(x)‖_F` or `|b(x)|` exceeded the declared bound.
    pub bound_violations: u64,
}

/// Runs one path and reports every step to `observer`.
pub fn run_path<D: DriverSource, O: StepObserver>(
    x0: &[f64],
    coeffs: &SdeCoefficients,
    domain: &ConvexDomain,
    scheme: Scheme,
    driver: &mut D,
    brownian: &mut ChaCha8Rng,
    observer: &mut O,
) -> Result<PathStats> {
    let d = domain.dim();
    check_dim(d, x0.len())?;
    check_dim(d, coeffs.dim)?;
    check_dim(d, driver.dim())?;
    if let Scheme::Penalized { penalty } = scheme {
        if !(penalty.is_finite() && penalty > 0.0) {
            return Err(Error::InvalidArgument(format!("penalty {penalty} must be positive")));
        }
    }
    let m = coeffs.channels();
    let (sigma_bound, drift_bound) = coeffs.sup_bounds();
    let sigma_limit = sigma_bound * (1.0 + 1e-12) + 1e-300;
    let drift_limit = drift_bound * (1.0 + 1e-12) + 1e-300;
    let sigma_zero = matches!(coeffs.sigma, MatrixField::Zero);
    let drift_zero = coeffs.drift.is_zero();

    let mut x = vec![0.0; d];
    let mut k0 = vec![0.0; d];
    match scheme {
        Scheme::Reflected => {
            domain.project_into(x0, &mut x);
            for c in 0..d {
                k0[c] = x[c] - x0[c];
            }
        }
        Scheme::Penalized { .. } => x.copy_from_slice(x0),
    }
    observer.start(x0, &x, &k0);

    let mut sig = vec![0.0; d * m];
    let mut dw = vec![0.0; m];
    let mut b = vec![0.0; d];
    let mut cont = vec![0.0; d];
    let mut jump = vec![0.0; d];
    let mut x_prev = vec![0.0; d];
    let mut pre = vec![0.0; d];
    let mut anchor = vec![0.0; d];
    let mut x_minus = vec![0.0; d];
    let mut push = vec![0.0; d];
    let mut jump_push = vec![0.0; d];
    let mut tmp = vec![0.0; d];
    let mut stats = PathStats::default();
    let mut t_prev = 0.0;

    while let Some(step) = driver.next_step(&mut cont, &mut jump) {
        let dt = step.dt;
        x_prev.copy_from_slice(&x);
        pre.copy_from_slice(&x);
        if !sigma_zero && m > 0 {
            coeffs.sigma.eval_into(&x, d, m, &mut sig);
            if sig.iter().map(|v| v * v).sum::<f64>().sqrt() > sigma_limit {
                stats.bound_violations += 1;
            }
            let sq = dt.sqrt();
            for w in dw.iter_mut() {
                let z: f64 = StandardNormal.sample(brownian);
                *w = z * sq;
            }
            for i in 0..d {
                pre[i] += (0..m).map(|j| sig[i * m + j] * dw[j]).sum::<f64>();
            }
        } else if m > 0 {
            for _ in 0..m {
                let _: f64 = StandardNormal.sample(brownian);
            }
        }
        if !drift_zero {
            coeffs.drift.eval_into(&x, &mut b);
            if norm(&b) > drift_limit {
                stats.bound_violations += 1;
            }
            for i in 0..d {
                pre[i] += b[i] * dt;
            }
        }
        for i in 0..d {
            pre[i] += cont[i];
        }
        domain.project_into(&pre, &mut anchor);
        match scheme {
            Scheme::Reflected => {
                x_minus.copy_from_slice(&anchor);
                if step.jumped {
                    for i in 0..d {
                        tmp[i] = x_minus[i] + jump[i];
                    }
                    domain.project_into(&tmp, &mut x);
                    for i in 0..d {
                        jump_push[i] = x[i] - tmp[i];
                    }
                } else {
                    x.copy_from_slice(&x_minus);
                    jump_push.iter_mut().for_each(|v| *v = 0.0);
                }
            }
            Scheme::Penalized { penalty } => {
                let decay = (-penalty * dt).exp();
                for i in 0..d {
                    x_minus[i] = anchor[i] + (pre[i] - anchor[i]) * decay;
                    x[i] = x_minus[i] + if step.jumped { jump[i] } else { 0.0 };
                }
                jump_push.iter_mut().for_each(|v| *v = 0.0);
            }
        }
        for i in 0..d {
            push[i] = x_minus[i] - pre[i];
        }
        if !step.jumped {
            jump.iter_mut().for_each(|v| *v = 0.0);
        }
        observer.step(&StepRecord {
            t_prev,
            t: step.t,
            x_prev: &x_prev,
            pre: &pre,
            anchor: &anchor,
            x_minus: &x_minus,
            x: &x,
            push: &push,
            jump_push: &jump_push,
            jump: &jump,
            jumped: step.jumped,
        });
        stats.steps += 1;
        t_prev = step.t;
    }
    Ok(stats)
}

/// Reflected state `X`, regulator `K` and driver `Y = X - K` of one path.
#[derive(Clone, Debug)]
pub struct ReflectedTrajectory {
    pub x: CadlagPath,
    pub k: BVPath,
    pub y: CadlagPath,
}

impl ReflectedTrajectory {
    /// Wraps a deterministic Skorokhod solution for input `y`.
    pub fn from_solution(y: CadlagPath, solution: SkorokhodSolution) -> Self {
        ReflectedTrajectory { x: solution.x, k: solution.k, y }
    }
}

/// Records a path as piecewise-linear `X` and `K` with flagged jumps.
#[derive(Default)]
pub struct TrajectoryRecorder {
    dim: usize,
    times: Vec<f64>,
    x: Vec<f64>,
    x_flags: Vec<bool>,
    x_jumps: Vec<f64>,
    k: Vec<f64>,
    k_flags: Vec<bool>,
    k_jumps: Vec<f64>,
    y: Vec<f64>,
    y_jumps: Vec<f64>,
    k_cur: Vec<f64>,
}

impl TrajectoryRecorder {
    pub fn new(dim: usize) -> Self {
        TrajectoryRecorder { dim, ..Default::default() }
    }

    fn paths(self) -> Result<(CadlagPath, CadlagPath, CadlagPath)> {
        let mode = Interpolation::PiecewiseLinear;
        let d = self.dim;
        let x = CadlagPath::with_jumps(d, self.times.clone(), self.x, self.x_flags.clone(), self.x_jumps, mode)?;
        let k = CadlagPath::with_jumps(d, self.times.clone(), self.k, self.k_flags, self.k_jumps, mode)?;
        let y = CadlagPath::with_jumps(d, self.times, self.y, self.x_flags, self.y_jumps, mode)?;
        Ok((x, k, y))
    }
}

impl StepObserver for TrajectoryRecorder {
    fn start(&mut self, x0: &[f64], x_start: &[f64], k0: &[f64]) {
        self.times.push(0.0);
        self.x.extend_from_slice(x_start);
        self.x_flags.push(false);
        self.x_jumps.extend(std::iter::repeat_n(0.0, self.dim));
        self.k.extend_from_slice(k0);
        self.k_flags.push(false);
        self.k_jumps.extend(std::iter::repeat_n(0.0, self.dim));
        self.y.extend_from_slice(x0);
        self.y_jumps.extend(std::iter::repeat_n(0.0, self.dim));
        self.k_cur = k0.to_vec();
    }

    fn step(&mut self, r: &StepRecord<'_>) {
        let d = self.dim;
        self.times.push(r.t);
        let k_moves = r.jump_push.iter().any(|v| *v != 0.0);
        for i in 0..d {
            self.k_cur[i] += r.push[i] + r.jump_push[i];
        }
        self.x.extend_from_slice(r.x);
        self.k.extend_from_slice(&self.k_cur);
        self.y.extend(r.x.iter().zip(&self.k_cur).map(|(a, b)| a - b));
        self.x_flags.push(r.jumped);
        self.k_flags.push(r.jumped && k_moves);
        for i in 0..d {
            self.x_jumps.push(if r.jumped { r.x[i] - r.x_minus[i] } else { 0.0 });
            self.k_jumps.push(if r.jumped && k_moves { r.jump_push[i] } else { 0.0 });
            self.y_jumps.push(if r.jumped { r.jump[i] } else { 0.0 });
        }
    }
}

fn sampler(levy: &LevyDriverSpec, grid: TimeGrid, stream: StreamId) -> Result<DriverSampler> {
    DriverSampler::new(levy, grid, stream)
}

/// Simulates the reflected SDE started at `x0` (exterior starts allowed).
pub fn simulate_reflected(
    x0: &[f64],
    coeffs: &SdeCoefficients,
    levy: &LevyDriverSpec,
    domain: &ConvexDomain,
    grid: TimeGrid,
    stream: StreamId,
) -> Result<ReflectedTrajectory> {
    let mut driver = sampler(levy, grid, stream)?;
    simulate_reflected_with(x0, coeffs, domain, &mut driver, stream)
}

/// Reflected simulation with an arbitrary driver source.
pub fn simulate_reflected_with<D: DriverSource>(
    x0: &[f64],
    coeffs: &SdeCoefficients,
    domain: &ConvexDomain,
    driver: &mut D,
    stream: StreamId,
) -> Result<ReflectedTrajectory> {
    let mut rec = TrajectoryRecorder::new(domain.dim());
    let mut brownian = stream.rng(Channel::Brownian);
    run_path(x0, coeffs, domain, Scheme::Reflected, driver, &mut brownian, &mut rec)?;
    let (x, k, y) = rec.paths()?;
    Ok(ReflectedTrajectory { x, k: BVPath::from_path(k), y })
}

/// Simulates the penalized SDE with the same randomness as
/// [`simulate_reflected`] for the same `stream`.
pub fn simulate_penalized(
    x0: &[f64],
    coeffs: &SdeCoefficients,
    levy: &LevyDriverSpec,
    domain: &ConvexDomain,
    penalty: f64,
    grid: TimeGrid,
    stream: StreamId,
) -> Result<PenalizedSolution> {
    let mut driver = sampler(levy, grid, stream)?;
    simulate_penalized_with(x0, coeffs, domain, penalty, &mut driver, stream)
}

pub fn simulate_penalized_with<D: DriverSource>(
    x0: &[f64],
    coeffs: &SdeCoefficients,
    domain: &ConvexDomain,
    penalty: f64,
    driver: &mut D,
    stream: StreamId,
) -> Result<PenalizedSolution> {
    let mut rec = TrajectoryRecorder::new(domain.dim());
    let mut brownian = stream.rng(Channel::Brownian);
    run_path(x0, coeffs, domain, Scheme::Penalized { penalty }, driver, &mut brownian, &mut rec)?;
    let (x, k, _) = rec.paths()?;
    Ok(PenalizedSolution { x, k: BVPath::from_path(k), penalty })
}

/// Builds the driver of one path, optionally replacing its stable part.
pub fn path_driver(
    levy: &LevyDriverSpec,
    grid: TimeGrid,
    stream: StreamId,
    stable_override: Option<&StableSampler>,
) -> Result<DriverSampler> {
    let s = sampler(levy, grid, stream)?;
    Ok(match stable_override {
        Some(o) => s.with_stable_sampler(Some(o.clone())),
        None => s,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy::{JumpLaw, PathDriver, StableSpec};
    use crate::skorokhod::solve_reflection;

    fn step_driver(z: f64, a: f64, horizon: f64) -> CadlagPath {
        CadlagPath::with_jumps(
            1,
            vec![0.0, a, horizon],
            vec![0.0, -z, -z],
            vec![false, true, false],
            vec![0.0, -z, 0.0],
            Interpolation::PiecewiseConstant,
        )
        .unwrap()
    }

    #[test]
    fn degenerate_exterior_start_on_the_ball() {
        let d = ConvexDomain::ball(vec![0.0, 0.0], 1.0).unwrap();
        let grid = TimeGrid::new(1.0, 16).unwrap();
        let tr = simulate_reflected(&[2.0, 0.0], &SdeCoefficients::zero(2), &LevyDriverSpec::none(2), &d, grid, StreamId::new(0, 0))
            .unwrap();
        for i in 0..tr.x.len() {
            assert_eq!(tr.x.value(i), &[1.0, 0.0]);
            assert_eq!(tr.k.base().value(i), &[-1.0, 0.0]);
        }
    }

    #[test]
    fn step_driver_regulator() {
        let d = ConvexDomain::interval(0.0, 1.0).unwrap();
        let y = step_driver(0.5, 0.25, 1.0);
        let tr = simulate_reflected_with(&[0.0], &SdeCoefficients::zero(1), &d, &mut PathDriver::new(&y), StreamId::new(0, 0))
            .unwrap();
        assert_eq!(tr.k.base().value(2), &[0.5]);
        assert_eq!(tr.k.variation(1.0, true).unwrap(), 0.5);
        assert_eq!(tr.k.jump_list(), vec![(0.25, vec![0.5])]);
    }

    #[test]
    fn quiet_interior_start_stays_put() {
        let d = ConvexDomain::interval(0.0, 1.0).unwrap();
        let grid = TimeGrid::new(1.0, 32).unwrap();
        let tr = simulate_reflected(&[0.3], &SdeCoefficients::zero(1), &LevyDriverSpec::none(1), &d, grid, StreamId::new(0, 0))
            .unwrap();
        assert!(tr.x.values().iter().all(|v| *v == 0.3));
        assert_eq!(tr.k.variation(1.0, true).unwrap(), 0.0);
        let pen = simulate_penalized(&[0.3], &SdeCoefficients::zero(1), &LevyDriverSpec::none(1), &d, 10.0, grid, StreamId::new(0, 0))
            .unwrap();
        assert!(pen.x.values().iter().all(|v| *v == 0.3));
    }

    #[test]
    fn penalized_step_driver_terminal_value() {
        let d = ConvexDomain::interval(0.0, 1.0).unwrap();
        let (z, a, horizon) = (0.5, 0.25, 1.0);
        let y = CadlagPath::with_jumps(
            1,
            uniform_with(horizon, 8),
            (0..=8).map(|i| if i >= 2 { -z } else { 0.0 }).collect(),
            (0..=8).map(|i| i == 2).collect(),
            (0..=8).map(|i| if i == 2 { -z } else { 0.0 }).collect(),
            Interpolation::PiecewiseConstant,
        )
        .unwrap();
        for n in [10.0, 100.0] {
            let sol =
                simulate_penalized_with(&[0.0], &SdeCoefficients::zero(1), &d, n, &mut PathDriver::new(&y), StreamId::new(0, 0))
                    .unwrap();
            let last = sol.x.value(8)[0];
            assert!((last + z * (-n * (horizon - a)).exp()).abs() < 1e-12);
        }
    }

    fn uniform_with(h: f64, n: usize) -> Vec<f64> {
        crate::paths::uniform_times(h, n)
    }

    fn noisy_setup() -> (ConvexDomain, SdeCoefficients, LevyDriverSpec) {
        let d = ConvexDomain::ball(vec![0.0, 0.0], 1.0).unwrap();
        let c = SdeCoefficients::new(
            2,
            MatrixField::Modulated { base: 0.6, amplitude: 0.2, wave: vec![1.0, 2.0] },
            VectorField::TanhRestoring { strength: 0.5, center: vec![0.3, 0.0] },
        )
        .unwrap();
        let l = LevyDriverSpec::none(2)
            .with_compound_poisson(3.0, JumpLaw::Gaussian { mean: vec![0.2, 0.0], std: 0.5 })
            .with_stable(StableSpec::new(1.5))
            .with_moment(1.2);
        (d, c, l)
    }

    #[test]
    fn trajectory_invariants_hold() {
        let (d, c, l) = noisy_setup();
        let grid = TimeGrid::new(2.0, 256).unwrap();
        for p in 0..20 {
            let tr = simulate_reflected(&[1.5, 0.5], &c, &l, &d, grid, StreamId::new(5, p)).unwrap();
            let sol = SkorokhodSolution { x: tr.x.clone(), k: tr.k.clone() };
            sol.verify(&d, &tr.y).unwrap();
            for j in tr.k.base().jump_indices() {
                assert!(tr.y.is_jump(j));
            }
        }
    }

    #[test]
    fn replaying_the_driver_through_the_deterministic_solver_agrees() {
        let (d, c, l) = noisy_setup();
        let grid = TimeGrid::new(1.0, 128).unwrap();
        let tr = simulate_reflected(&[0.2, 0.1], &c, &l, &d, grid, StreamId::new(6, 1)).unwrap();
        let sol = solve_reflection(&d, &tr.y).unwrap();
        for i in 0..tr.x.len() {
            for k in 0..2 {
                assert!((sol.x.value(i)[k] - tr.x.value(i)[k]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn coupled_schemes_share_driver_increments() {
        let (d, c, l) = noisy_setup();
        let grid = TimeGrid::new(1.0, 512).unwrap();
        let stream = StreamId::new(7, 3);
        let refl = simulate_reflected(&[0.0, 0.0], &c, &l, &d, grid, stream).unwrap();
        let pen = simulate_penalized(&[0.0, 0.0], &c, &l, &d, 1e6, grid, stream).unwrap();
        assert_eq!(refl.x.times(), pen.x.times());
        let sup = (0..refl.x.len())
            .map(|i| crate::paths::norm_between(&d.project(pen.x.value(i)), refl.x.value(i)))
            .fold(0.0, f64::max);
        assert!(sup < 0.2, "sup {sup}");
    }

    #[test]
    fn regulator_moves_only_on_the_boundary() {
        let (d, c, l) = noisy_setup();
        let grid = TimeGrid::new(2.0, 512).unwrap();
        let eps = 10.0 * d.boundary_tolerance();
        let (mut total, mut off) = (0.0, 0.0);
        for p in 0..50 {
            let tr = simulate_reflected(&[0.0, 0.5], &c, &l, &d, grid, StreamId::new(8, p)).unwrap();
            let var = tr.k.running_variation();
            for i in 1..tr.x.len() {
                let inc = var[i] - var[i - 1];
                total += inc;
                let cont_ok = d.boundary_distance(&tr.x.approach_value(i)) <= eps;
                let jump_ok = d.boundary_distance(tr.x.value(i)) <= eps;
                if inc > 0.0 && !(cont_ok || jump_ok) {
                    off += inc;
                }
            }
        }
        assert!(total > 0.0);
        assert!(off / total < 1e-6);
    }

    #[test]
    fn declared_bounds_hold_on_visited_states() {
        let (d, c, l) = noisy_setup();
        let grid = TimeGrid::new(1.0, 256).unwrap();
        let mut driver = DriverSampler::new(&l, grid, StreamId::new(9, 0)).unwrap();
        let mut rng = StreamId::new(9, 0).rng(Channel::Brownian);
        let mut rec = TrajectoryRecorder::new(2);
        let stats = run_path(&[0.0, 0.0], &c, &d, Scheme::Reflected, &mut driver, &mut rng, &mut rec).unwrap();
        assert_eq!(stats.steps as usize, rec.times.len() - 1);
        assert_eq!(stats.bound_violations, 0);
    }

    #[test]
    fn coefficient_validation() {
        assert!(SdeCoefficients::new(2, MatrixField::Constant { rows: vec![vec![1.0, 0.0]] }, VectorField::Zero).is_err());
        assert!(SdeCoefficients::new(1, MatrixField::ScaledIdentity { scale: f64::NAN }, VectorField::Zero).is_err());
        let c = SdeCoefficients::new(2, MatrixField::Constant { rows: vec![vec![1.0, 0.0, 2.0], vec![0.0, 1.0, 0.0]] }, VectorField::Zero)
            .unwrap();
        assert_eq!(c.channels(), 3);
        let a = c.diffusion_matrix(&[0.0, 0.0]);
        assert_eq!(a, vec![5.0, 0.0, 0.0, 1.0]);
        let shifted = c.perturbed(0.5, 0.1);
        assert_eq!(shifted.diffusion_matrix(&[0.0, 0.0]), vec![1.5f64.powi(2) + 4.0, 0.0, 0.0, 2.25]);
    }

    #[test]
    fn markov_restart_matches_in_distribution() {
        let d = ConvexDomain::interval(-1.0, 1.0).unwrap();
        let c = SdeCoefficients::new(1, MatrixField::ScaledIdentity { scale: 0.8 }, VectorField::Constant { value: vec![0.3] }).unwrap();
        let l = LevyDriverSpec::none(1).with_compound_poisson(1.0, JumpLaw::Fixed { value: vec![-0.4] });
        let (s, t) = (0.5, 0.5);
        let paths = 10_000u64;
        let whole: Vec<f64> = (0..paths)
            .map(|p| {
                let tr = simulate_reflected(&[0.2], &c, &l, &d, TimeGrid::new(s + t, 128).unwrap(), StreamId::new(10, p)).unwrap();
                tr.x.value(tr.x.len() - 1)[0]
            })
            .collect();
        let restarted: Vec<f64> = (0..paths)
            .map(|p| {
                let first = simulate_reflected(&[0.2], &c, &l, &d, TimeGrid::new(s, 64).unwrap(), StreamId::new(11, p)).unwrap();
                let mid = first.x.value(first.x.len() - 1).to_vec();
                let second = simulate_reflected(&mid, &c, &l, &d, TimeGrid::new(t, 64).unwrap(), StreamId::new(12, p)).unwrap();
                second.x.value(second.x.len() - 1)[0]
            })
            .collect();
        let stats = |v: &[f64]| {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() as f64 - 1.0);
            (m, var / v.len() as f64)
        };
        let ((m1, v1), (m2, v2)) = (stats(&whole), stats(&restarted));
        assert!((m1 - m2).abs() < 4.0 * (v1 + v2).sqrt(), "{m1} vs {m2}");
    }
}
