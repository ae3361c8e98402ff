//! Pure-jump Lévy drivers: compound-Poisson jumps, isotropic α-stable parts
//! and the streaming sampler that feeds the SDE stepper.
//!
//! The stable part has characteristic exponent `s·|θ|^α` per unit time with
//! `s = 1` under the fractional-Laplacian normalization (Lévy density
//! `c_{d,α}|y|^{-d-α}`) and `s = (2-α)/c_{d,α}` under the `(2-α)` normalization.

use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::paths::{CadlagPath, Interpolation, TimeGrid};
use crate::rng::{Channel, StreamId};
use crate::special::{gamma, unit_sphere_measure};

/// Default truncation radius of the Lévy–Itô scheme.
pub const DEFAULT_TRUNCATION: f64 = 1e-3;

/// The constant `c_{d,α}` that makes `c_{d,α}|y|^{-d-α}` the Lévy density of
/// the generator `-(-Δ)^{α/2}`:
/// `α 2^{α-1} Γ((d+α)/2) / (π^{d/2} Γ(1-α/2))`.
pub fn stable_constant(d: usize, alpha: f64) -> Result<f64> {
    if d == 0 {
        return Err(Error::InvalidArgument("dimension must be positive".into()));
    }
    if !(alpha > 0.0 && alpha < 2.0) {
        return Err(Error::InvalidArgument(format!("stable index {alpha} outside (0, 2)")));
    }
    let df = d as f64;
    Ok(alpha * 2f64.powf(alpha - 1.0) * gamma((df + alpha) / 2.0)
        / (PI.powf(df / 2.0) * gamma(1.0 - alpha / 2.0)))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StableNormalization {
    /// Density `c_{d,α}|y|^{-d-α}`; the generator is `-(-Δ)^{α/2}`.
    #[default]
    FractionalLaplacian,
    /// Density `(2-α)|y|^{-d-α}`; the generator tends to `(ω_{d-1}/(2d))Δ`.
    TwoMinusAlpha,
}

impl StableNormalization {
    /// Prefactor of `|y|^{-d-α}` in the Lévy density.
    pub fn density_constant(&self, d: usize, alpha: f64) -> Result<f64> {
        match self {
            StableNormalization::FractionalLaplacian => stable_constant(d, alpha),
            StableNormalization::TwoMinusAlpha => Ok(2.0 - alpha),
        }
    }

    /// Coefficient `s` of the characteristic exponent `s·|θ|^α`.
    pub fn exponent_scale(&self, d: usize, alpha: f64) -> Result<f64> {
        match self {
            StableNormalization::FractionalLaplacian => Ok(1.0),
            StableNormalization::TwoMinusAlpha => Ok((2.0 - alpha) / stable_constant(d, alpha)?),
        }
    }

    /// Limit generator as `α → 2`, expressed as the multiple `κ` in `κΔ`.
    pub fn limit_laplacian_factor(&self, d: usize) -> f64 {
        match self {
            StableNormalization::FractionalLaplacian => 1.0,
            StableNormalization::TwoMinusAlpha => unit_sphere_measure(d) / (2.0 * d as f64),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            StableNormalization::FractionalLaplacian => "fractional Laplacian, limit generator Δ",
            StableNormalization::TwoMinusAlpha => "(2-α) density, limit generator (ω_{d-1}/(2d))Δ",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmallJumpPolicy {
    Drop,
    #[default]
    GaussianCompensate,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StableScheme {
    /// One exact stable increment per time step, applied as a jump at the
    /// end of the step.
    Increments,
    /// Jumps larger than `epsilon` at exact event times; smaller ones per
    /// `small_jumps`.
    Truncated {
        #[serde(default = "default_truncation")]
        epsilon: f64,
        #[serde(default)]
        small_jumps: SmallJumpPolicy,
    },
}

fn default_truncation() -> f64 {
    DEFAULT_TRUNCATION
}

impl Default for StableScheme {
    fn default() -> Self {
        StableScheme::Increments
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StableSpec {
    pub alpha: f64,
    #[serde(default)]
    pub normalization: StableNormalization,
    #[serde(default)]
    pub scheme: StableScheme,
}

impl StableSpec {
    pub fn new(alpha: f64) -> Self {
        StableSpec { alpha, normalization: StableNormalization::default(), scheme: StableScheme::default() }
    }

    /// `ν(|y| > r)` for the isotropic density.
    pub fn tail_mass(&self, d: usize, r: f64) -> Result<f64> {
        let c = self.normalization.density_constant(d, self.alpha)?;
        Ok(c * unit_sphere_measure(d) / (self.alpha * r.powf(self.alpha)))
    }

    /// Per-unit-time variance of each coordinate of the jumps below `eps`.
    pub fn small_jump_variance(&self, d: usize, eps: f64) -> Result<f64> {
        let c = self.normalization.density_constant(d, self.alpha)?;
        Ok(c * unit_sphere_measure(d) / d as f64 * eps.powf(2.0 - self.alpha) / (2.0 - self.alpha))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case", deny_unknown_fields)]
pub enum JumpLaw {
    /// Every jump equals `value`.
    Fixed { value: Vec<f64> },
    /// `mean + std·N(0, I)`.
    Gaussian { mean: Vec<f64>, std: f64 },
    /// Uniform direction, fixed length.
    Sphere { radius: f64 },
}

impl JumpLaw {
    fn validate(&self, d: usize) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidDriver(m));
        match self {
            JumpLaw::Fixed { value } => {
                crate::error::check_dim(d, value.len())?;
                if value.iter().any(|v| !v.is_finite()) || value.iter().all(|v| *v == 0.0) {
                    return bad("a fixed jump must be finite and nonzero".into());
                }
            }
            JumpLaw::Gaussian { mean, std } => {
                crate::error::check_dim(d, mean.len())?;
                if !(std.is_finite() && *std >= 0.0) || mean.iter().any(|v| !v.is_finite()) {
                    return bad("gaussian jump law needs finite mean and std >= 0".into());
                }
                if *std == 0.0 && mean.iter().all(|v| *v == 0.0) {
                    return bad("jump law puts mass on zero".into());
                }
            }
            JumpLaw::Sphere { radius } => {
                if !(radius.is_finite() && *radius > 0.0) {
                    return bad("sphere jump radius must be positive".into());
                }
            }
        }
        Ok(())
    }

    fn sample_into<R: Rng>(&self, rng: &mut R, out: &mut [f64]) {
        match self {
            JumpLaw::Fixed { value } => out.copy_from_slice(value),
            JumpLaw::Gaussian { mean, std } => {
                for (o, m) in out.iter_mut().zip(mean) {
                    let z: f64 = StandardNormal.sample(rng);
                    *o = m + std * z;
                }
            }
            JumpLaw::Sphere { radius } => {
                uniform_direction(rng, out);
                out.iter_mut().for_each(|o| *o *= radius);
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompoundPoissonSpec {
    pub intensity: f64,
    pub jumps: JumpLaw,
}

/// Drift, compound-Poisson part and optional stable part of a driver, plus
/// the moment exponent `p` for which `∫_{|y|>1}|y|^p ν(dy) < ∞` is claimed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevyDriverSpec {
    pub dim: usize,
    #[serde(default)]
    pub drift: Vec<f64>,
    #[serde(default)]
    pub compound_poisson: Option<CompoundPoissonSpec>,
    #[serde(default)]
    pub stable: Option<StableSpec>,
    pub moment_p: f64,
}

impl LevyDriverSpec {
    /// `ν = 0`, zero drift.
    pub fn none(dim: usize) -> Self {
        LevyDriverSpec { dim, drift: Vec::new(), compound_poisson: None, stable: None, moment_p: 2.0 }
    }

    pub fn with_drift(mut self, drift: Vec<f64>) -> Self {
        self.drift = drift;
        self
    }

    pub fn with_compound_poisson(mut self, intensity: f64, jumps: JumpLaw) -> Self {
        self.compound_poisson = Some(CompoundPoissonSpec { intensity, jumps });
        self
    }

    pub fn with_stable(mut self, stable: StableSpec) -> Self {
        self.stable = Some(stable);
        self
    }

    pub fn with_moment(mut self, p: f64) -> Self {
        self.moment_p = p;
        self
    }

    pub fn drift_vector(&self) -> Vec<f64> {
        if self.drift.is_empty() {
            vec![0.0; self.dim]
        } else {
            self.drift.clone()
        }
    }

    pub fn is_trivial(&self) -> bool {
        self.drift.iter().all(|b| *b == 0.0)
            && self.compound_poisson.as_ref().is_none_or(|cp| cp.intensity == 0.0)
            && self.stable.is_none()
    }

    /// Checks the integrability requirements on `ν` and the declared moment.
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::InvalidDriver("dimension must be positive".into()));
        }
        if !self.drift.is_empty() {
            crate::error::check_dim(self.dim, self.drift.len())?;
            if self.drift.iter().any(|b| !b.is_finite()) {
                return Err(Error::InvalidDriver("drift must be finite".into()));
            }
        }
        if let Some(cp) = &self.compound_poisson {
            if !(cp.intensity.is_finite() && cp.intensity >= 0.0) {
                return Err(Error::Assumption {
                    assumption: "A2",
                    reason: format!("compound-Poisson intensity {} must be finite and >= 0", cp.intensity),
                });
            }
            cp.jumps.validate(self.dim)?;
        }
        if !(self.moment_p.is_finite() && self.moment_p > 1.0) {
            return Err(Error::Assumption {
                assumption: "A3",
                reason: format!("moment exponent p = {} must exceed 1", self.moment_p),
            });
        }
        if let Some(st) = &self.stable {
            if !(st.alpha > 1.0 && st.alpha < 2.0) {
                return Err(Error::Assumption {
                    assumption: "A2",
                    reason: format!("stable index {} outside (1, 2)", st.alpha),
                });
            }
            if self.moment_p >= st.alpha {
                return Err(Error::Assumption {
                    assumption: "A3",
                    reason: format!(
                        "stable jumps have no moment of order p = {} >= α = {}",
                        self.moment_p, st.alpha
                    ),
                });
            }
            if let StableScheme::Truncated { epsilon, .. } = st.scheme {
                if !(epsilon.is_finite() && epsilon > 0.0) {
                    return Err(Error::InvalidDriver(format!("truncation radius {epsilon} must be positive")));
                }
            }
        }
        Ok(())
    }
}

/// Uniform point on the unit sphere of `out.len()` dimensions.
fn uniform_direction<R: Rng>(rng: &mut R, out: &mut [f64]) {
    if out.len() == 1 {
        out[0] = if rng.random::<bool>() { 1.0 } else { -1.0 };
        return;
    }
    loop {
        let mut s = 0.0;
        for o in out.iter_mut() {
            let z: f64 = StandardNormal.sample(rng);
            *o = z;
            s += z * z;
        }
        if s > 0.0 {
            let inv = 1.0 / s.sqrt();
            out.iter_mut().for_each(|o| *o *= inv);
            return;
        }
    }
}

/// Symmetric stable variable with characteristic function `exp(-|θ|^α)`
/// (Chambers–Mallows–Stuck). At `α = 2` this is `N(0, 2)`.
fn cms_symmetric<R: Rng>(alpha: f64, rng: &mut R) -> f64 {
    let u: f64 = rng.random();
    let v = PI * (u - 0.5);
    let w: f64 = Exp1.sample(rng);
    let av = alpha * v;
    av.sin() / v.cos().powf(1.0 / alpha) * (((1.0 - alpha) * v).cos() / w).powf((1.0 - alpha) / alpha)
}

/// Positive stable variable with Laplace transform `exp(-s^β)`, `β ∈ (0, 1]`
/// (Kanter's representation). Equals 1 at `β = 1`.
fn positive_stable<R: Rng>(beta: f64, rng: &mut R) -> f64 {
    let u: f64 = rng.random::<f64>() * PI;
    let e: f64 = Exp1.sample(rng);
    if beta >= 1.0 {
        return 1.0;
    }
    let a = (beta * u).sin() / u.sin().powf(1.0 / beta);
    a * (((1.0 - beta) * u).sin() / e).powf((1.0 - beta) / beta)
}

/// Writes a standard isotropic stable vector (`E e^{i⟨θ,X⟩} = exp(-|θ|^α)`)
/// into `out`. One dimension uses Chambers–Mallows–Stuck; higher dimensions
/// subordinate a Gaussian `N(0, 2I)` by a positive `α/2`-stable variable.
fn standard_stable_into<R: Rng>(alpha: f64, rng: &mut R, out: &mut [f64]) {
    if out.len() == 1 {
        out[0] = cms_symmetric(alpha, rng);
        return;
    }
    let a = positive_stable(alpha / 2.0, rng).sqrt() * std::f64::consts::SQRT_2;
    for o in out.iter_mut() {
        let z: f64 = StandardNormal.sample(rng);
        *o = a * z;
    }
}

/// Subordinated form in any dimension, including one. Exposed for
/// cross-checking the one-dimensional transform.
pub fn sample_stable_subordinated<R: Rng>(alpha: f64, d: usize, dt: f64, rng: &mut R) -> Vec<f64> {
    let a = positive_stable(alpha / 2.0, rng).sqrt() * std::f64::consts::SQRT_2 * dt.powf(1.0 / alpha);
    (0..d)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            a * z
        })
        .collect()
}

/// Increment over `dt` of the isotropic stable process with characteristic
/// exponent `|θ|^α` per unit time.
pub fn sample_stable_increment<R: Rng>(alpha: f64, d: usize, dt: f64, rng: &mut R) -> Result<Vec<f64>> {
    if !(alpha > 0.0 && alpha <= 2.0) {
        return Err(Error::InvalidArgument(format!("stable index {alpha} outside (0, 2]")));
    }
    if d == 0 || !(dt.is_finite() && dt >= 0.0) {
        return Err(Error::InvalidArgument("need d >= 1 and dt >= 0".into()));
    }
    let mut out = vec![0.0; d];
    standard_stable_into(alpha, rng, &mut out);
    let s = dt.powf(1.0 / alpha);
    out.iter_mut().for_each(|o| *o *= s);
    Ok(out)
}

/// Per-step stable increments with a fixed exponent scale.
#[derive(Clone, Debug, PartialEq)]
pub struct StableSampler {
    alpha: f64,
    scale: f64,
}

impl StableSampler {
    pub fn new(alpha: f64, exponent_scale: f64) -> Self {
        StableSampler { alpha, scale: exponent_scale.powf(1.0 / alpha) }
    }

    /// The `α = 2` member of the family: `√(2κ)` times a Brownian motion,
    /// where `κΔ` is the limit generator of the normalization. It draws from
    /// the stable stream exactly like `α < 2`, so sweeps share randomness.
    pub fn gaussian_limit(d: usize, normalization: StableNormalization) -> Self {
        StableSampler { alpha: 2.0, scale: normalization.limit_laplacian_factor(d).sqrt() }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    fn sample_into<R: Rng>(&self, dt: f64, rng: &mut R, out: &mut [f64]) {
        standard_stable_into(self.alpha, rng, out);
        let s = self.scale * dt.powf(1.0 / self.alpha);
        out.iter_mut().for_each(|o| *o *= s);
    }
}

/// End of one driver step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DriverStep {
    pub t: f64,
    pub dt: f64,
    /// A genuine jump happens at `t`.
    pub jumped: bool,
}

/// A source of driver increments on `[0, horizon]`.
///
/// Each call advances to the next stamp and writes the continuous change
/// `y(t-) - y(t_prev)` into `cont` and the jump `Δy(t)` into `jump`.
pub trait DriverSource {
    fn dim(&self) -> usize;
    fn horizon(&self) -> f64;
    fn next_step(&mut self, cont: &mut [f64], jump: &mut [f64]) -> Option<DriverStep>;
}

/// Replays a stored path, stamp by stamp.
pub struct PathDriver<'a> {
    path: &'a CadlagPath,
    next: usize,
}

impl<'a> PathDriver<'a> {
    pub fn new(path: &'a CadlagPath) -> Self {
        PathDriver { path, next: 1 }
    }
}

impl DriverSource for PathDriver<'_> {
    fn dim(&self) -> usize {
        self.path.dim()
    }

    fn horizon(&self) -> f64 {
        self.path.horizon()
    }

    fn next_step(&mut self, cont: &mut [f64], jump: &mut [f64]) -> Option<DriverStep> {
        let i = self.next;
        if i >= self.path.len() {
            return None;
        }
        self.next += 1;
        let prev = self.path.value(i - 1);
        let cur = self.path.value(i);
        let dj = self.path.jump(i);
        for k in 0..cont.len() {
            jump[k] = dj[k];
            cont[k] = (cur[k] - dj[k]) - prev[k];
        }
        let t = self.path.times()[i];
        Some(DriverStep { t, dt: t - self.path.times()[i - 1], jumped: self.path.is_jump(i) })
    }
}

#[derive(Clone, Debug)]
struct BigJumps {
    alpha: f64,
    epsilon: f64,
    rate: f64,
}

/// Streams a sampled Lévy driver over a base grid, inserting compound-Poisson
/// and truncated-stable event times exactly.
///
/// Randomness is drawn per channel: stable increments from
/// [`Channel::Stable`], event clocks and event jumps from [`Channel::Poisson`],
/// small-jump Gaussians from [`Channel::SmallJumps`]. Two samplers with the
/// same stream and event intensities therefore see identical event times.
pub struct DriverSampler {
    dim: usize,
    drift: Vec<f64>,
    grid: TimeGrid,
    stable: Option<StableSampler>,
    big: Option<BigJumps>,
    small_std: f64,
    cp: Option<CompoundPoissonSpec>,
    rng_stable: ChaCha8Rng,
    rng_events: ChaCha8Rng,
    rng_small: ChaCha8Rng,
    t: f64,
    next_base: usize,
    next_event: f64,
    total_rate: f64,
    scratch: Vec<f64>,
}

impl DriverSampler {
    pub fn new(spec: &LevyDriverSpec, grid: TimeGrid, stream: StreamId) -> Result<Self> {
        spec.validate()?;
        grid.validate()?;
        let mut stable = None;
        let mut big = None;
        let mut small_std = 0.0;
        if let Some(st) = &spec.stable {
            match st.scheme {
                StableScheme::Increments => {
                    stable = Some(StableSampler::new(st.alpha, st.normalization.exponent_scale(spec.dim, st.alpha)?));
                }
                StableScheme::Truncated { epsilon, small_jumps } => {
                    big = Some(BigJumps { alpha: st.alpha, epsilon, rate: st.tail_mass(spec.dim, epsilon)? });
                    if small_jumps == SmallJumpPolicy::GaussianCompensate {
                        small_std = st.small_jump_variance(spec.dim, epsilon)?.sqrt();
                    }
                }
            }
        }
        let cp = spec.compound_poisson.clone().filter(|cp| cp.intensity > 0.0);
        let total_rate = cp.as_ref().map_or(0.0, |c| c.intensity) + big.as_ref().map_or(0.0, |b| b.rate);
        let mut s = DriverSampler {
            dim: spec.dim,
            drift: spec.drift_vector(),
            grid,
            stable,
            big,
            small_std,
            cp,
            rng_stable: stream.rng(Channel::Stable),
            rng_events: stream.rng(Channel::Poisson),
            rng_small: stream.rng(Channel::SmallJumps),
            t: 0.0,
            next_base: 1,
            next_event: f64::INFINITY,
            total_rate,
            scratch: vec![0.0; spec.dim],
        };
        s.next_event = s.draw_event_after(0.0);
        Ok(s)
    }

    /// Replaces the per-step stable sampler, e.g. by its Gaussian limit.
    pub fn with_stable_sampler(mut self, sampler: Option<StableSampler>) -> Self {
        self.stable = sampler;
        self
    }

    fn draw_event_after(&mut self, t: f64) -> f64 {
        if self.total_rate <= 0.0 {
            return f64::INFINITY;
        }
        let e: f64 = Exp1.sample(&mut self.rng_events);
        t + e / self.total_rate
    }

    fn add_event_jump(&mut self, jump: &mut [f64]) {
        let cp_rate = self.cp.as_ref().map_or(0.0, |c| c.intensity);
        let pick: f64 = self.rng_events.random::<f64>() * self.total_rate;
        if pick < cp_rate {
            let law = &self.cp.as_ref().expect("positive rate implies a law").jumps;
            law.sample_into(&mut self.rng_events, &mut self.scratch);
        } else {
            let b = self.big.as_ref().expect("remaining rate belongs to big stable jumps");
            let u: f64 = 1.0 - self.rng_events.random::<f64>();
            let r = b.epsilon * u.powf(-1.0 / b.alpha);
            uniform_direction(&mut self.rng_events, &mut self.scratch);
            self.scratch.iter_mut().for_each(|s| *s *= r);
        }
        for (j, s) in jump.iter_mut().zip(&self.scratch) {
            *j += s;
        }
    }
}

impl DriverSource for DriverSampler {
    fn dim(&self) -> usize {
        self.dim
    }

    fn horizon(&self) -> f64 {
        self.grid.horizon
    }

    fn next_step(&mut self, cont: &mut [f64], jump: &mut [f64]) -> Option<DriverStep> {
        if self.next_base > self.grid.steps {
            return None;
        }
        let t_base = self.grid.time(self.next_base);
        let event = self.next_event <= t_base;
        let t_new = if event { self.next_event } else { t_base };
        let dt = t_new - self.t;
        for k in 0..self.dim {
            cont[k] = self.drift[k] * dt;
            jump[k] = 0.0;
        }
        if self.small_std > 0.0 {
            let s = self.small_std * dt.sqrt();
            for c in cont.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut self.rng_small);
                *c += s * z;
            }
        }
        let mut jumped = false;
        if let Some(st) = &self.stable {
            st.sample_into(dt, &mut self.rng_stable, jump);
            jumped = true;
        }
        if event {
            self.add_event_jump(jump);
            jumped = true;
            self.next_event = self.draw_event_after(t_new);
        }
        if t_new == t_base {
            self.next_base += 1;
        }
        self.t = t_new;
        Some(DriverStep { t: t_new, dt, jumped })
    }
}

/// Samples a driver path on `grid` with event times inserted. The path is
/// piecewise linear between stamps with every jump flagged.
pub fn build_driver(spec: &LevyDriverSpec, grid: TimeGrid, stream: StreamId) -> Result<CadlagPath> {
    let mut sampler = DriverSampler::new(spec, grid, stream)?;
    collect_driver(&mut sampler, &vec![0.0; spec.dim])
}

/// Collects a driver source into a path starting at `start`.
pub fn collect_driver<D: DriverSource>(source: &mut D, start: &[f64]) -> Result<CadlagPath> {
    let d = source.dim();
    let mut times = vec![0.0];
    let mut values = start.to_vec();
    let mut flags = vec![false];
    let mut jumps = vec![0.0; d];
    let mut cont = vec![0.0; d];
    let mut jump = vec![0.0; d];
    let mut cur = start.to_vec();
    while let Some(step) = source.next_step(&mut cont, &mut jump) {
        for k in 0..d {
            cur[k] += cont[k] + jump[k];
        }
        times.push(step.t);
        values.extend_from_slice(&cur);
        flags.push(step.jumped);
        if step.jumped {
            jumps.extend_from_slice(&jump);
        } else {
            jumps.extend(std::iter::repeat_n(0.0, d));
        }
    }
    CadlagPath::with_jumps(d, times, values, flags, jumps, Interpolation::PiecewiseLinear)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    /// Two-sample Kolmogorov–Smirnov statistic and asymptotic p-value.
    fn ks_two_sample(mut a: Vec<f64>, mut b: Vec<f64>) -> (f64, f64) {
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        let (n, m) = (a.len() as f64, b.len() as f64);
        let (mut i, mut j, mut d) = (0usize, 0usize, 0f64);
        while i < a.len() && j < b.len() {
            let x = a[i].min(b[j]);
            while i < a.len() && a[i] <= x {
                i += 1;
            }
            while j < b.len() && b[j] <= x {
                j += 1;
            }
            d = d.max((i as f64 / n - j as f64 / m).abs());
        }
        let en = (n * m / (n + m)).sqrt();
        let lam = (en + 0.12 + 0.11 / en) * d;
        let mut p = 0.0;
        for k in 1..=100 {
            let kf = k as f64;
            p += 2.0 * (-1f64).powi(k - 1) * (-2.0 * kf * kf * lam * lam).exp();
        }
        (d, p.clamp(0.0, 1.0))
    }

    #[test]
    fn stable_constant_matches_one_dimensional_closed_form() {
        for alpha in [1.1, 1.5, 1.9] {
            let c = stable_constant(1, alpha).unwrap();
            let closed = statrs::function::gamma::gamma(1.0 + alpha) * (PI * alpha / 2.0).sin() / PI;
            assert!((c - closed).abs() < 1e-12, "alpha={alpha}: {c} vs {closed}");
        }
        assert!((stable_constant(1, 1.5).unwrap() - 0.299_206_710_301_075).abs() < 1e-9);
    }

    #[test]
    fn stable_constant_limit_at_two() {
        for d in 1..=3 {
            let alpha = 1.999;
            let ratio = stable_constant(d, alpha).unwrap() / (alpha * (2.0 - alpha));
            let limit = d as f64 / unit_sphere_measure(d);
            assert!((ratio / limit - 1.0).abs() < 0.01, "d={d}: {ratio} vs {limit}");
        }
    }

    #[test]
    fn stable_constant_is_positive_and_continuous() {
        let mut prev = stable_constant(2, 1.1).unwrap();
        for k in 1..=800 {
            let alpha = 1.1 + 0.001 * k as f64;
            let c = stable_constant(2, alpha).unwrap();
            assert!(c > 0.0);
            assert!((c - prev).abs() < 0.01 * prev);
            prev = c;
        }
        assert!(stable_constant(1, 2.0).is_err());
        assert!(stable_constant(1, 0.0).is_err());
    }

    #[test]
    fn increments_are_deterministic_given_the_stream() {
        let a = sample_stable_increment(1.5, 3, 0.1, &mut rng(5)).unwrap();
        let b = sample_stable_increment(1.5, 3, 0.1, &mut rng(5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn one_dimensional_increments_are_symmetric() {
        let mut r = rng(11);
        let n = 1_000_000;
        let xs: Vec<f64> = (0..n).map(|_| sample_stable_increment(1.5, 1, 1.0, &mut r).unwrap()[0]).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0)).sqrt();
        assert!(mean.abs() < 4.0 * sd / (n as f64).sqrt(), "mean {mean}, sd {sd}");
    }

    #[test]
    fn increments_are_self_similar() {
        let mut r = rng(12);
        let n = 20_000;
        let alpha = 1.5;
        let big: Vec<f64> = (0..n).map(|_| sample_stable_increment(alpha, 1, 4.0, &mut r).unwrap()[0]).collect();
        let scaled: Vec<f64> =
            (0..n).map(|_| 4f64.powf(1.0 / alpha) * sample_stable_increment(alpha, 1, 1.0, &mut r).unwrap()[0]).collect();
        let (_, p) = ks_two_sample(big, scaled);
        assert!(p > 0.01, "p = {p}");
    }

    #[test]
    fn subordination_agrees_with_direct_transform_in_one_dimension() {
        let mut r = rng(13);
        let n = 20_000;
        let direct: Vec<f64> = (0..n).map(|_| sample_stable_increment(1.7, 1, 1.0, &mut r).unwrap()[0]).collect();
        let sub: Vec<f64> = (0..n).map(|_| sample_stable_subordinated(1.7, 1, 1.0, &mut r)[0]).collect();
        let (_, p) = ks_two_sample(direct, sub);
        assert!(p > 0.01, "p = {p}");
    }

    #[test]
    fn positive_stable_has_the_expected_laplace_transform() {
        let mut r = rng(14);
        let n = 200_000;
        for beta in [0.55, 0.75, 0.95] {
            let xs: Vec<f64> = (0..n).map(|_| positive_stable(beta, &mut r)).collect();
            for s in [0.5, 1.0, 2.0] {
                let emp = xs.iter().map(|x| (-s * x).exp()).sum::<f64>() / n as f64;
                let exact = (-f64::powf(s, beta)).exp();
                assert!((emp - exact).abs() < 4.0 * 0.5 / (n as f64).sqrt(), "beta={beta}, s={s}");
            }
        }
    }

    #[test]
    fn characteristic_function_of_isotropic_samples() {
        let mut r = rng(15);
        let n = 200_000;
        let alpha = 1.5;
        for d in [1usize, 2, 3] {
            let mut acc = 0.0;
            for _ in 0..n {
                let x = sample_stable_increment(alpha, d, 1.0, &mut r).unwrap();
                acc += (0.7 * x[0]).cos();
            }
            let emp = acc / n as f64;
            let exact = (-f64::powf(0.7, alpha)).exp();
            assert!((emp - exact).abs() < 4.0 / (n as f64).sqrt(), "d={d}: {emp} vs {exact}");
        }
    }

    #[test]
    fn gaussian_limit_has_the_limit_variance() {
        let mut r = rng(16);
        let sampler = StableSampler::gaussian_limit(1, StableNormalization::FractionalLaplacian);
        let n = 200_000;
        let mut out = [0.0];
        let mut acc = 0.0;
        for _ in 0..n {
            sampler.sample_into(0.5, &mut r, &mut out);
            acc += out[0] * out[0];
        }
        let var = acc / n as f64;
        assert!((var - 1.0).abs() < 4.0 * 2f64.sqrt() / (n as f64).sqrt(), "var {var}");
    }

    #[test]
    fn moment_constraint_is_enforced() {
        let spec = LevyDriverSpec::none(1).with_stable(StableSpec::new(1.5)).with_moment(1.5);
        assert!(matches!(spec.validate(), Err(Error::Assumption { assumption: "A3", .. })));
        let spec = LevyDriverSpec::none(1).with_stable(StableSpec::new(1.5)).with_moment(1.2);
        assert!(spec.validate().is_ok());
        let spec = LevyDriverSpec::none(1).with_stable(StableSpec::new(2.0)).with_moment(1.2);
        assert!(spec.validate().is_err());
        let spec = LevyDriverSpec::none(1).with_moment(1.0);
        assert!(spec.validate().is_err());
    }

    #[test]
    fn zero_measure_gives_pure_drift() {
        let spec = LevyDriverSpec::none(2).with_drift(vec![1.0, -2.0]);
        let grid = TimeGrid::new(2.0, 64).unwrap();
        let path = build_driver(&spec, grid, StreamId::new(1, 0)).unwrap();
        assert_eq!(path.jump_indices().count(), 0);
        for (i, t) in path.times().iter().enumerate() {
            let v = path.value(i);
            assert!((v[0] - t).abs() < 1e-12 && (v[1] + 2.0 * t).abs() < 1e-12);
        }
    }

    #[test]
    fn poisson_jump_counts() {
        let rate = 3.0;
        let horizon = 2.0;
        let spec = LevyDriverSpec::none(1).with_compound_poisson(rate, JumpLaw::Fixed { value: vec![0.5] });
        let grid = TimeGrid::new(horizon, 16).unwrap();
        let paths = 10_000;
        let counts: Vec<f64> = (0..paths)
            .map(|i| build_driver(&spec, grid, StreamId::new(3, i)).unwrap().jump_indices().count() as f64)
            .collect();
        let mean = counts.iter().sum::<f64>() / paths as f64;
        let expected = rate * horizon;
        assert!((mean - expected).abs() < 4.0 * (expected / paths as f64).sqrt(), "mean {mean}");
    }

    #[test]
    fn stable_tail_mass_of_big_jumps() {
        let st = StableSpec {
            alpha: 1.5,
            normalization: StableNormalization::FractionalLaplacian,
            scheme: StableScheme::Truncated { epsilon: 0.1, small_jumps: SmallJumpPolicy::GaussianCompensate },
        };
        let spec = LevyDriverSpec::none(1).with_stable(st.clone()).with_moment(1.2);
        let grid = TimeGrid::new(1.0, 8).unwrap();
        let paths = 10_000;
        let hits = (0..paths)
            .filter(|i| {
                let p = build_driver(&spec, grid, StreamId::new(4, *i)).unwrap();
                let hit = p.jump_indices().any(|j| p.jump(j)[0].abs() > 1.0);
                hit
            })
            .count() as f64;
        let prob = 1.0 - (-st.tail_mass(1, 1.0).unwrap()).exp();
        let sd = (prob * (1.0 - prob) / paths as f64).sqrt();
        assert!((hits / paths as f64 - prob).abs() < 4.0 * sd, "{} vs {prob}", hits / paths as f64);
    }

    #[test]
    fn replay_matches_streamed_sampler() {
        let spec = LevyDriverSpec::none(2)
            .with_drift(vec![0.1, 0.0])
            .with_compound_poisson(2.0, JumpLaw::Gaussian { mean: vec![0.0, 0.3], std: 0.2 })
            .with_stable(StableSpec::new(1.6))
            .with_moment(1.3);
        let grid = TimeGrid::new(1.0, 32).unwrap();
        let path = build_driver(&spec, grid, StreamId::new(9, 2)).unwrap();
        let mut direct = DriverSampler::new(&spec, grid, StreamId::new(9, 2)).unwrap();
        let mut replay = PathDriver::new(&path);
        let (mut c1, mut j1, mut c2, mut j2) = (vec![0.0; 2], vec![0.0; 2], vec![0.0; 2], vec![0.0; 2]);
        loop {
            match (direct.next_step(&mut c1, &mut j1), replay.next_step(&mut c2, &mut j2)) {
                (None, None) => break,
                (Some(a), Some(b)) => {
                    assert_eq!(a.jumped, b.jumped);
                    assert!((a.t - b.t).abs() < 1e-15);
                    for k in 0..2 {
                        assert!((c1[k] - c2[k]).abs() < 1e-12 && (j1[k] - j2[k]).abs() < 1e-12);
                    }
                }
                _ => panic!("sources disagree on the number of steps"),
            }
        }
    }

    #[test]
    fn moments_do_not_blow_up_with_sample_size() {
        let spec = LevyDriverSpec::none(1).with_stable(StableSpec::new(1.5)).with_moment(1.2);
        let grid = TimeGrid::new(1.0, 64).unwrap();
        let moment = |paths: u64, seed: u64| {
            (0..paths)
                .map(|i| build_driver(&spec, grid, StreamId::new(seed, i)).unwrap().sup_distance_from(&[0.0]).powf(1.2))
                .sum::<f64>()
                / paths as f64
        };
        let small = moment(2_000, 21);
        let large = moment(20_000, 22);
        assert!(small.is_finite() && large.is_finite());
        assert!((large / small - 1.0).abs() < 0.5, "{small} vs {large}");
    }

    #[test]
    fn spec_round_trips_through_json() {
        let spec = LevyDriverSpec::none(1)
            .with_compound_poisson(1.0, JumpLaw::Sphere { radius: 0.3 })
            .with_stable(StableSpec {
                alpha: 1.5,
                normalization: StableNormalization::TwoMinusAlpha,
                scheme: StableScheme::Truncated { epsilon: 1e-3, small_jumps: SmallJumpPolicy::Drop },
            })
            .with_moment(1.2);
        let text = serde_json::to_string(&spec).unwrap();
        let back: LevyDriverSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(spec, back);
        assert!(serde_json::from_str::<LevyDriverSpec>(r#"{"dim":1,"moment_p":1.5,"bogus":1}"#).is_err());
    }
}
