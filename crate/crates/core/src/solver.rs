//! Monte Carlo estimation of the probabilistic solution
//!
//! `u(x) = E[∫_0^∞ e^{-λt} f(X_t) dt + I_∞(g_λ)]`
//!
//! of `-Lu + λu = f` in `D` with boundary flux `g`, its penalized
//! approximations `u_n`, the exterior extension and parameter sweeps.
//!
//! Every path owns its random streams, keyed by `(seed, path index)`, and
//! path values are reduced by a fixed pairwise tree. Results are therefore
//! bit-identical for identical inputs regardless of the thread count, and
//! runs that differ only in a parameter are coupled path by path.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::functionals::{FunctionalAccumulator, FunctionalSpec};
use crate::geometry::{ConvexDomain, Shape};
use crate::levy::{LevyDriverSpec, StableNormalization, StableSampler, StableScheme};
use crate::paths::{norm, TimeGrid};
use crate::quadrature::gl32;
use crate::rng::{Channel, StreamId};
use crate::sde::{path_driver, run_path, Scheme, SdeCoefficients, StepObserver, StepRecord};

/// Lattice points per axis when sampling `D̄` for the growth check.
const GROWTH_LATTICE: usize = 17;
/// Checkpoints of the pilot run that fits the moment constant.
const PILOT_CHECKPOINTS: usize = 8;
/// Pilot horizon, in units of `1/λ`, for automatic horizons.
const AUTO_PILOT_HORIZON: f64 = 8.0;
/// Largest automatic horizon, in units of `1/λ`.
const AUTO_MAX_HORIZON: f64 = 200.0;

/// Problem data; (A1)–(A4) hold by construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NeumannProblem {
    pub domain: ConvexDomain,
    pub coeffs: SdeCoefficients,
    pub levy: LevyDriverSpec,
    pub functional: FunctionalSpec,
}

impl NeumannProblem {
    pub fn new(domain: ConvexDomain, coeffs: SdeCoefficients, levy: LevyDriverSpec, functional: FunctionalSpec) -> Result<Self> {
        let p = NeumannProblem { domain, coeffs, levy, functional };
        p.validate()?;
        Ok(p)
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    /// Moment exponent `p` of the jump measure, also the growth exponent of `f`.
    pub fn growth_exponent(&self) -> f64 {
        self.levy.moment_p
    }

    /// Checks dimensions and the standing assumptions.
    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        check_dim(d, self.coeffs.dim)?;
        check_dim(d, self.levy.dim)?;
        self.coeffs.validate()?;
        let (sb, bb) = self.coeffs.sup_bounds();
        let (sl, bl) = self.coeffs.lipschitz();
        if ![sb, bb, sl, bl].iter().all(|v| v.is_finite()) {
            return Err(Error::Assumption { assumption: "A1", reason: "σ and b must be bounded and Lipschitz".into() });
        }
        self.levy.validate()?;
        self.functional.validate(d)?;
        if !self.functional.g.is_bounded() {
            return Err(Error::Assumption { assumption: "A4", reason: "g must be bounded".into() });
        }
        let p = self.growth_exponent();
        let k = self.functional.growth_constant;
        for x in closure_sample(&self.domain) {
            let fx = self.functional.f.eval(&x);
            if fx.abs() > k * (1.0 + norm(&x).powf(p)) * (1.0 + 1e-12) {
                return Err(Error::Assumption {
                    assumption: "A4",
                    reason: format!("|f({x:?})| = {} exceeds K(1 + |x|^p) with K = {k}, p = {p}", fx.abs()),
                });
            }
        }
        Ok(())
    }

    /// The same problem with `σ + ε_σ I`, `b + ε_b`, `f + ε_f`, `g + ε_g`.
    pub fn perturbed(&self, shift: &CoefficientShift) -> Result<Self> {
        NeumannProblem::new(
            self.domain.clone(),
            self.coeffs.perturbed(shift.sigma, shift.drift),
            self.levy.clone(),
            self.functional.perturbed(shift.f, shift.g),
        )
    }

    /// The same problem with stable index `alpha`.
    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        let mut levy = self.levy.clone();
        let st = levy
            .stable
            .as_mut()
            .ok_or_else(|| Error::InvalidArgument("an α-sweep needs a stable driver part".into()))?;
        st.alpha = alpha;
        NeumannProblem::new(self.domain.clone(), self.coeffs.clone(), levy, self.functional.clone())
    }
}

/// Points of `D̄`: a projected bounding-box lattice in up to three
/// dimensions, the axis segments through the center otherwise.
fn closure_sample(domain: &ConvexDomain) -> Vec<Vec<f64>> {
    let (lo, hi): (Vec<f64>, Vec<f64>) = match domain.shape() {
        Shape::Interval { a, b } => (vec![*a], vec![*b]),
        Shape::Ball { center, radius } => (center.iter().map(|c| c - radius).collect(), center.iter().map(|c| c + radius).collect()),
        Shape::Ellipsoid { center, semi_axes } => (
            center.iter().zip(semi_axes).map(|(c, s)| c - s).collect(),
            center.iter().zip(semi_axes).map(|(c, s)| c + s).collect(),
        ),
    };
    let d = lo.len();
    let at = |i: usize, k: usize| lo[i] + (hi[i] - lo[i]) * k as f64 / (GROWTH_LATTICE - 1) as f64;
    let mut points = Vec::new();
    if d <= 3 {
        let total = GROWTH_LATTICE.pow(d as u32);
        for mut idx in 0..total {
            let mut x = vec![0.0; d];
            for (i, xi) in x.iter_mut().enumerate() {
                *xi = at(i, idx % GROWTH_LATTICE);
                idx /= GROWTH_LATTICE;
            }
            points.push(domain.project(&x));
        }
    } else {
        let c = domain.center();
        for i in 0..d {
            for k in 0..GROWTH_LATTICE {
                let mut x = c.clone();
                x[i] = at(i, k);
                points.push(domain.project(&x));
            }
        }
    }
    points
}

/// Truncation horizon of the path integrals.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Horizon {
    Fixed { value: f64 },
    /// The smallest horizon whose truncation-bias bound is below `tolerance`.
    Auto { tolerance: f64 },
}

/// Monte Carlo parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    pub n_paths: usize,
    pub horizon: Horizon,
    /// Base step of the uniform grid; event times are inserted on top.
    pub dt: f64,
    pub seed: u64,
    /// Paths of the pilot run that fits the moment constant of `|K|`.
    #[serde(default = "default_pilot")]
    pub pilot_paths: usize,
}

fn default_pilot() -> usize {
    256
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig { n_paths: 10_000, horizon: Horizon::Fixed { value: 10.0 }, dt: 0.01, seed: 0, pilot_paths: default_pilot() }
    }
}

impl McConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_paths == 0 {
            return Err(Error::InvalidArgument("need at least one path".into()));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidArgument(format!("step {} must be positive", self.dt)));
        }
        match self.horizon {
            Horizon::Fixed { value } if !(value.is_finite() && value > 0.0) => {
                Err(Error::InvalidArgument(format!("horizon {value} must be positive")))
            }
            Horizon::Auto { tolerance } if !(tolerance.is_finite() && tolerance > 0.0) => {
                Err(Error::InvalidArgument(format!("horizon tolerance {tolerance} must be positive")))
            }
            _ => Ok(()),
        }
    }

    fn grid(&self, horizon: f64) -> Result<TimeGrid> {
        TimeGrid::new(horizon, ((horizon / self.dt).ceil() as usize).max(1))
    }
}

/// A Monte Carlo estimate with its diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct McEstimate {
    pub mean: f64,
    /// Sample standard deviation over `√n_paths`.
    pub std_error: f64,
    pub n_paths: usize,
    pub horizon: f64,
    /// Heuristic bound on the effect of stopping at `horizon`, from a
    /// fitted moment constant; not a proved bound.
    pub truncation_bias_bound: f64,
    /// Fitted `C` in `E|K|_t^p ≤ C(1 + t^p)`.
    pub moment_constant: f64,
    /// Visited states with `|f(x)| > K(1 + |x|^p)`.
    pub growth_violations: u64,
    /// Visited states where `σ` or `b` exceeded its declared bound.
    pub bound_violations: u64,
}

/// Deterministic pairwise summation.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 16 {
        return v.iter().sum();
    }
    let (a, b) = v.split_at(v.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

/// Mean and standard error of `values`.
pub fn mean_and_error(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = pairwise_sum(values) / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let sq: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    let var = pairwise_sum(&sq) / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Running variation `|K|_t` sampled at checkpoint times.
pub struct VariationRecorder {
    checkpoints: Vec<f64>,
    next: usize,
    variation: f64,
    samples: Vec<f64>,
}

impl VariationRecorder {
    /// `checkpoints` must be increasing; a checkpoint is read at the first
    /// stamp at or after it.
    pub fn new(checkpoints: Vec<f64>) -> Self {
        let n = checkpoints.len();
        VariationRecorder { checkpoints, next: 0, variation: 0.0, samples: Vec::with_capacity(n) }
    }

    /// Values at the checkpoints; checkpoints beyond the path hold the
    /// final variation.
    pub fn finish(mut self) -> Vec<f64> {
        while self.samples.len() < self.checkpoints.len() {
            self.samples.push(self.variation);
        }
        self.samples
    }

    fn flush(&mut self, t: f64) {
        while self.next < self.checkpoints.len() && self.checkpoints[self.next] <= t * (1.0 + 1e-12) {
            self.samples.push(self.variation);
            self.next += 1;
        }
    }
}

impl StepObserver for VariationRecorder {
    fn start(&mut self, _x0: &[f64], _x_start: &[f64], k0: &[f64]) {
        self.variation = norm(k0);
        self.flush(0.0);
    }

    fn step(&mut self, r: &StepRecord<'_>) {
        self.variation += norm(r.push) + norm(r.jump_push);
        self.flush(r.t);
    }
}

/// One fully specified simulation setting.
struct Setting<'a> {
    problem: &'a NeumannProblem,
    levy: LevyDriverSpec,
    scheme: Scheme,
    stable_override: Option<StableSampler>,
}

impl<'a> Setting<'a> {
    fn new(problem: &'a NeumannProblem, scheme: Scheme) -> Self {
        Setting { problem, levy: problem.levy.clone(), scheme, stable_override: None }
    }

    /// Replaces the stable part by its Gaussian limit.
    fn gaussian_limit(problem: &'a NeumannProblem, normalization: StableNormalization) -> Self {
        let mut levy = problem.levy.clone();
        if let Some(st) = levy.stable.as_mut() {
            st.scheme = StableScheme::Increments;
        }
        Setting {
            problem,
            levy,
            scheme: Scheme::Reflected,
            stable_override: Some(StableSampler::gaussian_limit(problem.dim(), normalization)),
        }
    }

    fn penalty(&self) -> Option<f64> {
        match self.scheme {
            Scheme::Reflected => None,
            Scheme::Penalized { penalty } => Some(penalty),
        }
    }

    fn run<O: StepObserver>(&self, x: &[f64], grid: TimeGrid, stream: StreamId, observer: &mut O) -> Result<u64> {
        let mut driver = path_driver(&self.levy, grid, stream, self.stable_override.as_ref())?;
        let mut brownian = stream.rng(Channel::Brownian);
        let p = self.problem;
        Ok(run_path(x, &p.coeffs, &p.domain, self.scheme, &mut driver, &mut brownian, observer)?.bound_violations)
    }

    /// Per-path values and summed diagnostics.
    fn path_values(&self, x: &[f64], grid: TimeGrid, seed: u64, n_paths: usize) -> Result<PathValues> {
        let spec = &self.problem.functional;
        let d = self.problem.dim();
        let p = self.problem.growth_exponent();
        let out: Vec<(f64, u64, u64)> = (0..n_paths as u64)
            .into_par_iter()
            .map(|i| {
                let mut acc = FunctionalAccumulator::new(spec, d, self.penalty(), p);
                let bound = self.run(x, grid, StreamId::new(seed, i), &mut acc)?;
                Ok((acc.value(), acc.growth_violations(), bound))
            })
            .collect::<Result<_>>()?;
        Ok(PathValues {
            values: out.iter().map(|o| o.0).collect(),
            growth_violations: out.iter().map(|o| o.1).sum(),
            bound_violations: out.iter().map(|o| o.2).sum(),
        })
    }

    /// Running variations at `checkpoints` for each path.
    fn variations(&self, x: &[f64], grid: TimeGrid, seed: u64, n_paths: usize, checkpoints: &[f64]) -> Result<Vec<Vec<f64>>> {
        (0..n_paths as u64)
            .into_par_iter()
            .map(|i| {
                let mut rec = VariationRecorder::new(checkpoints.to_vec());
                self.run(x, grid, StreamId::new(seed, i), &mut rec)?;
                Ok(rec.finish())
            })
            .collect()
    }

    /// Fitted `C = max_t E|K|_t^p / (1 + t^p)` from a pilot run on a stream
    /// family disjoint from the main run.
    fn moment_constant(&self, x: &[f64], config: &McConfig, horizon: f64) -> Result<f64> {
        if self.problem.functional.g.sup_norm() == Some(0.0) || config.pilot_paths == 0 {
            return Ok(0.0);
        }
        let p = self.problem.growth_exponent();
        let checkpoints: Vec<f64> = (0..=PILOT_CHECKPOINTS).map(|j| horizon * j as f64 / PILOT_CHECKPOINTS as f64).collect();
        let grid = config.grid(horizon)?;
        let pilot_seed = config.seed ^ 0x9E37_79B9_7F4A_7C15;
        let v = self.variations(x, grid, pilot_seed, config.pilot_paths, &checkpoints)?;
        let mut c: f64 = 0.0;
        for (j, t) in checkpoints.iter().enumerate() {
            let m: Vec<f64> = v.iter().map(|row| row[j].powf(p)).collect();
            c = c.max(pairwise_sum(&m) / m.len() as f64 / (1.0 + t.powf(p)));
        }
        Ok(c)
    }

    fn horizon_and_constant(&self, x: &[f64], config: &McConfig) -> Result<(f64, f64)> {
        let lambda = self.problem.functional.lambda;
        match config.horizon {
            Horizon::Fixed { value } => Ok((value, self.moment_constant(x, config, value)?)),
            Horizon::Auto { tolerance } => {
                let c = self.moment_constant(x, config, AUTO_PILOT_HORIZON / lambda)?;
                let bound = |t: f64| truncation_bias_bound(self.problem, c, t);
                let (mut lo, mut hi) = (0.0, AUTO_MAX_HORIZON / lambda);
                if bound(hi) > tolerance {
                    return Err(Error::InvalidArgument(format!(
                        "no horizon up to {hi} brings the truncation bound below {tolerance}"
                    )));
                }
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    if bound(mid) <= tolerance {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                Ok((hi, c))
            }
        }
    }

    fn estimate(&self, x: &[f64], config: &McConfig) -> Result<(McEstimate, Vec<f64>)> {
        config.validate()?;
        check_dim(self.problem.dim(), x.len())?;
        let (horizon, c) = self.horizon_and_constant(x, config)?;
        let grid = config.grid(horizon)?;
        let pv = self.path_values(x, grid, config.seed, config.n_paths)?;
        let (mean, std_error) = mean_and_error(&pv.values);
        let est = McEstimate {
            mean,
            std_error,
            n_paths: config.n_paths,
            horizon,
            truncation_bias_bound: truncation_bias_bound(self.problem, c, horizon),
            moment_constant: c,
            growth_violations: pv.growth_violations,
            bound_violations: pv.bound_violations,
        };
        Ok((est, pv.values))
    }
}

struct PathValues {
    values: Vec<f64>,
    growth_violations: u64,
    bound_violations: u64,
}

/// `e^{-λT}(F/λ + 3G C^{1/p}(1 + T + 1/λ))` with `F = sup_D̄ |f|` and
/// `G = sup |g|`: the discounted tails of the running cost and of the
/// boundary term, whose integrand is at most `3G` per unit of `d|K|`, given
/// `E|K|_t ≤ (C(1 + t^p))^{1/p} ≤ C^{1/p}(1 + t)`.
pub fn truncation_bias_bound(problem: &NeumannProblem, moment_constant: f64, horizon: f64) -> f64 {
    let lambda = problem.functional.lambda;
    let f_bound = problem.functional.f.abs_bound_on(&problem.domain);
    let g_bound = problem.functional.g.sup_norm().unwrap_or(f64::INFINITY);
    let boundary = if g_bound == 0.0 {
        0.0
    } else {
        3.0 * g_bound * moment_constant.powf(1.0 / problem.growth_exponent()) * (1.0 + horizon + 1.0 / lambda)
    };
    (-lambda * horizon).exp() * (f_bound / lambda + boundary)
}

/// Estimates `u(x)` with the reflected scheme.
pub fn estimate_u(problem: &NeumannProblem, x: &[f64], config: &McConfig) -> Result<McEstimate> {
    Ok(Setting::new(problem, Scheme::Reflected).estimate(x, config)?.0)
}

/// Estimates `u_n(x)` with the penalized scheme (no jump correction; the
/// penalized regulator is continuous).
pub fn estimate_u_penalized(problem: &NeumannProblem, x: &[f64], penalty: f64, config: &McConfig) -> Result<McEstimate> {
    Ok(Setting::new(problem, Scheme::Penalized { penalty }).estimate(x, config)?.0)
}

/// `∫_0^{|x-Π(x)|} g(Π(x) - s n(Π(x))) ds` for exterior `x`.
pub fn exterior_correction(problem: &NeumannProblem, x: &[f64]) -> Result<f64> {
    let domain = &problem.domain;
    check_dim(domain.dim(), x.len())?;
    if domain.contains(x) {
        return Err(Error::NotExterior(x.to_vec()));
    }
    let p = domain.project(x);
    let len = domain.dist(x);
    let n = domain.inward_normal(&p)?;
    let g = &problem.functional.g;
    let mut y = vec![0.0; x.len()];
    let panels = (len.ceil() as usize).max(1);
    Ok(gl32().integrate_panels(0.0, len, panels, |s| {
        for ((yi, pi), ni) in y.iter_mut().zip(&p).zip(&n) {
            *yi = pi - s * ni;
        }
        g.eval(&y)
    }))
}

/// `u(x) = u(Π(x)) + ∫_0^{|x-Π(x)|} g(Π(x) - s n(Π(x))) ds` for exterior
/// `x`, given `u` on the closed domain.
pub fn extend_exterior<F: FnOnce(&[f64]) -> f64>(u_on_closure: F, problem: &NeumannProblem, x: &[f64]) -> Result<f64> {
    let correction = exterior_correction(problem, x)?;
    Ok(u_on_closure(&problem.domain.project(x)) + correction)
}

/// Stable-index sweep normalization and values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientShift {
    /// Label of the row, e.g. the `n` of a perturbation `1/n`.
    pub param: f64,
    #[serde(default)]
    pub sigma: f64,
    #[serde(default)]
    pub drift: f64,
    #[serde(default)]
    pub f: f64,
    #[serde(default)]
    pub g: f64,
}

/// Which parameter a sweep varies and what it is compared with.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Sweep {
    /// `u_n` for each penalty, compared with `u`.
    Penalization { penalties: Vec<f64> },
    /// `u_α` for each stable index, compared with the diffusion whose
    /// stable part is replaced by its Gaussian limit.
    Alpha { alphas: Vec<f64> },
    /// Perturbed problems, compared with the unperturbed `u`.
    Coefficients { shifts: Vec<CoefficientShift> },
}

impl Sweep {
    pub fn label(&self) -> &'static str {
        match self {
            Sweep::Penalization { .. } => "penalty",
            Sweep::Alpha { .. } => "alpha",
            Sweep::Coefficients { .. } => "perturbation",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub param: f64,
    pub x: Vec<f64>,
    pub estimate: McEstimate,
    pub target: McEstimate,
    /// `|estimate - target|`.
    pub error: f64,
    /// `√(se_estimate² + se_target²)`.
    pub combined_std_error: f64,
    /// Standard error of the per-path differences of the coupled runs.
    pub paired_std_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepTable {
    pub parameter: String,
    /// What the rows are compared with.
    pub target: String,
    pub rows: Vec<SweepRow>,
}

fn compare(param: f64, x: &[f64], est: (McEstimate, Vec<f64>), target: &(McEstimate, Vec<f64>)) -> SweepRow {
    let diffs: Vec<f64> = est.1.iter().zip(&target.1).map(|(a, b)| a - b).collect();
    let (_, paired) = mean_and_error(&diffs);
    SweepRow {
        param,
        x: x.to_vec(),
        error: (est.0.mean - target.0.mean).abs(),
        combined_std_error: est.0.std_error.hypot(target.0.std_error),
        paired_std_error: paired,
        estimate: est.0,
        target: target.0.clone(),
    }
}

/// Runs a sweep at each point. All runs share the seed, so they are coupled
/// path by path.
pub fn run_sweep(problem: &NeumannProblem, sweep: &Sweep, points: &[Vec<f64>], config: &McConfig) -> Result<SweepTable> {
    let mut rows = Vec::new();
    let target_label;
    match sweep {
        Sweep::Penalization { penalties } => {
            target_label = "reflected solution u".to_string();
            let base = Setting::new(problem, Scheme::Reflected);
            for x in points {
                let target = base.estimate(x, config)?;
                for &n in penalties {
                    let est = Setting::new(problem, Scheme::Penalized { penalty: n }).estimate(x, config)?;
                    rows.push(compare(n, x, est, &target));
                }
            }
        }
        Sweep::Alpha { alphas } => {
            let normalization = problem
                .levy
                .stable
                .as_ref()
                .ok_or_else(|| Error::InvalidArgument("an α-sweep needs a stable driver part".into()))?
                .normalization;
            target_label = format!("Gaussian limit: {}", normalization.label());
            let limit = Setting::gaussian_limit(problem, normalization);
            let variants = alphas.iter().map(|a| problem.with_alpha(*a)).collect::<Result<Vec<_>>>()?;
            for x in points {
                let target = limit.estimate(x, config)?;
                for (a, p) in alphas.iter().zip(&variants) {
                    let est = Setting::new(p, Scheme::Reflected).estimate(x, config)?;
                    rows.push(compare(*a, x, est, &target));
                }
            }
        }
        Sweep::Coefficients { shifts } => {
            target_label = "unperturbed solution u".to_string();
            let base = Setting::new(problem, Scheme::Reflected);
            let variants = shifts.iter().map(|s| problem.perturbed(s)).collect::<Result<Vec<_>>>()?;
            for x in points {
                let target = base.estimate(x, config)?;
                for (s, p) in shifts.iter().zip(&variants) {
                    let est = Setting::new(p, Scheme::Reflected).estimate(x, config)?;
                    rows.push(compare(s.param, x, est, &target));
                }
            }
        }
    }
    Ok(SweepTable { parameter: sweep.label().to_string(), target: target_label, rows })
}

/// Empirical `E|K|_t^p` for one scheme.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MomentRow {
    /// `None` for the reflected scheme.
    pub penalty: Option<f64>,
    pub moments: Vec<f64>,
    pub std_errors: Vec<f64>,
    /// Least-squares slope of `log E|K|_t^p` against `log t`.
    pub time_exponent: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MomentTable {
    pub p: f64,
    pub times: Vec<f64>,
    pub rows: Vec<MomentRow>,
    /// Per time, the least-squares slope of `log E|K_n|_t^p` against `log n`.
    pub penalty_slopes: Vec<f64>,
}

impl MomentTable {
    pub fn max_abs_penalty_slope(&self) -> f64 {
        self.penalty_slopes.iter().fold(0.0, |m, s| m.max(s.abs()))
    }

    pub fn max_time_exponent(&self) -> f64 {
        self.rows.iter().fold(f64::NEG_INFINITY, |m, r| m.max(r.time_exponent))
    }
}

/// Least-squares slope of `log y` against `log x`; zero when every `y` is
/// zero and NaN when only some are.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    if y.iter().all(|v| *v == 0.0) {
        return 0.0;
    }
    if y.iter().any(|v| *v <= 0.0) {
        return f64::NAN;
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Moments `E|K_n|_t^p` for each penalty (and `E|K|_t^p` for the reflected
/// scheme when `include_reflected`) at the given positive times, with
/// coupled paths.
pub fn moment_experiment(
    problem: &NeumannProblem,
    x: &[f64],
    penalties: &[f64],
    times: &[f64],
    include_reflected: bool,
    config: &McConfig,
) -> Result<MomentTable> {
    config.validate()?;
    check_dim(problem.dim(), x.len())?;
    if times.is_empty() || times.iter().any(|t| !(*t > 0.0)) || times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("moment times must be positive and increasing".into()));
    }
    let p = problem.growth_exponent();
    let horizon = *times.last().expect("non-empty");
    let grid = config.grid(horizon)?;
    let mut schemes: Vec<Option<f64>> = penalties.iter().map(|n| Some(*n)).collect();
    if include_reflected {
        schemes.push(None);
    }
    let mut rows = Vec::new();
    for penalty in schemes {
        let scheme = penalty.map_or(Scheme::Reflected, |n| Scheme::Penalized { penalty: n });
        let v = Setting::new(problem, scheme).variations(x, grid, config.seed, config.n_paths, times)?;
        let mut moments = Vec::new();
        let mut std_errors = Vec::new();
        for j in 0..times.len() {
            let m: Vec<f64> = v.iter().map(|row| row[j].powf(p)).collect();
            let (mean, se) = mean_and_error(&m);
            moments.push(mean);
            std_errors.push(se);
        }
        let time_exponent = log_log_slope(times, &moments);
        rows.push(MomentRow { penalty, moments, std_errors, time_exponent });
    }
    let penalty_slopes = (0..times.len())
        .map(|j| {
            let ys: Vec<f64> = rows.iter().filter(|r| r.penalty.is_some()).map(|r| r.moments[j]).collect();
            if ys.len() < 2 {
                return 0.0;
            }
            log_log_slope(penalties, &ys)
        })
        .collect();
    Ok(MomentTable { p, times: times.to_vec(), rows, penalty_slopes })
}
