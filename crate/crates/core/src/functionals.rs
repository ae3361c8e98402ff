//! Discounted Feynman–Kac integrands: the running cost `∫ e^{-λt} f(X_t) dt`
//! and the boundary functional
//!
//! `I = ∫_{[0,T]} e^{-λs} g(X_s) d‖K‖_s + Σ_s e^{-λs} ∫_0^{|ΔK_s|} ḡ(X_s - r n(X_s)) dr`,
//!
//! with `ḡ(y) = g(y) - g(Π(y))`. The atom `K_0 = Π(x) - x` is always
//! included.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::geometry::ConvexDomain;
use crate::paths::{norm, BVPath, CadlagPath};
use crate::quadrature::{gl32, gl8};
use crate::sde::{ReflectedTrajectory, StepObserver, StepRecord};
use crate::skorokhod::PenalizedSolution;

/// Closed-form scalar fields selectable by name.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScalarField {
    Constant {
        value: f64,
    },
    /// `⟨weights, x⟩ + offset`.
    Linear {
        weights: Vec<f64>,
        #[serde(default)]
        offset: f64,
    },
    /// `Σ_k c_k x_j^k` in the coordinate `j`.
    Polynomial {
        coefficients: Vec<f64>,
        #[serde(default)]
        coordinate: usize,
    },
    /// `Σ_k c_k |x - center|^k`; an empty center means the origin.
    Radial {
        #[serde(default)]
        center: Vec<f64>,
        coefficients: Vec<f64>,
    },
    /// `amplitude·cos(⟨wave, x⟩ + phase)`.
    Cosine {
        amplitude: f64,
        wave: Vec<f64>,
        #[serde(default)]
        phase: f64,
    },
    /// Linear interpolation of `values` at `knots` in coordinate `j`,
    /// constant beyond the end knots.
    Tabulated {
        knots: Vec<f64>,
        values: Vec<f64>,
        #[serde(default)]
        coordinate: usize,
    },
    /// `base(x) + shift`.
    Shifted { base: Box<ScalarField>, shift: f64 },
}

impl ScalarField {
    pub fn constant(value: f64) -> Self {
        ScalarField::Constant { value }
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidFunctional(m.to_string()));
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        match self {
            ScalarField::Constant { value } if !value.is_finite() => bad("constant must be finite"),
            ScalarField::Constant { .. } => Ok(()),
            ScalarField::Linear { weights, offset } => {
                check_dim(d, weights.len())?;
                if !finite(weights) || !offset.is_finite() {
                    return bad("linear field must be finite");
                }
                Ok(())
            }
            ScalarField::Polynomial { coefficients, coordinate } => {
                if *coordinate >= d || coefficients.is_empty() || !finite(coefficients) {
                    return bad("polynomial needs finite coefficients and a valid coordinate");
                }
                Ok(())
            }
            ScalarField::Radial { center, coefficients } => {
                if !center.is_empty() {
                    check_dim(d, center.len())?;
                }
                if coefficients.is_empty() || !finite(coefficients) || !finite(center) {
                    return bad("radial field needs finite coefficients");
                }
                Ok(())
            }
            ScalarField::Cosine { amplitude, wave, phase } => {
                check_dim(d, wave.len())?;
                if !amplitude.is_finite() || !phase.is_finite() || !finite(wave) {
                    return bad("cosine field must be finite");
                }
                Ok(())
            }
            ScalarField::Tabulated { knots, values, coordinate } => {
                if *coordinate >= d || knots.is_empty() || knots.len() != values.len() {
                    return bad("table needs matching knots and values and a valid coordinate");
                }
                if !finite(knots) || !finite(values) || knots.windows(2).any(|w| w[1] <= w[0]) {
                    return bad("table knots must be finite and strictly increasing");
                }
                Ok(())
            }
            ScalarField::Shifted { base, shift } => {
                if !shift.is_finite() {
                    return bad("shift must be finite");
                }
                base.validate(d)
            }
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            ScalarField::Constant { value } => *value,
            ScalarField::Linear { weights, offset } => weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + offset,
            ScalarField::Polynomial { coefficients, coordinate } => horner(coefficients, x[*coordinate]),
            ScalarField::Radial { center, coefficients } => {
                let r = if center.is_empty() { norm(x) } else { crate::paths::norm_between(x, center) };
                horner(coefficients, r)
            }
            ScalarField::Cosine { amplitude, wave, phase } => {
                amplitude * (wave.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + phase).cos()
            }
            ScalarField::Tabulated { knots, values, coordinate } => interpolate(knots, values, x[*coordinate]),
            ScalarField::Shifted { base, shift } => base.eval(x) + shift,
        }
    }

    /// `Some(c)` when the field is identically `c`.
    pub fn constant_value(&self) -> Option<f64> {
        match self {
            ScalarField::Constant { value } => Some(*value),
            ScalarField::Linear { weights, offset } if weights.iter().all(|w| *w == 0.0) => Some(*offset),
            ScalarField::Polynomial { coefficients, .. } | ScalarField::Radial { coefficients, .. }
                if coefficients.iter().skip(1).all(|c| *c == 0.0) =>
            {
                Some(coefficients[0])
            }
            ScalarField::Cosine { amplitude, .. } if *amplitude == 0.0 => Some(0.0),
            ScalarField::Shifted { base, shift } => base.constant_value().map(|c| c + shift),
            _ => None,
        }
    }

    /// `sup |field|` over all of `R^d`, for bounded families.
    pub fn sup_norm(&self) -> Option<f64> {
        if let Some(c) = self.constant_value() {
            return Some(c.abs());
        }
        match self {
            ScalarField::Cosine { amplitude, .. } => Some(amplitude.abs()),
            ScalarField::Tabulated { values, .. } => Some(values.iter().fold(0.0, |m, v| m.max(v.abs()))),
            ScalarField::Shifted { base, shift } => base.sup_norm().map(|s| s + shift.abs()),
            _ => None,
        }
    }

    pub fn is_bounded(&self) -> bool {
        self.sup_norm().is_some()
    }

    /// An upper bound of `|field|` on the closed domain.
    pub fn abs_bound_on(&self, domain: &ConvexDomain) -> f64 {
        if let Some(s) = self.sup_norm() {
            return s;
        }
        let r = domain.max_norm();
        match self {
            ScalarField::Linear { weights, offset } => offset.abs() + norm(weights) * r,
            ScalarField::Polynomial { coefficients, .. } => {
                coefficients.iter().enumerate().map(|(k, c)| c.abs() * r.powi(k as i32)).sum()
            }
            ScalarField::Radial { center, coefficients } => {
                let rr = r + norm(center);
                coefficients.iter().enumerate().map(|(k, c)| c.abs() * rr.powi(k as i32)).sum()
            }
            ScalarField::Shifted { base, shift } => base.abs_bound_on(domain) + shift.abs(),
            _ => f64::INFINITY,
        }
    }

    /// `base + shift`, collapsing constants.
    pub fn shifted(&self, shift: f64) -> ScalarField {
        if shift == 0.0 {
            return self.clone();
        }
        match self {
            ScalarField::Constant { value } => ScalarField::Constant { value: value + shift },
            _ => ScalarField::Shifted { base: Box::new(self.clone()), shift },
        }
    }
}

fn horner(coefficients: &[f64], x: f64) -> f64 {
    coefficients.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

fn interpolate(knots: &[f64], values: &[f64], x: f64) -> f64 {
    if x <= knots[0] {
        return values[0];
    }
    let last = knots.len() - 1;
    if x >= knots[last] {
        return values[last];
    }
    let i = knots.partition_point(|k| *k <= x);
    let (x0, x1) = (knots[i - 1], knots[i]);
    let w = (x - x0) / (x1 - x0);
    values[i - 1] * (1.0 - w) + values[i] * w
}

/// Running cost `f`, boundary data `g`, discount `λ` and the growth
/// constant `K` in `|f(x)| ≤ K(1 + |x|^p)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionalSpec {
    pub f: ScalarField,
    pub g: ScalarField,
    pub lambda: f64,
    #[serde(default = "default_growth")]
    pub growth_constant: f64,
}

fn default_growth() -> f64 {
    1.0
}

impl FunctionalSpec {
    pub fn new(f: ScalarField, g: ScalarField, lambda: f64) -> Self {
        FunctionalSpec { f, g, lambda, growth_constant: 1.0 }
    }

    pub fn with_growth_constant(mut self, k: f64) -> Self {
        self.growth_constant = k;
        self
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(Error::InvalidFunctional(format!("discount {} must be positive", self.lambda)));
        }
        if !(self.growth_constant.is_finite() && self.growth_constant >= 0.0) {
            return Err(Error::InvalidFunctional("growth constant must be finite and >= 0".into()));
        }
        self.f.validate(d)?;
        self.g.validate(d)
    }

    /// `f + ε_f`, `g + ε_g`.
    pub fn perturbed(&self, f_shift: f64, g_shift: f64) -> Self {
        FunctionalSpec { f: self.f.shifted(f_shift), g: self.g.shifted(g_shift), ..self.clone() }
    }
}

/// `∫_a^b e^{-λs} ds`, with `λ = 0` giving `b - a`.
pub fn discount_weight(a: f64, b: f64, lambda: f64) -> f64 {
    if lambda == 0.0 {
        return b - a;
    }
    if b.is_infinite() {
        return (-lambda * a).exp() / lambda;
    }
    -(-lambda * a).exp() * (-lambda * (b - a)).exp_m1() / lambda
}

/// Left-point rule `Σ f(X_{t_i}) ∫_{t_i}^{t_{i+1}} e^{-λs} ds` up to `T`.
/// Beyond the last stamp the path is continued by its final value, so
/// `T = ∞` is allowed.
pub fn discounted_time_integral(f: &ScalarField, x: &CadlagPath, lambda: f64, horizon: f64) -> Result<f64> {
    if !(lambda >= 0.0) || horizon.is_nan() || horizon < x.start() {
        return Err(Error::InvalidArgument("need λ >= 0 and a horizon after the path start".into()));
    }
    if lambda == 0.0 && horizon.is_infinite() {
        return Err(Error::InvalidArgument("an undiscounted integral needs a finite horizon".into()));
    }
    let times = x.times();
    let mut total = 0.0;
    for i in 0..times.len() {
        let a = times[i];
        if a >= horizon {
            break;
        }
        let b = times.get(i + 1).copied().unwrap_or(f64::INFINITY).min(horizon);
        total += f.eval(x.value(i)) * discount_weight(a, b, lambda);
    }
    Ok(total)
}

/// `∫_0^{len} (g(x - r n) - g(x)) dr` with 32-point Gauss–Legendre, one panel
/// per unit length. `x` must be a boundary point and `n` its inward normal,
/// so that `Π(x - r n) = x`.
pub(crate) fn normal_segment_correction(g: &ScalarField, x: &[f64], normal: &[f64], len: f64, scratch: &mut [f64]) -> f64 {
    let gx = g.eval(x);
    let panels = (len.ceil() as usize).max(1);
    gl32().integrate_panels(0.0, len, panels, |r| {
        for ((s, xi), ni) in scratch.iter_mut().zip(x).zip(normal) {
            *s = xi - r * ni;
        }
        g.eval(scratch) - gx
    })
}

/// `∫_0^{|ΔK|} ḡ(X_t - r n(X_t)) dr`.
pub fn jump_correction(g: &ScalarField, x_t: &[f64], delta_k: &[f64], domain: &ConvexDomain) -> Result<f64> {
    check_dim(domain.dim(), x_t.len())?;
    check_dim(domain.dim(), delta_k.len())?;
    let len = norm(delta_k);
    if len == 0.0 {
        return Ok(0.0);
    }
    if !domain.on_boundary(x_t) {
        return Err(Error::PushAwayFromBoundary { increment: len, distance: domain.boundary_distance(x_t) });
    }
    let normal = domain.inward_normal(x_t)?;
    let mut y = vec![0.0; x_t.len()];
    let mut proj = vec![0.0; x_t.len()];
    let panels = (len.ceil() as usize).max(1);
    Ok(gl32().integrate_panels(0.0, len, panels, |r| {
        for ((s, xi), ni) in y.iter_mut().zip(x_t).zip(&normal) {
            *s = xi - r * ni;
        }
        domain.project_into(&y, &mut proj);
        g.eval(&y) - g.eval(&proj)
    }))
}

/// Boundary functional of a reflected pair `(X, K)` on `[0, T]`.
///
/// The increment of `K` between consecutive stamps is a push along the
/// normal onto `X(t_i-)`, as for the Skorokhod map of a driver that is
/// constant between stamps: it contributes `g(X(t_i-))|ΔK|` plus the
/// segment correction, discounted from `t_{i-1}`. A regulator jump at `t_i`
/// contributes the same terms at `X(t_i)`, discounted from `t_i`. For a
/// finely resolved continuous regulator the corrections are `O(|ΔK|^2)`.
pub fn boundary_functional(
    g: &ScalarField,
    x: &CadlagPath,
    k: &BVPath,
    domain: &ConvexDomain,
    lambda: f64,
    horizon: f64,
) -> Result<f64> {
    let kp = k.base();
    if x.times() != kp.times() {
        return Err(Error::GridMismatch("X and K use different stamps".into()));
    }
    let d = x.dim();
    let mut normal = vec![0.0; d];
    let mut scratch = vec![0.0; d];
    let mut total = 0.0;
    let k0 = kp.value(0);
    total += g.eval(x.value(0)) * norm(k0) + jump_correction(g, x.value(0), k0, domain)?;
    for i in 1..x.len() {
        let (s, t) = (x.times()[i - 1], x.times()[i]);
        if t > horizon {
            break;
        }
        let approach_k = kp.approach_value(i);
        for c in 0..d {
            normal[c] = approach_k[c] - kp.value(i - 1)[c];
        }
        let cont = norm(&normal);
        if cont > 0.0 {
            normal.iter_mut().for_each(|v| *v /= cont);
            let xm = x.approach_value(i);
            let push = g.eval(&xm) * cont + normal_segment_correction(g, &xm, &normal, cont, &mut scratch);
            total += (-lambda * s).exp() * push;
        }
        if kp.is_jump(i) {
            let dk = kp.jump(i);
            total += (-lambda * t).exp() * (g.eval(x.value(i)) * norm(dk) + jump_correction(g, x.value(i), dk, domain)?);
        }
    }
    Ok(total)
}

/// The jump-corrected boundary functional of a reflected trajectory.
pub fn evaluate_it(
    g: &ScalarField,
    trajectory: &ReflectedTrajectory,
    domain: &ConvexDomain,
    lambda: f64,
    horizon: f64,
) -> Result<f64> {
    boundary_functional(g, &trajectory.x, &trajectory.k, domain, lambda, horizon)
}

/// Largest `n·dt` integrated along a relaxation segment; `e^{-40}` of the
/// mass lies beyond.
const RELAX_CUTOFF: f64 = 40.0;
/// Maximum panel width (in units of `n·s`) for the segment rule.
const RELAX_PANEL: f64 = 2.0;

/// `∫_0^{dt} e^{-λu} g(p + v e^{-n u}) d|k|_u` for the exact relaxation
/// `p + v e^{-n u}`, where `d|k|_u = n|v| e^{-n u} du`. Substituting
/// `w = n u` gives `|v| ∫_0^{n dt} e^{-(λ/n) w} g(p + v e^{-w}) e^{-w} dw`.
pub(crate) fn relax_segment_integral(
    g: &ScalarField,
    p: &[f64],
    v: &[f64],
    penalty: f64,
    dt: f64,
    lambda: f64,
    scratch: &mut [f64],
) -> f64 {
    let len = norm(v);
    if len == 0.0 {
        return 0.0;
    }
    let upper = (penalty * dt).min(RELAX_CUTOFF);
    let panels = ((upper / RELAX_PANEL).ceil() as usize).max(1);
    let rate = lambda / penalty;
    if let Some(c) = g.constant_value() {
        // Closed form of the same integral.
        let total_rate = 1.0 + rate;
        return c * len * -(-total_rate * upper).exp_m1() / total_rate;
    }
    len * gl8().integrate_panels(0.0, upper, panels, |w| {
        let decay = (-w).exp();
        for ((s, pi), vi) in scratch.iter_mut().zip(p).zip(v) {
            *s = pi + vi * decay;
        }
        (-rate * w).exp() * g.eval(scratch) * decay
    })
}

/// `∫_0^T e^{-λs} g(x_n(s)) d|k_n|_s` for a penalized solution, integrating
/// each step along its exact relaxation segment.
pub fn penalized_boundary_integral(
    g: &ScalarField,
    solution: &PenalizedSolution,
    domain: &ConvexDomain,
    lambda: f64,
    horizon: f64,
) -> Result<f64> {
    let x = &solution.x;
    let kp = solution.k.base();
    if x.times() != kp.times() {
        return Err(Error::GridMismatch("x_n and k_n use different stamps".into()));
    }
    let d = x.dim();
    let mut pre = vec![0.0; d];
    let mut p = vec![0.0; d];
    let mut v = vec![0.0; d];
    let mut scratch = vec![0.0; d];
    let mut total = 0.0;
    for i in 1..x.len() {
        let (s, t) = (x.times()[i - 1], x.times()[i]);
        if t > horizon {
            break;
        }
        let relaxed = x.approach_value(i);
        let (k1, k0) = (kp.value(i), kp.value(i - 1));
        for c in 0..d {
            pre[c] = relaxed[c] - (k1[c] - k0[c]);
        }
        domain.project_into(&pre, &mut p);
        for c in 0..d {
            v[c] = pre[c] - p[c];
        }
        total += (-lambda * s).exp()
            * relax_segment_integral(g, &p, &v, solution.penalty, t - s, lambda, &mut scratch);
    }
    Ok(total)
}

/// Streams the per-path value `∫ e^{-λt} f(X) dt + I` (reflected) or
/// `∫ e^{-λt} (f(X_n) dt + g(X_n) d|K_n|)` (penalized).
pub struct FunctionalAccumulator<'a> {
    spec: &'a FunctionalSpec,
    penalty: Option<f64>,
    growth_p: f64,
    g_is_constant: bool,
    value: f64,
    growth_violations: u64,
    normal: Vec<f64>,
    scratch: Vec<f64>,
    v: Vec<f64>,
}

impl<'a> FunctionalAccumulator<'a> {
    /// `penalty = None` selects the reflected functional.
    pub fn new(spec: &'a FunctionalSpec, dim: usize, penalty: Option<f64>, growth_p: f64) -> Self {
        FunctionalAccumulator {
            spec,
            penalty,
            growth_p,
            g_is_constant: spec.g.constant_value().is_some(),
            value: 0.0,
            growth_violations: 0,
            normal: vec![0.0; dim],
            scratch: vec![0.0; dim],
            v: vec![0.0; dim],
        }
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    /// Evaluated states where `|f(x)| > K(1 + |x|^p)`.
    pub fn growth_violations(&self) -> u64 {
        self.growth_violations
    }

    fn boundary_jump(&mut self, x: &[f64], dk: &[f64]) -> f64 {
        let len = norm(dk);
        if len == 0.0 {
            return 0.0;
        }
        let mut out = self.spec.g.eval(x) * len;
        if !self.g_is_constant {
            for (n, v) in self.normal.iter_mut().zip(dk) {
                *n = v / len;
            }
            out += normal_segment_correction(&self.spec.g, x, &self.normal, len, &mut self.scratch);
        }
        out
    }
}

impl StepObserver for FunctionalAccumulator<'_> {
    fn start(&mut self, _x0: &[f64], x_start: &[f64], k0: &[f64]) {
        if self.penalty.is_none() {
            self.value += self.boundary_jump(x_start, k0);
        }
    }

    fn step(&mut self, r: &StepRecord<'_>) {
        let lambda = self.spec.lambda;
        let fx = self.spec.f.eval(r.x_prev);
        if fx.abs() > self.spec.growth_constant * (1.0 + norm(r.x_prev).powf(self.growth_p)) {
            self.growth_violations += 1;
        }
        self.value += fx * discount_weight(r.t_prev, r.t, lambda);
        match self.penalty {
            None => {
                if r.push.iter().any(|v| *v != 0.0) {
                    let b = self.boundary_jump(r.x_minus, r.push);
                    self.value += (-lambda * r.t_prev).exp() * b;
                }
                if r.jumped {
                    let b = self.boundary_jump(r.x, r.jump_push);
                    self.value += (-lambda * r.t).exp() * b;
                }
            }
            Some(n) => {
                for ((v, pre), a) in self.v.iter_mut().zip(r.pre).zip(r.anchor) {
                    *v = pre - a;
                }
                let seg = relax_segment_integral(&self.spec.g, r.anchor, &self.v, n, r.t - r.t_prev, lambda, &mut self.scratch);
                self.value += (-lambda * r.t_prev).exp() * seg;
            }
        }
    }
}
