//! Closed-form and brute-force reference solutions.
//!
//! Nothing here calls the reflection, penalization or functional code it is
//! used to check: projections are recomputed in closed form, integrals use
//! an independent adaptive Gauss–Kronrod rule and the Skorokhod reference is
//! a separate fine-grid penalization.

use serde::Serialize;

use crate::error::{check_dim, Error, Result};
use crate::functionals::{FunctionalSpec, ScalarField};
use crate::geometry::{ConvexDomain, Shape};
use crate::paths::{BVPath, CadlagPath, Interpolation};
use crate::skorokhod::SkorokhodSolution;

/// Target accuracy of oracle quadrature.
pub const ORACLE_TOL: f64 = 1e-12;
/// Agreement required between a stored exact value and its quadrature.
pub const SELF_CHECK_TOL: f64 = 1e-10;

const KRONROD_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const KRONROD_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
/// Weights of the embedded 7-point Gauss rule at the odd Kronrod nodes.
const GAUSS_WEIGHTS: [f64; 4] = [0.129_484_966_168_869_7, 0.279_705_391_489_276_7, 0.381_830_050_505_118_9, 0.417_959_183_673_469_4];
const MAX_DEPTH: u32 = 60;

fn kronrod_panel<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = KRONROD_WEIGHTS[7] * fc;
    let mut gauss = GAUSS_WEIGHTS[3] * fc;
    for j in 0..7 {
        let s = f(c - h * KRONROD_NODES[j]) + f(c + h * KRONROD_NODES[j]);
        kronrod += KRONROD_WEIGHTS[j] * s;
        if j % 2 == 1 {
            gauss += GAUSS_WEIGHTS[j / 2] * s;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

fn adaptive<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64, tol: f64, depth: u32) -> (f64, f64) {
    let (value, err) = kronrod_panel(f, a, b);
    if err <= tol.max(4.0 * f64::EPSILON * value.abs()) || depth >= MAX_DEPTH {
        return (value, err);
    }
    let m = 0.5 * (a + b);
    let (l, el) = adaptive(f, a, m, 0.5 * tol, depth + 1);
    let (r, er) = adaptive(f, m, b, 0.5 * tol, depth + 1);
    (l + r, el + er)
}

/// `∫_a^b f` by adaptive 7/15-point Gauss–Kronrod bisection to absolute
/// tolerance `tol`. Returns the value and the error estimate.
pub fn adaptive_integral<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: f64) -> (f64, f64) {
    if a == b {
        return (0.0, 0.0);
    }
    adaptive(&mut f, a, b, tol, 0)
}

/// Nearest point of an interval or ball, in closed form.
fn nearest_point(domain: &ConvexDomain, x: &[f64]) -> Result<Vec<f64>> {
    match domain.shape() {
        Shape::Interval { a, b } => Ok(vec![x[0].clamp(*a, *b)]),
        Shape::Ball { center, radius } => {
            let r: f64 = x.iter().zip(center).map(|(v, c)| (v - c) * (v - c)).sum::<f64>().sqrt();
            if r <= *radius {
                return Ok(x.to_vec());
            }
            Ok(x.iter().zip(center).map(|(v, c)| c + radius * (v - c) / r).collect())
        }
        _ => Err(Error::InvalidArgument("oracles cover intervals and balls only".into())),
    }
}

/// What a case describes.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OracleKind {
    /// No diffusion, drift or jumps and `f = 0`. An exterior start is pushed
    /// onto the boundary along the normal and stays there; `u` is the integral
    /// of `g` along that segment. With a penalty `n` the push is the
    /// exponential relaxation, weighted by `(s/z)^{λ/n}` at distance `s`.
    Degenerate { penalty: Option<f64> },
    /// `f ≡ c`, `g ≡ 0`, so `u ≡ c/λ` for every process.
    ConstantRunningCost,
    /// The driver `y = -z·1_{[a,∞)}` on `(0,1)` started at 0; the value is the
    /// undiscounted boundary functional on `[0, horizon]`.
    StepFunctional { z: f64, a: f64, horizon: f64 },
}

/// A problem with a known answer.
#[derive(Clone, Debug, Serialize)]
pub struct OracleCase {
    pub name: &'static str,
    /// Where the exact value comes from.
    pub note: &'static str,
    pub domain: ConvexDomain,
    pub functional: FunctionalSpec,
    pub kind: OracleKind,
    pub point: Vec<f64>,
    /// Closed-form value at `point`.
    pub exact: f64,
}

impl OracleCase {
    /// Recomputes the value at `point` by quadrature and compares it with
    /// the stored closed form.
    pub fn self_check(&self) -> Result<f64> {
        let q = match self.kind {
            OracleKind::StepFunctional { z, .. } => {
                let g = &self.functional.g;
                adaptive_integral(|r| g.eval(&[-r]), 0.0, z, ORACLE_TOL).0
            }
            OracleKind::ConstantRunningCost => {
                let c = self.functional.f.eval(&self.point);
                let lambda = self.functional.lambda;
                // e^{-λ·(80/λ)} is below double precision.
                adaptive_integral(|t| c * (-lambda * t).exp(), 0.0, 80.0 / lambda, ORACLE_TOL).0
            }
            OracleKind::Degenerate { .. } => oracle_u(self, &self.point)?,
        };
        let gap = (q - self.exact).abs();
        if gap > SELF_CHECK_TOL * self.exact.abs().max(1.0) {
            return Err(Error::InvalidArgument(format!(
                "oracle {} disagrees with its quadrature: {} vs {q}",
                self.name, self.exact
            )));
        }
        Ok(gap)
    }

    /// Penalized state `x_n(T) = -z e^{-n(T-a)}` of a step case.
    pub fn step_penalized_state(&self, n: f64) -> Result<f64> {
        match self.kind {
            OracleKind::StepFunctional { z, a, horizon } => Ok(-z * (-n * (horizon - a)).exp()),
            _ => Err(Error::InvalidArgument(format!("{} is not a step case", self.name))),
        }
    }

    /// Penalized boundary functional of a step case:
    /// `∫_{z e^{-n(T-a)}}^z g(-s) ds`.
    pub fn step_penalized_functional(&self, n: f64) -> Result<f64> {
        match self.kind {
            OracleKind::StepFunctional { z, a, horizon } => {
                let lower = z * (-n * (horizon - a)).exp();
                let g = &self.functional.g;
                Ok(adaptive_integral(|s| g.eval(&[-s]), lower, z, ORACLE_TOL).0)
            }
            _ => Err(Error::InvalidArgument(format!("{} is not a step case", self.name))),
        }
    }
}

/// Exact `u(x)` of a case; `Degenerate` cases with a penalty give `u_n`.
pub fn oracle_u(case: &OracleCase, x: &[f64]) -> Result<f64> {
    check_dim(case.domain.dim(), x.len())?;
    match case.kind {
        OracleKind::ConstantRunningCost => Ok(case.functional.f.eval(x) / case.functional.lambda),
        OracleKind::StepFunctional { .. } => {
            Err(Error::InvalidArgument(format!("{} describes a path functional, not a solution", case.name)))
        }
        OracleKind::Degenerate { penalty } => {
            let p = nearest_point(&case.domain, x)?;
            let z: f64 = x.iter().zip(&p).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            if z == 0.0 {
                return Ok(0.0);
            }
            let outward: Vec<f64> = x.iter().zip(&p).map(|(a, b)| (a - b) / z).collect();
            let g = &case.functional.g;
            let mut y = vec![0.0; x.len()];
            let mut at = |s: f64| {
                for ((yi, pi), oi) in y.iter_mut().zip(&p).zip(&outward) {
                    *yi = pi + s * oi;
                }
                g.eval(&y)
            };
            let value = match penalty {
                None => adaptive_integral(at, 0.0, z, ORACLE_TOL).0,
                Some(n) => {
                    let rate = case.functional.lambda / n;
                    adaptive_integral(|s| (s / z).powf(rate) * at(s), 0.0, z, ORACLE_TOL).0
                }
            };
            Ok(value)
        }
    }
}

fn cosine(amplitude: f64, wave: Vec<f64>, phase: f64) -> ScalarField {
    ScalarField::Cosine { amplitude, wave, phase }
}

fn zero_f(g: ScalarField, lambda: f64) -> FunctionalSpec {
    FunctionalSpec::new(ScalarField::constant(0.0), g, lambda)
}

/// All cases, each checked against its quadrature.
pub fn catalog() -> Result<Vec<OracleCase>> {
    let unit = ConvexDomain::interval(0.0, 1.0)?;
    let disk = ConvexDomain::ball(vec![0.0, 0.0], 1.0)?;
    let z: f64 = 0.5;
    let cases = vec![
        OracleCase {
            name: "interval-unit-g",
            note: "degenerate interval: u(-z) = ∫_0^z g(-s) ds with g = 1",
            domain: unit.clone(),
            functional: zero_f(ScalarField::constant(1.0), 1.0),
            kind: OracleKind::Degenerate { penalty: None },
            point: vec![-z],
            exact: z,
        },
        OracleCase {
            name: "interval-cosine-g",
            note: "degenerate interval with g = cos(3x + 0.2): (sin 0.2 - sin(0.2 - 3z))/3",
            domain: unit.clone(),
            functional: zero_f(cosine(1.0, vec![3.0], 0.2), 1.0),
            kind: OracleKind::Degenerate { penalty: None },
            point: vec![-z],
            exact: (0.2f64.sin() - (0.2 - 3.0 * z).sin()) / 3.0,
        },
        OracleCase {
            name: "interval-penalized-unit-g",
            note: "degenerate interval, penalty 100, λ = 1, g = 1: z/(1 + λ/n)",
            domain: unit.clone(),
            functional: zero_f(ScalarField::constant(1.0), 1.0),
            kind: OracleKind::Degenerate { penalty: Some(100.0) },
            point: vec![-z],
            exact: z / 1.01,
        },
        OracleCase {
            name: "disk-unit-g",
            note: "degenerate unit disk at (2,0) with g = 1: the distance 1",
            domain: disk.clone(),
            functional: zero_f(ScalarField::constant(1.0), 1.0),
            kind: OracleKind::Degenerate { penalty: None },
            point: vec![2.0, 0.0],
            exact: 1.0,
        },
        OracleCase {
            name: "disk-cosine-g",
            note: "degenerate unit disk at (2,0) with g = cos(1.5 x1 + 0.5 x2): (sin 3 - sin 1.5)/1.5",
            domain: disk,
            functional: zero_f(cosine(1.0, vec![1.5, 0.5], 0.0), 1.0),
            kind: OracleKind::Degenerate { penalty: None },
            point: vec![2.0, 0.0],
            exact: (3.0f64.sin() - 1.5f64.sin()) / 1.5,
        },
        OracleCase {
            name: "constant-running-cost",
            note: "f = 2, g = 0, λ = 1.5: u = f/λ for any process",
            domain: unit.clone(),
            functional: FunctionalSpec::new(ScalarField::constant(2.0), ScalarField::constant(0.0), 1.5),
            kind: OracleKind::ConstantRunningCost,
            point: vec![0.3],
            exact: 2.0 / 1.5,
        },
        OracleCase {
            name: "step-functional",
            note: "step driver of height z = 0.5 at a = 0.25 on (0,1) with g(x) = x: -z^2/2",
            domain: unit,
            functional: zero_f(ScalarField::Linear { weights: vec![1.0], offset: 0.0 }, 1.0),
            kind: OracleKind::StepFunctional { z, a: 0.25, horizon: 1.0 },
            point: vec![0.0],
            exact: -z * z / 2.0,
        },
    ];
    for c in &cases {
        c.self_check()?;
    }
    Ok(cases)
}

pub fn find_case(name: &str) -> Result<OracleCase> {
    catalog()?
        .into_iter()
        .find(|c| c.name == name)
        .ok_or_else(|| Error::InvalidArgument(format!("unknown oracle case {name}")))
}

/// Penalty of the reference Skorokhod solver.
pub const REFERENCE_PENALTY: f64 = 1e5;
/// Substeps per input interval of the reference Skorokhod solver.
pub const REFERENCE_REFINEMENT: usize = 8;

/// Reference Skorokhod solution: penalization with `n = 1e5` on a grid
/// eight times finer than `y`, projected onto the domain. Each substep adds
/// its share of the continuous increment of `y` and then relaxes exactly
/// towards the projection. Outputs are piecewise linear.
pub fn oracle_skorokhod(domain: &ConvexDomain, y: &CadlagPath) -> Result<SkorokhodSolution> {
    check_dim(domain.dim(), y.dim())?;
    let d = y.dim();
    let len = y.len();
    let mut xs = Vec::with_capacity(len * d);
    let mut ks = Vec::with_capacity(len * d);
    let mut x_flags = vec![false; len];
    let mut x_jumps = vec![0.0; len * d];
    let mut k_flags = vec![false; len];
    let mut k_jumps = vec![0.0; len * d];

    let mut xn = y.value(0).to_vec();
    let mut proj = nearest_point(domain, &xn)?;
    xs.extend_from_slice(&proj);
    ks.extend(proj.iter().zip(y.value(0)).map(|(p, v)| p - v));
    let m = REFERENCE_REFINEMENT as f64;
    for i in 1..len {
        let h = (y.times()[i] - y.times()[i - 1]) / m;
        let decay = (-REFERENCE_PENALTY * h).exp();
        let dy = y.jump(i);
        let target: Vec<f64> = y.value(i).iter().zip(dy).map(|(v, j)| v - j).collect();
        let share: Vec<f64> = target.iter().zip(y.value(i - 1)).map(|(a, b)| (a - b) / m).collect();
        for _ in 0..REFERENCE_REFINEMENT {
            for (xi, si) in xn.iter_mut().zip(&share) {
                *xi += si;
            }
            proj = nearest_point(domain, &xn)?;
            for (xi, pi) in xn.iter_mut().zip(&proj) {
                *xi = pi + (*xi - pi) * decay;
            }
        }
        let before = nearest_point(domain, &xn)?;
        if y.is_jump(i) {
            for (xi, j) in xn.iter_mut().zip(dy) {
                *xi += j;
            }
        }
        let x = nearest_point(domain, &xn)?;
        if y.is_jump(i) {
            x_flags[i] = true;
            let mut moved = false;
            for c in 0..d {
                let dx = x[c] - before[c];
                x_jumps[i * d + c] = dx;
                k_jumps[i * d + c] = dx - dy[c];
                moved |= k_jumps[i * d + c] != 0.0;
            }
            k_flags[i] = moved;
            if !moved {
                k_jumps[i * d..(i + 1) * d].iter_mut().for_each(|v| *v = 0.0);
            }
        }
        ks.extend(x.iter().zip(y.value(i)).map(|(p, v)| p - v));
        xs.extend_from_slice(&x);
    }
    let mode = Interpolation::PiecewiseLinear;
    let times = y.times().to_vec();
    let x = CadlagPath::with_jumps(d, times.clone(), xs, x_flags, x_jumps, mode)?;
    let k = CadlagPath::with_jumps(d, times, ks, k_flags, k_jumps, mode)?;
    Ok(SkorokhodSolution { x, k: BVPath::from_path(k) })
}
