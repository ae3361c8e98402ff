//! Càdlàg paths sampled on a time grid and bounded-variation bookkeeping.
//!
//! A path stores, for every stamp `t_i`, the value `y(t_i)` and an optional
//! jump `Δy(t_i) = y(t_i) - y(t_i-)`. The left limit at a stamp is therefore
//! `y(t_i) - Δy(t_i)`; between stamps the path moves from `y(t_{i-1})` to
//! that left limit either at the right endpoint (piecewise constant) or
//! linearly.
//!
//! Integrals follow the two interval conventions `(0, t]` and `[0, t]`; the
//! latter adds the atom `k_0` at the origin (`k_{0-} = 0`).

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    /// `y(t) = y(t_i)` on `[t_i, t_{i+1})`.
    PiecewiseConstant,
    /// Linear from `y(t_i)` to the left limit at `t_{i+1}`.
    PiecewiseLinear,
}

/// Relative tolerance for the consistency of stored jumps with stored values.
const JUMP_CONSISTENCY_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct CadlagPath {
    dim: usize,
    times: Vec<f64>,
    values: Vec<f64>,
    jump_flags: Vec<bool>,
    jumps: Vec<f64>,
    interpolation: Interpolation,
}

impl CadlagPath {
    /// A path without jump marks. `values` is row-major, `dim` entries per
    /// stamp.
    pub fn new(dim: usize, times: Vec<f64>, values: Vec<f64>, interpolation: Interpolation) -> Result<Self> {
        let n = times.len();
        Self::with_jumps(dim, times, values, vec![false; n], vec![0.0; n * dim], interpolation)
    }

    pub fn with_jumps(
        dim: usize,
        times: Vec<f64>,
        values: Vec<f64>,
        jump_flags: Vec<bool>,
        jumps: Vec<f64>,
        interpolation: Interpolation,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidPath("dimension must be positive".into()));
        }
        if times.is_empty() {
            return Err(Error::InvalidPath("a path needs at least one stamp".into()));
        }
        if values.len() != times.len() * dim || jumps.len() != times.len() * dim || jump_flags.len() != times.len()
        {
            return Err(Error::InvalidPath(format!(
                "{} stamps need {} values and jumps, got {} and {}",
                times.len(),
                times.len() * dim,
                values.len(),
                jumps.len()
            )));
        }
        if !times.iter().all(|t| t.is_finite()) || times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidPath("time stamps must be finite and strictly increasing".into()));
        }
        if !values.iter().chain(&jumps).all(|v| v.is_finite()) {
            return Err(Error::InvalidPath("values must be finite".into()));
        }
        if jump_flags[0] {
            return Err(Error::InvalidPath("the first stamp cannot carry a jump".into()));
        }
        let path = CadlagPath { dim, times, values, jump_flags, jumps, interpolation };
        for i in 0..path.len() {
            if !path.jump_flags[i] && path.jump(i).iter().any(|c| *c != 0.0) {
                return Err(Error::InvalidPath(format!("unflagged stamp {i} stores a jump")));
            }
            if path.jump_flags[i] && interpolation == Interpolation::PiecewiseConstant {
                let prev = path.value(i - 1);
                let cur = path.value(i);
                for k in 0..dim {
                    let expect = cur[k] - prev[k];
                    let got = path.jump(i)[k];
                    let scale = 1.0 + cur[k].abs().max(prev[k].abs());
                    if (expect - got).abs() > JUMP_CONSISTENCY_TOL * scale {
                        return Err(Error::InvalidPath(format!(
                            "jump at stamp {i} is {got}, values differ by {expect}"
                        )));
                    }
                }
            }
        }
        Ok(path)
    }

    /// A constant path on the given stamps.
    pub fn constant(value: &[f64], times: Vec<f64>, interpolation: Interpolation) -> Result<Self> {
        let values = times.iter().flat_map(|_| value.iter().copied()).collect();
        Self::new(value.len(), times, values, interpolation)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn interpolation(&self) -> Interpolation {
        self.interpolation
    }

    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn horizon(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    pub fn value(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_jump(&self, i: usize) -> bool {
        self.jump_flags[i]
    }

    /// Stored jump at stamp `i` (zero when unflagged).
    pub fn jump(&self, i: usize) -> &[f64] {
        &self.jumps[i * self.dim..(i + 1) * self.dim]
    }

    pub fn jump_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.jump_flags.iter().enumerate().filter(|(_, f)| **f).map(|(i, _)| i)
    }

    /// `y(t_i-)`; equals `y(t_0)` at the first stamp.
    pub fn left_limit(&self, i: usize) -> Vec<f64> {
        if i == 0 {
            return self.value(0).to_vec();
        }
        match self.interpolation {
            Interpolation::PiecewiseConstant if !self.jump_flags[i] => self.value(i - 1).to_vec(),
            _ => self.value(i).iter().zip(self.jump(i)).map(|(v, j)| v - j).collect(),
        }
    }

    /// Left limit at a stamp as the linear model sees it: the value the
    /// path reaches continuously before the jump.
    pub(crate) fn approach_value(&self, i: usize) -> Vec<f64> {
        self.value(i).iter().zip(self.jump(i)).map(|(v, j)| v - j).collect()
    }

    /// Index of the last stamp `<= t`.
    pub fn index_at(&self, t: f64) -> Result<usize> {
        if t < self.start() || t > self.horizon() || t.is_nan() {
            return Err(Error::BeyondHorizon { t, horizon: self.horizon() });
        }
        Ok(self.times.partition_point(|s| *s <= t) - 1)
    }

    /// Right-continuous value at time `t` under the declared interpolation.
    pub fn value_at(&self, t: f64) -> Result<Vec<f64>> {
        let i = self.index_at(t)?;
        if self.times[i] == t || self.interpolation == Interpolation::PiecewiseConstant {
            return Ok(self.value(i).to_vec());
        }
        let target = self.approach_value(i + 1);
        let w = (t - self.times[i]) / (self.times[i + 1] - self.times[i]);
        Ok(self.value(i).iter().zip(&target).map(|(a, b)| a + w * (b - a)).collect())
    }

    /// `sup_i |y(t_i) - a|` together with left limits.
    pub fn sup_distance_from(&self, a: &[f64]) -> f64 {
        (0..self.len())
            .flat_map(|i| [self.value(i).to_vec(), self.left_limit(i)])
            .map(|v| v.iter().zip(a).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    /// Writes `time,x1..xd,jump` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let cols: Vec<String> = (1..=self.dim).map(|k| format!("x{k}")).collect();
        writeln!(w, "time,{},jump", cols.join(","))?;
        for i in 0..self.len() {
            let vals: Vec<String> = self.value(i).iter().map(|v| format!("{v}")).collect();
            writeln!(w, "{},{},{}", self.times[i], vals.join(","), u8::from(self.jump_flags[i]))?;
        }
        Ok(())
    }
}

/// Bounded-variation path with its running variation `|k|_t` and the
/// initial atom `k_0`.
#[derive(Clone, Debug, PartialEq)]
pub struct BVPath {
    base: CadlagPath,
    variation: Vec<f64>,
}

impl BVPath {
    /// Variation measured from the stored discretization: the continuous
    /// movement `|k(t_i-) - k(t_{i-1})|` plus `|Δk(t_i)|` per stamp.
    pub fn from_path(base: CadlagPath) -> Self {
        let mut variation = Vec::with_capacity(base.len());
        variation.push(0.0);
        let mut acc = 0.0;
        for i in 1..base.len() {
            let approach = base.approach_value(i);
            let cont = norm_between(&approach, base.value(i - 1));
            let jump = norm(base.jump(i));
            acc += cont + jump;
            variation.push(acc);
        }
        BVPath { base, variation }
    }

    /// A path whose running variation is supplied by the caller (e.g. when
    /// several pushes happen between stamps).
    pub fn with_variation(base: CadlagPath, variation: Vec<f64>) -> Result<Self> {
        if variation.len() != base.len() {
            return Err(Error::InvalidPath("one variation entry per stamp is required".into()));
        }
        if variation[0] != 0.0 || variation.windows(2).any(|w| w[1] < w[0]) || !variation.iter().all(|v| v.is_finite())
        {
            return Err(Error::InvalidPath("running variation must start at 0 and be nondecreasing".into()));
        }
        let lower = BVPath::from_path(base.clone());
        for (i, (v, lo)) in variation.iter().zip(&lower.variation).enumerate() {
            if *v + 1e-9 * (1.0 + lo) < *lo {
                return Err(Error::InvalidPath(format!(
                    "declared variation {v} at stamp {i} is below the increment sum {lo}"
                )));
            }
        }
        Ok(BVPath { base, variation })
    }

    pub fn base(&self) -> &CadlagPath {
        &self.base
    }

    pub fn initial_value(&self) -> &[f64] {
        self.base.value(0)
    }

    /// `|k|_{t_i}` at every stamp.
    pub fn running_variation(&self) -> &[f64] {
        &self.variation
    }

    /// `(time, Δk)` for every jump on `[0, T]`, including the atom `k_0` at
    /// the origin when it is nonzero.
    pub fn jump_list(&self) -> Vec<(f64, Vec<f64>)> {
        let mut out = Vec::new();
        if norm(self.initial_value()) > 0.0 {
            out.push((self.base.start(), self.initial_value().to_vec()));
        }
        out.extend(self.base.jump_indices().map(|i| (self.base.times()[i], self.base.jump(i).to_vec())));
        out
    }

    /// Total variation on `(0, t]`, or on `[0, t]` when `closed` (which adds
    /// `|k_0|`).
    pub fn variation(&self, t: f64, closed: bool) -> Result<f64> {
        let i = self.base.index_at(t)?;
        let mut v = self.variation[i];
        if self.base.times()[i] < t && self.base.interpolation() == Interpolation::PiecewiseLinear {
            let at = self.base.value_at(t)?;
            v += norm_between(&at, self.base.value(i));
        }
        if closed {
            v += norm(self.initial_value());
        }
        Ok(v)
    }

    /// Pointwise sum of two paths on the same grid.
    pub fn sum(&self, other: &BVPath) -> Result<BVPath> {
        let (a, b) = (&self.base, &other.base);
        if a.times() != b.times() || a.dim() != b.dim() {
            return Err(Error::GridMismatch("paths must share stamps and dimension".into()));
        }
        if a.interpolation() != b.interpolation() {
            return Err(Error::GridMismatch("paths must share the interpolation rule".into()));
        }
        let values = a.values().iter().zip(b.values()).map(|(x, y)| x + y).collect();
        let flags: Vec<bool> = (0..a.len()).map(|i| a.is_jump(i) || b.is_jump(i)).collect();
        let jumps = a.jumps.iter().zip(&b.jumps).map(|(x, y)| x + y).collect();
        let base = CadlagPath::with_jumps(a.dim(), a.times().to_vec(), values, flags, jumps, a.interpolation())?;
        Ok(BVPath::from_path(base))
    }
}

/// `∫ e^{-λs} h_s d|k|_s` over `(0, T]`, plus `h_0 |k_0|` when
/// `closed_at_zero`.
///
/// The continuous part of each increment is weighted by the trapezoid of
/// `e^{-λs} h_s` over the step; jump parts are weighted at the jump time.
/// Only stamps `<= T` contribute.
pub fn discounted_stieltjes_integral(
    h: &CadlagPath,
    k: &BVPath,
    lambda: f64,
    horizon: f64,
    closed_at_zero: bool,
) -> Result<f64> {
    if h.dim() != 1 {
        return Err(Error::InvalidPath("integrand must be scalar".into()));
    }
    if h.times() != k.base().times() {
        return Err(Error::GridMismatch("integrand and integrator must share stamps".into()));
    }
    if horizon > k.base().horizon() {
        return Err(Error::BeyondHorizon { t: horizon, horizon: k.base().horizon() });
    }
    let times = h.times();
    let var = k.running_variation();
    let weight = |t: f64| (-lambda * t).exp();
    let mut total = 0.0;
    for i in 1..times.len() {
        if times[i] > horizon {
            break;
        }
        let dv = var[i] - var[i - 1];
        if dv == 0.0 {
            continue;
        }
        let jump = norm(k.base().jump(i)).min(dv);
        let cont = dv - jump;
        let h_left = h.left_limit(i)[0];
        total += cont * 0.5 * (weight(times[i - 1]) * h.value(i - 1)[0] + weight(times[i]) * h_left);
        total += jump * weight(times[i]) * h.value(i)[0];
    }
    if closed_at_zero {
        total += weight(times[0]) * h.value(0)[0] * norm(k.initial_value());
    }
    Ok(total)
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|c| c * c).sum::<f64>().sqrt()
}

pub(crate) fn norm_between(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// A uniform base grid on `[0, horizon]`. Simulators insert event times
/// between its stamps.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeGrid {
    pub horizon: f64,
    pub steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        let grid = TimeGrid { horizon, steps };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon.is_finite() && self.horizon > 0.0) || self.steps == 0 {
            return Err(Error::InvalidArgument(format!(
                "grid needs a finite positive horizon and at least one step (horizon {}, steps {})",
                self.horizon, self.steps
            )));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    /// Stamp `i`; the last stamp is exactly the horizon.
    pub fn time(&self, i: usize) -> f64 {
        if i >= self.steps {
            self.horizon
        } else {
            self.horizon * i as f64 / self.steps as f64
        }
    }

    pub fn times(&self) -> Vec<f64> {
        uniform_times(self.horizon, self.steps)
    }

    /// The same horizon with `factor` times as many steps.
    pub fn refined(&self, factor: usize) -> TimeGrid {
        TimeGrid { horizon: self.horizon, steps: self.steps * factor.max(1) }
    }
}

/// Uniform stamps `0, T/n, ..., T`.
pub fn uniform_times(horizon: f64, steps: usize) -> Vec<f64> {
    (0..=steps)
        .map(|i| if i == steps { horizon } else { horizon * i as f64 / steps as f64 })
        .collect()
}
