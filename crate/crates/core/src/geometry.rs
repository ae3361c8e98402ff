//! Bounded convex domains with closed-form (or safeguarded root-find)
//! projections.
//!
//! Every map here is defined on all of `R^d`: `project` returns the nearest
//! point of the closure, `dist` the distance to the closure, and
//! `inward_normal` the unit vector `(project(x) - x) / dist(x)` for exterior
//! points and the inward normal of the boundary for boundary points.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Relative boundary tolerance; the absolute tolerance is this times the
/// domain diameter.
pub const BOUNDARY_REL_TOL: f64 = 1e-10;

const ELLIPSOID_ROOT_TOL: f64 = 1e-12;

// Points produced by a projection may sit a few ulps outside the closure;
// they must project onto themselves.
const INSIDE_SLACK: f64 = 1.0 + 8.0 * f64::EPSILON;
const ELLIPSOID_LEVEL_SLACK: f64 = 1e-11;

/// Shape parameters of a convex domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum Shape {
    /// The open interval `(a, b)` in one dimension.
    Interval { a: f64, b: f64 },
    Ball { center: Vec<f64>, radius: f64 },
    /// Axis-aligned ellipsoid `sum_i ((x_i - c_i) / s_i)^2 < 1`.
    Ellipsoid { center: Vec<f64>, semi_axes: Vec<f64> },
}

/// A validated bounded convex C^2 domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Shape", into = "Shape")]
pub struct ConvexDomain {
    shape: Shape,
    dim: usize,
    eps_bd: f64,
}

impl TryFrom<Shape> for ConvexDomain {
    type Error = Error;

    fn try_from(shape: Shape) -> Result<Self> {
        ConvexDomain::new(shape)
    }
}

impl From<ConvexDomain> for Shape {
    fn from(d: ConvexDomain) -> Shape {
        d.shape
    }
}

fn all_finite(v: &[f64]) -> bool {
    v.iter().all(|c| c.is_finite())
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|c| c * c).sum::<f64>().sqrt()
}

impl ConvexDomain {
    pub fn new(shape: Shape) -> Result<Self> {
        let dim = match &shape {
            Shape::Interval { a, b } => {
                if !(a.is_finite() && b.is_finite() && a < b) {
                    return Err(Error::InvalidDomain(format!(
                        "interval needs finite a < b, got ({a}, {b})"
                    )));
                }
                1
            }
            Shape::Ball { center, radius } => {
                if center.is_empty() || !all_finite(center) {
                    return Err(Error::InvalidDomain("ball center must be a finite point".into()));
                }
                if !(radius.is_finite() && *radius > 0.0) {
                    return Err(Error::InvalidDomain(format!(
                        "ball radius must be positive, got {radius}"
                    )));
                }
                center.len()
            }
            Shape::Ellipsoid { center, semi_axes } => {
                if center.is_empty() || !all_finite(center) {
                    return Err(Error::InvalidDomain(
                        "ellipsoid center must be a finite point".into(),
                    ));
                }
                if semi_axes.len() != center.len() {
                    return Err(Error::InvalidDomain(format!(
                        "ellipsoid has {} semi-axes for a {}-dimensional center",
                        semi_axes.len(),
                        center.len()
                    )));
                }
                if !semi_axes.iter().all(|s| s.is_finite() && *s > 0.0) {
                    return Err(Error::InvalidDomain("semi-axes must be positive".into()));
                }
                center.len()
            }
        };
        let mut domain = ConvexDomain { shape, dim, eps_bd: 0.0 };
        domain.eps_bd = BOUNDARY_REL_TOL * domain.diameter();
        Ok(domain)
    }

    pub fn interval(a: f64, b: f64) -> Result<Self> {
        Self::new(Shape::Interval { a, b })
    }

    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self> {
        Self::new(Shape::Ball { center, radius })
    }

    pub fn ellipsoid(center: Vec<f64>, semi_axes: Vec<f64>) -> Result<Self> {
        Self::new(Shape::Ellipsoid { center, semi_axes })
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn diameter(&self) -> f64 {
        match &self.shape {
            Shape::Interval { a, b } => b - a,
            Shape::Ball { radius, .. } => 2.0 * radius,
            Shape::Ellipsoid { semi_axes, .. } => 2.0 * semi_axes.iter().cloned().fold(0.0, f64::max),
        }
    }

    /// Absolute tolerance used for boundary membership tests.
    pub fn boundary_tolerance(&self) -> f64 {
        self.eps_bd
    }

    /// `sup { |x| : x in closure }`.
    pub fn max_norm(&self) -> f64 {
        match &self.shape {
            Shape::Interval { a, b } => a.abs().max(b.abs()),
            Shape::Ball { center, radius } => norm(center) + radius,
            Shape::Ellipsoid { center, semi_axes } => {
                norm(center) + semi_axes.iter().cloned().fold(0.0, f64::max)
            }
        }
    }

    /// A point in the interior.
    pub fn center(&self) -> Vec<f64> {
        match &self.shape {
            Shape::Interval { a, b } => vec![0.5 * (a + b)],
            Shape::Ball { center, .. } | Shape::Ellipsoid { center, .. } => center.clone(),
        }
    }

    /// Writes the nearest point of the closed domain into `out`.
    ///
    /// Hot path: no allocation, no dimension checks beyond debug asserts.
    pub fn project_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.dim);
        debug_assert_eq!(out.len(), self.dim);
        match &self.shape {
            Shape::Interval { a, b } => out[0] = x[0].clamp(*a, *b),
            Shape::Ball { center, radius } => {
                let r2: f64 = x.iter().zip(center).map(|(xi, ci)| (xi - ci) * (xi - ci)).sum();
                if r2 <= radius * radius * INSIDE_SLACK {
                    out.copy_from_slice(x);
                } else {
                    let scale = radius / r2.sqrt();
                    for ((o, xi), ci) in out.iter_mut().zip(x).zip(center) {
                        *o = ci + (xi - ci) * scale;
                    }
                }
            }
            Shape::Ellipsoid { center, semi_axes } => {
                let level: f64 = x
                    .iter()
                    .zip(center)
                    .zip(semi_axes)
                    .map(|((xi, ci), si)| ((xi - ci) / si).powi(2))
                    .sum();
                if level <= 1.0 + ELLIPSOID_LEVEL_SLACK {
                    out.copy_from_slice(x);
                } else {
                    ellipsoid_exterior_projection(x, center, semi_axes, out);
                }
            }
        }
    }

    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.project_into(x, &mut out);
        out
    }

    /// Distance from `x` to the closed domain (zero inside).
    pub fn dist(&self, x: &[f64]) -> f64 {
        match &self.shape {
            Shape::Interval { a, b } => (a - x[0]).max(x[0] - b).max(0.0),
            Shape::Ball { center, radius } => {
                let r2 = x.iter().zip(center).map(|(xi, ci)| (xi - ci) * (xi - ci)).sum::<f64>();
                if r2 <= radius * radius * INSIDE_SLACK {
                    0.0
                } else {
                    r2.sqrt() - radius
                }
            }
            Shape::Ellipsoid { .. } => {
                let p = self.project(x);
                x.iter().zip(&p).map(|(xi, pi)| (xi - pi) * (xi - pi)).sum::<f64>().sqrt()
            }
        }
    }

    /// Whether `x` lies in the closed domain (up to the boundary tolerance).
    pub fn contains(&self, x: &[f64]) -> bool {
        self.dist(x) <= self.eps_bd
    }

    /// Distance from an interior point to the boundary; zero for points
    /// outside the open domain.
    pub fn boundary_distance(&self, x: &[f64]) -> f64 {
        match &self.shape {
            Shape::Interval { a, b } => (x[0] - a).min(b - x[0]).max(0.0),
            Shape::Ball { center, radius } => (radius - norm_diff(x, center)).max(0.0),
            Shape::Ellipsoid { center, semi_axes } => {
                if self.dist(x) > 0.0 {
                    return 0.0;
                }
                let y = ellipsoid_interior_nearest(x, center, semi_axes);
                norm_diff(x, &y)
            }
        }
    }

    /// Whether `x` is within the boundary tolerance of the boundary.
    pub fn on_boundary(&self, x: &[f64]) -> bool {
        self.dist(x) <= self.eps_bd && self.near_boundary_from_inside(x)
    }

    fn near_boundary_from_inside(&self, x: &[f64]) -> bool {
        match &self.shape {
            Shape::Ellipsoid { center, semi_axes } => {
                // Radial distance bounds the true distance from above.
                let s = ellipsoid_level(x, center, semi_axes).sqrt();
                if s >= 1.0 {
                    return true;
                }
                if s == 0.0 {
                    return false;
                }
                norm_diff(x, center) * (1.0 - s) / s <= self.eps_bd
            }
            _ => self.boundary_distance(x) <= self.eps_bd,
        }
    }

    /// Inward unit normal at a boundary point `y` (no tolerance checks).
    pub fn boundary_normal_into(&self, y: &[f64], out: &mut [f64]) {
        match &self.shape {
            Shape::Interval { a, b } => {
                out[0] = if (y[0] - a).abs() <= (b - y[0]).abs() { 1.0 } else { -1.0 };
            }
            Shape::Ball { center, .. } => {
                for ((o, yi), ci) in out.iter_mut().zip(y).zip(center) {
                    *o = ci - yi;
                }
                normalize(out);
            }
            Shape::Ellipsoid { center, semi_axes } => {
                for (((o, yi), ci), si) in out.iter_mut().zip(y).zip(center).zip(semi_axes) {
                    *o = (ci - yi) / (si * si);
                }
                normalize(out);
            }
        }
    }

    /// `n(Pi(x))` for any `x` outside the open domain. Points strictly
    /// inside (farther than the boundary tolerance from the boundary) have
    /// no normal.
    pub fn inward_normal(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim, x.len())?;
        let mut out = vec![0.0; self.dim];
        let d = self.dist(x);
        if d > self.eps_bd {
            let p = self.project(x);
            for ((o, pi), xi) in out.iter_mut().zip(&p).zip(x) {
                *o = (pi - xi) / d;
            }
            normalize(&mut out);
            return Ok(out);
        }
        if d > 0.0 {
            let p = self.project(x);
            self.boundary_normal_into(&p, &mut out);
            return Ok(out);
        }
        if !self.near_boundary_from_inside(x) {
            return Err(Error::InteriorPoint(x.to_vec()));
        }
        let y = self.nearest_boundary_point(x);
        self.boundary_normal_into(&y, &mut out);
        Ok(out)
    }

    fn nearest_boundary_point(&self, x: &[f64]) -> Vec<f64> {
        match &self.shape {
            Shape::Interval { a, b } => {
                if x[0] - a <= b - x[0] {
                    vec![*a]
                } else {
                    vec![*b]
                }
            }
            Shape::Ball { center, radius } => {
                let r = norm_diff(x, center);
                if r == 0.0 {
                    let mut y = center.clone();
                    y[0] += radius;
                    return y;
                }
                x.iter().zip(center).map(|(xi, ci)| ci + (xi - ci) * radius / r).collect()
            }
            Shape::Ellipsoid { center, semi_axes } => ellipsoid_interior_nearest(x, center, semi_axes),
        }
    }

    /// The C^2 function `psi` with `D = {psi > 0}` and `grad psi = n` on the
    /// boundary. Only available for balls and intervals, where it is
    /// `radius - |x - center|`; `None` for ellipsoids.
    pub fn psi(&self, x: &[f64]) -> Option<f64> {
        match &self.shape {
            Shape::Interval { a, b } => Some(0.5 * (b - a) - (x[0] - 0.5 * (a + b)).abs()),
            Shape::Ball { center, radius } => Some(radius - norm_diff(x, center)),
            Shape::Ellipsoid { .. } => None,
        }
    }
}

fn norm_diff(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

fn normalize(v: &mut [f64]) {
    let n = norm(v);
    if n > 0.0 {
        v.iter_mut().for_each(|c| *c /= n);
    }
}

fn ellipsoid_level(x: &[f64], center: &[f64], semi_axes: &[f64]) -> f64 {
    x.iter()
        .zip(center)
        .zip(semi_axes)
        .map(|((xi, ci), si)| ((xi - ci) / si).powi(2))
        .sum()
}

/// `F(t) = sum_i (s_i z_i / (s_i^2 + t))^2 - 1`, decreasing in `t` on
/// `(-min s_i^2, inf)`, and its derivative.
fn lagrange_residual(z: &[f64], semi_axes: &[f64], t: f64) -> (f64, f64) {
    let mut f = -1.0;
    let mut df = 0.0;
    for (zi, si) in z.iter().zip(semi_axes) {
        let s2 = si * si;
        let q = s2 + t;
        let r = si * zi / q;
        f += r * r;
        df -= 2.0 * r * r / q;
    }
    (f, df)
}

/// Safeguarded Newton on the decreasing residual, bracket `[lo, hi]` with
/// `F(lo) >= 0 >= F(hi)`.
fn lagrange_root(z: &[f64], semi_axes: &[f64], mut lo: f64, mut hi: f64, start: f64) -> f64 {
    let mut t = start.clamp(lo, hi);
    for _ in 0..200 {
        let (f, df) = lagrange_residual(z, semi_axes, t);
        if f == 0.0 {
            return t;
        }
        if f > 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        if hi - lo <= ELLIPSOID_ROOT_TOL * (1.0 + t.abs()) {
            break;
        }
        let newton = if df < 0.0 { t - f / df } else { f64::NAN };
        t = if newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    t
}

fn ellipsoid_exterior_projection(x: &[f64], center: &[f64], semi_axes: &[f64], out: &mut [f64]) {
    let z: Vec<f64> = x.iter().zip(center).map(|(xi, ci)| xi - ci).collect();
    let smax = semi_axes.iter().cloned().fold(0.0, f64::max);
    let hi = smax * norm(&z);
    let t = lagrange_root(&z, semi_axes, 0.0, hi, 0.0);
    for (i, o) in out.iter_mut().enumerate() {
        let s2 = semi_axes[i] * semi_axes[i];
        *o = center[i] + s2 * z[i] / (s2 + t);
    }
}

/// Nearest boundary point to an interior point of an ellipsoid.
fn ellipsoid_interior_nearest(x: &[f64], center: &[f64], semi_axes: &[f64]) -> Vec<f64> {
    let z: Vec<f64> = x.iter().zip(center).map(|(xi, ci)| xi - ci).collect();
    let smin = semi_axes.iter().cloned().fold(f64::INFINITY, f64::min);
    let s2min = smin * smin;
    let min_idx: Vec<usize> = (0..z.len())
        .filter(|&i| (semi_axes[i] - smin).abs() <= 1e-15 * smin)
        .collect();
    let min_mass: f64 = min_idx.iter().map(|&i| z[i] * z[i]).sum();
    let point = |t: f64| -> Vec<f64> {
        (0..z.len())
            .map(|i| {
                let s2 = semi_axes[i] * semi_axes[i];
                center[i] + s2 * z[i] / (s2 + t)
            })
            .collect()
    };
    if min_mass > 0.0 {
        // The residual blows up at -s2min, so the root is bracketed by
        // (-s2min, 0); the endpoint itself is never evaluated.
        let t = lagrange_root(&z, semi_axes, -s2min, 0.0, -0.5 * s2min);
        return point(t);
    }
    // Degenerate case: the component along the shortest axes vanishes.
    let mut y = vec![0.0; z.len()];
    let mut level = 0.0;
    for i in (0..z.len()).filter(|i| !min_idx.contains(i)) {
        let s2 = semi_axes[i] * semi_axes[i];
        y[i] = s2 * z[i] / (s2 - s2min);
        level += (y[i] / semi_axes[i]).powi(2);
    }
    if level > 1.0 {
        let t = lagrange_root(&z, semi_axes, -s2min, 0.0, -0.5 * s2min);
        return point(t);
    }
    y[min_idx[0]] = smin * (1.0 - level).sqrt();
    y.iter().zip(center).map(|(yi, ci)| yi + ci).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn ball_projection_of_exterior_point() {
        let d = ConvexDomain::ball(vec![0.0, 0.0], 1.0).unwrap();
        assert_eq!(d.project(&[2.0, 0.0]), vec![1.0, 0.0]);
        assert_eq!(d.dist(&[2.0, 0.0]), 1.0);
        assert_eq!(d.inward_normal(&[2.0, 0.0]).unwrap(), vec![-1.0, 0.0]);
        let x = [3.0, -4.0];
        let n = d.inward_normal(&x).unwrap();
        assert_abs_diff_eq!(n[0], -0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(n[1], 0.8, epsilon = 1e-15);
    }

    #[test]
    fn interval_edge_cases() {
        let d = ConvexDomain::interval(0.0, 1.0).unwrap();
        assert_eq!(d.project(&[-0.7]), vec![0.0]);
        assert_eq!(d.dist(&[-0.3]), 0.3);
        assert_eq!(d.project(&[0.4]), vec![0.4]);
        assert_eq!(d.inward_normal(&[0.0]).unwrap(), vec![1.0]);
        assert_eq!(d.inward_normal(&[1.0]).unwrap(), vec![-1.0]);
        assert_eq!(d.inward_normal(&[1.5]).unwrap(), vec![-1.0]);
    }

    #[test]
    fn interior_normal_is_rejected() {
        let d = ConvexDomain::ball(vec![0.0, 0.0], 1.0).unwrap();
        assert!(matches!(d.inward_normal(&[0.2, 0.1]), Err(Error::InteriorPoint(_))));
        let n = d.inward_normal(&[1.0, 0.0]).unwrap();
        assert_eq!(n, vec![-1.0, 0.0]);
    }

    #[test]
    fn invalid_shapes_are_rejected() {
        assert!(ConvexDomain::interval(1.0, 1.0).is_err());
        assert!(ConvexDomain::ball(vec![0.0], -1.0).is_err());
        assert!(ConvexDomain::ellipsoid(vec![0.0, 0.0], vec![1.0]).is_err());
        assert!(ConvexDomain::ellipsoid(vec![0.0, 0.0], vec![1.0, 0.0]).is_err());
    }

    #[test]
    fn ellipsoid_projection_lands_on_surface() {
        let d = ConvexDomain::ellipsoid(vec![0.5, -0.25], vec![2.0, 0.5]).unwrap();
        let p = d.project(&[3.0, 1.0]);
        let level = ((p[0] - 0.5) / 2.0).powi(2) + ((p[1] + 0.25) / 0.5).powi(2);
        assert_abs_diff_eq!(level, 1.0, epsilon = 1e-10);
        // Normal at the projection is parallel to x - p.
        let n = d.inward_normal(&[3.0, 1.0]).unwrap();
        let mut m = vec![0.0; 2];
        d.boundary_normal_into(&p, &mut m);
        assert_abs_diff_eq!(n[0], m[0], epsilon = 1e-8);
        assert_abs_diff_eq!(n[1], m[1], epsilon = 1e-8);
    }

    #[test]
    fn ellipsoid_interior_distance_matches_brute_force() {
        let d = ConvexDomain::ellipsoid(vec![0.0, 0.0], vec![2.0, 1.0]).unwrap();
        for x in [[0.3, 0.2], [1.5, 0.1], [0.0, 0.5], [0.7, 0.0], [0.0, 0.0]] {
            let brute = (0..200_000)
                .map(|k| {
                    let th = k as f64 * std::f64::consts::TAU / 200_000.0;
                    ((2.0 * th.cos() - x[0]).powi(2) + (th.sin() - x[1]).powi(2)).sqrt()
                })
                .fold(f64::INFINITY, f64::min);
            assert_abs_diff_eq!(d.boundary_distance(&x), brute, epsilon = 1e-6);
        }
    }

    #[test]
    fn psi_matches_signed_distance_for_balls() {
        let d = ConvexDomain::ball(vec![1.0, 1.0], 2.0).unwrap();
        assert_eq!(d.psi(&[1.0, 1.0]), Some(2.0));
        assert_abs_diff_eq!(d.psi(&[4.0, 1.0]).unwrap(), -d.dist(&[4.0, 1.0]), epsilon = 1e-15);
        let e = ConvexDomain::ellipsoid(vec![0.0], vec![1.0]).unwrap();
        assert!(e.psi(&[0.0]).is_none());
    }

    #[test]
    fn serde_round_trip() {
        let d = ConvexDomain::ellipsoid(vec![0.0, 1.0], vec![1.0, 2.0]).unwrap();
        let s = serde_json::to_string(&d).unwrap();
        assert_eq!(s, r#"{"shape":"ellipsoid","center":[0.0,1.0],"semi_axes":[1.0,2.0]}"#);
        let back: ConvexDomain = serde_json::from_str(&s).unwrap();
        assert_eq!(back, d);
        assert!(serde_json::from_str::<ConvexDomain>(r#"{"shape":"interval","a":1,"b":0}"#).is_err());
        assert!(serde_json::from_str::<ConvexDomain>(r#"{"shape":"interval","a":0,"b":1,"c":2}"#).is_err());
    }
}
