//! The Skorokhod problem on a convex domain and its penalization.
//!
//! Reflection: between stamps the continuous change of `y` is added and the
//! result projected; at a jump `x_t = Π(x_{t-} + Δy_t)`. The initial push
//! `k_0 = Π(y_0) - y_0` handles exterior starts.
//!
//! Penalization: `x_n = y + k_n` with `dk_n = -n (x_n - Π(x_n)) dt`, integrated
//! per step by the exact flow `Π + (x - Π) e^{-n s}` (valid because `Π` is
//! constant along the normal segment).

use crate::error::{Error, Result};
use crate::geometry::ConvexDomain;
use crate::paths::{norm, BVPath, CadlagPath, Interpolation};

/// Relative tolerance for `x = y + k` in [`SkorokhodSolution::verify`].
const DECOMPOSITION_TOL: f64 = 1e-12;
/// Minimum cosine between a push and the inward normal.
const NORMAL_ALIGNMENT_TOL: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct SkorokhodSolution {
    pub x: CadlagPath,
    pub k: BVPath,
}

impl SkorokhodSolution {
    /// Checks the defining properties against the input path.
    pub fn verify(&self, domain: &ConvexDomain, y: &CadlagPath) -> Result<()> {
        let fail = |m: String| Err(Error::InvalidPath(m));
        let kp = self.k.base();
        if self.x.times() != y.times() || kp.times() != y.times() {
            return Err(Error::GridMismatch("solution and input use different stamps".into()));
        }
        let d = y.dim();
        let k0: Vec<f64> = domain.project(y.value(0)).iter().zip(y.value(0)).map(|(p, v)| p - v).collect();
        if k0.iter().zip(kp.value(0)).any(|(a, b)| (a - b).abs() > DECOMPOSITION_TOL * (1.0 + a.abs())) {
            return fail("k_0 differs from Π(y_0) - y_0".into());
        }
        let mut normal = vec![0.0; d];
        for i in 0..y.len() {
            let (x, yv, k) = (self.x.value(i), y.value(i), kp.value(i));
            for c in 0..d {
                let scale = 1.0 + yv[c].abs() + k[c].abs();
                if (x[c] - yv[c] - k[c]).abs() > DECOMPOSITION_TOL * scale {
                    return fail(format!("x != y + k at stamp {i}"));
                }
            }
            if !domain.contains(x) {
                return fail(format!("x leaves the closed domain at stamp {i}"));
            }
            if i == 0 {
                continue;
            }
            let approach_k = kp.approach_value(i);
            let cont = crate::paths::norm_between(&approach_k, kp.value(i - 1));
            let noise = DECOMPOSITION_TOL * (1.0 + norm(y.value(i)) + norm(kp.value(i)));
            if cont > noise && !domain.on_boundary(&self.x.approach_value(i)) {
                return fail(format!("k moves continuously away from the boundary at stamp {i}"));
            }
            if kp.is_jump(i) {
                let dk = kp.jump(i);
                let m = norm(dk);
                if m > 0.0 {
                    if !domain.on_boundary(x) {
                        return fail(format!("k jumps away from the boundary at stamp {i}"));
                    }
                    domain.boundary_normal_into(&domain.project(x), &mut normal);
                    let cos = dk.iter().zip(&normal).map(|(a, b)| a * b).sum::<f64>() / m;
                    if cos < 1.0 - NORMAL_ALIGNMENT_TOL {
                        return fail(format!("jump of k is not along the inward normal at stamp {i}"));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Solves the Skorokhod problem for `y` on its own stamps. The outputs use
/// the interpolation rule of `y`.
pub fn solve_reflection(domain: &ConvexDomain, y: &CadlagPath) -> Result<SkorokhodSolution> {
    crate::error::check_dim(domain.dim(), y.dim())?;
    let d = y.dim();
    let n = y.len();
    let mut xs = Vec::with_capacity(n * d);
    let mut ks = Vec::with_capacity(n * d);
    let mut x_flags = vec![false; n];
    let mut x_jumps = vec![0.0; n * d];
    let mut k_flags = vec![false; n];
    let mut k_jumps = vec![0.0; n * d];

    let mut x = domain.project(y.value(0));
    xs.extend_from_slice(&x);
    ks.extend(x.iter().zip(y.value(0)).map(|(a, b)| a - b));

    let mut pre = vec![0.0; d];
    let mut x_minus = vec![0.0; d];
    for i in 1..n {
        let approach = y.approach_value(i);
        let prev = y.value(i - 1);
        for c in 0..d {
            pre[c] = x[c] + (approach[c] - prev[c]);
        }
        domain.project_into(&pre, &mut x_minus);
        if y.is_jump(i) {
            let dy = y.jump(i);
            for c in 0..d {
                pre[c] = x_minus[c] + dy[c];
            }
            domain.project_into(&pre, &mut x);
            x_flags[i] = true;
            let mut moved = false;
            for c in 0..d {
                x_jumps[i * d + c] = x[c] - x_minus[c];
                let dk = x[c] - pre[c];
                k_jumps[i * d + c] = dk;
                moved |= dk != 0.0;
            }
            k_flags[i] = moved;
            if !moved {
                k_jumps[i * d..(i + 1) * d].iter_mut().for_each(|v| *v = 0.0);
            }
        } else {
            x.copy_from_slice(&x_minus);
        }
        xs.extend_from_slice(&x);
        ks.extend(x.iter().zip(y.value(i)).map(|(a, b)| a - b));
    }
    let mode = y.interpolation();
    let times = y.times().to_vec();
    let x_path = CadlagPath::with_jumps(d, times.clone(), xs, x_flags, x_jumps, mode)?;
    let k_path = CadlagPath::with_jumps(d, times, ks, k_flags, k_jumps, mode)?;
    Ok(SkorokhodSolution { x: x_path, k: BVPath::from_path(k_path) })
}

#[derive(Clone, Debug)]
pub struct PenalizedSolution {
    /// Piecewise linear between stamps; jumps of `y` are flagged.
    pub x: CadlagPath,
    /// Continuous; each step moves along a straight segment.
    pub k: BVPath,
    pub penalty: f64,
}

impl PenalizedSolution {
    /// `Π(x_n)` at every stamp.
    pub fn projected(&self, domain: &ConvexDomain) -> Vec<Vec<f64>> {
        (0..self.x.len()).map(|i| domain.project(self.x.value(i))).collect()
    }
}

/// Exact-flow penalization of `y` on `grid`.
///
/// `grid` must start at the first stamp of `y`, stay within its horizon and
/// contain every jump time of `y`.
pub fn solve_penalized(domain: &ConvexDomain, y: &CadlagPath, n: f64, grid: &[f64]) -> Result<PenalizedSolution> {
    crate::error::check_dim(domain.dim(), y.dim())?;
    if !(n.is_finite() && n > 0.0) {
        return Err(Error::InvalidArgument(format!("penalty {n} must be positive")));
    }
    if grid.is_empty() || grid[0] != y.start() || *grid.last().unwrap() > y.horizon() {
        return Err(Error::GridMismatch("grid must start at the path start and end within its horizon".into()));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::GridMismatch("grid must be strictly increasing".into()));
    }
    let last = *grid.last().unwrap();
    for j in y.jump_indices() {
        let t = y.times()[j];
        if t <= last && grid.binary_search_by(|g| g.total_cmp(&t)).is_err() {
            return Err(Error::GridMismatch(format!("grid misses the jump time {t}")));
        }
    }

    let d = y.dim();
    let m = grid.len();
    let mut xs = Vec::with_capacity(m * d);
    let mut ks = Vec::with_capacity(m * d);
    let mut flags = vec![false; m];
    let mut jumps = vec![0.0; m * d];

    let mut x = y.value(0).to_vec();
    let mut k = vec![0.0; d];
    xs.extend_from_slice(&x);
    ks.extend_from_slice(&k);
    let mut p = vec![0.0; d];
    let mut y_prev = y.value(0).to_vec();
    for i in 1..m {
        let (s, t) = (grid[i - 1], grid[i]);
        let stamp = y.times().binary_search_by(|g| g.total_cmp(&t)).ok();
        let (y_left, jump) = match stamp {
            Some(j) => (y.approach_value(j), y.is_jump(j).then(|| y.jump(j).to_vec())),
            None => (y.value_at(t)?, None),
        };
        let decay = (-n * (t - s)).exp();
        for c in 0..d {
            x[c] += y_left[c] - y_prev[c];
        }
        domain.project_into(&x, &mut p);
        for c in 0..d {
            let relaxed = p[c] + (x[c] - p[c]) * decay;
            k[c] += relaxed - x[c];
            x[c] = relaxed;
        }
        if let Some(dy) = jump {
            flags[i] = true;
            for c in 0..d {
                x[c] += dy[c];
                jumps[i * d + c] = dy[c];
            }
        }
        y_prev = match stamp {
            Some(j) => y.value(j).to_vec(),
            None => y_left,
        };
        xs.extend_from_slice(&x);
        ks.extend_from_slice(&k);
    }
    let times = grid.to_vec();
    let x_path = CadlagPath::with_jumps(d, times.clone(), xs, flags, jumps, Interpolation::PiecewiseLinear)?;
    let k_path = CadlagPath::new(d, times, ks, Interpolation::PiecewiseLinear)?;
    Ok(PenalizedSolution { x: x_path, k: BVPath::from_path(k_path), penalty: n })
}

/// Outcome of the a priori bound monitor.
#[derive(Clone, Debug, PartialEq)]
pub struct AprioriReport {
    /// Upper estimate of the càdlàg modulus `ω'_y(δ, T)` on the stored stamps.
    pub modulus: f64,
    pub precondition_met: bool,
    pub sup_deviation: f64,
    pub deviation_bound: f64,
    pub variation: f64,
    pub variation_bound: f64,
}

impl AprioriReport {
    pub fn holds(&self) -> bool {
        self.precondition_met && self.sup_deviation <= self.deviation_bound && self.variation <= self.variation_bound
    }

    pub fn status(&self) -> &'static str {
        if !self.precondition_met {
            "precondition failed"
        } else if self.holds() {
            "bounds hold"
        } else {
            "bound violated"
        }
    }
}

/// Compares a penalized solution with the bounds
/// `sup|x_n - a| ≤ 2√7 ([T/δ]+1) sup|y - a|` and
/// `|k_n|_T ≤ 55 ([T/δ]+1)^3 sup|y - a| / dist(a, ∂D)`,
/// valid when `ω'_y(δ, T) < dist(a, ∂D)/2`.
///
/// The modulus uses coordinate ranges, an upper estimate of the diameter, so
/// the precondition is checked conservatively.
pub fn apriori_bounds_check(
    domain: &ConvexDomain,
    y: &CadlagPath,
    solution: &PenalizedSolution,
    horizon: f64,
    delta: f64,
    a: &[f64],
) -> Result<AprioriReport> {
    crate::error::check_dim(domain.dim(), a.len())?;
    if horizon > y.horizon() || horizon > solution.x.horizon() {
        return Err(Error::BeyondHorizon { t: horizon, horizon: y.horizon().min(solution.x.horizon()) });
    }
    if !(delta > 0.0) {
        return Err(Error::InvalidArgument("modulus scale must be positive".into()));
    }
    let dist_a = domain.boundary_distance(a);
    if !(domain.contains(a) && dist_a > 0.0) {
        return Err(Error::InvalidArgument("reference point must lie in the open domain".into()));
    }
    let modulus = cadlag_modulus(y, delta, horizon);
    let count = (horizon / delta).floor() + 1.0;
    let sup_y = sup_deviation(y, a, horizon);
    let sup_x = sup_deviation(&solution.x, a, horizon);
    let variation = solution.k.variation(horizon, false)?;
    Ok(AprioriReport {
        modulus,
        precondition_met: modulus < dist_a / 2.0,
        sup_deviation: sup_x,
        deviation_bound: 2.0 * 7f64.sqrt() * count * sup_y,
        variation,
        variation_bound: 55.0 * count.powi(3) * sup_y / dist_a,
    })
}

fn sup_deviation(path: &CadlagPath, a: &[f64], horizon: f64) -> f64 {
    let mut sup: f64 = 0.0;
    for (i, t) in path.times().iter().enumerate() {
        if *t > horizon {
            break;
        }
        sup = sup.max(crate::paths::norm_between(path.value(i), a));
        if i > 0 {
            sup = sup.max(crate::paths::norm_between(&path.approach_value(i), a));
        }
    }
    sup
}

/// Dynamic program over partitions `0 = t_0 < ... < t_r = T` whose pieces,
/// except the last, are at least `δ` long. The oscillation of a piece
/// `[t_i, t_j)` covers the values at stamps `i..j` and the left limits at
/// `i+1..=j`.
fn cadlag_modulus(y: &CadlagPath, delta: f64, horizon: f64) -> f64 {
    let times: Vec<f64> = y.times().iter().copied().take_while(|t| *t <= horizon).collect();
    let m = times.len();
    let d = y.dim();
    if m == 1 {
        return 0.0;
    }
    let approach: Vec<Vec<f64>> = (0..m).map(|i| if i == 0 { y.value(0).to_vec() } else { y.approach_value(i) }).collect();
    // The horizon closes the last piece only when it is a stamp.
    let end_is_stamp = times[m - 1] == horizon;
    let mut best = vec![f64::INFINITY; m];
    best[0] = 0.0;
    let mut result = f64::INFINITY;
    let mut lo = vec![0.0; d];
    let mut hi = vec![0.0; d];
    for i in 0..m {
        if !best[i].is_finite() || (end_is_stamp && i == m - 1) {
            continue;
        }
        lo.copy_from_slice(y.value(i));
        hi.copy_from_slice(y.value(i));
        for j in i + 1..=m {
            if j < m {
                for c in 0..d {
                    lo[c] = lo[c].min(approach[j][c]);
                    hi[c] = hi[c].max(approach[j][c]);
                }
            }
            let osc = lo.iter().zip(&hi).map(|(l, h)| (h - l) * (h - l)).sum::<f64>().sqrt();
            let closes = if end_is_stamp { j == m - 1 } else { j == m };
            let cand = best[i].max(osc);
            if closes {
                result = result.min(cand);
                break;
            }
            if times[j] - times[i] >= delta && cand < best[j] {
                best[j] = cand;
            }
            for c in 0..d {
                lo[c] = lo[c].min(y.value(j)[c]);
                hi[c] = hi[c].max(y.value(j)[c]);
            }
        }
    }
    result
}
