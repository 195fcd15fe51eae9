//! The ε-essential inner diameter of an open set.
//!
//! A radius `r` is essentially inside `ω` at `x` when the obstacle
//! `B̄_r(x) \ ω` is capacity-thin relative to the full ball:
//!
//! ```text
//! cap(B̄_r(x) \ ω, B_2r(x)) < ε · cap(B̄_r, B_2r)
//! ```
//!
//! The ε-essential inner diameter is the supremum of such radii over
//! `x ∈ ω`.  Small holes and slits are transparent to it, which is what
//! makes the quantity useful for sets with paper-thin defects.
//!
//! All local condensers are solved on unit-scale grids: the ball is
//! rescaled to radius one, so a fixed `cells_per_radius` gives every
//! probe radius the same relative resolution and the capacity ratio is
//! scale-exact by construction.

use super::solver::SolverOptions;
use super::{capacity_with, CapacityResult};
use crate::error::{Error, Result};
use crate::geometry::{norm, FnSet, Grid, Point, PointSet};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::sync::{Mutex, OnceLock};

#[derive(Debug, Clone, Copy)]
pub struct DiamEpsOptions {
    /// Capacity share below which an obstacle counts as thin.
    pub eps: f64,
    pub p: f64,
    /// Local grid resolution: cells per probe radius.
    pub cells_per_radius: usize,
    /// Cap on candidate centers drawn from the carrier grid.
    pub max_centers: usize,
    /// Relative width at which the radius bracket stops shrinking.
    pub rel_tol: f64,
    /// Points of the coarse radius ladder scanned before bracketing.
    pub scan_points: usize,
}

impl DiamEpsOptions {
    pub fn new(eps: f64, p: f64, n: usize) -> Self {
        DiamEpsOptions {
            eps,
            p,
            cells_per_radius: if n == 3 { 8 } else { 12 },
            max_centers: 48,
            rel_tol: 0.01,
            scan_points: 12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DiamStatus {
    /// The bracket converged inside the probed range.
    Resolved,
    /// The criterion still holds at the largest probe radius; the value
    /// is that radius (the set is essentially as wide as its carrier).
    AtUpperBound,
    /// No lattice node of the carrier lies in the set.
    EmptySet,
    /// The criterion fails already at the smallest resolvable radius;
    /// the diameter is below grid resolution and no value is reported.
    Unresolved,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiamEpsResult {
    pub value: f64,
    pub status: DiamStatus,
    pub centers_used: usize,
    /// Number of local capacity solves performed.
    pub evaluations: usize,
}

impl DiamEpsResult {
    /// The diameter as a usable number, or an error for the two
    /// non-value states.
    pub fn require_value(&self) -> Result<f64> {
        match self.status {
            DiamStatus::Resolved | DiamStatus::AtUpperBound => Ok(self.value),
            DiamStatus::EmptySet => Err(Error::Precondition(
                "essential diameter of an empty set".into(),
            )),
            DiamStatus::Unresolved => Err(Error::NoConvergence(
                "essential diameter below grid resolution".into(),
            )),
        }
    }
}

/// Capacity of the unit-scale obstacle condenser at center `x`, probe
/// radius `rho`: `cap(B̄_1 \ ω_scaled, B_2)` where `ω_scaled` is `set`
/// viewed in coordinates `ξ = (y - x) / rho`.
///
/// The physical capacity at scale `rho` is `rho^(n-p)` times this value.
pub fn scaled_obstacle_capacity(
    set: &dyn PointSet,
    x: &Point,
    rho: f64,
    p: f64,
    m: usize,
) -> Result<CapacityResult> {
    let n = set.dim();
    let h = 1.0 / m as f64;
    let all = FnSet { f: |_: &Point| true, n };
    let grid = Grid::symmetric_box(&all, 2.0 + 2.0 * h, h)?;
    let len = grid.len();
    let mut k_mask = vec![false; len];
    let mut omega = vec![false; len];
    let mut k_count = 0;
    for idx in 0..len {
        let xi = grid.pos(idx);
        let r = norm(&xi, n);
        if r < 2.0 {
            omega[idx] = true;
        }
        if r <= 1.0 {
            let y = [
                x[0] + rho * xi[0],
                x[1] + rho * xi[1],
                x[2] + rho * xi[2],
            ];
            if !set.contains(&y) {
                k_mask[idx] = true;
                k_count += 1;
            }
        }
    }
    if k_count == 0 {
        return Ok(CapacityResult {
            value: 0.0,
            iterations: 0,
            residual: 0.0,
            potential: vec![0.0; len],
        });
    }
    capacity_with(&grid, &k_mask, &omega, p, &local_solver_options())
}

fn local_solver_options() -> SolverOptions {
    SolverOptions {
        cg_tol: 1e-9,
        ..SolverOptions::default()
    }
}

/// `cap(B̄_1, B_2)` on the same unit-scale grid family, cached per
/// `(m, p, n)`.  This is the denominator of every obstacle ratio; using
/// the same discretization for numerator and denominator cancels the
/// leading discretization error.
pub fn unit_reference_capacity(n: usize, p: f64, m: usize) -> Result<f64> {
    static CACHE: OnceLock<Mutex<BTreeMap<(usize, u64, usize), f64>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(BTreeMap::new()));
    let key = (n, p.to_bits(), m);
    if let Some(v) = cache.lock().unwrap().get(&key) {
        return Ok(*v);
    }
    let empty = FnSet { f: |_: &Point| false, n };
    let res = scaled_obstacle_capacity(&empty, &[0.0; 3], 1.0, p, m)?;
    cache.lock().unwrap().insert(key, res.value);
    Ok(res.value)
}

/// Obstacle capacity share at `(x, rho)`: the numerator condenser
/// capacity divided by the full-ball reference, both at unit scale.
pub fn obstacle_ratio(set: &dyn PointSet, x: &Point, rho: f64, p: f64, m: usize) -> Result<f64> {
    let cap = scaled_obstacle_capacity(set, x, rho, p, m)?;
    let reference = unit_reference_capacity(set.dim(), p, m)?;
    Ok(cap.value / reference)
}

/// Estimates the ε-essential inner diameter of `set`.
///
/// Candidate centers are the carrier nodes inside the set (deterministic
/// stride subsample).  A coarse geometric ladder locates the largest
/// radius where the thinness criterion holds for some center, then the
/// bracket is shrunk to relative width `rel_tol`; the returned value is
/// the last verified radius, a lower estimate of the supremum.
pub fn diam_eps(set: &dyn PointSet, carrier: &Grid, opts: &DiamEpsOptions) -> Result<DiamEpsResult> {
    if !(opts.eps > 0.0 && opts.eps < 1.0) {
        return Err(Error::Exponents(format!(
            "thinness threshold must lie in (0, 1), got {}",
            opts.eps
        )));
    }
    if !(opts.p > 1.0) {
        return Err(Error::Exponents(format!("diameter requires p > 1, got {}", opts.p)));
    }
    let centers: Vec<Point> = subsample_centers(carrier, opts.max_centers);
    if centers.is_empty() {
        return Ok(DiamEpsResult {
            value: 0.0,
            status: DiamStatus::EmptySet,
            centers_used: 0,
            evaluations: 0,
        });
    }
    let n = set.dim();
    let mut extent2 = 0.0;
    for d in 0..n {
        let len = carrier.dims[d] as f64 * carrier.h;
        extent2 += len * len;
    }
    let hi = extent2.sqrt();
    let lo = carrier.h;
    let mut evals = 0usize;

    let holds_at = |rho: f64, evals: &mut usize| -> Result<bool> {
        for x in &centers {
            *evals += 1;
            let ratio = obstacle_ratio(set, x, rho, opts.p, opts.cells_per_radius)?;
            if ratio < opts.eps {
                return Ok(true);
            }
        }
        Ok(false)
    };

    // Coarse geometric scan from the top down.
    let scan = opts.scan_points.max(4);
    let mut bracket: Option<(f64, f64)> = None; // (holds, fails)
    let mut prev = None;
    for k in 0..scan {
        let t = k as f64 / (scan - 1) as f64;
        let rho = hi * (lo / hi).powf(t);
        if holds_at(rho, &mut evals)? {
            match prev {
                None => {
                    return Ok(DiamEpsResult {
                        value: hi,
                        status: DiamStatus::AtUpperBound,
                        centers_used: centers.len(),
                        evaluations: evals,
                    });
                }
                Some(fail_rho) => {
                    bracket = Some((rho, fail_rho));
                    break;
                }
            }
        } else {
            prev = Some(rho);
        }
    }
    let (mut ok_rho, mut fail_rho) = match bracket {
        Some(b) => b,
        None => {
            return Ok(DiamEpsResult {
                value: 0.0,
                status: DiamStatus::Unresolved,
                centers_used: centers.len(),
                evaluations: evals,
            });
        }
    };
    while fail_rho / ok_rho > 1.0 + opts.rel_tol {
        let mid = (ok_rho * fail_rho).sqrt();
        if holds_at(mid, &mut evals)? {
            ok_rho = mid;
        } else {
            fail_rho = mid;
        }
    }
    Ok(DiamEpsResult {
        value: ok_rho,
        status: DiamStatus::Resolved,
        centers_used: centers.len(),
        evaluations: evals,
    })
}

/// Candidate centers: the deepest interior nodes (by lattice distance to
/// the complement) followed by an even stride sample for coverage.  The
/// supremum over `x` is usually attained deep inside the set, so ranking
/// by depth matters more than density.
fn subsample_centers(carrier: &Grid, max_centers: usize) -> Vec<Point> {
    let count = carrier.inside_count();
    if count == 0 {
        return Vec::new();
    }
    let depth = depth_transform(carrier);
    let walk = carrier.walk();
    let mut order: Vec<usize> = carrier.inside_nodes().collect();
    order.sort_by_key(|&idx| std::cmp::Reverse(depth[idx]));
    // Up to eight deep representatives, kept apart from each other.
    let mut picked: Vec<usize> = Vec::new();
    for &idx in &order {
        if picked.len() >= 8 {
            break;
        }
        let (i, j, k) = walk.coords(idx);
        let sep = (depth[idx] / 2).max(2) as isize;
        let far_enough = picked.iter().all(|&q| {
            let (qi, qj, qk) = walk.coords(q);
            let di = (i as isize - qi as isize).abs();
            let dj = (j as isize - qj as isize).abs();
            let dk = (k as isize - qk as isize).abs();
            di.max(dj).max(dk) >= sep
        });
        if far_enough {
            picked.push(idx);
        }
    }
    let remaining = max_centers.saturating_sub(picked.len()).max(1);
    let stride = count.div_ceil(remaining).max(1);
    for idx in carrier.inside_nodes().step_by(stride) {
        if !picked.contains(&idx) {
            picked.push(idx);
        }
    }
    picked.iter().map(|&idx| carrier.pos(idx)).collect()
}

/// Multi-source breadth-first distance (in lattice steps) from the
/// complement; box faces count as complement.
fn depth_transform(carrier: &Grid) -> Vec<u32> {
    let walk = carrier.walk();
    let len = walk.len();
    let mut depth = vec![u32::MAX; len];
    let mut queue = std::collections::VecDeque::new();
    for idx in 0..len {
        if !carrier.is_inside(idx) {
            depth[idx] = 0;
            queue.push_back(idx);
        }
    }
    let n = carrier.n;
    let dims = carrier.dims;
    // Box faces border the implicit outside; seed them at distance one
    // so a set filling the whole box still gets a centered ordering.
    for idx in 0..len {
        if depth[idx] == u32::MAX {
            let (i, j, k) = walk.coords(idx);
            let on_face = i == 0
                || i + 1 == dims[0]
                || j == 0
                || j + 1 == dims[1]
                || (n == 3 && (k == 0 || k + 1 == dims[2]));
            if on_face {
                depth[idx] = 1;
                queue.push_back(idx);
            }
        }
    }
    while let Some(idx) = queue.pop_front() {
        let (i, j, k) = walk.coords(idx);
        let d = depth[idx];
        let push = |ii: isize, jj: isize, kk: isize, queue: &mut std::collections::VecDeque<usize>, depth: &mut Vec<u32>| {
            if ii < 0 || jj < 0 || kk < 0 {
                return;
            }
            let (ii, jj, kk) = (ii as usize, jj as usize, kk as usize);
            if ii >= dims[0] || jj >= dims[1] || kk >= dims[2] {
                return;
            }
            let nb = walk.flat(ii, jj, kk);
            if depth[nb] == u32::MAX {
                depth[nb] = d + 1;
                queue.push_back(nb);
            }
        };
        push(i as isize - 1, j as isize, k as isize, &mut queue, &mut depth);
        push(i as isize + 1, j as isize, k as isize, &mut queue, &mut depth);
        push(i as isize, j as isize - 1, k as isize, &mut queue, &mut depth);
        push(i as isize, j as isize + 1, k as isize, &mut queue, &mut depth);
        if n == 3 {
            push(i as isize, j as isize, k as isize - 1, &mut queue, &mut depth);
            push(i as isize, j as isize, k as isize + 1, &mut queue, &mut depth);
        }
    }
    // Interior nodes on a grid with no complement at all: give them the
    // box-boundary distance so ordering still prefers the middle.
    for idx in 0..len {
        if depth[idx] == u32::MAX {
            depth[idx] = 0;
        }
    }
    depth
}
