//! Pointwise boundary thinness and the interior cone test.
//!
//! `mu_delta` measures how thick the complement of a domain is near a
//! point `x`, as a capacity density seen from scales up to `δ|x|`:
//!
//! ```text
//! μ_δ(x) = sup over r in (0, δ|x|) of
//!          ( r^(1-n) * cap(B̄_r(x) \ Ω, B_2r(x)) )^(1/(p-1))
//! ```
//!
//! `cone_condition` checks a uniform interior thickness of the
//! complement along a radius ladder: on each annulus `B_{r/θ, r}` the
//! part of the complement in the middle band `B̄_{rθ^(-2/3), rθ^(-1/3)}`
//! must carry a capacity bounded away from zero relative to the solid
//! ball scaling `r^(n-p)`.

use super::diam::{scaled_obstacle_capacity, unit_reference_capacity};
use super::{capacity_with, solver::SolverOptions};
use crate::error::{Error, Result};
use crate::geometry::{norm, DomainSpec, FnSet, Grid, Point};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy)]
pub struct MuDeltaOptions {
    pub p: f64,
    /// Scale fraction: probe radii stay below `delta * |x|`.
    pub delta: f64,
    /// Number of ladder rungs.
    pub rungs: usize,
    /// Decades spanned downward from the largest probe radius.
    pub decades: f64,
    /// Local grid resolution, cells per probe radius.
    pub cells_per_radius: usize,
}

impl MuDeltaOptions {
    pub fn new(p: f64, delta: f64, n: usize) -> Self {
        MuDeltaOptions {
            p,
            delta,
            rungs: 16,
            decades: 2.0,
            cells_per_radius: if n == 3 { 8 } else { 12 },
        }
    }
}

/// Capacity density of the complement near `x`, maximized over a
/// geometric ladder of probe radii.
///
/// With the local condenser at unit scale, the physical quantity per
/// rung collapses to `cap_unit^(1/(p-1)) / r`.
pub fn mu_delta(domain: &DomainSpec, x: &Point, opts: &MuDeltaOptions) -> Result<f64> {
    if !(opts.delta > 0.0 && opts.delta < 1.0) {
        return Err(Error::Exponents(format!(
            "scale fraction delta must lie in (0, 1), got {}",
            opts.delta
        )));
    }
    if !(opts.p > 1.0) {
        return Err(Error::Exponents(format!("mu requires p > 1, got {}", opts.p)));
    }
    let xnorm = norm(x, domain.n);
    if xnorm == 0.0 {
        return Err(Error::Precondition(
            "mu is evaluated at points away from the distinguished boundary point".into(),
        ));
    }
    let r_top = opts.delta * xnorm;
    let mut best: f64 = 0.0;
    for k in 0..opts.rungs {
        let t = if opts.rungs == 1 {
            0.0
        } else {
            k as f64 / (opts.rungs - 1) as f64
        };
        let r = r_top * 10f64.powf(-opts.decades * t);
        let cap = scaled_obstacle_capacity(domain, x, r, opts.p, opts.cells_per_radius)?;
        let value = cap.value.powf(1.0 / (opts.p - 1.0)) / r;
        best = best.max(value);
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConeVerdict {
    /// The capacity stays above the threshold on every rung.
    Positive,
    /// At least one rung drops below the threshold.
    Degenerate,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConeConditionReport {
    pub ladder: Vec<f64>,
    /// `r^(p-n) * cap` per rung (unit-scale condenser value).
    pub values: Vec<f64>,
    /// Smallest rung value divided by the unit ball-in-ball reference.
    pub normalized_min: f64,
    pub threshold: f64,
    pub verdict: ConeVerdict,
}

/// Checks the interior thickness condition along a geometric radius
/// ladder.  `theta > 1` is the annulus aspect; the threshold is relative
/// to `cap(B̄_1, B_2)` at the same resolution.
pub fn cone_condition(
    domain: &DomainSpec,
    theta: f64,
    p: f64,
    ladder: &[f64],
    cells_per_unit: usize,
    threshold: f64,
) -> Result<ConeConditionReport> {
    if !(theta > 1.0) || !theta.is_finite() {
        return Err(Error::Exponents(format!("annulus aspect theta must exceed 1, got {theta}")));
    }
    if ladder.is_empty() {
        return Err(Error::Precondition("cone condition needs a nonempty radius ladder".into()));
    }
    let n = domain.n;
    let h = 1.0 / cells_per_unit as f64;
    let band_lo = theta.powf(-2.0 / 3.0);
    let band_hi = theta.powf(-1.0 / 3.0);
    // The condenser needs free nodes between the band and both annulus
    // boundaries.
    if band_hi > 1.0 - 2.0 * h || band_lo < 1.0 / theta + 2.0 * h {
        return Err(Error::Mesh(format!(
            "resolution {cells_per_unit} cells per radius too coarse to separate the band for theta = {theta}"
        )));
    }
    let mut values = Vec::with_capacity(ladder.len());
    for &r in ladder {
        if !(r > 0.0) {
            return Err(Error::Precondition(format!("ladder radius must be positive, got {r}")));
        }
        values.push(band_obstacle_capacity(domain, r, theta, p, cells_per_unit)?);
    }
    let reference = unit_reference_capacity(n, p, cells_per_unit)?;
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let normalized_min = min / reference;
    let verdict = if normalized_min >= threshold {
        ConeVerdict::Positive
    } else {
        ConeVerdict::Degenerate
    };
    Ok(ConeConditionReport {
        ladder: ladder.to_vec(),
        values,
        normalized_min,
        threshold,
        verdict,
    })
}

/// Unit-scale capacity of the band obstacle: compact part
/// `B̄_{θ^(-2/3), θ^(-1/3)} \ Ω` (scaled by `r`), open part the annulus
/// `B_{1/θ, 1}`.  Equals `r^(p-n) cap` of the physical condenser.
pub fn band_obstacle_capacity(
    domain: &DomainSpec,
    r: f64,
    theta: f64,
    p: f64,
    cells_per_unit: usize,
) -> Result<f64> {
    let n = domain.n;
    let h = 1.0 / cells_per_unit as f64;
    let band_lo = theta.powf(-2.0 / 3.0);
    let band_hi = theta.powf(-1.0 / 3.0);
    let hole = 1.0 / theta;
    let all = FnSet { f: |_: &Point| true, n };
    let grid = Grid::symmetric_box(&all, 1.0 + 2.0 * h, h)?;
    let len = grid.len();
    let mut k_mask = vec![false; len];
    let mut omega = vec![false; len];
    let mut k_count = 0;
    for idx in 0..len {
        let xi = grid.pos(idx);
        let rad = norm(&xi, n);
        if rad > hole && rad < 1.0 {
            omega[idx] = true;
            if rad >= band_lo && rad <= band_hi {
                let y = [r * xi[0], r * xi[1], r * xi[2]];
                if !domain.contains(&y) {
                    k_mask[idx] = true;
                    k_count += 1;
                }
            }
        }
    }
    if k_count == 0 {
        return Ok(0.0);
    }
    let opts = SolverOptions {
        cg_tol: 1e-9,
        ..SolverOptions::default()
    };
    Ok(capacity_with(&grid, &k_mask, &omega, p, &opts)?.value)
}
