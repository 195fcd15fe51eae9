//! Variational p-capacity of condensers on regular grids.
//!
//! The capacity of a compact set `K` inside an open set `ω` is the
//! infimum of `∫_ω |∇φ|^p` over smooth `φ` with compact support in `ω`
//! that equal one on a neighborhood of `K`.  Discretely, `K` and `ω` are
//! node masks on a grid, the admissible class pins nodes of `K` at one
//! and nodes outside `ω` at zero, and the infimum is taken over the
//! discrete energy of `solver`.
//!
//! Conventions carried over from the continuous object:
//! * the empty set has capacity zero;
//! * monotone in `K` and antitone in `ω`;
//! * scaling `(K, ω) → (λK, λω)` multiplies the value by `λ^(n-p)`;
//! * countably semiadditive in `K`.

mod diam;
mod laws;
mod mu;
pub(crate) mod solver;

pub use diam::{diam_eps, obstacle_ratio, unit_reference_capacity, DiamEpsOptions, DiamEpsResult, DiamStatus};
pub use laws::{check_capacity_laws, random_law_cases, LawCase, LawReport, LawTolerances, LawViolation};
pub use mu::{
    band_obstacle_capacity, cone_condition, mu_delta, ConeConditionReport, ConeVerdict,
    MuDeltaOptions,
};

use crate::error::{Error, Result};
use crate::geometry::Grid;
use serde::{Deserialize, Serialize};
use solver::{SolverOptions, FIXED_ONE, FIXED_ZERO, FREE};

/// Outcome of a capacity computation.
///
/// `value` is the discrete energy of the computed potential; `residual`
/// is the final relative residual of the inner linear solver (`p = 2`)
/// or the last relative energy decrease (`p ≠ 2`).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CapacityResult {
    pub value: f64,
    pub iterations: usize,
    pub residual: f64,
    /// Minimizing potential on the grid, clamped to `[0, 1]`.
    #[serde(skip)]
    pub potential: Vec<f64>,
}

/// Computes the p-capacity of the condenser `(K, ω)` described by node
/// masks over `grid`.
///
/// Requirements checked up front: masks must match the grid, `K ⊆ ω`,
/// and `K` must be separated from the complement of `ω` by at least one
/// layer of free nodes (the continuous object keeps a positive distance
/// between a compact `K` and `∂ω`).  An empty `K` short-circuits to
/// capacity zero.
pub fn capacity(grid: &Grid, k_mask: &[bool], omega_mask: &[bool], p: f64) -> Result<CapacityResult> {
    capacity_with(grid, k_mask, omega_mask, p, &SolverOptions::default())
}

pub(crate) fn capacity_with(
    grid: &Grid,
    k_mask: &[bool],
    omega_mask: &[bool],
    p: f64,
    opts: &SolverOptions,
) -> Result<CapacityResult> {
    if !(p > 1.0) || !p.is_finite() {
        return Err(Error::Exponents(format!("capacity requires p > 1, got {p}")));
    }
    let len = grid.len();
    if k_mask.len() != len || omega_mask.len() != len {
        return Err(Error::Precondition(format!(
            "mask length mismatch: grid has {len} nodes, masks have {} and {}",
            k_mask.len(),
            omega_mask.len()
        )));
    }
    let mut state = vec![FREE; len];
    let mut k_count = 0usize;
    for i in 0..len {
        if k_mask[i] {
            if !omega_mask[i] {
                return Err(Error::Precondition(
                    "compact set must be contained in the surrounding open set".into(),
                ));
            }
            state[i] = FIXED_ONE;
            k_count += 1;
        } else if !omega_mask[i] {
            state[i] = FIXED_ZERO;
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
    check_separation(grid, &state)?;
    let out = solver::minimize(grid, &state, p, opts);
    Ok(CapacityResult {
        value: out.energy,
        iterations: out.iterations,
        residual: out.residual,
        potential: out.v,
    })
}

/// No grid cell may contain both a node of `K` and a node outside `ω`:
/// that would put the unit jump across a single cell and means the
/// discrete condenser does not separate the sets.
fn check_separation(grid: &Grid, state: &[u8]) -> Result<()> {
    let strides = grid.walk().strides();
    let dims = grid.dims;
    let n = grid.n;
    let kmax = if n == 3 { dims[2] - 1 } else { 1 };
    for k in 0..kmax {
        for j in 0..dims[1] - 1 {
            for i in 0..dims[0] - 1 {
                let base = (k * dims[1] + j) * dims[0] + i;
                let mut has_one = false;
                let mut has_zero = false;
                let mut visit = |idx: usize| {
                    match state[idx] {
                        FIXED_ONE => has_one = true,
                        FIXED_ZERO => has_zero = true,
                        _ => {}
                    };
                };
                visit(base);
                for d in 0..n {
                    visit(base + strides[d]);
                }
                if has_one && has_zero {
                    return Err(Error::Precondition(
                        "compact set touches the boundary of the open set on the grid; refine the mesh or shrink the compact set"
                            .into(),
                    ));
                }
            }
        }
    }
    Ok(())
}
