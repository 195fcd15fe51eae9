//! Minimization of the discrete p-Dirichlet energy on box grids.
//!
//! For a grid function `phi` the energy is the midpoint quadrature of
//! `∫ |∇phi|^p` with one-sided differences per cell:
//!
//! ```text
//! E[phi] = h^(n-p) * Σ_cells ( Σ_axes (forward difference)^2 )^(p/2)
//! ```
//!
//! A cell is a node together with its forward neighbors along every axis.
//! For `p = 2` the energy is quadratic and a single preconditioned
//! conjugate-gradient solve minimizes it.  For other `p` a lagged
//! diffusivity loop is used: each sweep freezes the cell weights
//! `w = (|∇phi|^2 + eps^2)^((p-2)/2)`, solves the weighted quadratic
//! model, and damps the update until the true energy decreases.

use crate::geometry::Grid;

pub const FREE: u8 = 0;
pub const FIXED_ONE: u8 = 1;
pub const FIXED_ZERO: u8 = 2;

/// Solver knobs shared by every capacity computation.
#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    /// Relative residual target for conjugate gradients.
    pub cg_tol: f64,
    pub cg_max_iter: usize,
    /// Relative energy decrease below which the nonlinear loop stops.
    pub energy_tol: f64,
    pub max_outer: usize,
    /// Gradient regularization for the weighted model, in gradient units.
    pub grad_eps: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            cg_tol: 1e-10,
            cg_max_iter: 50_000,
            energy_tol: 1e-9,
            max_outer: 80,
            grad_eps: 1e-4,
        }
    }
}

/// Preconditioned conjugate gradients on the active subset.
///
/// Vectors span the whole grid; inactive entries must be zero in `b` and
/// are kept zero in `x`.  `apply` must likewise zero inactive rows.
/// Returns (iterations, relative residual).
pub(crate) fn pcg(
    mut apply: impl FnMut(&[f64], &mut [f64]),
    diag: &[f64],
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> (usize, f64) {
    let len = b.len();
    let bnorm = dot(b, b).sqrt();
    if bnorm == 0.0 {
        x.fill(0.0);
        return (0, 0.0);
    }
    let mut r = vec![0.0; len];
    let mut z = vec![0.0; len];
    let mut pv = vec![0.0; len];
    let mut ap = vec![0.0; len];

    apply(x, &mut ap);
    for i in 0..len {
        r[i] = b[i] - ap[i];
    }
    precondition(&mut z, &r, diag);
    pv.copy_from_slice(&z);
    let mut rz = dot(&r, &z);
    let mut iters = 0;
    let mut rel = dot(&r, &r).sqrt() / bnorm;
    while rel > tol && iters < max_iter {
        apply(&pv, &mut ap);
        let pap = dot(&pv, &ap);
        if pap <= 0.0 || !pap.is_finite() {
            break;
        }
        let alpha = rz / pap;
        for i in 0..len {
            x[i] += alpha * pv[i];
            r[i] -= alpha * ap[i];
        }
        precondition(&mut z, &r, diag);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..len {
            pv[i] = z[i] + beta * pv[i];
        }
        iters += 1;
        rel = dot(&r, &r).sqrt() / bnorm;
    }
    (iters, rel)
}

fn precondition(z: &mut [f64], r: &[f64], diag: &[f64]) {
    for i in 0..r.len() {
        let d = diag[i];
        z[i] = if d > 0.0 { r[i] / d } else { r[i] };
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += a[i] * b[i];
    }
    s
}

/// Axis count and strides for cell sweeps.
fn cell_geometry(grid: &Grid) -> (usize, [usize; 3], [usize; 3]) {
    let strides = grid.walk().strides();
    (grid.n, grid.dims, strides)
}

/// Runs `f(base, strides, naxes)` for every cell base index.
#[inline]
fn for_each_cell(grid: &Grid, mut f: impl FnMut(usize, &[usize; 3], usize)) {
    let (n, dims, strides) = cell_geometry(grid);
    let kmax = if n == 3 { dims[2] - 1 } else { 1 };
    for k in 0..kmax {
        for j in 0..dims[1] - 1 {
            let row = (k * dims[1] + j) * dims[0];
            for i in 0..dims[0] - 1 {
                f(row + i, &strides, n);
            }
        }
    }
}

/// Exact p-energy of `v` (no regularization), in grid units times `h^(n-p)`.
pub(crate) fn energy(grid: &Grid, v: &[f64], p: f64) -> f64 {
    let mut total = 0.0;
    for_each_cell(grid, |base, strides, n| {
        let mut s = 0.0;
        for d in 0..n {
            let diff = v[base + strides[d]] - v[base];
            s += diff * diff;
        }
        if s > 0.0 {
            total += s.powf(p / 2.0);
        }
    });
    total * grid.h.powf(grid.n as f64 - p)
}

/// Lagged-diffusivity weights per cell base.
fn cell_weights(grid: &Grid, v: &[f64], p: f64, grad_eps: f64) -> Vec<f64> {
    let mut w = vec![0.0; grid.len()];
    let eps2 = (grad_eps * grid.h) * (grad_eps * grid.h);
    for_each_cell(grid, |base, strides, n| {
        let mut s = 0.0;
        for d in 0..n {
            let diff = v[base + strides[d]] - v[base];
            s += diff * diff;
        }
        w[base] = (s + eps2).powf((p - 2.0) / 2.0);
    });
    w
}

/// Applies the weighted stiffness operator; rows of non-free nodes are zeroed.
fn apply_weighted(grid: &Grid, w: Option<&[f64]>, state: &[u8], x: &[f64], out: &mut [f64]) {
    out.fill(0.0);
    for_each_cell(grid, |base, strides, n| {
        let wc = w.map_or(1.0, |w| w[base]);
        for d in 0..n {
            let nb = base + strides[d];
            let diff = wc * (x[base] - x[nb]);
            out[base] += diff;
            out[nb] -= diff;
        }
    });
    for i in 0..out.len() {
        if state[i] != FREE {
            out[i] = 0.0;
        }
    }
}

fn weighted_diag(grid: &Grid, w: Option<&[f64]>, state: &[u8]) -> Vec<f64> {
    let mut diag = vec![0.0; grid.len()];
    for_each_cell(grid, |base, strides, n| {
        let wc = w.map_or(1.0, |w| w[base]);
        for d in 0..n {
            diag[base] += wc;
            diag[base + strides[d]] += wc;
        }
    });
    for i in 0..diag.len() {
        if state[i] != FREE {
            diag[i] = 1.0;
        }
    }
    diag
}

/// Solves the weighted quadratic model with the current Dirichlet data.
/// `v` holds the full iterate (fixed entries already at their values);
/// on return the free entries minimize the weighted form.
/// Returns (iterations, relative residual).
fn solve_weighted(
    grid: &Grid,
    w: Option<&[f64]>,
    state: &[u8],
    v: &mut [f64],
    opts: &SolverOptions,
) -> (usize, f64) {
    let len = grid.len();
    // Split v into Dirichlet extension and free part.
    let mut v_fixed = vec![0.0; len];
    let mut x = vec![0.0; len];
    for i in 0..len {
        if state[i] == FREE {
            x[i] = v[i];
        } else {
            v_fixed[i] = v[i];
        }
    }
    // Right-hand side: minus the operator applied to the Dirichlet part.
    let mut b = vec![0.0; len];
    apply_weighted(grid, w, state, &v_fixed, &mut b);
    for bi in b.iter_mut() {
        *bi = -*bi;
    }
    let diag = weighted_diag(grid, w, state);
    let (iters, rel) = pcg(
        |xx, out| apply_weighted(grid, w, state, xx, out),
        &diag,
        &b,
        &mut x,
        opts.cg_tol,
        opts.cg_max_iter,
    );
    for i in 0..len {
        if state[i] == FREE {
            v[i] = x[i];
        }
    }
    (iters, rel)
}

pub(crate) struct MinimizeOutcome {
    pub v: Vec<f64>,
    pub energy: f64,
    pub iterations: usize,
    pub residual: f64,
}

/// Minimizes the p-energy subject to the node states and returns the
/// clamped minimizer with its exact (unregularized) energy.
pub(crate) fn minimize(grid: &Grid, state: &[u8], p: f64, opts: &SolverOptions) -> MinimizeOutcome {
    let len = grid.len();
    let mut v = vec![0.0; len];
    for i in 0..len {
        if state[i] == FIXED_ONE {
            v[i] = 1.0;
        }
    }
    let (mut iters, mut residual) = solve_weighted(grid, None, state, &mut v, opts);
    if (p - 2.0).abs() > 1e-12 {
        let mut e = energy(grid, &v, p);
        for _ in 0..opts.max_outer {
            let w = cell_weights(grid, &v, p, opts.grad_eps);
            let mut cand = v.clone();
            let (it, rel) = solve_weighted(grid, Some(&w), state, &mut cand, opts);
            iters += it;
            residual = rel;
            // Damped step: walk back toward the previous iterate until the
            // true energy decreases.
            let mut t = 1.0;
            let mut accepted = false;
            while t > 1e-7 {
                let mut trial = vec![0.0; len];
                for i in 0..len {
                    trial[i] = v[i] + t * (cand[i] - v[i]);
                }
                let et = energy(grid, &trial, p);
                if et <= e {
                    let drop = (e - et) / et.max(f64::MIN_POSITIVE);
                    v = trial;
                    e = et;
                    accepted = drop > opts.energy_tol;
                    break;
                }
                t *= 0.5;
            }
            if !accepted {
                break;
            }
        }
    }
    for vi in v.iter_mut() {
        *vi = vi.clamp(0.0, 1.0);
    }
    let e = energy(grid, &v, p);
    MinimizeOutcome {
        v,
        energy: e,
        iterations: iters,
        residual,
    }
}
