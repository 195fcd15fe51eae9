//! First Dirichlet eigenvalue of the p-Laplace-Beltrami operator on a
//! spherical section `E = S_r ∩ Ω`.
//!
//! The eigenvalue is the infimum of the Rayleigh quotient
//!
//! ```text
//! λ_min(E) = inf  ∫_E |∇_S ψ|^p dS  /  ∫_E |ψ|^p dS
//! ```
//!
//! over functions vanishing on `S_r \ E`.  On the circle the discrete
//! energy is the one-dimensional face-correct difference form (Dirichlet
//! values live on cell faces, giving second-order eigenvalues); on the
//! sphere it is an edge form for `p = 2` (face-correct at the boundary)
//! and a cell-based gradient form otherwise.
//!
//! For `p = 2` the minimum is found by inverse power iteration with
//! conjugate gradients; for `p ≠ 2` by normalized descent on the
//! Rayleigh quotient seeded with the `p = 2` eigenfunction.
//!
//! Scaling: the masks of a fixed solid angle are radius-independent, so
//! `λ_min(S_r ∩ Ω) = r^(-p) λ_min(S_1 ∩ Ω)` holds exactly on the mesh.

use crate::error::{Error, Result};
use crate::geometry::{sphere_section_mesh, DomainSpec, SphereMesh};
use crate::profiles::Profile;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy)]
pub struct EigenOptions {
    /// Relative eigenvalue change at which power iteration stops.
    pub tol: f64,
    pub max_iter: usize,
    pub cg_tol: f64,
    pub cg_max_iter: usize,
    /// Iteration budget for the descent path (`p ≠ 2`).
    pub descent_max_iter: usize,
    /// Relative Rayleigh decrease treated as stagnation by the descent.
    pub descent_tol: f64,
}

impl Default for EigenOptions {
    fn default() -> Self {
        EigenOptions {
            tol: 1e-10,
            max_iter: 500,
            cg_tol: 1e-11,
            cg_max_iter: 20_000,
            descent_max_iter: 4000,
            descent_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EigenResult {
    pub lambda: f64,
    /// Eigenfunction per mesh node (zero outside the section),
    /// sign-normalized nonnegative, unit `L_p` norm.
    #[serde(skip)]
    pub eigenfunction: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
    /// Set when the section covers the whole sphere: the infimum is zero
    /// (constants) and no Dirichlet condition exists.
    pub no_boundary: bool,
}

enum EdgeKind {
    /// Both endpoints inside the section.
    Interior(usize, usize),
    /// One endpoint inside; the Dirichlet face sits halfway, so the
    /// conductance doubles for `p = 2` (and `2^(p-1)` on the circle).
    Boundary(usize),
}

struct Edge {
    kind: EdgeKind,
    cond: f64,
}

/// Edge list of the quadratic (p = 2) energy, r-scaling included.
fn p2_edges(mesh: &SphereMesh) -> Vec<Edge> {
    let mut edges = Vec::new();
    let r = mesh.radius;
    if mesh.dim == 2 {
        let c = 1.0 / (r * mesh.h_phi());
        push_ring_edges(mesh, 0, c, &mut edges);
    } else {
        for i in 0..mesh.n_theta {
            let c_phi = mesh.h_theta() / (mesh.theta(i).sin() * mesh.h_phi());
            push_ring_edges(mesh, i, c_phi, &mut edges);
        }
        for i in 0..mesh.n_theta - 1 {
            let face_theta = (i as f64 + 1.0) * mesh.h_theta();
            let c_theta = face_theta.sin() * mesh.h_phi() / mesh.h_theta();
            for j in 0..mesh.n_phi {
                let a = mesh.idx(i, j);
                let b = mesh.idx(i + 1, j);
                push_edge(mesh, a, b, c_theta, &mut edges);
            }
        }
    }
    edges
}

fn push_ring_edges(mesh: &SphereMesh, i: usize, cond: f64, edges: &mut Vec<Edge>) {
    for j in 0..mesh.n_phi {
        let a = mesh.idx(i, j);
        let b = mesh.idx(i, (j + 1) % mesh.n_phi);
        push_edge(mesh, a, b, cond, edges);
    }
}

fn push_edge(mesh: &SphereMesh, a: usize, b: usize, cond: f64, edges: &mut Vec<Edge>) {
    match (mesh.is_inside(a), mesh.is_inside(b)) {
        (true, true) => edges.push(Edge { kind: EdgeKind::Interior(a, b), cond }),
        (true, false) => edges.push(Edge { kind: EdgeKind::Boundary(a), cond: 2.0 * cond }),
        (false, true) => edges.push(Edge { kind: EdgeKind::Boundary(b), cond: 2.0 * cond }),
        (false, false) => {}
    }
}

fn apply_stiffness(edges: &[Edge], x: &[f64], out: &mut [f64]) {
    out.fill(0.0);
    for e in edges {
        match e.kind {
            EdgeKind::Interior(a, b) => {
                let d = e.cond * (x[a] - x[b]);
                out[a] += d;
                out[b] -= d;
            }
            EdgeKind::Boundary(a) => {
                out[a] += e.cond * x[a];
            }
        }
    }
}

fn stiffness_diag(edges: &[Edge], len: usize) -> Vec<f64> {
    let mut diag = vec![0.0; len];
    for e in edges {
        match e.kind {
            EdgeKind::Interior(a, b) => {
                diag[a] += e.cond;
                diag[b] += e.cond;
            }
            EdgeKind::Boundary(a) => diag[a] += e.cond,
        }
    }
    for d in diag.iter_mut() {
        if *d == 0.0 {
            *d = 1.0;
        }
    }
    diag
}

/// Smallest Dirichlet eigenvalue of the section carried by `mesh`.
pub fn lambda_min(mesh: &SphereMesh, p: f64, opts: &EigenOptions) -> Result<EigenResult> {
    if !(p > 1.0) || !p.is_finite() {
        return Err(Error::Exponents(format!("eigenvalue requires p > 1, got {p}")));
    }
    if mesh.is_empty_section() {
        return Err(Error::Mesh(
            "cannot compute an eigenvalue on an empty section".into(),
        ));
    }
    if mesh.is_full_sphere() {
        let len = mesh.node_count();
        let total: f64 = (0..len).map(|i| mesh.mass(i)).sum();
        let c = 1.0 / total.powf(1.0 / p);
        return Ok(EigenResult {
            lambda: 0.0,
            eigenfunction: vec![c; len],
            iterations: 0,
            residual: 0.0,
            no_boundary: true,
        });
    }
    let seed = p2_eigen(mesh, opts)?;
    if (p - 2.0).abs() < 1e-12 {
        return Ok(seed);
    }
    descent_eigen(mesh, p, seed, opts)
}

fn p2_eigen(mesh: &SphereMesh, opts: &EigenOptions) -> Result<EigenResult> {
    let len = mesh.node_count();
    let edges = p2_edges(mesh);
    let diag = stiffness_diag(&edges, len);
    let mass: Vec<f64> = (0..len)
        .map(|i| if mesh.is_inside(i) { mesh.mass(i) } else { 0.0 })
        .collect();

    let mut x: Vec<f64> = (0..len)
        .map(|i| if mesh.is_inside(i) { 1.0 } else { 0.0 })
        .collect();
    normalize_m(&mut x, &mass);
    let mut y = x.clone();
    let mut lambda = f64::INFINITY;
    let mut iterations = 0;
    let mut cg_res = 0.0;
    let mut scratch = vec![0.0; len];
    for _ in 0..opts.max_iter {
        // Solve A y = M x.
        let mut b = vec![0.0; len];
        for i in 0..len {
            b[i] = mass[i] * x[i];
        }
        let (_, res) = crate::capacity::solver::pcg(
            |v, out| {
                apply_stiffness(&edges, v, out);
                for (i, o) in out.iter_mut().enumerate() {
                    if !mesh.is_inside(i) {
                        *o = 0.0;
                    }
                }
            },
            &diag,
            &b,
            &mut y,
            opts.cg_tol,
            opts.cg_max_iter,
        );
        cg_res = res;
        iterations += 1;
        apply_stiffness(&edges, &y, &mut scratch);
        let num: f64 = dot(&scratch, &y);
        let den: f64 = y
            .iter()
            .enumerate()
            .map(|(i, v)| mass[i] * v * v)
            .sum();
        if den <= 0.0 {
            return Err(Error::NoConvergence("power iteration collapsed".into()));
        }
        let new_lambda = num / den;
        let done = (lambda - new_lambda).abs() <= opts.tol * new_lambda.max(f64::MIN_POSITIVE);
        lambda = new_lambda;
        x.copy_from_slice(&y);
        normalize_m(&mut x, &mass);
        y.copy_from_slice(&x);
        if done {
            break;
        }
    }
    let mut eigenfunction = x;
    finalize_sign_and_norm(&mut eigenfunction, mesh, 2.0);
    Ok(EigenResult {
        lambda,
        eigenfunction,
        iterations,
        residual: cg_res,
        no_boundary: false,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize_m(x: &mut [f64], mass: &[f64]) {
    let norm: f64 = x
        .iter()
        .enumerate()
        .map(|(i, v)| mass[i] * v * v)
        .sum::<f64>()
        .sqrt();
    if norm > 0.0 {
        for v in x.iter_mut() {
            *v /= norm;
        }
    }
}

/// p-energy numerator of the Rayleigh quotient with its gradient.
fn p_energy_and_grad(mesh: &SphereMesh, p: f64, x: &[f64], grad: Option<&mut [f64]>) -> f64 {
    let r = mesh.radius;
    let mut total = 0.0;
    let mut grad = grad;
    if let Some(g) = grad.as_deref_mut() {
        g.fill(0.0);
    }
    if mesh.dim == 2 {
        // Face-correct one-dimensional form on the circle.
        let hs = r * mesh.h_phi();
        let scale = hs.powf(1.0 - p);
        for j in 0..mesh.n_phi {
            let a = mesh.idx(0, j);
            let b = mesh.idx(0, (j + 1) % mesh.n_phi);
            match (mesh.is_inside(a), mesh.is_inside(b)) {
                (true, true) => {
                    let d = x[b] - x[a];
                    total += scale * d.abs().powf(p);
                    if let Some(g) = grad.as_deref_mut() {
                        let f = scale * p * d.abs().powf(p - 1.0) * d.signum();
                        g[b] += f;
                        g[a] -= f;
                    }
                }
                (true, false) | (false, true) => {
                    let (inner, sgn) = if mesh.is_inside(a) { (a, -1.0) } else { (b, 1.0) };
                    let _ = sgn;
                    let d = x[inner];
                    let w = scale * 2f64.powf(p - 1.0);
                    total += w * d.abs().powf(p);
                    if let Some(g) = grad.as_deref_mut() {
                        g[inner] += w * p * d.abs().powf(p - 1.0) * d.signum();
                    }
                }
                (false, false) => {}
            }
        }
    } else {
        // Cell-based gradient form between colatitude rings.
        let h_theta = mesh.h_theta();
        let h_phi = mesh.h_phi();
        let rp = r.powf(2.0 - p);
        for i in 0..mesh.n_theta - 1 {
            let theta_c = (i as f64 + 1.0) * h_theta;
            let sin_c = theta_c.sin();
            let area = sin_c * h_theta * h_phi;
            for j in 0..mesh.n_phi {
                let a = mesh.idx(i, j);
                let up = mesh.idx(i + 1, j);
                let side = mesh.idx(i, (j + 1) % mesh.n_phi);
                if !mesh.is_inside(a) && !mesh.is_inside(up) && !mesh.is_inside(side) {
                    continue;
                }
                let va = if mesh.is_inside(a) { x[a] } else { 0.0 };
                let vu = if mesh.is_inside(up) { x[up] } else { 0.0 };
                let vs = if mesh.is_inside(side) { x[side] } else { 0.0 };
                let dth = (vu - va) / h_theta;
                let dph = (vs - va) / (sin_c * h_phi);
                let s = dth * dth + dph * dph;
                if s == 0.0 {
                    continue;
                }
                total += rp * area * s.powf(p / 2.0);
                if let Some(g) = grad.as_deref_mut() {
                    let f = rp * area * p * s.powf(p / 2.0 - 1.0);
                    let gu = f * dth / h_theta;
                    let gs = f * dph / (sin_c * h_phi);
                    if mesh.is_inside(up) {
                        g[up] += gu;
                    }
                    if mesh.is_inside(side) {
                        g[side] += gs;
                    }
                    if mesh.is_inside(a) {
                        g[a] -= gu + gs;
                    }
                }
            }
        }
    }
    total
}

fn p_mass_and_grad(mesh: &SphereMesh, p: f64, x: &[f64], grad: Option<&mut [f64]>) -> f64 {
    let mut total = 0.0;
    let mut grad = grad;
    if let Some(g) = grad.as_deref_mut() {
        g.fill(0.0);
    }
    for i in 0..mesh.node_count() {
        if !mesh.is_inside(i) {
            continue;
        }
        let m = mesh.mass(i);
        total += m * x[i].abs().powf(p);
        if let Some(g) = grad.as_deref_mut() {
            g[i] = m * p * x[i].abs().powf(p - 1.0) * x[i].signum();
        }
    }
    total
}

fn descent_eigen(
    mesh: &SphereMesh,
    p: f64,
    seed: EigenResult,
    opts: &EigenOptions,
) -> Result<EigenResult> {
    let len = mesh.node_count();
    let mut x = seed.eigenfunction;
    // Unit p-norm start.
    let d0 = p_mass_and_grad(mesh, p, &x, None);
    if d0 <= 0.0 {
        return Err(Error::NoConvergence("descent seed vanished".into()));
    }
    scale(&mut x, d0.powf(-1.0 / p));

    let mut grad_n = vec![0.0; len];
    let mut grad_d = vec![0.0; len];
    let mut num = p_energy_and_grad(mesh, p, &x, Some(&mut grad_n));
    let mut den = p_mass_and_grad(mesh, p, &x, Some(&mut grad_d));
    let mut rayleigh = num / den;
    // Scale-covariant step: keeps the descent path identical across
    // radius rescalings of the same section.
    let mut tau = 0.1 / rayleigh;
    let mut iterations = seed.iterations;
    let mut last_drop = 0.0;
    for _ in 0..opts.descent_max_iter {
        iterations += 1;
        let mut g = vec![0.0; len];
        let mut gnorm2 = 0.0;
        for i in 0..len {
            g[i] = (grad_n[i] - rayleigh * grad_d[i]) / den;
            gnorm2 += g[i] * g[i];
        }
        if gnorm2.sqrt() <= 1e-14 * rayleigh {
            break;
        }
        let mut improved = false;
        while tau > 1e-18 {
            let mut cand = vec![0.0; len];
            for i in 0..len {
                cand[i] = x[i] - tau * g[i];
            }
            let dc = p_mass_and_grad(mesh, p, &cand, None);
            if dc > 0.0 {
                scale(&mut cand, dc.powf(-1.0 / p));
                let nc = p_energy_and_grad(mesh, p, &cand, None);
                if nc < rayleigh {
                    last_drop = (rayleigh - nc) / rayleigh;
                    x = cand;
                    num = p_energy_and_grad(mesh, p, &x, Some(&mut grad_n));
                    den = p_mass_and_grad(mesh, p, &x, Some(&mut grad_d));
                    rayleigh = num / den;
                    tau *= 1.5;
                    improved = true;
                    break;
                }
            }
            tau *= 0.5;
        }
        if !improved || last_drop < opts.descent_tol {
            break;
        }
    }
    finalize_sign_and_norm(&mut x, mesh, p);
    Ok(EigenResult {
        lambda: rayleigh,
        eigenfunction: x,
        iterations,
        residual: last_drop,
        no_boundary: false,
    })
}

fn scale(x: &mut [f64], s: f64) {
    for v in x.iter_mut() {
        *v *= s;
    }
}

/// First eigenfunctions have one sign; flip to nonnegative, zero out the
/// tiny negative ripples left by iteration, renormalize in `L_p`.
fn finalize_sign_and_norm(x: &mut [f64], mesh: &SphereMesh, p: f64) {
    let mut pos = 0.0;
    let mut neg = 0.0;
    for (i, v) in x.iter().enumerate() {
        if mesh.is_inside(i) {
            if *v >= 0.0 {
                pos += mesh.mass(i) * v.abs().powf(p);
            } else {
                neg += mesh.mass(i) * v.abs().powf(p);
            }
        }
    }
    if neg > pos {
        for v in x.iter_mut() {
            *v = -*v;
        }
    }
    let mut norm_p = 0.0;
    for (i, v) in x.iter_mut().enumerate() {
        if !mesh.is_inside(i) {
            *v = 0.0;
            continue;
        }
        if *v < 0.0 {
            *v = 0.0;
        }
        norm_p += mesh.mass(i) * v.powf(p);
    }
    if norm_p > 0.0 {
        let s = norm_p.powf(-1.0 / p);
        for v in x.iter_mut() {
            *v *= s;
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LambdaProfileOptions {
    /// Angular resolution handed to the mesh builder.
    pub h_ang: f64,
    /// Sample eigenvalues per shell; the profile keeps the infimum.
    pub shell_samples: usize,
    pub eigen: EigenOptions,
}

impl Default for LambdaProfileOptions {
    fn default() -> Self {
        LambdaProfileOptions {
            h_ang: 2.0 * std::f64::consts::PI / 256.0,
            shell_samples: 5,
            eigen: EigenOptions::default(),
        }
    }
}

/// The eigenvalue profile `Λ(r)`: for each rung `r` of the ladder, the
/// infimum of `λ_min(S_t ∩ Ω)` over section radii `t` in the shell
/// `(r/θ, rθ) ∩ (0, R)`, sampled geometrically.
///
/// Failed rungs (empty sections, no convergence) are recorded as missing
/// rather than aborting the profile.
pub fn lambda_profile(
    domain: &DomainSpec,
    p: f64,
    theta: f64,
    ladder: &[f64],
    opts: &LambdaProfileOptions,
) -> Result<Profile> {
    if !(theta > 1.0) {
        return Err(Error::Exponents(format!("shell aspect theta must exceed 1, got {theta}")));
    }
    let mut profile = Profile::new(ladder.to_vec());
    let r_cap = domain.outer_radius * (1.0 - 1e-9);
    for (k, &r) in ladder.iter().enumerate() {
        let lo = r / theta;
        let hi = (r * theta).min(r_cap);
        if !(lo > 0.0 && lo < hi) {
            continue;
        }
        let mut best: Option<f64> = None;
        let samples = opts.shell_samples.max(2);
        for s in 0..samples {
            // Geometric samples strictly inside the open shell.
            let t = lo * (hi / lo).powf((s as f64 + 0.5) / samples as f64);
            let value = sphere_section_mesh(domain, t, opts.h_ang)
                .and_then(|mesh| lambda_min(&mesh, p, &opts.eigen));
            if let Ok(res) = value {
                best = Some(match best {
                    None => res.lambda,
                    Some(b) => b.min(res.lambda),
                });
            }
        }
        if let Some(b) = best {
            profile.set(k, b);
        }
    }
    Ok(profile)
}
