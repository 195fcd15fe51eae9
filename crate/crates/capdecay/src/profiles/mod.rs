//! Profile functions along a geometric ladder of scales: shell inner
//! diameters, the thinness profile `𝒟(r)`, and the absorption smallness
//! profile `q(r)`, together with the `𝓛_{ν,ε}` norm and the rules that
//! select the integrability index `ν`.

use crate::capacity::{diam_eps, DiamEpsOptions, DiamEpsResult, DiamStatus};
use crate::error::{Error, Result};
use crate::geometry::{shell_mesh, unit_sphere_area, DomainSpec, Grid, Point};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;

/// Nonnegative absorption coefficient `b(x)`.
#[derive(Clone, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum Coefficient {
    /// `b ≡ 0`.
    Zero,
    /// `b(x) = k2 |x|^l`.
    PowerLaw { k2: f64, l: f64 },
    /// `b(x) = k2 |x|^l L(x)^sigma` with the saturated logarithm
    /// `L(x) = max(log(1/|x|), 1)`.
    PowerLog { k2: f64, l: f64, sigma: f64 },
    /// Caller-supplied evaluation.  Not serializable.
    #[serde(skip)]
    CustomOracle(CoefficientFn),
}

#[derive(Clone)]
pub struct CoefficientFn {
    f: Arc<dyn Fn(&Point) -> f64 + Send + Sync>,
    bounded: bool,
}

impl fmt::Debug for CoefficientFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoefficientFn")
            .field("bounded", &self.bounded)
            .finish_non_exhaustive()
    }
}

impl fmt::Debug for Coefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Coefficient::Zero => write!(f, "Zero"),
            Coefficient::PowerLaw { k2, l } => write!(f, "PowerLaw(k2={k2}, l={l})"),
            Coefficient::PowerLog { k2, l, sigma } => {
                write!(f, "PowerLog(k2={k2}, l={l}, sigma={sigma})")
            }
            Coefficient::CustomOracle(c) => c.fmt(f),
        }
    }
}

impl Coefficient {
    pub fn custom<F>(f: F, bounded: bool) -> Coefficient
    where
        F: Fn(&Point) -> f64 + Send + Sync + 'static,
    {
        Coefficient::CustomOracle(CoefficientFn { f: Arc::new(f), bounded })
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Coefficient::Zero | Coefficient::CustomOracle(_) => Ok(()),
            Coefficient::PowerLaw { k2, l } => check_power(*k2, *l, 0.0),
            Coefficient::PowerLog { k2, l, sigma } => check_power(*k2, *l, *sigma),
        }
    }

    pub fn eval(&self, x: &Point) -> f64 {
        match self {
            Coefficient::Zero => 0.0,
            Coefficient::PowerLaw { k2, l } => {
                let r = crate::geometry::norm(x, 3);
                k2 * r.powf(*l)
            }
            Coefficient::PowerLog { k2, l, sigma } => {
                let r = crate::geometry::norm(x, 3);
                let sat = (1.0 / r).ln().max(1.0);
                k2 * r.powf(*l) * sat.powf(*sigma)
            }
            Coefficient::CustomOracle(c) => (c.f)(x),
        }
    }

    /// Bounded near the origin (hence essentially bounded on every shell
    /// uniformly in the shell radius).
    pub fn is_bounded(&self) -> bool {
        match self {
            Coefficient::Zero => true,
            Coefficient::PowerLaw { l, .. } => *l >= 0.0,
            Coefficient::PowerLog { l, sigma, .. } => *l > 0.0 || (*l == 0.0 && *sigma <= 0.0),
            Coefficient::CustomOracle(c) => c.bounded,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Coefficient::Zero)
    }
}

fn check_power(k2: f64, l: f64, sigma: f64) -> Result<()> {
    if !(k2 >= 0.0) || !k2.is_finite() {
        return Err(Error::Config(format!("coefficient amplitude k2 must be >= 0, got {k2}")));
    }
    if !l.is_finite() || !sigma.is_finite() {
        return Err(Error::Config("coefficient exponents must be finite".into()));
    }
    Ok(())
}

/// Exponents and ladder geometry shared by the profile builders.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ExponentConfig {
    pub p: f64,
    /// Gradient absorption exponent, `p - 1 <= alpha <= p`.
    pub alpha: f64,
    /// Shell aspect: rung `r` covers `(r/theta, r*theta)`.
    pub theta: f64,
    /// Capacity-ratio threshold of the essential inner diameter.
    pub eps: f64,
    /// Relative radius of the capacity ladders around boundary points.
    pub delta: f64,
    /// Additive margin for the nu rules that only bound nu from below.
    pub nu_margin: f64,
}

impl Default for ExponentConfig {
    fn default() -> Self {
        ExponentConfig {
            p: 2.0,
            alpha: 2.0,
            theta: 2.0,
            eps: 0.1,
            delta: 0.1,
            nu_margin: 1.0,
        }
    }
}

impl ExponentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.p > 1.0) || !self.p.is_finite() {
            return Err(Error::Exponents(format!("p must exceed 1, got {}", self.p)));
        }
        if self.alpha < self.p - 1.0 - EXP_TOL || self.alpha > self.p + EXP_TOL {
            return Err(Error::Exponents(format!(
                "alpha must lie in [p-1, p] = [{}, {}], got {}",
                self.p - 1.0,
                self.p,
                self.alpha
            )));
        }
        if !(self.theta > 1.0) || !self.theta.is_finite() {
            return Err(Error::Exponents(format!("theta must exceed 1, got {}", self.theta)));
        }
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(Error::Exponents(format!("eps must lie in (0, 1), got {}", self.eps)));
        }
        let delta_cap = 1.0 - self.theta.powf(-1.0 / 3.0);
        if !(self.delta > 0.0 && self.delta < delta_cap) {
            return Err(Error::Exponents(format!(
                "delta must lie in (0, {delta_cap:.6}) for theta {}, got {}",
                self.theta, self.delta
            )));
        }
        if !(self.nu_margin > 0.0) || !self.nu_margin.is_finite() {
            return Err(Error::Exponents(format!(
                "nu margin must be positive, got {}",
                self.nu_margin
            )));
        }
        Ok(())
    }

    /// The integrability index for dimension `n` per the selection rules.
    pub fn nu(&self, n: usize) -> Result<f64> {
        select_nu_with_margin(self.p, self.alpha, n, self.nu_margin)
    }
}

pub(crate) const EXP_TOL: f64 = 1e-9;

/// Tolerant equality for exponent bookkeeping.
pub(crate) fn nearly(a: f64, b: f64) -> bool {
    (a - b).abs() <= EXP_TOL * (1.0 + a.abs() + b.abs())
}

/// Integrability index `ν` for the `𝓛_{ν,ε}` norm, with the default
/// margin `+1` where only a strict lower bound is imposed:
///
/// * `α = p` → `∞`;
/// * `α = p − 1`, `n ≠ p` → `max{n, p}`;
/// * `α = p − 1`, `n = p` → anything `> p` (we take `p + margin`);
/// * `p − 1 < α < p`, `n ≠ p` → `max{n, p} / (p − α)`;
/// * `p − 1 < α < p`, `n = p` → anything `> p/(p − α)` (plus margin).
pub fn select_nu(p: f64, alpha: f64, n: usize) -> Result<f64> {
    select_nu_with_margin(p, alpha, n, 1.0)
}

pub fn select_nu_with_margin(p: f64, alpha: f64, n: usize, margin: f64) -> Result<f64> {
    if !(p > 1.0) || !p.is_finite() {
        return Err(Error::Exponents(format!("nu selection requires p > 1, got {p}")));
    }
    if n < 2 {
        return Err(Error::Exponents(format!("nu selection requires n >= 2, got {n}")));
    }
    let nf = n as f64;
    if nearly(alpha, p) {
        return Ok(f64::INFINITY);
    }
    if nearly(alpha, p - 1.0) {
        if nearly(nf, p) {
            return Ok(p + margin);
        }
        return Ok(nf.max(p));
    }
    if alpha > p - 1.0 && alpha < p {
        if nearly(nf, p) {
            return Ok(p / (p - alpha) + margin);
        }
        return Ok(nf.max(p) / (p - alpha));
    }
    Err(Error::Exponents(format!(
        "alpha must lie in [p-1, p] = [{}, {p}], got {alpha}",
        p - 1.0
    )))
}

/// Values sampled on a strictly increasing positive ladder of radii,
/// with gaps allowed where a rung could not be computed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Profile {
    pub ladder: Vec<f64>,
    pub values: Vec<Option<f64>>,
}

impl Profile {
    /// The ladder must be strictly increasing, positive, finite.
    pub fn new(ladder: Vec<f64>) -> Profile {
        assert!(!ladder.is_empty(), "profile ladder is empty");
        for w in ladder.windows(2) {
            assert!(w[0] < w[1], "profile ladder must be strictly increasing");
        }
        assert!(
            ladder.iter().all(|r| *r > 0.0 && r.is_finite()),
            "profile ladder must be positive and finite"
        );
        let n = ladder.len();
        Profile { ladder, values: vec![None; n] }
    }

    pub fn len(&self) -> usize {
        self.ladder.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ladder.is_empty()
    }

    pub fn set(&mut self, k: usize, v: f64) {
        assert!(v >= 0.0 && v.is_finite(), "profile values must be finite and >= 0");
        self.values[k] = Some(v);
    }

    pub fn value(&self, k: usize) -> Option<f64> {
        self.values[k]
    }

    pub fn is_complete(&self) -> bool {
        self.values.iter().all(Option::is_some)
    }

    pub fn missing_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_none()).count()
    }

    /// Present samples as `(r, value)` pairs.
    pub fn samples(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.ladder
            .iter()
            .zip(&self.values)
            .filter_map(|(&r, v)| v.map(|v| (r, v)))
    }

    /// Value at an arbitrary radius: log-log piecewise linear between
    /// present samples, constant beyond the covered range.  Zero values
    /// fall back to linear interpolation in `log r`.
    pub fn value_at(&self, r: f64) -> Option<f64> {
        let pts: Vec<(f64, f64)> = self.samples().collect();
        if pts.is_empty() || !(r > 0.0) {
            return None;
        }
        if r <= pts[0].0 {
            return Some(pts[0].1);
        }
        if r >= pts[pts.len() - 1].0 {
            return Some(pts[pts.len() - 1].1);
        }
        let k = pts.partition_point(|&(x, _)| x < r);
        let (r0, v0) = pts[k - 1];
        let (r1, v1) = pts[k];
        let t = (r.ln() - r0.ln()) / (r1.ln() - r0.ln());
        if v0 > 0.0 && v1 > 0.0 {
            Some((v0.ln() + t * (v1.ln() - v0.ln())).exp())
        } else {
            Some(v0 + t * (v1 - v0))
        }
    }

    pub fn map(&self, f: impl Fn(f64, f64) -> Option<f64>) -> Profile {
        let mut out = Profile::new(self.ladder.clone());
        for (k, (&r, v)) in self.ladder.iter().zip(&self.values).enumerate() {
            if let Some(v) = v {
                if let Some(w) = f(r, *v) {
                    out.set(k, w);
                }
            }
        }
        out
    }

    /// Fitted log-log slope over the present samples.
    pub fn slope(&self) -> Option<f64> {
        let (xs, ys): (Vec<f64>, Vec<f64>) = self.samples().unzip();
        crate::fit::fit_loglog(&xs, &ys).map(|f| f.slope)
    }
}

/// Geometric ladder from `r_min` up to `r_max` inclusive.
pub fn geometric_ladder(r_min: f64, r_max: f64, rungs: usize) -> Result<Vec<f64>> {
    if !(r_min > 0.0 && r_min < r_max) || !r_max.is_finite() {
        return Err(Error::Config(format!(
            "ladder needs 0 < r_min < r_max, got [{r_min}, {r_max}]"
        )));
    }
    if rungs < 2 {
        return Err(Error::Config(format!("ladder needs at least 2 rungs, got {rungs}")));
    }
    let q = (r_max / r_min).powf(1.0 / (rungs as f64 - 1.0));
    Ok((0..rungs)
        .map(|k| {
            if k + 1 == rungs {
                r_max
            } else {
                r_min * q.powi(k as i32)
            }
        })
        .collect())
}

/// The `𝓛_{ν,ε}` norm of `b` over the region carried by `grid`:
///
/// ```text
/// |S_1|^(-1/ν) · sup_x ( ∫_{ω ∩ B_d(x)} b^ν )^(1/ν)
/// ```
///
/// where `d` is the (precomputed) ε-essential inner diameter of the
/// region and the sup runs over sampled interior nodes, which makes the
/// result a lower-bound estimator in the same sense as the capacity
/// quadratures.  `ν = ∞` degrades to the essential supremum.
pub fn lnu_eps_norm(
    b: &Coefficient,
    grid: &Grid,
    nu: f64,
    d_eps: f64,
    max_centers: usize,
) -> Result<f64> {
    if !(nu >= 1.0) {
        return Err(Error::Exponents(format!("norm index nu must be >= 1, got {nu}")));
    }
    if !(d_eps >= 0.0) || !d_eps.is_finite() {
        return Err(Error::Precondition(format!(
            "norm needs a resolved inner diameter, got {d_eps}"
        )));
    }
    if b.is_zero() || d_eps == 0.0 {
        return Ok(0.0);
    }
    let mut nodes: Vec<(Point, f64)> = Vec::with_capacity(grid.inside_count());
    for flat in grid.inside_nodes() {
        let x = grid.pos(flat);
        let v = b.eval(&x);
        if !(v >= 0.0) || !v.is_finite() {
            return Err(Error::Precondition(format!(
                "coefficient must be finite and >= 0 on the region, got {v} at {x:?}"
            )));
        }
        nodes.push((x, v));
    }
    if nodes.is_empty() {
        return Ok(0.0);
    }
    if nu.is_infinite() {
        return Ok(nodes.iter().map(|(_, v)| *v).fold(0.0, f64::max));
    }
    let cell = grid.cell_volume();
    let powered: Vec<f64> = nodes.iter().map(|(_, v)| v.powf(nu) * cell).collect();
    let stride = (nodes.len() / max_centers.max(1)).max(1);
    let d2 = d_eps * d_eps;
    let mut best = 0.0f64;
    for c in (0..nodes.len()).step_by(stride) {
        let center = nodes[c].0;
        let mut sum = 0.0;
        for (k, (x, _)) in nodes.iter().enumerate() {
            let dx = x[0] - center[0];
            let dy = x[1] - center[1];
            let dz = x[2] - center[2];
            if dx * dx + dy * dy + dz * dz <= d2 {
                sum += powered[k];
            }
        }
        best = best.max(sum);
    }
    Ok(unit_sphere_area(grid.n).powf(-1.0 / nu) * best.powf(1.0 / nu))
}

/// Essential supremum estimator: max over interior nodes.
pub fn esssup(b: &Coefficient, grid: &Grid) -> Result<f64> {
    let mut best = 0.0f64;
    for flat in grid.inside_nodes() {
        let x = grid.pos(flat);
        let v = b.eval(&x);
        if !(v >= 0.0) || !v.is_finite() {
            return Err(Error::Precondition(format!(
                "coefficient must be finite and >= 0 on the region, got {v} at {x:?}"
            )));
        }
        best = best.max(v);
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy)]
pub struct ShellProfileOptions {
    /// Shell grid resolution: cells per rung radius.
    pub cells_per_radius: usize,
    /// Center budget of the inner-diameter search.
    pub max_centers: usize,
    /// Relative bracket width of the inner-diameter bisection.
    pub rel_tol: f64,
    /// Center budget of the norm sup.
    pub norm_centers: usize,
}

impl ShellProfileOptions {
    pub fn new(n: usize) -> Self {
        ShellProfileOptions {
            cells_per_radius: if n == 3 { 10 } else { 24 },
            max_centers: 48,
            rel_tol: 0.01,
            norm_centers: 512,
        }
    }
}

/// One resolved shell `Ω_{r/θ, rθ}`: its sampling grid and its
/// ε-essential inner diameter.
pub struct ShellRung {
    pub r: f64,
    pub grid: Grid,
    pub diam: DiamEpsResult,
}

impl ShellRung {
    /// The usable diameter value, if the search resolved one.
    pub fn diam_value(&self) -> Option<f64> {
        match self.diam.status {
            DiamStatus::Resolved | DiamStatus::AtUpperBound => Some(self.diam.value),
            DiamStatus::EmptySet | DiamStatus::Unresolved => None,
        }
    }
}

/// Shell data shared by the profile builders; `None` marks rungs whose
/// shell misses the domain entirely.
pub struct ShellLadder {
    pub ladder: Vec<f64>,
    pub rungs: Vec<Option<ShellRung>>,
}

/// Resolve every shell of the ladder once: grid plus inner diameter.
pub fn build_shell_ladder(
    domain: &DomainSpec,
    cfg: &ExponentConfig,
    ladder: &[f64],
    opts: &ShellProfileOptions,
) -> Result<ShellLadder> {
    cfg.validate()?;
    check_ladder(domain, ladder)?;
    let mut dopts = DiamEpsOptions::new(cfg.eps, cfg.p, domain.n);
    dopts.max_centers = opts.max_centers;
    dopts.rel_tol = opts.rel_tol;
    let mut rungs = Vec::with_capacity(ladder.len());
    for &r in ladder {
        let r1 = r / cfg.theta;
        let r2 = r * cfg.theta;
        let h = r / opts.cells_per_radius as f64;
        let grid = shell_mesh(domain, r1, r2, h)?;
        if grid.is_empty_region() {
            rungs.push(None);
            continue;
        }
        let set = domain.shell(r1, r2)?;
        let diam = diam_eps(&set, &grid, &dopts)?;
        rungs.push(Some(ShellRung { r, grid, diam }));
    }
    Ok(ShellLadder { ladder: ladder.to_vec(), rungs })
}

fn check_ladder(domain: &DomainSpec, ladder: &[f64]) -> Result<()> {
    if ladder.is_empty() {
        return Err(Error::Precondition("profile ladder is empty".into()));
    }
    for w in ladder.windows(2) {
        if !(w[0] < w[1]) {
            return Err(Error::Precondition(
                "profile ladder must be strictly increasing".into(),
            ));
        }
    }
    for &r in ladder {
        if !(r > 0.0 && r < domain.outer_radius) {
            return Err(Error::Precondition(format!(
                "ladder rung {r} outside (0, {})",
                domain.outer_radius
            )));
        }
    }
    Ok(())
}

/// Inner diameters `diam_ε Ω_{r/θ, rθ}` per rung.
pub fn shell_diam_profile_from(shells: &ShellLadder) -> Profile {
    let mut out = Profile::new(shells.ladder.clone());
    for (k, rung) in shells.rungs.iter().enumerate() {
        if let Some(d) = rung.as_ref().and_then(ShellRung::diam_value) {
            out.set(k, d);
        }
    }
    out
}

/// Thinness profile `𝒟(r) = 1 / diam_ε Ω_{r/θ, rθ}`.
pub fn d_profile_from(shells: &ShellLadder) -> Profile {
    shell_diam_profile_from(shells).map(|_, d| if d > 0.0 { Some(1.0 / d) } else { None })
}

pub fn d_profile(
    domain: &DomainSpec,
    cfg: &ExponentConfig,
    ladder: &[f64],
    opts: &ShellProfileOptions,
) -> Result<Profile> {
    Ok(d_profile_from(&build_shell_ladder(domain, cfg, ladder, opts)?))
}

/// Absorption smallness per rung:
///
/// ```text
/// q(r) = (diam_ε Ω_{r/θ, rθ})^(p - α - n/ν) · ‖b‖_{𝓛_{ν,ε}(Ω_{r/θ, rθ})}
/// ```
///
/// For coefficients bounded near the origin the norm collapses and the
/// equivalent form `(diam_ε)^(p-α) · esssup b` is used instead.
pub fn q_profile_from(
    domain: &DomainSpec,
    b: &Coefficient,
    cfg: &ExponentConfig,
    shells: &ShellLadder,
    opts: &ShellProfileOptions,
) -> Result<Profile> {
    b.validate()?;
    let nu = cfg.nu(domain.n)?;
    let n = domain.n as f64;
    let mut out = Profile::new(shells.ladder.clone());
    for (k, rung) in shells.rungs.iter().enumerate() {
        let Some(rung) = rung.as_ref() else { continue };
        let Some(d) = rung.diam_value() else { continue };
        if d == 0.0 {
            continue;
        }
        let q = if b.is_bounded() {
            d.powf(cfg.p - cfg.alpha) * esssup(b, &rung.grid)?
        } else {
            let norm = lnu_eps_norm(b, &rung.grid, nu, d, opts.norm_centers)?;
            let exponent = if nu.is_infinite() {
                cfg.p - cfg.alpha
            } else {
                cfg.p - cfg.alpha - n / nu
            };
            d.powf(exponent) * norm
        };
        out.set(k, q);
    }
    Ok(out)
}

pub fn q_profile(
    domain: &DomainSpec,
    b: &Coefficient,
    cfg: &ExponentConfig,
    ladder: &[f64],
    opts: &ShellProfileOptions,
) -> Result<Profile> {
    let shells = build_shell_ladder(domain, cfg, ladder, opts)?;
    q_profile_from(domain, b, cfg, &shells, opts)
}
