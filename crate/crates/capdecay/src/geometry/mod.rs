//! Model domains and the meshes built on them.
//!
//! A domain is an open set `Ω ⊂ R^n` given through its indicator function,
//! together with a distinguished boundary point at the origin and an outer
//! radius `R`.  The bundled kinds are complements of power cusps, cone
//! complements, plane sectors and the full punctured space; arbitrary
//! indicators can be supplied as custom oracles.
//!
//! Coordinates are always stored as `[f64; 3]`; in dimension two the last
//! component is zero and ignored.

mod grid;
mod sphere;

pub use grid::{shell_mesh, Grid, NodeWalk};
pub use sphere::{sphere_section_mesh, SphereMesh};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;

/// Ambient point; for `n = 2` the third coordinate is zero.
pub type Point = [f64; 3];

/// Euclidean norm of the first `n` coordinates.
pub fn norm(x: &Point, n: usize) -> f64 {
    let mut s = 0.0;
    for c in x.iter().take(n) {
        s += c * c;
    }
    s.sqrt()
}

/// Norm of the first `n - 1` coordinates (distance to the symmetry axis).
pub fn lateral_norm(x: &Point, n: usize) -> f64 {
    let mut s = 0.0;
    for c in x.iter().take(n - 1) {
        s += c * c;
    }
    s.sqrt()
}

pub fn sub(a: &Point, b: &Point) -> Point {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn dist(a: &Point, b: &Point, n: usize) -> f64 {
    norm(&sub(a, b), n)
}

/// Surface measure of the unit sphere `S_1 ⊂ R^n`.
pub fn unit_sphere_area(n: usize) -> f64 {
    match n {
        2 => 2.0 * std::f64::consts::PI,
        3 => 4.0 * std::f64::consts::PI,
        _ => {
            // n * pi^(n/2) / Gamma(n/2 + 1), via the half-integer recursion.
            let half = n as f64 / 2.0;
            let mut gamma = if n % 2 == 0 { 1.0 } else { std::f64::consts::PI.sqrt() };
            let mut t = if n % 2 == 0 { 1.0 } else { 0.5 };
            while t < half + 0.5 {
                gamma *= t;
                t += 1.0;
            }
            n as f64 * std::f64::consts::PI.powf(half) / gamma
        }
    }
}

/// Volume of the unit ball in `R^n`.
pub fn unit_ball_volume(n: usize) -> f64 {
    unit_sphere_area(n) / n as f64
}

/// A set described by a membership test.  Implemented by domains, shells
/// and ad-hoc closures; consumed by the capacity and diameter routines.
pub trait PointSet {
    fn contains(&self, x: &Point) -> bool;
    fn dim(&self) -> usize;
}

/// Indicator supplied by the caller for domains outside the bundled catalog.
#[derive(Clone)]
pub struct CustomIndicator(pub Arc<dyn Fn(&Point) -> bool + Send + Sync>);

impl fmt::Debug for CustomIndicator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("CustomIndicator(..)")
    }
}

/// The shape of a domain near the origin.
///
/// `params` in the serialized form carries the fields of the active variant.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum DomainKind {
    /// Complement of the closed axial cone `{ |x'| <= k1 * x_n }`.
    ConeComplement { k1: f64 },
    /// Pinched channel `{ |x_n| < k1 * |x'|^s }`, `s > 1`: the width decays
    /// faster than the distance to the origin.
    PowerCusp { k1: f64, s: f64 },
    /// Plane sector `{ 0 < arg(x_1 + i x_2) < opening }`; a dihedral wedge
    /// when `n = 3`.
    Sector { opening: f64 },
    /// The whole space; every sphere meets it fully.
    Annulus,
    /// Caller-supplied indicator.  Not serializable.
    #[serde(skip)]
    CustomOracle(CustomIndicator),
}

/// An open set with outer radius `R` and distinguished boundary point `0`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DomainSpec {
    #[serde(flatten)]
    pub kind: DomainKind,
    #[serde(rename = "R")]
    pub outer_radius: f64,
    pub n: usize,
}

impl DomainSpec {
    /// Builds and validates a domain description.
    pub fn new(kind: DomainKind, outer_radius: f64, n: usize) -> Result<Self> {
        let d = DomainSpec { kind, outer_radius, n };
        d.validate()?;
        Ok(d)
    }

    pub fn cone_complement(k1: f64, outer_radius: f64, n: usize) -> Result<Self> {
        Self::new(DomainKind::ConeComplement { k1 }, outer_radius, n)
    }

    pub fn power_cusp(k1: f64, s: f64, outer_radius: f64, n: usize) -> Result<Self> {
        Self::new(DomainKind::PowerCusp { k1, s }, outer_radius, n)
    }

    pub fn sector(opening: f64, outer_radius: f64, n: usize) -> Result<Self> {
        Self::new(DomainKind::Sector { opening }, outer_radius, n)
    }

    pub fn annulus(outer_radius: f64, n: usize) -> Result<Self> {
        Self::new(DomainKind::Annulus, outer_radius, n)
    }

    pub fn custom<F>(f: F, outer_radius: f64, n: usize) -> Result<Self>
    where
        F: Fn(&Point) -> bool + Send + Sync + 'static,
    {
        Self::new(
            DomainKind::CustomOracle(CustomIndicator(Arc::new(f))),
            outer_radius,
            n,
        )
    }

    /// Parameter checks plus, for every kind, a sampled check that spherical
    /// sections `S_r ∩ Ω` are nonempty for radii below `R`.
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::Domain(format!("dimension must be >= 2, got {}", self.n)));
        }
        if !(self.outer_radius > 0.0) || !self.outer_radius.is_finite() {
            return Err(Error::Domain(format!(
                "outer radius must be positive and finite, got {}",
                self.outer_radius
            )));
        }
        match &self.kind {
            DomainKind::ConeComplement { k1 } => {
                if !(*k1 > 0.0) || !k1.is_finite() {
                    return Err(Error::Domain(format!("cone aperture k1 must be positive, got {k1}")));
                }
            }
            DomainKind::PowerCusp { k1, s } => {
                if !(*k1 > 0.0) || !k1.is_finite() {
                    return Err(Error::Domain(format!("cusp amplitude k1 must be positive, got {k1}")));
                }
                if !(*s > 1.0) || !s.is_finite() {
                    return Err(Error::Domain(format!("cusp exponent s must exceed 1, got {s}")));
                }
            }
            DomainKind::Sector { opening } => {
                if !(*opening > 0.0 && *opening < 2.0 * std::f64::consts::PI) {
                    return Err(Error::Domain(format!(
                        "sector opening must lie in (0, 2*pi), got {opening}"
                    )));
                }
            }
            DomainKind::Annulus | DomainKind::CustomOracle(_) => {}
        }
        self.check_sections_nonempty()
    }

    /// Sampled form of the standing assumption: spherical sections must be
    /// nonempty for radii in `(0, R)`.  The bundled kinds satisfy it by
    /// construction, so only custom indicators are probed.
    fn check_sections_nonempty(&self) -> Result<()> {
        if !matches!(self.kind, DomainKind::CustomOracle(_)) {
            return Ok(());
        }
        let radii = [0.9, 0.5, 0.1, 0.01, 0.001];
        for f in radii {
            let r = f * self.outer_radius;
            if !self.section_sample_hit(r, 720) {
                return Err(Error::Domain(format!(
                    "spherical section at r = {r} appears empty (sampled)"
                )));
            }
        }
        Ok(())
    }

    fn section_sample_hit(&self, r: f64, count: usize) -> bool {
        if self.n == 2 {
            for j in 0..count {
                let phi = (j as f64 + 0.5) * 2.0 * std::f64::consts::PI / count as f64;
                if self.contains(&[r * phi.cos(), r * phi.sin(), 0.0]) {
                    return true;
                }
            }
            false
        } else {
            let m = (count as f64).sqrt() as usize;
            for i in 0..m {
                let theta = (i as f64 + 0.5) * std::f64::consts::PI / m as f64;
                for j in 0..m {
                    let phi = (j as f64 + 0.5) * 2.0 * std::f64::consts::PI / m as f64;
                    let x = [
                        r * theta.sin() * phi.cos(),
                        r * theta.sin() * phi.sin(),
                        r * theta.cos(),
                    ];
                    if self.contains(&x) {
                        return true;
                    }
                }
            }
            false
        }
    }

    /// Membership test for the open set `Ω`.
    pub fn contains(&self, x: &Point) -> bool {
        match &self.kind {
            DomainKind::ConeComplement { k1 } => {
                let axis = x[self.n - 1];
                !(axis >= 0.0 && lateral_norm(x, self.n) <= k1 * axis)
            }
            DomainKind::PowerCusp { k1, s } => {
                let lat = lateral_norm(x, self.n);
                x[self.n - 1].abs() < k1 * lat.powf(*s)
            }
            DomainKind::Sector { opening } => {
                let phi = x[1].atan2(x[0]);
                let phi = if phi < 0.0 { phi + 2.0 * std::f64::consts::PI } else { phi };
                (x[0] != 0.0 || x[1] != 0.0) && phi > 0.0 && phi < *opening
            }
            DomainKind::Annulus => true,
            DomainKind::CustomOracle(f) => (f.0)(x),
        }
    }

    /// The shell `Ω ∩ {r1 < |x| < r2}` as a point set.
    pub fn shell(&self, r1: f64, r2: f64) -> Result<ShellSet<'_>> {
        if !(0.0 <= r1 && r1 < r2) || !r2.is_finite() {
            return Err(Error::Mesh(format!("invalid shell radii ({r1}, {r2})")));
        }
        Ok(ShellSet { domain: self, r1, r2 })
    }
}

impl PointSet for DomainSpec {
    fn contains(&self, x: &Point) -> bool {
        DomainSpec::contains(self, x)
    }
    fn dim(&self) -> usize {
        self.n
    }
}

/// `Ω ∩ B_{r1,r2}` for a borrowed domain.
#[derive(Debug, Clone, Copy)]
pub struct ShellSet<'a> {
    pub domain: &'a DomainSpec,
    pub r1: f64,
    pub r2: f64,
}

impl PointSet for ShellSet<'_> {
    fn contains(&self, x: &Point) -> bool {
        let r = norm(x, self.domain.n);
        r > self.r1 && r < self.r2 && self.domain.contains(x)
    }
    fn dim(&self) -> usize {
        self.domain.n
    }
}

/// Ad-hoc point set from a closure.
pub struct FnSet<F> {
    pub f: F,
    pub n: usize,
}

impl<F: Fn(&Point) -> bool> PointSet for FnSet<F> {
    fn contains(&self, x: &Point) -> bool {
        (self.f)(x)
    }
    fn dim(&self) -> usize {
        self.n
    }
}
