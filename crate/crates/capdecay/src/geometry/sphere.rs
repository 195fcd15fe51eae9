use super::{DomainSpec, Point};
use crate::error::{Error, Result};

/// Angular mesh on the sphere `S_r`, classified against a domain section
/// `S_r ∩ Ω`.
///
/// Nodes are cell-centered: on a circle (`n = 2`) node `j` sits at azimuth
/// `(j + 1/2) h_phi`; on a sphere (`n = 3`) node `(i, j)` sits at
/// colatitude `(i + 1/2) h_theta`, azimuth `(j + 1/2) h_phi`.  Cell faces
/// therefore lie at integer multiples of the angular steps, so the edges
/// of sectors, wedges and hemispheres coincide with faces when the step
/// divides the opening, and no node ever sits on the poles.
#[derive(Debug, Clone)]
pub struct SphereMesh {
    pub radius: f64,
    /// Ambient dimension (2 or 3), one more than the mesh dimension.
    pub dim: usize,
    /// Number of colatitude rings; 1 for `dim = 2`.
    pub n_theta: usize,
    /// Number of azimuthal nodes per ring.
    pub n_phi: usize,
    h_theta: f64,
    h_phi: f64,
    inside: Vec<bool>,
    inside_count: usize,
}

impl SphereMesh {
    /// Mesh of the circle `S_r ⊂ R^2` classified against `domain`.
    pub fn new_circle(domain: &DomainSpec, r: f64, n_phi: usize) -> Result<Self> {
        if domain.n != 2 {
            return Err(Error::Mesh("circle mesh requires a planar domain".into()));
        }
        Self::build(domain, r, 1, n_phi)
    }

    /// Latitude-longitude mesh of `S_r ⊂ R^3` classified against `domain`.
    pub fn new_latlong(domain: &DomainSpec, r: f64, n_theta: usize, n_phi: usize) -> Result<Self> {
        if domain.n != 3 {
            return Err(Error::Mesh("latitude-longitude mesh requires a spatial domain".into()));
        }
        Self::build(domain, r, n_theta, n_phi)
    }

    fn build(domain: &DomainSpec, r: f64, n_theta: usize, n_phi: usize) -> Result<Self> {
        if !(r > 0.0 && r < domain.outer_radius) {
            return Err(Error::Mesh(format!(
                "section radius must lie in (0, R) = (0, {}), got {r}",
                domain.outer_radius
            )));
        }
        if n_phi < 8 || (domain.n == 3 && n_theta < 4) {
            return Err(Error::Mesh("angular resolution too coarse".into()));
        }
        let h_theta = std::f64::consts::PI / n_theta as f64;
        let h_phi = 2.0 * std::f64::consts::PI / n_phi as f64;
        let mut mesh = SphereMesh {
            radius: r,
            dim: domain.n,
            n_theta,
            n_phi,
            h_theta,
            h_phi,
            inside: vec![false; n_theta * n_phi],
            inside_count: 0,
        };
        for i in 0..n_theta {
            for j in 0..n_phi {
                let idx = mesh.idx(i, j);
                let p = mesh.position(idx);
                if domain.contains(&p) {
                    mesh.inside[idx] = true;
                    mesh.inside_count += 1;
                }
            }
        }
        Ok(mesh)
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        i * self.n_phi + j
    }

    pub fn node_count(&self) -> usize {
        self.n_theta * self.n_phi
    }

    #[inline]
    pub fn is_inside(&self, idx: usize) -> bool {
        self.inside[idx]
    }

    pub fn inside_count(&self) -> usize {
        self.inside_count
    }

    /// True when the section misses every node.
    pub fn is_empty_section(&self) -> bool {
        self.inside_count == 0
    }

    /// True when every node is in the section (no Dirichlet boundary).
    pub fn is_full_sphere(&self) -> bool {
        self.inside_count == self.node_count()
    }

    pub fn h_theta(&self) -> f64 {
        self.h_theta
    }

    pub fn h_phi(&self) -> f64 {
        self.h_phi
    }

    /// Colatitude of ring `i`.
    #[inline]
    pub fn theta(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.h_theta
    }

    /// Azimuth of column `j`.
    #[inline]
    pub fn phi(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * self.h_phi
    }

    /// Unit direction of a node.
    pub fn unit_dir(&self, idx: usize) -> Point {
        let i = idx / self.n_phi;
        let j = idx % self.n_phi;
        let phi = self.phi(j);
        if self.dim == 2 {
            [phi.cos(), phi.sin(), 0.0]
        } else {
            let theta = self.theta(i);
            [
                theta.sin() * phi.cos(),
                theta.sin() * phi.sin(),
                theta.cos(),
            ]
        }
    }

    /// Position on `S_r`.
    pub fn position(&self, idx: usize) -> Point {
        let d = self.unit_dir(idx);
        [self.radius * d[0], self.radius * d[1], self.radius * d[2]]
    }

    /// Quadrature mass of a node: the area of its angular cell on `S_r`.
    pub fn mass(&self, idx: usize) -> f64 {
        if self.dim == 2 {
            self.radius * self.h_phi
        } else {
            let i = idx / self.n_phi;
            self.radius * self.radius * self.theta(i).sin() * self.h_theta * self.h_phi
        }
    }

    /// Total area of the section (sum of inside masses).
    pub fn section_area(&self) -> f64 {
        (0..self.node_count())
            .filter(|&idx| self.inside[idx])
            .map(|idx| self.mass(idx))
            .sum()
    }
}

/// Builds a section mesh with angular step close to `h_ang` (radians).
///
/// Azimuthal counts are rounded to a multiple of eight and ring counts to
/// even numbers so that quarter-plane sectors and hemispheres stay
/// face-aligned under refinement.
pub fn sphere_section_mesh(domain: &DomainSpec, r: f64, h_ang: f64) -> Result<SphereMesh> {
    if !(h_ang > 0.0) || !h_ang.is_finite() {
        return Err(Error::Mesh(format!("angular step must be positive, got {h_ang}")));
    }
    let n_phi = (((2.0 * std::f64::consts::PI / h_ang) / 8.0).ceil() as usize).max(1) * 8;
    if domain.n == 2 {
        SphereMesh::new_circle(domain, r, n_phi)
    } else {
        let n_theta = (((std::f64::consts::PI / h_ang) / 2.0).ceil() as usize).max(2) * 2;
        SphereMesh::new_latlong(domain, r, n_theta, n_phi)
    }
}
