use super::{Point, PointSet};
use crate::error::{Error, Result};

/// Uniform cell-centered lattice with an inside/outside classification
/// against a point set.
///
/// Node `(i, j, k)` sits at `lo + (i + 1/2, j + 1/2, k + 1/2) * h`; no node
/// ever lies exactly on an axis plane of a symmetric box, which keeps
/// boundary classification generic.  Classification uses the membership
/// test at the node position only, so refining `h` never reclassifies a
/// position shared between grids.
#[derive(Debug, Clone)]
pub struct Grid {
    pub lo: Point,
    pub h: f64,
    pub dims: [usize; 3],
    pub n: usize,
    inside: Vec<bool>,
    inside_count: usize,
}

/// Index arithmetic for a grid of the given dimensions.
#[derive(Debug, Clone, Copy)]
pub struct NodeWalk {
    pub dims: [usize; 3],
}

impl NodeWalk {
    #[inline]
    pub fn flat(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.dims[1] + j) * self.dims[0] + i
    }

    #[inline]
    pub fn coords(&self, flat: usize) -> (usize, usize, usize) {
        let i = flat % self.dims[0];
        let rest = flat / self.dims[0];
        (i, rest % self.dims[1], rest / self.dims[1])
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Strides along the three axes.
    pub fn strides(&self) -> [usize; 3] {
        [1, self.dims[0], self.dims[0] * self.dims[1]]
    }
}

impl Grid {
    /// Classifies the cell-centered lattice covering `[lo, lo + extent]`
    /// against `set`.  For `n = 2` the third axis collapses to one layer at
    /// `z = 0` and `lo[2]`, `extent[2]` are ignored.
    pub fn from_set(set: &dyn PointSet, lo: Point, extent: [f64; 3], h: f64) -> Result<Grid> {
        let n = set.dim();
        if n > 3 {
            return Err(Error::Mesh(format!("grids support n <= 3, got {n}")));
        }
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::Mesh(format!("grid spacing must be positive, got {h}")));
        }
        let mut dims = [1usize; 3];
        let mut lo3 = [lo[0], lo[1], 0.0];
        for d in 0..n {
            if !(extent[d] > 0.0) {
                return Err(Error::Mesh(format!("grid extent must be positive, got {}", extent[d])));
            }
            dims[d] = (extent[d] / h).round().max(1.0) as usize;
        }
        if n == 3 {
            lo3[2] = lo[2];
        }
        let mut g = Grid {
            lo: lo3,
            h,
            dims,
            n,
            inside: Vec::new(),
            inside_count: 0,
        };
        g.classify(set);
        Ok(g)
    }

    /// Same as `from_set` with a box `[-half, half]^n`.
    pub fn symmetric_box(set: &dyn PointSet, half: f64, h: f64) -> Result<Grid> {
        Grid::from_set(
            set,
            [-half, -half, -half],
            [2.0 * half, 2.0 * half, 2.0 * half],
            h,
        )
    }

    fn classify(&mut self, set: &dyn PointSet) {
        let walk = self.walk();
        let mut inside = vec![false; walk.len()];
        let mut count = 0;
        for k in 0..self.dims[2] {
            for j in 0..self.dims[1] {
                for i in 0..self.dims[0] {
                    let idx = walk.flat(i, j, k);
                    let p = self.pos_ijk(i, j, k);
                    if set.contains(&p) {
                        inside[idx] = true;
                        count += 1;
                    }
                }
            }
        }
        self.inside = inside;
        self.inside_count = count;
    }

    pub fn walk(&self) -> NodeWalk {
        NodeWalk { dims: self.dims }
    }

    pub fn len(&self) -> usize {
        self.walk().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn pos_ijk(&self, i: usize, j: usize, k: usize) -> Point {
        let z = if self.n == 3 {
            self.lo[2] + (k as f64 + 0.5) * self.h
        } else {
            0.0
        };
        [
            self.lo[0] + (i as f64 + 0.5) * self.h,
            self.lo[1] + (j as f64 + 0.5) * self.h,
            z,
        ]
    }

    #[inline]
    pub fn pos(&self, flat: usize) -> Point {
        let (i, j, k) = self.walk().coords(flat);
        self.pos_ijk(i, j, k)
    }

    #[inline]
    pub fn is_inside(&self, flat: usize) -> bool {
        self.inside[flat]
    }

    pub fn inside_mask(&self) -> &[bool] {
        &self.inside
    }

    pub fn inside_count(&self) -> usize {
        self.inside_count
    }

    /// True when no node of the lattice lies in the set.
    pub fn is_empty_region(&self) -> bool {
        self.inside_count == 0
    }

    /// Cell volume `h^n`.
    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.n as i32)
    }

    /// Flat indices of inside nodes, in lattice order.
    pub fn inside_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        self.inside.iter().enumerate().filter(|(_, v)| **v).map(|(i, _)| i)
    }
}

/// Carrier mesh for the shell `Ω ∩ {r1 < |x| < r2}`.
///
/// The box extends two cells past `r2`; the result is flagged empty (not an
/// error) when no node of the lattice falls in the shell.
pub fn shell_mesh(domain: &super::DomainSpec, r1: f64, r2: f64, h: f64) -> Result<Grid> {
    if !(0.0 <= r1 && r1 < r2 && r2.is_finite()) {
        return Err(Error::Mesh(format!("invalid shell radii ({r1}, {r2})")));
    }
    let shell = domain.shell(r1, r2)?;
    let half = r2 + 2.0 * h;
    Grid::symmetric_box(&shell, half, h)
}
