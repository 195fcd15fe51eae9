//! Numerical toolkit for boundary decay of solutions to quasilinear
//! elliptic equations.
//!
//! The crate computes the geometric functionals that drive Wiener-type
//! decay estimates near a boundary point of an open set `Ω ⊂ R^n`:
//!
//! * variational `p`-capacity of condensers on regular grids,
//! * first Dirichlet eigenvalues of the `p`-Laplace-Beltrami operator on
//!   spherical sections `S_r ∩ Ω`,
//! * the `ε`-essential inner diameter of open sets,
//! * integral norms of lower-order coefficients over essential parts.
//!
//! From these it assembles radial profiles, evaluates a catalog of decay
//! estimates in the two supported regimes of the gradient exponent, and
//! checks the resulting bounds against finite-difference solutions on
//! model domains.
//!
//! Everything is deterministic: identical inputs produce bit-identical
//! outputs, including the serialized experiment bundles.

pub mod capacity;
pub mod error;
pub mod estimates;
pub mod fit;
pub mod geometry;
pub mod guide;
pub mod pde;
pub mod profiles;
pub mod runner;
pub mod spectral;

pub use error::{Error, Result};
