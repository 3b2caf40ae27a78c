//! Implicit discontinuous Galerkin solver for 2D compressible flow with gravity.
//!
//! The spatial operator is a nodal tensor-product DG discretization of the
//! perturbation equations about a hydrostatic background. Time stepping is
//! SDIRK2 with a Jacobian-free Newton-GMRES solver, preconditioned by a
//! geometric multigrid method on a first-order finite-volume subgrid that has
//! the same number of degrees of freedom as the DG mesh.

pub mod cases;
pub mod cli;
pub mod dg;
pub mod error;
pub mod fv;
pub mod linalg;
pub mod mesh;
pub mod mgprecond;
pub mod physics;
pub mod quadrature;
pub mod state;
pub mod timeint;
pub mod transfer;

pub use error::{Error, Result};
pub use state::ConservedState;
