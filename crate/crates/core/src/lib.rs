//! Bound-preserving residual minimization for advection-dominated
//! diffusion-advection-reaction problems.
//!
//! The discrete solution is sought in a continuous Lagrange space and is
//! chosen to minimize the residual of an upwind/SIPG discontinuous Galerkin
//! formulation, measured in the dual of the broken test space. A nonlinear
//! consistent penalty weakly enforces lower and upper bounds, and the
//! residual representative doubles as an error indicator for adaptive
//! refinement.

pub mod adapt;
pub mod app;
pub mod error;
pub mod fespace;
pub mod forms;
pub mod mesh;
pub mod penalty;
pub mod solver;
pub mod sparse;

pub use error::{Error, Result};
