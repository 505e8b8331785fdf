//! Broken and continuous Lagrange spaces on a triangulation.

mod basis;
mod quadrature;
mod space;

pub use basis::{LagrangeBasis, Tabulation};
pub use quadrature::{gauss_legendre, quadrature_rule, QuadratureKind, QuadratureRule, MAX_DEGREE};
pub use space::{trial_to_test_embedding, BasisValues, Continuity, DiscreteFunction, FunctionSpace};
