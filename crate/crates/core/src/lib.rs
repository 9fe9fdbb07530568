//! Discontinuous Galerkin discretisation of the self-gravitating Euler equations on
//! Cartesian meshes, with a well-balanced and total-energy-conserving variant.
//!
//! Everything is generic over the scalar type through [`Real`]; the aliases below fix it
//! to `f64`, which is what the solver is tuned and tested for.

// `!(x > 0)` is used on purpose so that NaN fails the check; component loops index
// several parallel arrays at once.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod basis;
pub mod diagnostics;
pub mod equilibrium;
pub mod euler;
pub mod field;
pub mod limiters;
pub mod mesh;
pub mod poisson;
pub mod quadrature;
pub mod real;
pub mod scheme;
pub mod space;
pub mod sparse;

pub use basis::{Basis, BasisKind};
pub use field::{DgField, FieldError};
pub use mesh::{BoundaryKind, CartesianMesh, Face, MeshError};
pub use real::Real;
pub use space::DgSpace;

/// Double-precision aliases.
pub type Mesh = CartesianMesh<f64>;
pub type Space = DgSpace<f64>;
pub type Field = DgField<f64>;
pub type Operator = scheme::GravityOperator<f64>;
pub type Equilibrium = equilibrium::Equilibrium<f64>;
