//! Semi-discrete operators for the self-gravitating Euler system.
//!
//! Two variants share the same mesh, basis and Poisson solver:
//! the structure-preserving operator evolves `(ρ, m, E_tot)` with `E_tot = E + ½(ρ - ρ_bg)φ`,
//! a well-balanced HLLC flux and a split gravity source; the standard operator evolves
//! `(ρ, m, E)` with a plain HLLC flux and a pointwise source.

mod boundary;
mod driver;
mod operator;
mod rk;

pub use boundary::{ExactSolution, Hydrostatic};
pub use driver::{integrate, IntegrationSummary, LimitedOperator};
pub use operator::{GravityOperator, Recovered, SchemeConfig};
pub use rk::{ssp_rk_step, RkOrder, SemiDiscrete};

use thiserror::Error;

use crate::equilibrium::EquilibriumError;
use crate::field::FieldError;
use crate::limiters::LimiterError;
use crate::poisson::PoissonError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SchemeKind {
    /// Well-balanced and total-energy conserving.
    StructurePreserving,
    /// Plain DG with pointwise gravity source.
    Standard,
}

impl SchemeKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::StructurePreserving => "sp",
            Self::Standard => "std",
        }
    }
}

/// Discretisation of the source of the potential-rate equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RateSource {
    /// Integrated by parts against the mass flux of the Riemann solver.
    SummationByParts,
    /// Divergence of the momentum polynomial, taken element by element.
    Divergence,
}

impl RateSource {
    pub fn name(self) -> &'static str {
        match self {
            Self::SummationByParts => "sbp",
            Self::Divergence => "naive",
        }
    }
}

#[derive(Debug, Error)]
pub enum SchemeError {
    #[error(transparent)]
    Poisson(#[from] PoissonError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Equilibrium(#[from] EquilibriumError),
    #[error("invalid state in element {element} at t = {time:e}: density {rho:e}, pressure {pressure:e}")]
    InvalidState { element: usize, time: f64, rho: f64, pressure: f64 },
    #[error("exact boundaries require an exact-solution sampler")]
    MissingExactSolution,
    #[error("field has {got} components, the operator expects {expected}")]
    ComponentCount { expected: usize, got: usize },
    #[error("non-positive discrete equilibrium density in element {0}")]
    EquilibriumDensity(usize),
    #[error(transparent)]
    Limiter(#[from] LimiterError),
}
