//! Sparse matrices and the linear solvers used by the Poisson discretisation.

mod csr;
mod ldl;
mod ordering;
mod pcg;

pub use csr::CsrMatrix;
pub use ldl::{LdlError, LdlFactor};
pub use ordering::grid_nested_dissection;
pub use pcg::{pcg, PcgOutcome, Preconditioner};
