//! Scenario runner for the self-gravitating DG solver: configuration files, the
//! scenario registry, time integration with diagnostics, and output files.

// `!(x > 0)` is used on purpose so that NaN fails the check; component loops index
// several parallel arrays at once.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod config;
pub mod output;
pub mod run;
pub mod scenarios;

pub use config::{Config, ConfigError, ScenarioId};
pub use run::{run_convergence, run_on_mesh, run_scenario, Convergence, ErrorRow, RunError, RunOutputs};
