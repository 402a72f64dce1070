//! Configuration-driven experiment runner for the `jumpeuler` binary:
//! convergence tables, `(M, n)` plans and raw terminal samples as CSV.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x >= 1.0)` also rejects NaN

pub mod commands;
pub mod config;
pub mod error;
pub mod report;

pub use commands::{plan, plan_csv, run_experiment, simulate, DeltaSource, PlanReport, PlanRequest, SimulateRequest};
pub use config::{EstimatorKind, ExperimentConfig, LayoutSetting, ModelChoice, WorkersSetting};
pub use error::{CliError, Result};
