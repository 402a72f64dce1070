//! Strong approximation of jump-diffusion SDEs driven by a countably
//! dimensional Wiener process and a finite-intensity Poisson random measure.
//!
//! The scheme truncates the Wiener driver to `M` dimensions and evaluates the
//! drift at a uniformly random time inside each of `n` steps. The crate also
//! provides coupled-grid Monte Carlo error estimation, the `M·n` cost model,
//! convergence regression and the optimal `(M, n)` planner.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x >= 0.0)` also rejects NaN

pub mod analysis;
pub mod error;
pub mod estimator;
pub mod model;
pub mod models;
pub mod noise;
pub mod scheme;

pub use analysis::{
    cost_exponent, delta_inverse, fit_loglog_slope, fit_loglog_slope_weighted, optimal_params,
    predict_rate, ConvergenceRow, ConvergenceTable, LogLogFit, OptimalParams, RatePrediction,
};
pub use error::{Error, Result};
pub use estimator::{
    informational_cost, mc_error_coupled, mc_error_vs_reference, sample_terminals, CostModel,
    Driver, ErrorEstimate, McSettings, Workers,
};
pub use model::{
    power_tail_delta, truncated_diffusion_apply, validate_model, ClassParams, DiffusionFactor,
    JumpLaw, ModelSpec, SeriesDiffusion, WienerEndpoints,
};
pub use models::{
    make_merton_model, make_ou_model, merton_exact_terminal, merton_exact_terminal_weighted, merton_mark,
    merton_mark_mean, merton_mean, ou_mean, MertonSpec,
    OuJumpSpec, Preset,
};
pub use noise::{
    aggregate_to_rare, generate_fine_grid, generate_jump_stream, Channel, JumpStream, NoiseGrid,
    StreamKey, StreamRng,
};
pub use scheme::{
    randomized_euler_step, simulate_coupled_pair, simulate_coupled_pair_with, simulate_path,
    simulate_reference_pair, simulate_terminal, simulate_terminal_with, Multipliers, NoiseLayout,
    SchemeParams, StepInputs, TerminalValue, TrajectoryKey,
};
