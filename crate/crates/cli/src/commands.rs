use std::path::Path;

use jumpeuler_core::{
    cost_exponent, mc_error_coupled, mc_error_vs_reference, optimal_params,
    power_tail_delta, sample_terminals, ConvergenceRow, ConvergenceTable, Driver, McSettings, SchemeParams,
    TerminalValue,
};

use crate::config::{EstimatorKind, ExperimentConfig, LayoutSetting, ModelChoice, WorkersSetting};
use crate::error::{CliError, Result};
use crate::report::real;

/// Runs every row of the schedule in order. `progress` sees each row as
/// soon as it is done.
pub fn run_experiment(
    config: &ExperimentConfig,
    workers: WorkersSetting,
    progress: &mut dyn FnMut(usize, &ConvergenceRow),
) -> Result<ConvergenceTable> {
    config.validate()?;
    let model = config.model.build()?;
    let driver = Driver::new(workers.to_workers())?;
    let layout = config.layout.resolve(&model);
    let settings = McSettings::new(config.k, config.p, config.seed).with_layout(layout);
    let mut rows = Vec::new();
    for (i, (m, n)) in config.rows()?.into_iter().enumerate() {
        let estimate = match config.estimator {
            EstimatorKind::Coupled => mc_error_coupled(&model, m, n, config.multipliers, &settings, &driver),
            EstimatorKind::ExactReference => {
                mc_error_vs_reference(&model, m, n, config.reference_multiplier, &settings, &driver)
            }
        }
        .map_err(|source| CliError::Row { m, n, source })?;
        let row = ConvergenceRow {
            m,
            n,
            cost: estimate.cost,
            error: estimate.error,
            std_error: estimate.std_error,
        };
        progress(i, &row);
        rows.push(row);
    }
    let predicted = config.model.predicted_slope(model.class_params, config.p);
    Ok(ConvergenceTable::new(rows, predicted))
}

/// Error-tail function handed to the planner.
#[derive(Debug, Clone, PartialEq)]
pub enum DeltaSource {
    /// `power_tail_delta(α, ·)`.
    Power(f64),
    /// `δ(1), δ(2), ...` listed explicitly.
    Table(Vec<f64>),
}

impl DeltaSource {
    /// Reads a table of `δ(1), δ(2), ...`: numbers separated by commas or
    /// whitespace, `#` starting a comment.
    pub fn read_table(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let mut values = Vec::new();
        for (line_no, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("");
            for cell in line.split(|c: char| c == ',' || c.is_whitespace()).filter(|c| !c.is_empty()) {
                let v: f64 = cell.parse().map_err(|_| {
                    CliError::config(format!("{}:{}: not a number: {cell:?}", path.display(), line_no + 1))
                })?;
                values.push(v);
            }
        }
        Self::table(values)
    }

    pub fn table(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(CliError::config("delta table: empty"));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(CliError::config("delta table: entries must be finite and nonnegative"));
        }
        if values.windows(2).any(|w| w[1] > w[0]) {
            return Err(CliError::config("delta table: entries must be nonincreasing"));
        }
        Ok(DeltaSource::Table(values))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanRequest {
    pub epsilon: f64,
    pub gamma: f64,
    pub delta: DeltaSource,
    pub rate_constant: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanReport {
    pub m: usize,
    pub n: usize,
    pub cost: f64,
    /// `4α/(2α−1)` for a power tail with `γ = 1/2`.
    pub cost_exponent: Option<f64>,
}

pub const PLAN_HEADER: &str = "epsilon,gamma,KC,M,n,cost,cost_exponent";

pub fn plan(request: &PlanRequest) -> Result<PlanReport> {
    let (params, exponent) = match &request.delta {
        DeltaSource::Power(alpha) => {
            let alpha = *alpha;
            power_tail_delta(alpha, 1).map_err(|e| CliError::config(e.to_string()))?;
            let delta = move |m: usize| power_tail_delta(alpha, m).unwrap_or(f64::NAN);
            (
                optimal_params(request.epsilon, request.gamma, delta, request.rate_constant),
                cost_exponent(request.gamma, alpha),
            )
        }
        DeltaSource::Table(values) => {
            let target = request.epsilon / (2.0 * request.rate_constant);
            if request.epsilon > 0.0 && values[values.len() - 1] > target {
                return Err(CliError::config(format!(
                    "delta table: its last entry {} is above the target {target}; extend the table",
                    values[values.len() - 1]
                )));
            }
            let delta = |m: usize| values.get(m - 1).copied().unwrap_or(0.0);
            (optimal_params(request.epsilon, request.gamma, delta, request.rate_constant), None)
        }
    };
    let params = params.map_err(|e| CliError::config(e.to_string()))?;
    Ok(PlanReport {
        m: params.m,
        n: params.n,
        cost: params.cost,
        cost_exponent: exponent,
    })
}

pub fn plan_csv(request: &PlanRequest, report: &PlanReport) -> String {
    format!(
        "{PLAN_HEADER}\n{},{},{},{},{},{},{}\n",
        real(request.epsilon),
        real(request.gamma),
        real(request.rate_constant),
        report.m,
        report.n,
        real(report.cost),
        report.cost_exponent.map_or_else(|| "undefined".to_string(), real)
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulateRequest {
    pub model: ModelChoice,
    pub m: usize,
    pub n: usize,
    pub count: usize,
    pub seed: u64,
    pub layout: LayoutSetting,
}

/// Terminal values of trajectories `0..count`.
pub fn simulate(request: &SimulateRequest, workers: WorkersSetting) -> Result<Vec<TerminalValue>> {
    if request.m < 1 || request.n < 1 {
        return Err(CliError::config("simulate: M and n must be at least 1"));
    }
    let model = request.model.build()?;
    let params = SchemeParams::for_model(&model, request.m, request.n);
    let driver = Driver::new(workers.to_workers())?;
    let layout = request.layout.resolve(&model);
    Ok(sample_terminals(&model, &params, request.count, request.seed, Some(layout), &driver)?)
}
