//! Monte Carlo strong-error estimators and the parallel trajectory driver.
//!
//! Trajectories are mapped in parallel but every reduction runs afterwards,
//! sequentially and in trajectory-index order, so results do not depend on
//! the number of workers or on scheduling.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::scheme::{
    simulate_coupled_pair_with, simulate_reference_pair, simulate_terminal_with, Multipliers,
    NoiseLayout, SchemeParams, TerminalValue, TrajectoryKey,
};

/// Worker count for the trajectory driver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Workers {
    /// Rayon's default (all available cores).
    #[default]
    Auto,
    Fixed(usize),
}

/// Runs per-trajectory work on a dedicated thread pool.
pub struct Driver {
    pool: rayon::ThreadPool,
}

impl Driver {
    pub fn new(workers: Workers) -> Result<Self> {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Workers::Fixed(n) = workers {
            if n == 0 {
                return Err(Error::invalid("workers", "need at least one worker"));
            }
            builder = builder.num_threads(n);
        }
        let pool = builder
            .build()
            .map_err(|e| Error::invalid("workers", e.to_string()))?;
        Ok(Self { pool })
    }

    pub fn workers(&self) -> usize {
        self.pool.current_num_threads()
    }

    /// `f(0), ..., f(count - 1)` in index order.
    pub fn map_indices<T, F>(&self, count: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        self.pool
            .install(|| (0..count).into_par_iter().with_min_len(16).map(&f).collect())
    }

    /// Like [`Driver::map_indices`] for fallible work; the error reported is
    /// the one of the lowest failing index.
    pub fn try_map_indices<T, F>(&self, count: usize, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(usize) -> Result<T> + Sync + Send,
    {
        self.map_indices(count, |l| {
            f(l).map_err(|cause| Error::TrajectoryFailure {
                index: l,
                cause: Box::new(cause),
            })
        })
        .into_iter()
        .collect()
    }
}

impl Default for Driver {
    fn default() -> Self {
        Self::new(Workers::Auto).expect("default thread pool")
    }
}

/// Cost functional of an `(M, n)` method: evaluations charged per trajectory.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CostModel;

impl CostModel {
    pub fn cost(&self, m: usize, n: usize) -> f64 {
        informational_cost(m, n)
    }
}

/// `M · n`.
pub fn informational_cost(m: usize, n: usize) -> f64 {
    m as f64 * n as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorEstimate {
    /// `((1/K) Σ_l |X̂_l - X_l|^p)^{1/p}`.
    pub error: f64,
    /// Standard error of `error`, propagated from the p-th-power mean by the
    /// delta method.
    pub std_error: f64,
    pub trajectories: usize,
    pub p: f64,
    pub cost: f64,
}

impl ErrorEstimate {
    /// Mean of the p-th powers, i.e. `error^p`.
    pub fn power_mean(&self) -> f64 {
        self.error.powf(self.p)
    }

    /// Standard error of [`ErrorEstimate::power_mean`].
    pub fn power_std_error(&self) -> f64 {
        if self.error == 0.0 {
            0.0
        } else {
            self.std_error * self.p * self.error.powf(self.p - 1.0)
        }
    }
}

/// Settings shared by the Monte Carlo estimators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McSettings {
    pub trajectories: usize,
    pub p: f64,
    pub seed: u64,
    /// `None` picks [`NoiseLayout::auto`].
    pub layout: Option<NoiseLayout>,
}

impl McSettings {
    pub fn new(trajectories: usize, p: f64, seed: u64) -> Self {
        Self {
            trajectories,
            p,
            seed,
            layout: None,
        }
    }

    pub fn with_layout(self, layout: NoiseLayout) -> Self {
        Self {
            layout: Some(layout),
            ..self
        }
    }

    fn validate(&self) -> Result<()> {
        if self.trajectories < 2 {
            return Err(Error::invalid("K", "need at least two trajectories"));
        }
        if !(self.p >= 2.0 && self.p.is_finite()) {
            return Err(Error::invalid("p", format!("need p >= 2, got {}", self.p)));
        }
        Ok(())
    }

    fn layout_for(&self, model: &ModelSpec) -> NoiseLayout {
        self.layout.unwrap_or_else(|| NoiseLayout::auto(model))
    }
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    if a.len() == 1 {
        (a[0] - b[0]).abs()
    } else {
        a.iter().zip(b).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt()
    }
}

/// Mean and unbiased variance, two passes in slice order.
pub fn mean_and_variance(values: &[f64]) -> (f64, f64) {
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0)
    } else {
        0.0
    };
    (mean, var)
}

/// Builds the estimate from the per-trajectory p-th powers.
pub fn summarize_powers(powers: &[f64], p: f64, cost: f64) -> ErrorEstimate {
    let (mean, var) = mean_and_variance(powers);
    let k = powers.len();
    let se_mean = (var / k as f64).sqrt();
    let error = mean.powf(1.0 / p);
    let std_error = if mean > 0.0 {
        se_mean * mean.powf(1.0 / p - 1.0) / p
    } else {
        0.0
    };
    ErrorEstimate {
        error,
        std_error,
        trajectories: k,
        p,
        cost,
    }
}

/// Strong error of `X_{M,n}` against the coupled fine scheme
/// `X_{M·dims, n·steps}` on shared noise.
pub fn mc_error_coupled(
    model: &ModelSpec,
    m: usize,
    n: usize,
    multipliers: Multipliers,
    settings: &McSettings,
    driver: &Driver,
) -> Result<ErrorEstimate> {
    settings.validate()?;
    model.validate()?;
    let params = SchemeParams::for_model(model, m, n).with_p(settings.p);
    params.validate(model)?;
    let layout = settings.layout_for(model);
    let p = settings.p;
    let powers = driver.try_map_indices(settings.trajectories, |l| {
        let key = TrajectoryKey::new(settings.seed, l as u64);
        let (rare, fine) = simulate_coupled_pair_with(model, &params, multipliers, key, layout)?;
        Ok(distance(&fine.value, &rare.value).powf(p))
    })?;
    Ok(summarize_powers(&powers, p, informational_cost(m, n)))
}

/// Strong error of `X_{M,n}` against the model's exact solution truncated
/// to `M·ref_mult` Wiener dimensions, evaluated on the scheme's own noise.
pub fn mc_error_vs_reference(
    model: &ModelSpec,
    m: usize,
    n: usize,
    ref_mult: usize,
    settings: &McSettings,
    driver: &Driver,
) -> Result<ErrorEstimate> {
    if model.exact_reference.is_none() {
        return Err(Error::MissingReference);
    }
    settings.validate()?;
    model.validate()?;
    let params = SchemeParams::for_model(model, m, n).with_p(settings.p);
    params.validate(model)?;
    let layout = settings.layout_for(model);
    let p = settings.p;
    let powers = driver.try_map_indices(settings.trajectories, |l| {
        let key = TrajectoryKey::new(settings.seed, l as u64);
        let (scheme, exact) = simulate_reference_pair(model, &params, ref_mult, key, layout)?;
        Ok(distance(&exact, &scheme.value).powf(p))
    })?;
    Ok(summarize_powers(&powers, p, informational_cost(m, n)))
}

/// Terminal values of trajectories `0..count`.
pub fn sample_terminals(
    model: &ModelSpec,
    params: &SchemeParams,
    count: usize,
    seed: u64,
    layout: Option<NoiseLayout>,
    driver: &Driver,
) -> Result<Vec<TerminalValue>> {
    model.validate()?;
    params.validate(model)?;
    let layout = layout.unwrap_or_else(|| NoiseLayout::auto(model));
    driver.try_map_indices(count, |l| {
        simulate_terminal_with(model, params, TrajectoryKey::new(seed, l as u64), layout)
    })
}
