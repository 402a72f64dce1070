//! Convergence-order regression, rate prediction and `(M, n)` planning.

use crate::error::{Error, Result};
use crate::model::ClassParams;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRow {
    pub m: usize,
    pub n: usize,
    pub cost: f64,
    pub error: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
}

/// Rows of an experiment with the fitted and predicted slopes. Slopes are
/// `None` when undefined (fewer than two usable rows, or no prediction).
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
    pub predicted_slope: Option<f64>,
}

impl ConvergenceTable {
    pub fn new(rows: Vec<ConvergenceRow>, predicted_slope: Option<f64>) -> Self {
        let points: Vec<(f64, f64)> = rows.iter().map(|r| (r.cost, r.error)).collect();
        let fit = fit_loglog_slope(&points).ok();
        Self {
            rows,
            slope: fit.map(|f| f.slope),
            intercept: fit.map(|f| f.intercept),
            predicted_slope,
        }
    }
}

fn log_points(points: &[(f64, f64)]) -> Result<Vec<(f64, f64)>> {
    if points.len() < 2 {
        return Err(Error::invalid("rows", "a slope needs at least two rows"));
    }
    points
        .iter()
        .map(|&(cost, error)| {
            if !(cost > 0.0 && cost.is_finite()) {
                Err(Error::invalid("cost", format!("must be positive, got {cost}")))
            } else if !(error > 0.0 && error.is_finite()) {
                Err(Error::invalid("error", format!("must be positive, got {error}")))
            } else {
                Ok((cost.ln(), error.ln()))
            }
        })
        .collect()
}

/// Ordinary least squares of `ln error` on `ln cost` over `(cost, error)`
/// points.
pub fn fit_loglog_slope(points: &[(f64, f64)]) -> Result<LogLogFit> {
    let logs = log_points(points)?;
    if logs.len() == 2 {
        let (x0, y0) = logs[0];
        let (x1, y1) = logs[1];
        if x0 == x1 {
            return Err(Error::invalid("cost", "costs must not all coincide"));
        }
        let slope = (y1 - y0) / (x1 - x0);
        return Ok(LogLogFit {
            slope,
            intercept: y0 - slope * x0,
        });
    }
    weighted_fit(&logs, &vec![1.0; logs.len()])
}

/// Weighted least squares with weights `1 / (std_error / error)^2`, the
/// inverse variance of `ln error` to first order.
pub fn fit_loglog_slope_weighted(rows: &[ConvergenceRow]) -> Result<LogLogFit> {
    let points: Vec<(f64, f64)> = rows.iter().map(|r| (r.cost, r.error)).collect();
    let logs = log_points(&points)?;
    let weights: Vec<f64> = rows
        .iter()
        .map(|r| {
            let rel = r.std_error / r.error;
            if rel > 0.0 {
                1.0 / (rel * rel)
            } else {
                1.0
            }
        })
        .collect();
    weighted_fit(&logs, &weights)
}

fn weighted_fit(logs: &[(f64, f64)], weights: &[f64]) -> Result<LogLogFit> {
    let total: f64 = weights.iter().sum();
    let x_bar = logs.iter().zip(weights).map(|(p, w)| w * p.0).sum::<f64>() / total;
    let y_bar = logs.iter().zip(weights).map(|(p, w)| w * p.1).sum::<f64>() / total;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (&(x, y), &w) in logs.iter().zip(weights) {
        sxx += w * (x - x_bar) * (x - x_bar);
        sxy += w * (x - x_bar) * (y - y_bar);
    }
    if sxx == 0.0 {
        return Err(Error::invalid("cost", "costs must not all coincide"));
    }
    let slope = sxy / sxx;
    Ok(LogLogFit {
        slope,
        intercept: y_bar - slope * x_bar,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatePrediction {
    /// `min(ρ1, ρ2, 1/p)`, the step-count exponent of the error bound.
    pub gamma: f64,
    pub alpha: f64,
    /// Error-vs-cost slope `1/(4α) - 1/2`, only defined for `γ = 1/2`.
    pub slope: Option<f64>,
}

/// Predicted error decay for a power diffusion with exponent `alpha`
/// (`δ(M) = Θ(M^{1/2-α})`), with `n` and `M` balanced optimally.
pub fn predict_rate(class_params: &ClassParams, alpha: f64) -> RatePrediction {
    let gamma = class_params
        .rho1
        .min(class_params.rho2)
        .min(1.0 / class_params.p);
    let slope = (gamma == 0.5).then(|| 1.0 / (4.0 * alpha) - 0.5);
    RatePrediction { gamma, alpha, slope }
}

/// Exponent `e` in `cost(ε) = Θ(ε^{-e})` of the optimal method, for
/// `γ = 1/2` and `δ(M) = Θ(M^{1/2-α})`.
pub fn cost_exponent(gamma: f64, alpha: f64) -> Option<f64> {
    (gamma == 0.5 && alpha > 0.5).then(|| 4.0 * alpha / (2.0 * alpha - 1.0))
}

/// Smallest `M >= 1` with `δ(M) <= x`, for `δ` nonincreasing to zero.
pub fn delta_inverse(delta: impl Fn(usize) -> f64, x: f64) -> Result<usize> {
    if !(x > 0.0) {
        return Err(Error::invalid("x", format!("must be positive, got {x}")));
    }
    if delta(1) <= x {
        return Ok(1);
    }
    // δ(lo) > x >= δ(hi)
    let mut lo = 1usize;
    let mut hi = 2usize;
    while delta(hi) > x {
        lo = hi;
        hi = hi.checked_mul(2).ok_or_else(|| {
            Error::invalid("x", format!("δ stays above {x} for every representable M"))
        })?;
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if delta(mid) <= x {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimalParams {
    pub m: usize,
    pub n: usize,
    pub cost: f64,
}

/// Minimal `n` and `M` with `K n^{-γ} <= ε/2` and `K δ(M) <= ε/2`.
pub fn optimal_params(
    epsilon: f64,
    gamma: f64,
    delta: impl Fn(usize) -> f64,
    rate_constant: f64,
) -> Result<OptimalParams> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::invalid("epsilon", format!("must be positive, got {epsilon}")));
    }
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::invalid("gamma", format!("must be positive, got {gamma}")));
    }
    if !(rate_constant > 0.0 && rate_constant.is_finite()) {
        return Err(Error::invalid("KC", format!("must be positive, got {rate_constant}")));
    }
    let half = epsilon / (2.0 * rate_constant);
    let n_real = (1.0 / half).powf(1.0 / gamma).ceil();
    if !(n_real < usize::MAX as f64) {
        return Err(Error::invalid("epsilon", "required step count overflows"));
    }
    let n = (n_real as usize).max(1);
    let m = delta_inverse(delta, half)?;
    Ok(OptimalParams {
        m,
        n,
        cost: crate::estimator::informational_cost(m, n),
    })
}
