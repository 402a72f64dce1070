//! Built-in experiment models: an Ornstein-Uhlenbeck process with
//! time-dependent Poisson jumps, and a Merton-type multiplicative model driven
//! by a compound Poisson process. Both use the power diffusion series
//! `σ_j = σ / j^α`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::{power_tail_delta, ClassParams, JumpLaw, ModelSpec, SeriesDiffusion, WienerEndpoints};
use crate::noise::{JumpStream, StreamRng};

pub type TimeFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// `dX = (μ - A X) dt + Σ_j σ/j^α dW_j + c1(t) dN`, `X(0) = η`.
#[derive(Clone)]
pub struct OuJumpSpec {
    /// Mean reversion `A`.
    pub mean_reversion: f64,
    pub mu: f64,
    pub sigma: f64,
    pub alpha: f64,
    pub lambda: f64,
    /// Jump size as a function of the jump time.
    pub c1: TimeFn,
    pub eta: f64,
    pub horizon: f64,
}

impl OuJumpSpec {
    /// Experiment parameters (σ=0.4, c1(t)=t, T=1.53, μ=0.08, α=1.2,
    /// λ=1.21) with `A = 0.5` and `η = 1`.
    pub fn standard() -> Self {
        Self {
            mean_reversion: 0.5,
            mu: 0.08,
            sigma: 0.4,
            alpha: 1.2,
            lambda: 1.21,
            c1: Arc::new(|t| t),
            eta: 1.0,
            horizon: 1.53,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::invalid("horizon", format!("must be positive, got {}", self.horizon)));
        }
        if !(self.alpha >= 1.0) {
            return Err(Error::invalid("alpha", format!("need alpha >= 1, got {}", self.alpha)));
        }
        if !(self.lambda >= 0.0) {
            return Err(Error::invalid("lambda", format!("must be nonnegative, got {}", self.lambda)));
        }
        if !(self.sigma >= 0.0) {
            return Err(Error::invalid("sigma", format!("must be nonnegative, got {}", self.sigma)));
        }
        Ok(())
    }
}

impl fmt::Debug for OuJumpSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OuJumpSpec")
            .field("mean_reversion", &self.mean_reversion)
            .field("mu", &self.mu)
            .field("sigma", &self.sigma)
            .field("alpha", &self.alpha)
            .field("lambda", &self.lambda)
            .field("eta", &self.eta)
            .field("horizon", &self.horizon)
            .finish_non_exhaustive()
    }
}

fn power_series(sigma: f64, alpha: f64, shape: crate::model::FieldFn) -> SeriesDiffusion {
    SeriesDiffusion::factored(
        Arc::new(move |j| sigma / (j as f64).powf(alpha)),
        shape,
        Arc::new(move |k| sigma * power_tail_delta(alpha, k).unwrap_or(f64::NAN)),
    )
}

pub fn make_ou_model(spec: &OuJumpSpec) -> Result<ModelSpec> {
    spec.validate()?;
    let (a, mu, eta) = (spec.mean_reversion, spec.mu, spec.eta);
    let c1 = spec.c1.clone();
    let law = JumpLaw::new(spec.lambda, 1, Arc::new(|_: &mut StreamRng, y: &mut [f64]| y[0] = 1.0));
    let model = ModelSpec::new(1, spec.horizon)
        .with_drift(move |_, x, out| out[0] = mu - a * x[0])
        .with_diffusion(power_series(spec.sigma, spec.alpha, Arc::new(|_, _, out| out[0] = 1.0)))
        .with_jumps(law, move |t, _, _, out| out[0] = c1(t))
        .with_initial_value(vec![eta])
        .with_class_params(ClassParams::default());
    model.validate()?;
    Ok(model)
}

/// Adaptive Simpson quadrature with absolute tolerance `tol`.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
                + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
        }
    }
    if a == b {
        return 0.0;
    }
    let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
    recurse(f, a, b, fa, fm, fb, simpson(fa, fm, fb, a, b), tol, 50)
}

/// `E X(t) = e^{-At} (η + μ ∫_0^t e^{As} ds + λ ∫_0^t e^{As} c1(s) ds)`.
pub fn ou_mean(spec: &OuJumpSpec, t: f64) -> f64 {
    let a = spec.mean_reversion;
    let c1 = &spec.c1;
    let drift_part = adaptive_simpson(&|s| (a * s).exp(), 0.0, t, 1e-12);
    let jump_part = adaptive_simpson(&|s| (a * s).exp() * c1(s), 0.0, t, 1e-12);
    (-a * t).exp() * (spec.eta + spec.mu * drift_part + spec.lambda * jump_part)
}

/// `dX = μ X dt + Σ_j σ/j^α X dW_j + X(t-) dL`, with compound Poisson `L`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MertonSpec {
    pub mu: f64,
    pub sigma: f64,
    pub alpha: f64,
    pub lambda: f64,
    pub eta: f64,
    pub horizon: f64,
}

impl MertonSpec {
    /// Experiment parameters: σ=0.4, T=1.53, μ=0.08, α=1, η=1, λ=1.21.
    pub fn standard() -> Self {
        Self {
            mu: 0.08,
            sigma: 0.4,
            alpha: 1.0,
            lambda: 1.21,
            eta: 1.0,
            horizon: 1.53,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::invalid("horizon", format!("must be positive, got {}", self.horizon)));
        }
        if !(self.alpha >= 1.0) {
            return Err(Error::invalid("alpha", format!("need alpha >= 1, got {}", self.alpha)));
        }
        if !(self.lambda >= 0.0) {
            return Err(Error::invalid("lambda", format!("must be nonnegative, got {}", self.lambda)));
        }
        if !(self.sigma >= 0.0) {
            return Err(Error::invalid("sigma", format!("must be nonnegative, got {}", self.sigma)));
        }
        if !(self.eta > 0.0) {
            return Err(Error::invalid("eta", format!("must be positive, got {}", self.eta)));
        }
        Ok(())
    }

    fn weight(&self, j: usize) -> f64 {
        self.sigma / (j as f64).powf(self.alpha)
    }

    /// `Σ_{j<=m} σ_j^2`, ascending.
    fn variance_rate(&self, m: usize) -> f64 {
        (1..=m).map(|j| self.weight(j).powi(2)).sum()
    }
}

/// Jump height `ξ = -0.5` if `Y <= 0`, else `0.5 + Y`, with `Y ~ N(0, 1)`.
pub fn merton_mark(rng: &mut StreamRng) -> f64 {
    let y: f64 = rng.sample(StandardNormal);
    if y <= 0.0 {
        -0.5
    } else {
        0.5 + y
    }
}

/// `E ξ = -1/4 + 1/4 + φ(0) = 1/√(2π)`.
pub fn merton_mark_mean() -> f64 {
    1.0 / (2.0 * PI).sqrt()
}

pub fn make_merton_model(spec: &MertonSpec) -> Result<ModelSpec> {
    spec.validate()?;
    let mu = spec.mu;
    let law = JumpLaw::new(
        spec.lambda,
        1,
        Arc::new(|rng: &mut StreamRng, y: &mut [f64]| y[0] = merton_mark(rng)),
    );
    let reference_spec = *spec;
    let model = ModelSpec::new(1, spec.horizon)
        .with_drift(move |_, x, out| out[0] = mu * x[0])
        .with_diffusion(power_series(spec.sigma, spec.alpha, Arc::new(|_, x, out| out[0] = x[0])))
        .with_jumps(law, |_, x, y, out| out[0] = x[0] * y[0])
        .with_initial_value(vec![spec.eta])
        .with_class_params(ClassParams::default())
        .with_exact_reference(move |x0, m_ref, endpoints, jumps, out| {
            let spec = MertonSpec {
                eta: x0[0],
                ..reference_spec
            };
            out[0] = match endpoints {
                WienerEndpoints::PerDimension(w) => exact_from_weighted(
                    &spec,
                    m_ref,
                    w.iter().enumerate().map(|(k, wk)| spec.weight(k + 1) * wk).sum(),
                    jumps,
                ),
                WienerEndpoints::Weighted(v) => exact_from_weighted(&spec, m_ref, v, jumps),
            };
        });
    model.validate()?;
    Ok(model)
}

fn exact_from_weighted(spec: &MertonSpec, m_ref: usize, weighted: f64, jumps: &JumpStream) -> f64 {
    let log = (spec.mu - 0.5 * spec.variance_rate(m_ref)) * spec.horizon + weighted;
    let product: f64 = jumps.marks().iter().map(|xi| 1.0 + xi).product();
    spec.eta * log.exp() * product
}

/// Exact terminal value of the equation truncated to `m_ref` Wiener
/// dimensions:
/// `η exp[(μ - ½Σ_{j<=m} σ_j²) T + Σ_{j<=m} σ_j W_j(T)] Π_k (1 + ξ_k)`.
pub fn merton_exact_terminal(
    spec: &MertonSpec,
    m_ref: usize,
    wiener_endpoints: &[f64],
    jumps: &JumpStream,
) -> Result<f64> {
    if wiener_endpoints.len() != m_ref {
        return Err(Error::DimensionMismatch {
            what: "Wiener endpoints",
            expected: m_ref,
            found: wiener_endpoints.len(),
        });
    }
    let weighted = wiener_endpoints
        .iter()
        .enumerate()
        .map(|(k, w)| spec.weight(k + 1) * w)
        .sum();
    Ok(exact_from_weighted(spec, m_ref, weighted, jumps))
}

/// Same as [`merton_exact_terminal`] given `Σ_{j<=m} σ_j W_j(T)` directly.
pub fn merton_exact_terminal_weighted(spec: &MertonSpec, m_ref: usize, weighted: f64, jumps: &JumpStream) -> f64 {
    exact_from_weighted(spec, m_ref, weighted, jumps)
}

/// `E X(t) = η exp((μ + λ E ξ) t)`.
pub fn merton_mean(spec: &MertonSpec, t: f64) -> f64 {
    spec.eta * ((spec.mu + spec.lambda * merton_mark_mean()) * t).exp()
}

/// Named presets addressable from configuration files.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    OuJump,
    Merton,
}

impl Preset {
    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "ou-jump" => Some(Preset::OuJump),
            "merton" => Some(Preset::Merton),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Preset::OuJump => "ou-jump",
            Preset::Merton => "merton",
        }
    }

    /// Exponent `α` of the preset's diffusion series.
    pub fn alpha(&self) -> f64 {
        match self {
            Preset::OuJump => OuJumpSpec::standard().alpha,
            Preset::Merton => MertonSpec::standard().alpha,
        }
    }

    pub fn model(&self) -> ModelSpec {
        match self {
            Preset::OuJump => make_ou_model(&OuJumpSpec::standard()),
            Preset::Merton => make_merton_model(&MertonSpec::standard()),
        }
        .expect("preset parameters are valid")
    }
}
