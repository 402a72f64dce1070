//! Model description: coefficients of the jump-diffusion equation
//!
//! ```text
//! X(t) = η + ∫ a(s, X(s)) ds + Σ_j ∫ b^(j)(s, X(s)) dW_j(s) + ∫∫ c(s, X(s-), y) N(dy, ds)
//! ```
//!
//! driven by countably many independent scalar Wiener processes and a Poisson
//! random measure of finite intensity.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::noise::{JumpStream, StreamRng};

/// `(t, x, out)`: writes a d-vector evaluated at `(t, x)` into `out`.
pub type FieldFn = Arc<dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync>;
/// `(j, t, x, out)`: the j-th diffusion column `b^(j)(t, x)`, `j >= 1`.
pub type TermFn = Arc<dyn Fn(usize, f64, &[f64], &mut [f64]) + Send + Sync>;
/// `(t, x, y, out)`: jump coefficient `c(t, x, y)`.
pub type JumpCoeffFn = Arc<dyn Fn(f64, &[f64], &[f64], &mut [f64]) + Send + Sync>;
/// Draws one random vector from a stream into `out`.
pub type SamplerFn = Arc<dyn Fn(&mut StreamRng, &mut [f64]) + Send + Sync>;
pub type SequenceFn = Arc<dyn Fn(usize) -> f64 + Send + Sync>;
/// `(x0, m_ref, endpoints, jumps, out)`: exact terminal value of the
/// equation truncated to the first `m_ref` Wiener dimensions.
pub type ReferenceFn =
    Arc<dyn Fn(&[f64], usize, WienerEndpoints<'_>, &JumpStream, &mut [f64]) + Send + Sync>;

/// Class parameters. Stored for planning and reporting; membership of the
/// coefficients in the class is never checked.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassParams {
    /// Order of the error norm.
    pub p: f64,
    /// Hölder exponent in time of the drift and diffusion.
    pub rho1: f64,
    /// Hölder exponent in time of the jump coefficient.
    pub rho2: f64,
    pub lipschitz_l: f64,
    pub growth_d: f64,
    pub tail_c: f64,
}

impl Default for ClassParams {
    fn default() -> Self {
        Self {
            p: 2.0,
            rho1: 1.0,
            rho2: 1.0,
            lipschitz_l: 1.0,
            growth_d: 1.0,
            tail_c: 1.0,
        }
    }
}

impl ClassParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.p >= 2.0) {
            return Err(Error::invalid("p", format!("need p >= 2, got {}", self.p)));
        }
        if !(self.rho1 > 0.0 && self.rho1 <= 1.0) {
            return Err(Error::invalid("rho1", format!("need 0 < rho1 <= 1, got {}", self.rho1)));
        }
        if !(self.rho2 > 0.0 && self.rho2 <= 1.0) {
            return Err(Error::invalid("rho2", format!("need 0 < rho2 <= 1, got {}", self.rho2)));
        }
        for (field, v) in [
            ("lipschitz_l", self.lipschitz_l),
            ("growth_d", self.growth_d),
            ("tail_c", self.tail_c),
        ] {
            if !(v >= 0.0) {
                return Err(Error::invalid(field, format!("must be nonnegative, got {v}")));
            }
        }
        Ok(())
    }
}

/// Finite Lévy measure written as `intensity * mark law`.
#[derive(Clone)]
pub struct JumpLaw {
    pub intensity: f64,
    pub mark_dim: usize,
    pub sampler: SamplerFn,
    /// p-th moment bound of the marks, when known. Informational only.
    pub mark_p_moment: Option<f64>,
}

impl JumpLaw {
    pub fn new(intensity: f64, mark_dim: usize, sampler: SamplerFn) -> Self {
        Self {
            intensity,
            mark_dim,
            sampler,
            mark_p_moment: None,
        }
    }

    /// No jumps at all.
    pub fn none(mark_dim: usize) -> Self {
        Self::new(0.0, mark_dim, Arc::new(|_: &mut StreamRng, y: &mut [f64]| y.fill(0.0)))
    }
}

impl fmt::Debug for JumpLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("JumpLaw")
            .field("intensity", &self.intensity)
            .field("mark_dim", &self.mark_dim)
            .field("mark_p_moment", &self.mark_p_moment)
            .finish_non_exhaustive()
    }
}

/// Diffusion with columns of the form `b^(j)(t, x) = weight(j) * shape(t, x)`.
///
/// For such a diffusion the truncated sum `Σ_{j<=M} b^(j) ΔW_j` only depends
/// on the scalar `Σ_{j<=M} weight(j) ΔW_j`, which the simulators exploit.
#[derive(Clone)]
pub struct DiffusionFactor {
    pub weight: SequenceFn,
    pub shape: FieldFn,
}

impl DiffusionFactor {
    /// `Σ_{j=from+1}^{to} weight(j)^2`, ascending.
    pub fn weight_sq_sum(&self, from: usize, to: usize) -> f64 {
        (from + 1..=to).map(|j| (self.weight)(j).powi(2)).sum()
    }
}

/// The series diffusion `b = (b^(1), b^(2), ...)` with its tail sequence
/// `δ(k)`, which bounds `sup_t |b(t, x) - P_k b(t, x)| <= C (1 + |x|) δ(k)`.
#[derive(Clone)]
pub struct SeriesDiffusion {
    pub term: TermFn,
    pub tail_delta: SequenceFn,
    pub factor: Option<DiffusionFactor>,
}

impl SeriesDiffusion {
    pub fn new(term: TermFn, tail_delta: SequenceFn) -> Self {
        Self {
            term,
            tail_delta,
            factor: None,
        }
    }

    pub fn factored(weight: SequenceFn, shape: FieldFn, tail_delta: SequenceFn) -> Self {
        let w = weight.clone();
        let s = shape.clone();
        let term: TermFn = Arc::new(move |j, t, x, out| {
            s(t, x, out);
            let wj = w(j);
            for v in out.iter_mut() {
                *v *= wj;
            }
        });
        Self {
            term,
            tail_delta,
            factor: Some(DiffusionFactor { weight, shape }),
        }
    }

    pub fn zero() -> Self {
        Self::factored(
            Arc::new(|_| 0.0),
            Arc::new(|_, _, out: &mut [f64]| out.fill(0.0)),
            Arc::new(|_| 0.0),
        )
    }
}

impl fmt::Debug for SeriesDiffusion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SeriesDiffusion")
            .field("factored", &self.factor.is_some())
            .finish_non_exhaustive()
    }
}

/// Wiener values `W_k(T)` handed to an exact reference solution.
#[derive(Debug, Clone, Copy)]
pub enum WienerEndpoints<'a> {
    /// `W_1(T), ..., W_m(T)`.
    PerDimension(&'a [f64]),
    /// `Σ_{k<=m} weight(k) W_k(T)` for a factored diffusion.
    Weighted(f64),
}

#[derive(Clone)]
pub struct ModelSpec {
    pub dim: usize,
    pub drift: FieldFn,
    pub diffusion: SeriesDiffusion,
    pub jump_coeff: JumpCoeffFn,
    pub jump_law: JumpLaw,
    pub initial: SamplerFn,
    pub horizon: f64,
    pub class_params: ClassParams,
    pub exact_reference: Option<ReferenceFn>,
}

impl fmt::Debug for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelSpec")
            .field("dim", &self.dim)
            .field("horizon", &self.horizon)
            .field("diffusion", &self.diffusion)
            .field("jump_law", &self.jump_law)
            .field("class_params", &self.class_params)
            .field("exact_reference", &self.exact_reference.is_some())
            .finish_non_exhaustive()
    }
}

impl ModelSpec {
    /// The trivial model `a = b = c = 0`, `η = 0` on `[0, horizon]`.
    pub fn new(dim: usize, horizon: f64) -> Self {
        Self {
            dim,
            drift: Arc::new(|_, _, out: &mut [f64]| out.fill(0.0)),
            diffusion: SeriesDiffusion::zero(),
            jump_coeff: Arc::new(|_, _, _, out: &mut [f64]| out.fill(0.0)),
            jump_law: JumpLaw::none(1),
            initial: Arc::new(|_: &mut StreamRng, out: &mut [f64]| out.fill(0.0)),
            horizon,
            class_params: ClassParams::default(),
            exact_reference: None,
        }
    }

    pub fn with_drift(mut self, drift: impl Fn(f64, &[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        self.drift = Arc::new(drift);
        self
    }

    pub fn with_diffusion(mut self, diffusion: SeriesDiffusion) -> Self {
        self.diffusion = diffusion;
        self
    }

    pub fn with_jumps(
        mut self,
        law: JumpLaw,
        coeff: impl Fn(f64, &[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        self.jump_law = law;
        self.jump_coeff = Arc::new(coeff);
        self
    }

    pub fn with_initial(mut self, sampler: impl Fn(&mut StreamRng, &mut [f64]) + Send + Sync + 'static) -> Self {
        self.initial = Arc::new(sampler);
        self
    }

    /// Deterministic initial value.
    pub fn with_initial_value(self, x0: Vec<f64>) -> Self {
        self.with_initial(move |_, out| out.copy_from_slice(&x0))
    }

    pub fn with_class_params(mut self, class_params: ClassParams) -> Self {
        self.class_params = class_params;
        self
    }

    pub fn with_exact_reference(
        mut self,
        reference: impl Fn(&[f64], usize, WienerEndpoints<'_>, &JumpStream, &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        self.exact_reference = Some(Arc::new(reference));
        self
    }

    pub fn validate(&self) -> Result<()> {
        validate_model(self)
    }
}

fn check_finite(coefficient: &'static str, t: f64, x: &[f64], out: &[f64]) -> Result<()> {
    if out.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteCoefficient {
            coefficient,
            t,
            x: x.to_vec(),
        })
    }
}

fn same_bits(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(u, v)| u.to_bits() == v.to_bits())
}

/// Checks parameter ranges and probes every coefficient at `(0, 0)`.
pub fn validate_model(model: &ModelSpec) -> Result<()> {
    if !(model.horizon > 0.0 && model.horizon.is_finite()) {
        return Err(Error::invalid("horizon", format!("must be positive, got {}", model.horizon)));
    }
    if model.dim < 1 {
        return Err(Error::invalid("dim", "state dimension must be at least 1"));
    }
    let law = &model.jump_law;
    if !(law.intensity >= 0.0 && law.intensity.is_finite()) {
        return Err(Error::invalid("intensity", format!("must be nonnegative, got {}", law.intensity)));
    }
    model.class_params.validate()?;

    let d = model.dim;
    let origin = vec![0.0; d];
    let y0 = vec![0.0; law.mark_dim];
    let (mut first, mut second) = (vec![0.0; d], vec![0.0; d]);

    (model.drift)(0.0, &origin, &mut first);
    check_finite("drift", 0.0, &origin, &first)?;
    (model.drift)(0.0, &origin, &mut second);
    if !same_bits(&first, &second) {
        return Err(Error::ImpureCoefficient { coefficient: "drift" });
    }

    (model.diffusion.term)(1, 0.0, &origin, &mut first);
    check_finite("diffusion", 0.0, &origin, &first)?;
    (model.diffusion.term)(1, 0.0, &origin, &mut second);
    if !same_bits(&first, &second) {
        return Err(Error::ImpureCoefficient { coefficient: "diffusion" });
    }

    (model.jump_coeff)(0.0, &origin, &y0, &mut first);
    check_finite("jump_coeff", 0.0, &origin, &first)?;
    (model.jump_coeff)(0.0, &origin, &y0, &mut second);
    if !same_bits(&first, &second) {
        return Err(Error::ImpureCoefficient { coefficient: "jump_coeff" });
    }

    // δ must be a nonnegative nonincreasing sequence; sampled at powers of two.
    let mut prev = f64::INFINITY;
    for k in (0..12).map(|e| 1usize << e) {
        let v = (model.diffusion.tail_delta)(k);
        if !(v >= 0.0 && v.is_finite() && v <= prev) {
            return Err(Error::invalid(
                "tail_delta",
                format!("δ({k}) = {v} breaks a nonnegative nonincreasing sequence"),
            ));
        }
        prev = v;
    }
    Ok(())
}

/// Summation mode for the truncated diffusion sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Summation {
    /// Plain ascending-index accumulation.
    #[default]
    Ascending,
    /// Kahan-compensated ascending accumulation.
    Compensated,
}

/// `Σ_{j=1}^{M} b^(j)(t, x) ΔW_j`, accumulated in ascending `j`, with
/// `M = dw.len()`. `scratch` and `out` have length `d`.
#[inline]
pub(crate) fn accumulate_diffusion(
    diffusion: &SeriesDiffusion,
    t: f64,
    x: &[f64],
    dw: &[f64],
    scratch: &mut [f64],
    out: &mut [f64],
) {
    out.fill(0.0);
    for (j, &w) in dw.iter().enumerate() {
        (diffusion.term)(j + 1, t, x, scratch);
        for (acc, &b) in out.iter_mut().zip(scratch.iter()) {
            *acc += b * w;
        }
    }
}

pub fn truncated_diffusion_apply(
    model: &ModelSpec,
    m: usize,
    t: f64,
    x: &[f64],
    dw: &[f64],
) -> Result<Vec<f64>> {
    truncated_diffusion_apply_with(model, m, t, x, dw, Summation::Ascending)
}

pub fn truncated_diffusion_apply_with(
    model: &ModelSpec,
    m: usize,
    t: f64,
    x: &[f64],
    dw: &[f64],
    summation: Summation,
) -> Result<Vec<f64>> {
    if m < 1 {
        return Err(Error::invalid("M", "truncation dimension must be at least 1"));
    }
    if dw.len() != m {
        return Err(Error::DimensionMismatch {
            what: "Wiener increments",
            expected: m,
            found: dw.len(),
        });
    }
    if x.len() != model.dim {
        return Err(Error::DimensionMismatch {
            what: "state",
            expected: model.dim,
            found: x.len(),
        });
    }
    let d = model.dim;
    let mut scratch = vec![0.0; d];
    let mut out = vec![0.0; d];
    match summation {
        Summation::Ascending => accumulate_diffusion(&model.diffusion, t, x, dw, &mut scratch, &mut out),
        Summation::Compensated => {
            let mut comp = vec![0.0; d];
            for (j, &w) in dw.iter().enumerate() {
                (model.diffusion.term)(j + 1, t, x, &mut scratch);
                for i in 0..d {
                    let y = scratch[i] * w - comp[i];
                    let s = out[i] + y;
                    comp[i] = (s - out[i]) - y;
                    out[i] = s;
                }
            }
        }
    }
    Ok(out)
}

/// Euler-Maclaurin cut-off; below it terms are summed directly.
const TAIL_SWITCH: usize = 32;

/// `Σ_{j>m} j^{-s}` for `s > 1`.
pub(crate) fn power_tail_sum(s: f64, m: usize) -> f64 {
    let cut = (m + 1).max(TAIL_SWITCH);
    let head: f64 = (m + 1..cut).rev().map(|j| (j as f64).powf(-s)).sum();
    let n = cut as f64;
    // Euler-Maclaurin remainder for f(u) = u^{-s} starting at u = n.
    let f = n.powf(-s);
    let integral = n * f / (s - 1.0);
    let d1 = s * f / n / 12.0;
    let d3 = s * (s + 1.0) * (s + 2.0) * f / n.powi(3) / 720.0;
    let d5 = s * (s + 1.0) * (s + 2.0) * (s + 3.0) * (s + 4.0) * f / n.powi(5) / 30240.0;
    let tail = integral + 0.5 * f + d1 - d3 + d5;
    head + tail
}

/// Tail bound `δ(M) = (Σ_{j>M} j^{-2α})^{1/2}` of the normalized power
/// diffusion `b^(j) = x / j^α`.
pub fn power_tail_delta(alpha: f64, m: usize) -> Result<f64> {
    if !(alpha >= 1.0 && alpha.is_finite()) {
        return Err(Error::invalid("alpha", format!("need alpha >= 1, got {alpha}")));
    }
    Ok(power_tail_sum(2.0 * alpha, m).sqrt())
}
