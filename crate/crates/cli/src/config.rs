//! Experiment configuration files.
//!
//! ```json
//! {
//!   "model": "ou-jump",
//!   "schedule": { "base": 20, "growth": 1.3, "exponent_scale": 0.25, "count": 12 },
//!   "n_rule": { "power": { "coef": 10, "exponent": 1.4 } },
//!   "K": 10000,
//!   "seed": 1
//! }
//! ```

use std::path::Path;
use std::sync::Arc;

use jumpeuler_core::{
    merton_mark, power_tail_delta, predict_rate, ClassParams, JumpLaw, ModelSpec, Multipliers, NoiseLayout,
    Preset, SeriesDiffusion, StreamRng, Workers,
};
use rand_distr::{Distribution, Normal};
use serde::Deserialize;
use serde_json::Value;

use crate::error::{CliError, Result};

pub const WORKERS_ENV: &str = "JUMPEULER_WORKERS";

/// `a(t, x) = a0 + a1·x + a2·t^a3`.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AffineDrift {
    #[serde(default)]
    pub a0: f64,
    #[serde(default)]
    pub a1: f64,
    #[serde(default)]
    pub a2: f64,
    #[serde(default = "one")]
    pub a3: f64,
}

/// `b^(j)(t, x) = σ/j^α · (b0 + b1·x)`.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AffineDiffusion {
    #[serde(default)]
    pub sigma: f64,
    #[serde(default = "one")]
    pub alpha: f64,
    #[serde(default = "one")]
    pub b0: f64,
    #[serde(default)]
    pub b1: f64,
}

/// `c(t, x, y) = (c0 + c1·x + c2·t) · y`.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AffineJump {
    #[serde(default)]
    pub c0: f64,
    #[serde(default)]
    pub c1: f64,
    #[serde(default)]
    pub c2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarkLaw {
    /// Every mark is 1.
    Unit,
    Constant(f64),
    Normal { mean: f64, std: f64 },
    /// `-0.5` if `Y <= 0`, else `0.5 + Y`, `Y ~ N(0, 1)`.
    Merton,
}

/// Scalar model with affine coefficients and a power diffusion series.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AffineModel {
    #[serde(default = "zero_drift")]
    pub drift: AffineDrift,
    #[serde(default = "zero_diffusion")]
    pub diffusion: AffineDiffusion,
    #[serde(default = "zero_jump")]
    pub jump: AffineJump,
    #[serde(default = "unit_marks")]
    pub marks: MarkLaw,
    #[serde(default)]
    pub lambda: f64,
    #[serde(default)]
    pub eta: f64,
    pub horizon: f64,
}

fn one() -> f64 {
    1.0
}

fn zero_drift() -> AffineDrift {
    AffineDrift {
        a0: 0.0,
        a1: 0.0,
        a2: 0.0,
        a3: 1.0,
    }
}

fn zero_diffusion() -> AffineDiffusion {
    AffineDiffusion {
        sigma: 0.0,
        alpha: 1.0,
        b0: 1.0,
        b1: 0.0,
    }
}

fn zero_jump() -> AffineJump {
    AffineJump {
        c0: 0.0,
        c1: 0.0,
        c2: 0.0,
    }
}

fn unit_marks() -> MarkLaw {
    MarkLaw::Unit
}

impl AffineModel {
    pub fn build(&self) -> Result<ModelSpec> {
        let AffineDrift { a0, a1, a2, a3 } = self.drift;
        let AffineDiffusion { sigma, alpha, b0, b1 } = self.diffusion;
        let AffineJump { c0, c1, c2 } = self.jump;
        if !(alpha >= 1.0) {
            return Err(CliError::config(format!("model.affine.diffusion.alpha: need alpha >= 1, got {alpha}")));
        }
        let sampler: jumpeuler_core::model::SamplerFn = match self.marks {
            MarkLaw::Unit => Arc::new(|_: &mut StreamRng, y: &mut [f64]| y[0] = 1.0),
            MarkLaw::Constant(v) => Arc::new(move |_: &mut StreamRng, y: &mut [f64]| y[0] = v),
            MarkLaw::Normal { mean, std } => {
                let law = Normal::new(mean, std)
                    .map_err(|e| CliError::config(format!("model.affine.marks.normal: {e}")))?;
                Arc::new(move |rng: &mut StreamRng, y: &mut [f64]| y[0] = law.sample(rng))
            }
            MarkLaw::Merton => Arc::new(|rng: &mut StreamRng, y: &mut [f64]| y[0] = merton_mark(rng)),
        };
        let diffusion = SeriesDiffusion::factored(
            Arc::new(move |j| sigma / (j as f64).powf(alpha)),
            Arc::new(move |_, x, out| out[0] = b0 + b1 * x[0]),
            Arc::new(move |k| sigma.abs() * power_tail_delta(alpha, k).unwrap_or(f64::NAN)),
        );
        let model = ModelSpec::new(1, self.horizon)
            .with_drift(move |t, x, out| out[0] = a0 + a1 * x[0] + a2 * t.powf(a3))
            .with_diffusion(diffusion)
            .with_jumps(JumpLaw::new(self.lambda, 1, sampler), move |t, x, y, out| {
                out[0] = (c0 + c1 * x[0] + c2 * t) * y[0]
            })
            .with_initial_value(vec![self.eta]);
        model.validate().map_err(|e| CliError::config(format!("model.affine: {e}")))?;
        Ok(model)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelChoice {
    Preset(Preset),
    Affine(AffineModel),
}

impl ModelChoice {
    /// Accepts a preset name or `{"affine": {...}}`.
    pub fn from_value(value: &Value) -> Result<Self> {
        match value {
            Value::String(name) => Preset::from_name(name).map(ModelChoice::Preset).ok_or_else(|| {
                CliError::config(format!("model: unknown preset {name:?} (expected \"ou-jump\" or \"merton\")"))
            }),
            Value::Object(map) => {
                let inner = map
                    .get("affine")
                    .filter(|_| map.len() == 1)
                    .ok_or_else(|| CliError::config("model: expected a preset name or {\"affine\": {...}}"))?;
                let affine: AffineModel = serde_json::from_value(inner.clone())
                    .map_err(|e| CliError::config(format!("model.affine: {e}")))?;
                Ok(ModelChoice::Affine(affine))
            }
            _ => Err(CliError::config("model: expected a preset name or {\"affine\": {...}}")),
        }
    }

    /// Parses a model given on the command line: a preset name, or the path
    /// of a JSON file holding a model value.
    pub fn from_arg(arg: &str) -> Result<Self> {
        if let Some(preset) = Preset::from_name(arg) {
            return Ok(ModelChoice::Preset(preset));
        }
        let text = std::fs::read_to_string(arg).map_err(|source| CliError::Read {
            path: arg.into(),
            source,
        })?;
        let value: Value = serde_json::from_str(&text).map_err(|e| CliError::config(format!("{arg}: {e}")))?;
        Self::from_value(&value)
    }

    pub fn build(&self) -> Result<ModelSpec> {
        match self {
            ModelChoice::Preset(p) => Ok(p.model()),
            ModelChoice::Affine(a) => a.build(),
        }
    }

    pub fn alpha(&self) -> f64 {
        match self {
            ModelChoice::Preset(p) => p.alpha(),
            ModelChoice::Affine(a) => a.diffusion.alpha,
        }
    }

    /// Predicted error-vs-cost slope for error order `p`.
    pub fn predicted_slope(&self, class_params: ClassParams, p: f64) -> Option<f64> {
        predict_rate(&ClassParams { p, ..class_params }, self.alpha()).slope
    }
}

/// Truncation levels `M` of an experiment.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum Schedule {
    List(Vec<usize>),
    /// `M_i = ⌊base · growth^(i · exponent_scale)⌋` for `i = 0..count`.
    Geometric {
        base: f64,
        growth: f64,
        #[serde(default = "one")]
        exponent_scale: f64,
        count: usize,
    },
}

impl Schedule {
    pub fn levels(&self) -> Result<Vec<usize>> {
        let levels = match self {
            Schedule::List(ms) => ms.clone(),
            &Schedule::Geometric {
                base,
                growth,
                exponent_scale,
                count,
            } => {
                if !(base >= 1.0 && growth > 0.0 && exponent_scale.is_finite() && base.is_finite()) {
                    return Err(CliError::config(
                        "schedule: need base >= 1, growth > 0 and a finite exponent_scale",
                    ));
                }
                (0..count)
                    .map(|i| (base * growth.powf(i as f64 * exponent_scale)).floor() as usize)
                    .collect()
            }
        };
        if levels.is_empty() {
            return Err(CliError::config("schedule: must not be empty"));
        }
        if let Some(i) = levels.iter().position(|&m| m < 1) {
            return Err(CliError::config(format!("schedule: entry {i} gives M = 0")));
        }
        Ok(levels)
    }
}

/// Step count as a function of `M`.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum NRule {
    /// `n = ⌊coef · M^exponent⌋`.
    Power { coef: f64, exponent: f64 },
    /// `n = coef · M`.
    Linear { coef: usize },
}

impl NRule {
    pub fn steps(&self, m: usize) -> Result<usize> {
        let n = match *self {
            NRule::Power { coef, exponent } => {
                let v = (coef * (m as f64).powf(exponent)).floor();
                if !(v.is_finite() && v < usize::MAX as f64) {
                    return Err(CliError::config(format!("n_rule: step count overflows at M = {m}")));
                }
                v as usize
            }
            NRule::Linear { coef } => coef
                .checked_mul(m)
                .ok_or_else(|| CliError::config(format!("n_rule: step count overflows at M = {m}")))?,
        };
        if n < 1 {
            return Err(CliError::config(format!("n_rule: gives n = 0 at M = {m}")));
        }
        Ok(n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    #[default]
    Coupled,
    ExactReference,
}

/// `"auto"`, `"max"` or a positive count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WorkersSetting {
    Auto,
    Max,
    Count(usize),
}

impl WorkersSetting {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "auto" => Ok(WorkersSetting::Auto),
            "max" => Ok(WorkersSetting::Max),
            other => match other.parse::<usize>() {
                Ok(n) if n >= 1 => Ok(WorkersSetting::Count(n)),
                _ => Err(CliError::config(format!(
                    "workers: expected \"auto\", \"max\" or a positive integer, got {other:?}"
                ))),
            },
        }
    }

    pub fn to_workers(self) -> Workers {
        match self {
            WorkersSetting::Auto => Workers::Auto,
            WorkersSetting::Max => Workers::Fixed(std::thread::available_parallelism().map_or(1, |n| n.get())),
            WorkersSetting::Count(n) => Workers::Fixed(n),
        }
    }

    /// Command-line flag, then config file, then `JUMPEULER_WORKERS`, then
    /// `auto`.
    pub fn resolve(flag: Option<&str>, config: Option<WorkersSetting>) -> Result<Self> {
        if let Some(s) = flag {
            return Self::parse(s);
        }
        if let Some(w) = config {
            return Ok(w);
        }
        match std::env::var(WORKERS_ENV) {
            Ok(s) => Self::parse(&s).map_err(|e| CliError::config(format!("{WORKERS_ENV}: {e}"))),
            Err(_) => Ok(WorkersSetting::Auto),
        }
    }
}

impl<'de> Deserialize<'de> for WorkersSetting {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Count(usize),
            Name(String),
        }
        match Raw::deserialize(d)? {
            Raw::Count(n) if n >= 1 => Ok(WorkersSetting::Count(n)),
            Raw::Count(_) => Err(serde::de::Error::custom("workers must be at least 1")),
            Raw::Name(s) => WorkersSetting::parse(&s).map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayoutSetting {
    #[default]
    Auto,
    Full,
    Factored,
}

impl LayoutSetting {
    pub fn parse(s: &str) -> Result<Self> {
        serde_json::from_value(Value::String(s.to_string()))
            .map_err(|_| CliError::config(format!("layout: expected auto, full or factored, got {s:?}")))
    }

    pub fn resolve(self, model: &ModelSpec) -> NoiseLayout {
        match self {
            LayoutSetting::Auto => NoiseLayout::auto(model),
            LayoutSetting::Full => NoiseLayout::Full,
            LayoutSetting::Factored => NoiseLayout::Factored,
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    model: Value,
    schedule: Schedule,
    n_rule: NRule,
    #[serde(rename = "K", alias = "trajectories")]
    k: usize,
    #[serde(default = "default_p")]
    p: f64,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    estimator: EstimatorKind,
    #[serde(default = "default_multipliers")]
    multipliers: [usize; 2],
    #[serde(default = "default_reference_multiplier")]
    reference_multiplier: usize,
    #[serde(default)]
    workers: Option<WorkersSetting>,
    #[serde(default)]
    layout: LayoutSetting,
}

fn default_p() -> f64 {
    2.0
}

fn default_multipliers() -> [usize; 2] {
    [10, 100]
}

fn default_reference_multiplier() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub model: ModelChoice,
    pub schedule: Schedule,
    pub n_rule: NRule,
    /// Trajectories per row.
    pub k: usize,
    pub p: f64,
    pub seed: u64,
    pub estimator: EstimatorKind,
    /// Rare-to-fine ratios of the coupled estimator.
    pub multipliers: Multipliers,
    /// Reference truncation `M·reference_multiplier` of the exact-reference
    /// estimator.
    pub reference_multiplier: usize,
    pub workers: Option<WorkersSetting>,
    pub layout: LayoutSetting,
}

impl ExperimentConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let raw: RawConfig = serde_json::from_str(text).map_err(|e| CliError::config(e.to_string()))?;
        let config = ExperimentConfig {
            model: ModelChoice::from_value(&raw.model)?,
            schedule: raw.schedule,
            n_rule: raw.n_rule,
            k: raw.k,
            p: raw.p,
            seed: raw.seed,
            estimator: raw.estimator,
            multipliers: Multipliers::new(raw.multipliers[0], raw.multipliers[1]),
            reference_multiplier: raw.reference_multiplier,
            workers: raw.workers,
            layout: raw.layout,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json_str(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(CliError::config(format!("K: need at least 2 trajectories, got {}", self.k)));
        }
        if !(self.p >= 2.0 && self.p.is_finite()) {
            return Err(CliError::config(format!("p: need p >= 2, got {}", self.p)));
        }
        if self.multipliers.dims < 1 || self.multipliers.steps < 1 {
            return Err(CliError::config("multipliers: both entries must be at least 1"));
        }
        if self.reference_multiplier < 1 {
            return Err(CliError::config("reference_multiplier: must be at least 1"));
        }
        if self.estimator == EstimatorKind::ExactReference && self.model != ModelChoice::Preset(Preset::Merton) {
            return Err(CliError::config(
                "estimator: exact-reference needs a model with a closed-form solution (the merton preset)",
            ));
        }
        self.rows()?;
        Ok(())
    }

    /// `(M, n)` of every row, in schedule order.
    pub fn rows(&self) -> Result<Vec<(usize, usize)>> {
        self.schedule
            .levels()?
            .into_iter()
            .map(|m| Ok((m, self.n_rule.steps(m)?)))
            .collect()
    }
}
