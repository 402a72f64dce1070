//! Truncated-dimension randomized Euler scheme.
//!
//! One step on `[t_j, t_{j+1}]` with `h = t_{j+1} - t_j`:
//!
//! ```text
//! x' = x + a(θ_j, x) h + Σ_{k<=M} b^(k)(t_j, x) ΔW_{j,k} + Σ_{τ_i ∈ (t_j, t_{j+1}]} c(t_j, x, ξ_i)
//! ```
//!
//! with `θ_j` uniform on the step. Every coefficient sees the pre-step state.

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{accumulate_diffusion, ModelSpec, WienerEndpoints};
use crate::noise::{
    aggregate_rows, generate_jump_stream, grid_time, Channel, JumpStream, JumpWindow, StreamKey,
    StreamRng, WienerSource,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeParams {
    /// Truncation dimension of the Wiener driver.
    pub m: usize,
    /// Number of time steps.
    pub n: usize,
    pub horizon: f64,
    /// Order of the error norm the run is evaluated in.
    pub p: f64,
}

impl SchemeParams {
    pub fn new(m: usize, n: usize, horizon: f64) -> Self {
        Self {
            m,
            n,
            horizon,
            p: 2.0,
        }
    }

    pub fn for_model(model: &ModelSpec, m: usize, n: usize) -> Self {
        Self::new(m, n, model.horizon)
    }

    pub fn with_p(self, p: f64) -> Self {
        Self { p, ..self }
    }

    pub fn validate(&self, model: &ModelSpec) -> Result<()> {
        if self.m < 1 {
            return Err(Error::invalid("M", "truncation dimension must be at least 1"));
        }
        if self.n < 1 {
            return Err(Error::invalid("n", "at least one step is required"));
        }
        if self.horizon != model.horizon {
            return Err(Error::invalid(
                "horizon",
                format!("scheme horizon {} differs from model horizon {}", self.horizon, model.horizon),
            ));
        }
        if !(self.p >= 2.0) {
            return Err(Error::invalid("p", format!("need p >= 2, got {}", self.p)));
        }
        Ok(())
    }
}

/// How the Wiener increments of a run are materialized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseLayout {
    /// One Gaussian increment per step and Wiener dimension.
    Full,
    /// For factored diffusions `b^(k) = w_k g(t, x)`: one draw of
    /// `Σ_k w_k ΔW_k` per step. Same law as [`NoiseLayout::Full`], at a cost
    /// independent of `M`.
    ///
    /// In coupled runs each rare step draws the rare increment `U` first and
    /// then the `r` fine increments conditionally on it:
    /// `z_i = S_M U / r + S (g_i - β ḡ)`, with `g_i` iid `N(0, H)`,
    /// `S² = S_M² + S_tail²` and `β = 1 - (1 - S_M²/S²)^{1/2}`. This gives the
    /// fine increments their joint law `H (S² I - S_M² J / r)` given `U`.
    Factored,
}

impl NoiseLayout {
    /// `Factored` when the model's diffusion admits it.
    pub fn auto(model: &ModelSpec) -> Self {
        if model.diffusion.factor.is_some() {
            NoiseLayout::Factored
        } else {
            NoiseLayout::Full
        }
    }

    fn check(self, model: &ModelSpec) -> Result<()> {
        if self == NoiseLayout::Factored && model.diffusion.factor.is_none() {
            return Err(Error::invalid("layout", "factored noise needs a factored diffusion"));
        }
        Ok(())
    }
}

/// Seed and index identifying one Monte Carlo trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TrajectoryKey {
    pub seed: u64,
    pub index: u64,
    channel_seeds: [Option<u64>; 6],
}

impl TrajectoryKey {
    pub fn new(seed: u64, index: u64) -> Self {
        Self {
            seed,
            index,
            channel_seeds: [None; 6],
        }
    }

    /// Opens `channel` under a different base seed, leaving every other
    /// channel untouched. Marks follow the `Jumps` seed.
    pub fn with_channel_seed(mut self, channel: Channel, seed: u64) -> Self {
        self.channel_seeds[channel as usize] = Some(seed);
        self
    }

    pub fn stream(&self, channel: Channel) -> StreamKey {
        let seed = self.channel_seeds[channel as usize].unwrap_or(self.seed);
        StreamKey::new(seed, self.index, channel)
    }
}

/// Everything one step consumes besides the state.
#[derive(Debug, Clone, Copy)]
pub struct StepInputs<'a> {
    pub t: f64,
    pub h: f64,
    /// Drift evaluation time, in `[t, t + h]`.
    pub theta: f64,
    pub dw: &'a [f64],
    /// Arrivals in `(t, t + h]`.
    pub jumps: JumpWindow<'a>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TerminalValue {
    pub value: Vec<f64>,
    pub jump_count: usize,
    pub params: SchemeParams,
}

#[derive(Clone, Copy)]
enum Increment<'a> {
    PerDimension(&'a [f64]),
    /// `Σ_k w_k ΔW_k` of a factored diffusion.
    Weighted(f64),
}

struct Workspace {
    drift: Vec<f64>,
    diffusion: Vec<f64>,
    jump: Vec<f64>,
    scratch: Vec<f64>,
}

impl Workspace {
    fn new(d: usize) -> Self {
        Self {
            drift: vec![0.0; d],
            diffusion: vec![0.0; d],
            jump: vec![0.0; d],
            scratch: vec![0.0; d],
        }
    }
}

#[inline]
#[allow(clippy::too_many_arguments)]
fn advance(
    model: &ModelSpec,
    x: &mut [f64],
    t: f64,
    h: f64,
    theta: f64,
    increment: Increment<'_>,
    jumps: JumpWindow<'_>,
    ws: &mut Workspace,
) {
    (model.drift)(theta, x, &mut ws.drift);
    match increment {
        Increment::PerDimension(dw) => {
            accumulate_diffusion(&model.diffusion, t, x, dw, &mut ws.scratch, &mut ws.diffusion)
        }
        Increment::Weighted(z) => {
            let factor = model.diffusion.factor.as_ref().expect("layout checked");
            (factor.shape)(t, x, &mut ws.diffusion);
            for v in ws.diffusion.iter_mut() {
                *v *= z;
            }
        }
    }
    if jumps.is_empty() {
        for ((xi, a), b) in x.iter_mut().zip(&ws.drift).zip(&ws.diffusion) {
            *xi = *xi + a * h + b;
        }
        return;
    }
    ws.jump.fill(0.0);
    for (_, y) in jumps.iter() {
        (model.jump_coeff)(t, x, y, &mut ws.scratch);
        for (acc, &c) in ws.jump.iter_mut().zip(ws.scratch.iter()) {
            *acc += c;
        }
    }
    for (((xi, a), b), c) in x.iter_mut().zip(&ws.drift).zip(&ws.diffusion).zip(&ws.jump) {
        *xi = *xi + a * h + b + c;
    }
}

#[inline]
fn ensure_finite(x: &[f64], step: usize, t: f64) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteState { step, t })
    }
}

/// One scheme step from state `x`.
pub fn randomized_euler_step(
    model: &ModelSpec,
    m: usize,
    x: &[f64],
    inputs: &StepInputs<'_>,
) -> Result<Vec<f64>> {
    if inputs.dw.len() != m {
        return Err(Error::DimensionMismatch {
            what: "Wiener increments",
            expected: m,
            found: inputs.dw.len(),
        });
    }
    if x.len() != model.dim {
        return Err(Error::DimensionMismatch {
            what: "state",
            expected: model.dim,
            found: x.len(),
        });
    }
    let (t, h) = (inputs.t, inputs.h);
    if !(h > 0.0) || !(inputs.theta >= t && inputs.theta <= t + h) {
        return Err(Error::invalid("theta", format!("θ={} outside [{t}, {}]", inputs.theta, t + h)));
    }
    if inputs.jumps.times.iter().any(|&s| !(s > t && s <= t + h)) {
        return Err(Error::invalid("step_jumps", format!("arrival outside ({t}, {}]", t + h)));
    }
    if inputs.jumps.mark_dim != model.jump_law.mark_dim && !inputs.jumps.is_empty() {
        return Err(Error::DimensionMismatch {
            what: "jump marks",
            expected: model.jump_law.mark_dim,
            found: inputs.jumps.mark_dim,
        });
    }
    let mut out = x.to_vec();
    let mut ws = Workspace::new(model.dim);
    advance(
        model,
        &mut out,
        t,
        h,
        inputs.theta,
        Increment::PerDimension(inputs.dw),
        inputs.jumps,
        &mut ws,
    );
    ensure_finite(&out, 0, t)?;
    Ok(out)
}

fn initial_state(model: &ModelSpec, key: TrajectoryKey) -> Vec<f64> {
    let mut x = vec![0.0; model.dim];
    (model.initial)(&mut key.stream(Channel::Initial).rng(), &mut x);
    x
}

#[inline]
fn draw_theta(rng: &mut StreamRng, t: f64, h: f64) -> f64 {
    t + h * rng.random::<f64>()
}

/// Walks a sorted list of step indices, yielding the arrivals of each step.
struct WindowCursor {
    indices: Vec<usize>,
    next: usize,
}

impl WindowCursor {
    fn new(jumps: &JumpStream, steps: usize) -> Self {
        Self {
            indices: jumps.step_indices(steps),
            next: 0,
        }
    }

    /// Range of arrivals falling into step `i`; steps must be visited in order.
    #[inline]
    fn take(&mut self, i: usize) -> std::ops::Range<usize> {
        let start = self.next;
        while self.next < self.indices.len() && self.indices[self.next] == i {
            self.next += 1;
        }
        start..self.next
    }
}

fn square_root_weight_sum(model: &ModelSpec, from: usize, to: usize) -> f64 {
    model
        .diffusion
        .factor
        .as_ref()
        .map(|f| f.weight_sq_sum(from, to).sqrt())
        .unwrap_or(0.0)
}

fn run_single(
    model: &ModelSpec,
    params: &SchemeParams,
    key: TrajectoryKey,
    layout: NoiseLayout,
    observer: &mut dyn FnMut(usize, f64, &[f64]),
) -> Result<TerminalValue> {
    params.validate(model)?;
    layout.check(model)?;
    let (m, n, horizon) = (params.m, params.n, params.horizon);

    let mut x = initial_state(model, key);
    let jumps = generate_jump_stream(&model.jump_law, horizon, key.stream(Channel::Jumps))?;
    let mut windows = WindowCursor::new(&jumps, n);
    let mut theta_rng = key.stream(Channel::ThetaRare).rng();
    let mut wiener = WienerSource::new(key.stream(Channel::WienerFine), m, horizon / n as f64);
    let head = square_root_weight_sum(model, 0, m);
    let mut dw = vec![0.0; m];
    let mut ws = Workspace::new(model.dim);

    observer(0, 0.0, &x);
    for j in 0..n {
        let t = grid_time(j, n, horizon);
        let t_next = grid_time(j + 1, n, horizon);
        let h = t_next - t;
        let theta = draw_theta(&mut theta_rng, t, h);
        let increment = match layout {
            NoiseLayout::Full => {
                wiener.fill(&mut dw);
                Increment::PerDimension(&dw)
            }
            NoiseLayout::Factored => Increment::Weighted(head * wiener.next_increment()),
        };
        let window = jumps.window(windows.take(j));
        advance(model, &mut x, t, h, theta, increment, window, &mut ws);
        ensure_finite(&x, j, t)?;
        observer(j + 1, t_next, &x);
    }
    Ok(TerminalValue {
        value: x,
        jump_count: jumps.len(),
        params: *params,
    })
}

/// Terminal value `X_{M,n}(T)` of one trajectory.
pub fn simulate_terminal(model: &ModelSpec, params: &SchemeParams, key: TrajectoryKey) -> Result<TerminalValue> {
    simulate_terminal_with(model, params, key, NoiseLayout::auto(model))
}

pub fn simulate_terminal_with(
    model: &ModelSpec,
    params: &SchemeParams,
    key: TrajectoryKey,
    layout: NoiseLayout,
) -> Result<TerminalValue> {
    run_single(model, params, key, layout, &mut |_, _, _| {})
}

/// Same trajectory as [`simulate_terminal_with`], recording `(t_j, X(t_j))`
/// at every grid point.
pub fn simulate_path(
    model: &ModelSpec,
    params: &SchemeParams,
    key: TrajectoryKey,
    layout: NoiseLayout,
) -> Result<Vec<(f64, Vec<f64>)>> {
    let mut path = Vec::with_capacity(params.n + 1);
    run_single(model, params, key, layout, &mut |_, t, x| path.push((t, x.to_vec())))?;
    Ok(path)
}

/// Rare/fine resolution ratios of a coupled run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Multipliers {
    pub dims: usize,
    pub steps: usize,
}

impl Multipliers {
    pub fn new(dims: usize, steps: usize) -> Self {
        Self { dims, steps }
    }
}

impl Default for Multipliers {
    fn default() -> Self {
        Self { dims: 10, steps: 100 }
    }
}

/// Runs `X_{M,n}` and `X_{M·dims, n·steps}` on shared noise.
///
/// The fine increments are the source of truth: they are drawn one rare step
/// at a time (a slab of `steps` fine rows) and the rare increments are their
/// block sums over the first `M` dimensions. Both schemes consume the same
/// jump stream; each draws its own `θ` sequence (`THETA_RARE` / `THETA_FINE`).
pub fn simulate_coupled_pair(
    model: &ModelSpec,
    params: &SchemeParams,
    multipliers: Multipliers,
    key: TrajectoryKey,
) -> Result<(TerminalValue, TerminalValue)> {
    simulate_coupled_pair_with(model, params, multipliers, key, NoiseLayout::auto(model))
}

pub fn simulate_coupled_pair_with(
    model: &ModelSpec,
    params: &SchemeParams,
    multipliers: Multipliers,
    key: TrajectoryKey,
    layout: NoiseLayout,
) -> Result<(TerminalValue, TerminalValue)> {
    params.validate(model)?;
    layout.check(model)?;
    if multipliers.dims < 1 || multipliers.steps < 1 {
        return Err(Error::invalid("multipliers", "fine multipliers must be at least 1"));
    }
    let (m, n, horizon) = (params.m, params.n, params.horizon);
    let ratio = multipliers.steps;
    let fine_m = m * multipliers.dims;
    let fine_n = n * ratio;
    let fine_params = SchemeParams {
        m: fine_m,
        n: fine_n,
        ..*params
    };

    let x0 = initial_state(model, key);
    let mut rare_x = x0.clone();
    let mut fine_x = x0;
    let jumps = generate_jump_stream(&model.jump_law, horizon, key.stream(Channel::Jumps))?;
    let mut windows = WindowCursor::new(&jumps, fine_n);
    let mut theta_rare = key.stream(Channel::ThetaRare).rng();
    let mut theta_fine = key.stream(Channel::ThetaFine).rng();
    let mut wiener = WienerSource::new(key.stream(Channel::WienerFine), fine_m, horizon / fine_n as f64);
    let mut rare_ws = Workspace::new(model.dim);
    let mut fine_ws = Workspace::new(model.dim);

    let head = square_root_weight_sum(model, 0, m);
    let total = head.hypot(square_root_weight_sum(model, m, fine_m));
    let beta = if total > 0.0 {
        1.0 - (1.0 - (head / total).powi(2)).max(0.0).sqrt()
    } else {
        0.0
    };
    let rare_std = (horizon / n as f64).sqrt();
    // Full: fine increments of one rare step; Factored: the r conditional draws.
    let mut slab = match layout {
        NoiseLayout::Full => vec![0.0; ratio * fine_m],
        NoiseLayout::Factored => vec![0.0; ratio],
    };
    let mut rare_dw = vec![0.0; m];

    let mut t_fine = 0.0;
    for j in 0..n {
        let mut rare_head = 0.0;
        let mut bridge_shift = 0.0;
        match layout {
            NoiseLayout::Full => wiener.fill(&mut slab),
            NoiseLayout::Factored => {
                rare_head = wiener.next_scaled(rare_std);
                wiener.fill(&mut slab);
                let mean = slab.iter().sum::<f64>() / ratio as f64;
                bridge_shift = head * rare_head / ratio as f64 - total * beta * mean;
            }
        }
        let rare_start = windows.next;
        for q in 0..ratio {
            let i = j * ratio + q;
            let t = t_fine;
            let t_next = grid_time(i + 1, fine_n, horizon);
            t_fine = t_next;
            let h = t_next - t;
            let theta = draw_theta(&mut theta_fine, t, h);
            let increment = match layout {
                NoiseLayout::Full => Increment::PerDimension(&slab[q * fine_m..(q + 1) * fine_m]),
                NoiseLayout::Factored => Increment::Weighted(bridge_shift + total * slab[q]),
            };
            let window = jumps.window(windows.take(i));
            advance(model, &mut fine_x, t, h, theta, increment, window, &mut fine_ws);
            ensure_finite(&fine_x, i, t)?;
        }
        let rare_window = jumps.window(rare_start..windows.next);

        let t = grid_time(j, n, horizon);
        let t_next = grid_time(j + 1, n, horizon);
        let h = t_next - t;
        let theta = draw_theta(&mut theta_rare, t, h);
        let increment = match layout {
            NoiseLayout::Full => {
                aggregate_rows(&slab, fine_m, ratio, m, &mut rare_dw);
                Increment::PerDimension(&rare_dw)
            }
            NoiseLayout::Factored => Increment::Weighted(head * rare_head),
        };
        advance(model, &mut rare_x, t, h, theta, increment, rare_window, &mut rare_ws);
        ensure_finite(&rare_x, j, t)?;
    }

    let count = jumps.len();
    Ok((
        TerminalValue {
            value: rare_x,
            jump_count: count,
            params: *params,
        },
        TerminalValue {
            value: fine_x,
            jump_count: count,
            params: fine_params,
        },
    ))
}

/// Runs `X_{M,n}` together with the exact solution of the equation
/// truncated to `M·ref_mult` Wiener dimensions, on shared noise.
///
/// The endpoints `W_1(T), ..., W_{M·ref_mult}(T)` are drawn first, in order
/// of dimension, so every truncation level of one trajectory sees the same
/// Wiener path. The scheme then steps along the Brownian bridges pinned at
/// those endpoints (per dimension, or of the weighted sum for a factored
/// diffusion).
pub fn simulate_reference_pair(
    model: &ModelSpec,
    params: &SchemeParams,
    ref_mult: usize,
    key: TrajectoryKey,
    layout: NoiseLayout,
) -> Result<(TerminalValue, Vec<f64>)> {
    params.validate(model)?;
    layout.check(model)?;
    let reference = model.exact_reference.as_ref().ok_or(Error::MissingReference)?;
    if ref_mult < 1 {
        return Err(Error::invalid("ref_mult", "reference multiplier must be at least 1"));
    }
    let (m, n, horizon) = (params.m, params.n, params.horizon);
    let m_ref = m * ref_mult;

    let x0 = initial_state(model, key);
    let mut x = x0.clone();
    let jumps = generate_jump_stream(&model.jump_law, horizon, key.stream(Channel::Jumps))?;
    let mut windows = WindowCursor::new(&jumps, n);
    let mut theta_rng = key.stream(Channel::ThetaRare).rng();
    let mut wiener = WienerSource::new(key.stream(Channel::WienerFine), m_ref, horizon);
    let mut ws = Workspace::new(model.dim);

    let mut endpoints = vec![0.0; m_ref];
    wiener.fill(&mut endpoints);
    // What is left of each bridge to travel: per kept dimension, or the
    // weighted head sum divided by its standard deviation.
    let head = square_root_weight_sum(model, 0, m);
    let mut remaining = match layout {
        NoiseLayout::Full => endpoints[..m].to_vec(),
        NoiseLayout::Factored => {
            let factor = model.diffusion.factor.as_ref().expect("layout checked");
            let head_sum: f64 = (1..=m).map(|k| (factor.weight)(k) * endpoints[k - 1]).sum();
            vec![if head > 0.0 { head_sum / head } else { 0.0 }]
        }
    };
    let mut row = vec![0.0; remaining.len()];

    for j in 0..n {
        let t = grid_time(j, n, horizon);
        let t_next = grid_time(j + 1, n, horizon);
        let h = t_next - t;
        let left = horizon - t;
        let spread = (h * (horizon - t_next) / left).sqrt();
        for (dw, r) in row.iter_mut().zip(remaining.iter_mut()) {
            *dw = *r * (h / left) + spread * wiener.next_scaled(1.0);
            *r -= *dw;
        }
        let theta = draw_theta(&mut theta_rng, t, h);
        let increment = match layout {
            NoiseLayout::Full => Increment::PerDimension(&row),
            NoiseLayout::Factored => Increment::Weighted(head * row[0]),
        };
        let window = jumps.window(windows.take(j));
        advance(model, &mut x, t, h, theta, increment, window, &mut ws);
        ensure_finite(&x, j, t)?;
    }

    let mut exact = vec![0.0; model.dim];
    match layout {
        NoiseLayout::Full => reference(&x0, m_ref, WienerEndpoints::PerDimension(&endpoints), &jumps, &mut exact),
        NoiseLayout::Factored => {
            let factor = model.diffusion.factor.as_ref().expect("layout checked");
            let weighted: f64 = (1..=m_ref).map(|k| (factor.weight)(k) * endpoints[k - 1]).sum();
            reference(&x0, m_ref, WienerEndpoints::Weighted(weighted), &jumps, &mut exact)
        }
    }
    ensure_finite(&exact, n, horizon)?;
    Ok((
        TerminalValue {
            value: x,
            jump_count: jumps.len(),
            params: *params,
        },
        exact,
    ))
}
