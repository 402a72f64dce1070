//! Reproducible random streams, compound Poisson jump streams and coupled
//! Wiener increment grids.
//!
//! Every random quantity of a trajectory is drawn from its own stream, keyed
//! by `(base_seed, trajectory_index, channel)`. Streams are ChaCha8 keystreams:
//! the base seed selects the cipher key, and the (trajectory, channel) pair
//! selects the 64-bit stream id. Distinct keys therefore never share output,
//! and a trajectory's draws do not depend on which worker runs it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};

use crate::error::{Error, Result};
use crate::model::JumpLaw;

/// Generator type behind every stream.
pub type StreamRng = ChaCha8Rng;

const CHANNEL_BITS: u32 = 3;

/// Independent purposes a trajectory draws randomness for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Channel {
    WienerFine = 0,
    ThetaRare = 1,
    ThetaFine = 2,
    Jumps = 3,
    Marks = 4,
    Initial = 5,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub base_seed: u64,
    pub trajectory_index: u64,
    pub channel: Channel,
}

impl StreamKey {
    pub fn new(base_seed: u64, trajectory_index: u64, channel: Channel) -> Self {
        Self {
            base_seed,
            trajectory_index,
            channel,
        }
    }

    pub fn with_channel(self, channel: Channel) -> Self {
        Self { channel, ..self }
    }

    /// Opens the stream at its first draw.
    pub fn rng(&self) -> StreamRng {
        assert!(
            self.trajectory_index < 1 << (64 - CHANNEL_BITS),
            "trajectory index {} out of range",
            self.trajectory_index
        );
        let mut rng = ChaCha8Rng::seed_from_u64(self.base_seed);
        rng.set_stream((self.trajectory_index << CHANNEL_BITS) | self.channel as u64);
        rng
    }
}

/// Arrival times and marks of a compound Poisson driver on `(0, T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpStream {
    times: Vec<f64>,
    marks: Vec<f64>,
    mark_dim: usize,
    intensity: f64,
    horizon: f64,
}

impl JumpStream {
    /// Builds a stream from explicit arrivals. `marks` is row-major, one
    /// `mark_dim` row per arrival.
    pub fn from_parts(
        times: Vec<f64>,
        marks: Vec<f64>,
        mark_dim: usize,
        intensity: f64,
        horizon: f64,
    ) -> Result<Self> {
        if marks.len() != times.len() * mark_dim {
            return Err(Error::DimensionMismatch {
                what: "jump marks",
                expected: times.len() * mark_dim,
                found: marks.len(),
            });
        }
        if !(horizon > 0.0) {
            return Err(Error::invalid("horizon", format!("must be positive, got {horizon}")));
        }
        let mut prev = 0.0;
        for &t in &times {
            if !(t > prev && t <= horizon) {
                return Err(Error::invalid(
                    "times",
                    format!("arrival {t} breaks strict ordering within (0, {horizon}]"),
                ));
            }
            prev = t;
        }
        Ok(Self {
            times,
            marks,
            mark_dim,
            intensity,
            horizon,
        })
    }

    pub fn empty(mark_dim: usize, intensity: f64, horizon: f64) -> Self {
        Self {
            times: Vec::new(),
            marks: Vec::new(),
            mark_dim,
            intensity,
            horizon,
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn marks(&self) -> &[f64] {
        &self.marks
    }

    pub fn mark(&self, k: usize) -> &[f64] {
        &self.marks[k * self.mark_dim..(k + 1) * self.mark_dim]
    }

    pub fn mark_dim(&self) -> usize {
        self.mark_dim
    }

    pub fn intensity(&self) -> f64 {
        self.intensity
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Arrivals with indices in `range`, in arrival order.
    pub fn window(&self, range: std::ops::Range<usize>) -> JumpWindow<'_> {
        JumpWindow {
            times: &self.times[range.clone()],
            marks: &self.marks[range.start * self.mark_dim..range.end * self.mark_dim],
            mark_dim: self.mark_dim,
        }
    }

    /// For each arrival, the index `i` of the step `(t_i, t_{i+1}]` of the
    /// uniform `steps`-grid on `[0, T]` containing it.
    pub fn step_indices(&self, steps: usize) -> Vec<usize> {
        self.times
            .iter()
            .map(|&t| step_containing(t, steps, self.horizon))
            .collect()
    }
}

/// A contiguous run of arrivals handed to one scheme step.
#[derive(Debug, Clone, Copy)]
pub struct JumpWindow<'a> {
    pub times: &'a [f64],
    pub marks: &'a [f64],
    pub mark_dim: usize,
}

impl<'a> JumpWindow<'a> {
    pub fn empty() -> Self {
        JumpWindow {
            times: &[],
            marks: &[],
            mark_dim: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, &'a [f64])> + '_ {
        let marks = self.marks;
        let dim = self.mark_dim;
        self.times
            .iter()
            .enumerate()
            .map(move |(k, &t)| (t, &marks[k * dim..(k + 1) * dim]))
    }
}

/// Grid point `t_i = T i / n` of the uniform grid; `t_n` is exactly `T`.
#[inline]
pub fn grid_time(i: usize, steps: usize, horizon: f64) -> f64 {
    if i == steps {
        horizon
    } else {
        horizon * i as f64 / steps as f64
    }
}

/// Index of the half-open window `(t_i, t_{i+1}]` containing `t`, with the
/// boundaries computed exactly as [`grid_time`] does.
pub fn step_containing(t: f64, steps: usize, horizon: f64) -> usize {
    let guess = (t / horizon * steps as f64).ceil() as isize - 1;
    let mut i = guess.clamp(0, steps as isize - 1) as usize;
    while i > 0 && t <= grid_time(i, steps, horizon) {
        i -= 1;
    }
    while i + 1 < steps && t > grid_time(i + 1, steps, horizon) {
        i += 1;
    }
    i
}

/// Draws the jump stream of one trajectory. Arrival times come from the
/// `JUMPS` channel of `key` as cumulative Exponential(λ) gaps; marks come
/// from the `MARKS` channel of the same trajectory.
pub fn generate_jump_stream(law: &JumpLaw, horizon: f64, key: StreamKey) -> Result<JumpStream> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::invalid("horizon", format!("must be positive, got {horizon}")));
    }
    if key.channel != Channel::Jumps {
        return Err(Error::invalid("channel", "jump streams are keyed on the JUMPS channel"));
    }
    let mut stream = JumpStream::empty(law.mark_dim, law.intensity, horizon);
    if law.intensity <= 0.0 {
        return Ok(stream);
    }
    let mut rng = key.rng();
    let mut marks_rng = key.with_channel(Channel::Marks).rng();
    let mut t = 0.0_f64;
    loop {
        let gap: f64 = rng.sample::<f64, _>(Exp1) / law.intensity;
        let next = t + gap;
        if next > horizon {
            break;
        }
        if next <= t {
            // zero gap after rounding; keep arrivals strictly ordered
            continue;
        }
        t = next;
        stream.times.push(t);
        let start = stream.marks.len();
        stream.marks.resize(start + law.mark_dim, 0.0);
        (law.sampler)(&mut marks_rng, &mut stream.marks[start..]);
    }
    Ok(stream)
}

/// Wiener increments on a uniform grid, row-major `steps x dims`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseGrid {
    steps: usize,
    dims: usize,
    step_size: f64,
    increments: Vec<f64>,
}

impl NoiseGrid {
    pub fn from_increments(
        steps: usize,
        dims: usize,
        step_size: f64,
        increments: Vec<f64>,
    ) -> Result<Self> {
        if increments.len() != steps * dims {
            return Err(Error::DimensionMismatch {
                what: "noise grid",
                expected: steps * dims,
                found: increments.len(),
            });
        }
        Ok(Self {
            steps,
            dims,
            step_size,
            increments,
        })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn step_size(&self) -> f64 {
        self.step_size
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    pub fn get(&self, step: usize, dim: usize) -> f64 {
        self.increments[step * self.dims + dim]
    }

    pub fn row(&self, step: usize) -> &[f64] {
        &self.increments[step * self.dims..(step + 1) * self.dims]
    }

    /// Keeps the first `dims` columns.
    pub fn truncate_dims(&self, dims: usize) -> Result<NoiseGrid> {
        if dims > self.dims {
            return Err(Error::DimensionMismatch {
                what: "truncated dimension",
                expected: self.dims,
                found: dims,
            });
        }
        let increments = (0..self.steps)
            .flat_map(|i| self.row(i)[..dims].iter().copied())
            .collect();
        Ok(NoiseGrid {
            steps: self.steps,
            dims,
            step_size: self.step_size,
            increments,
        })
    }

    /// Column sums in ascending step order: the Wiener values at the end of
    /// the grid.
    pub fn endpoints(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dims];
        for i in 0..self.steps {
            for (acc, &dw) in out.iter_mut().zip(self.row(i)) {
                *acc += dw;
            }
        }
        out
    }
}

/// Sequential source of Gaussian increments on the `WIENER_FINE` channel.
///
/// Increments are produced step-major, dimension-minor, so pulling the grid
/// one step (or one slab) at a time yields exactly the rows of
/// [`generate_fine_grid`].
pub struct WienerSource {
    rng: StreamRng,
    dims: usize,
    sqrt_h: f64,
}

impl WienerSource {
    pub fn new(key: StreamKey, dims: usize, step_size: f64) -> Self {
        Self {
            rng: key.rng(),
            dims,
            sqrt_h: step_size.sqrt(),
        }
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    /// Fills `out` with the next `out.len() / dims` rows.
    #[inline]
    pub fn fill(&mut self, out: &mut [f64]) {
        for dw in out.iter_mut() {
            let z: f64 = self.rng.sample(StandardNormal);
            *dw = z * self.sqrt_h;
        }
    }

    /// One draw with standard deviation `std_dev`, taken from the same
    /// stream position a grid entry would use.
    #[inline]
    pub fn next_scaled(&mut self, std_dev: f64) -> f64 {
        let z: f64 = self.rng.sample(StandardNormal);
        z * std_dev
    }

    #[inline]
    pub fn next_increment(&mut self) -> f64 {
        self.next_scaled(self.sqrt_h)
    }
}

/// Draws the `n_fine x m_fine` grid of iid Normal(0, T/n_fine) increments.
pub fn generate_fine_grid(
    m_fine: usize,
    n_fine: usize,
    horizon: f64,
    key: StreamKey,
) -> Result<NoiseGrid> {
    if n_fine < 1 {
        return Err(Error::invalid("n_fine", "at least one step is required"));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::invalid("horizon", format!("must be positive, got {horizon}")));
    }
    if key.channel != Channel::WienerFine {
        return Err(Error::invalid("channel", "Wiener grids are keyed on the WIENER_FINE channel"));
    }
    let step_size = horizon / n_fine as f64;
    let mut source = WienerSource::new(key, m_fine, step_size);
    let mut increments = vec![0.0; n_fine * m_fine];
    source.fill(&mut increments);
    Ok(NoiseGrid {
        steps: n_fine,
        dims: m_fine,
        step_size,
        increments,
    })
}

/// Sums `ratio` consecutive fine rows (first `m_rare` columns) into one rare
/// row. `fine` holds at least `ratio` rows of width `fine_dims`.
#[inline]
pub(crate) fn aggregate_rows(
    fine: &[f64],
    fine_dims: usize,
    ratio: usize,
    m_rare: usize,
    out: &mut [f64],
) {
    out[..m_rare].copy_from_slice(&fine[..m_rare]);
    for j in 1..ratio {
        let row = &fine[j * fine_dims..j * fine_dims + m_rare];
        for (acc, &dw) in out.iter_mut().zip(row) {
            *acc += dw;
        }
    }
}

/// Rare-grid increments obtained by summing blocks of `ratio` fine steps,
/// restricted to the first `m_rare` dimensions.
pub fn aggregate_to_rare(fine: &NoiseGrid, ratio: usize, m_rare: usize) -> Result<NoiseGrid> {
    if ratio == 0 || !fine.steps.is_multiple_of(ratio) {
        return Err(Error::DimensionMismatch {
            what: "fine steps per rare step",
            expected: ratio,
            found: fine.steps,
        });
    }
    if m_rare > fine.dims {
        return Err(Error::DimensionMismatch {
            what: "rare dimension",
            expected: fine.dims,
            found: m_rare,
        });
    }
    let steps = fine.steps / ratio;
    let mut increments = vec![0.0; steps * m_rare];
    if m_rare > 0 {
        let block = ratio * fine.dims;
        for (i, out) in increments.chunks_exact_mut(m_rare).enumerate() {
            aggregate_rows(
                &fine.increments[i * block..(i + 1) * block],
                fine.dims,
                ratio,
                m_rare,
                out,
            );
        }
    }
    Ok(NoiseGrid {
        steps,
        dims: m_rare,
        step_size: fine.step_size * ratio as f64,
        increments,
    })
}
