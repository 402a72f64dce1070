//! Shared fixtures for the criterion benches.

use jumpeuler_core::{generate_fine_grid, Channel, NoiseGrid, StreamKey};

/// Fine grid of `steps × dims` standard increments on `[0, 1]`.
pub fn fine_grid(dims: usize, steps: usize, seed: u64) -> NoiseGrid {
    generate_fine_grid(dims, steps, 1.0, StreamKey::new(seed, 0, Channel::WienerFine)).expect("valid grid")
}
