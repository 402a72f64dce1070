use std::sync::Arc;

use jumpeuler_core::{
    aggregate_to_rare, generate_fine_grid, generate_jump_stream, Channel, JumpLaw, NoiseGrid, StreamKey, StreamRng,
};
use rand::Rng;
use statrs::distribution::{ContinuousCDF, Normal};

const LAMBDA: f64 = 1.21;
const HORIZON: f64 = 1.53;

fn unit_marks(intensity: f64) -> JumpLaw {
    JumpLaw::new(intensity, 1, Arc::new(|_: &mut StreamRng, y: &mut [f64]| y[0] = 1.0))
}

fn jump_counts(streams: u64) -> Vec<f64> {
    let law = unit_marks(LAMBDA);
    (0..streams)
        .map(|l| {
            generate_jump_stream(&law, HORIZON, StreamKey::new(2024, l, Channel::Jumps))
                .unwrap()
                .len() as f64
        })
        .collect()
}

fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

#[test]
fn jump_count_mean_is_lambda_t() {
    let counts = jump_counts(100_000);
    let (mean, _) = mean_var(&counts);
    let lt = LAMBDA * HORIZON;
    let se = (lt / counts.len() as f64).sqrt();
    assert!((mean - lt).abs() < 3.0 * se, "mean {mean} vs {lt} (se {se})");
}

#[test]
fn jump_count_variance_is_lambda_t() {
    let counts = jump_counts(100_000);
    let (_, var) = mean_var(&counts);
    let lt = LAMBDA * HORIZON;
    // Poisson: fourth central moment lt(1 + 3 lt), so Var(S²) ≈ (lt + 2 lt²)/N.
    let se = ((lt + 2.0 * lt * lt) / counts.len() as f64).sqrt();
    assert!((var - lt).abs() < 5.0 * se, "variance {var} vs {lt} (se {se})");
}

#[test]
fn jump_times_sorted_inside_horizon() {
    let law = unit_marks(25.0);
    for l in 0..200 {
        let s = generate_jump_stream(&law, HORIZON, StreamKey::new(5, l, Channel::Jumps)).unwrap();
        assert!(s.times().windows(2).all(|w| w[0] < w[1]));
        assert!(s.times().iter().all(|&t| t > 0.0 && t <= HORIZON));
        assert_eq!(s.marks().len(), s.len());
    }
}

#[test]
fn pooled_increment_variance() {
    let (m, n) = (100, 10_000);
    let grid = generate_fine_grid(m, n, HORIZON, StreamKey::new(77, 0, Channel::WienerFine)).unwrap();
    let h = HORIZON / n as f64;
    let (mean, var) = mean_var(grid.increments());
    let count = grid.increments().len() as f64;
    assert!(mean.abs() < 5.0 * (h / count).sqrt());
    let se = std::f64::consts::SQRT_2 * h / count.sqrt();
    assert!((var - h).abs() < 5.0 * se, "variance {var} vs {h}");
}

/// Asymptotic Kolmogorov survival function `P(√N D > x)`.
fn kolmogorov_survival(x: f64) -> f64 {
    let mut sum = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        let sign = if k as i64 % 2 == 1 { 1.0 } else { -1.0 };
        sum += sign * (-2.0 * k * k * x * x).exp();
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[test]
fn increments_pass_kolmogorov_smirnov() {
    let (m, n) = (10, 10_000);
    let grid = generate_fine_grid(m, n, HORIZON, StreamKey::new(31337, 4, Channel::WienerFine)).unwrap();
    let mut sample = grid.increments().to_vec();
    assert_eq!(sample.len(), 100_000);
    sample.sort_by(f64::total_cmp);
    let law = Normal::new(0.0, (HORIZON / n as f64).sqrt()).unwrap();
    let count = sample.len() as f64;
    let d = sample
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = law.cdf(x);
            (f - i as f64 / count).max((i + 1) as f64 / count - f)
        })
        .fold(0.0, f64::max);
    let p_value = kolmogorov_survival(count.sqrt() * d);
    assert!(p_value > 1e-3, "KS statistic {d}, p-value {p_value}");
}

#[test]
fn wiener_and_jump_channels_uncorrelated() {
    let law = unit_marks(LAMBDA);
    let samples = 100_000u64;
    let mut pairs = Vec::with_capacity(samples as usize);
    for l in 0..samples {
        let w = generate_fine_grid(1, 1, 1.0, StreamKey::new(9, l, Channel::WienerFine)).unwrap().get(0, 0);
        let jumps = generate_jump_stream(&law, HORIZON, StreamKey::new(9, l, Channel::Jumps)).unwrap();
        pairs.push((w, jumps.len() as f64));
    }
    let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let (mx, vx) = mean_var(&xs);
    let (my, vy) = mean_var(&ys);
    let cov = pairs.iter().map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / (samples as f64 - 1.0);
    let corr = cov / (vx * vy).sqrt();
    let se = 1.0 / (samples as f64).sqrt();
    assert!(corr.abs() < 4.0 * se, "correlation {corr}");
}

#[test]
fn channels_of_one_trajectory_differ() {
    let mut a = StreamKey::new(1, 0, Channel::ThetaRare).rng();
    let mut b = StreamKey::new(1, 0, Channel::ThetaFine).rng();
    let xs: Vec<u64> = (0..8).map(|_| a.random()).collect();
    let ys: Vec<u64> = (0..8).map(|_| b.random()).collect();
    assert_ne!(xs, ys);
}

fn random_grid(steps: usize, dims: usize, seed: u64) -> NoiseGrid {
    generate_fine_grid(dims, steps, 1.0, StreamKey::new(seed, 0, Channel::WienerFine)).unwrap()
}

#[test]
fn aggregation_matches_left_to_right_sums() {
    for seed in 0..20 {
        let fine = random_grid(100, 5, seed);
        let rare = aggregate_to_rare(&fine, 10, 3).unwrap();
        assert_eq!((rare.steps(), rare.dims()), (10, 3));
        assert_eq!(rare.step_size(), fine.step_size() * 10.0);
        for i in 0..10 {
            for k in 0..3 {
                let mut acc = fine.get(i * 10, k);
                for j in 1..10 {
                    acc += fine.get(i * 10 + j, k);
                }
                assert_eq!(rare.get(i, k).to_bits(), acc.to_bits());
            }
        }
    }
}

#[test]
fn aggregation_commutes_with_truncation() {
    for seed in 0..20 {
        let fine = random_grid(60, 7, seed);
        for (ratio, m) in [(1, 7), (3, 4), (6, 1), (60, 5)] {
            let first = aggregate_to_rare(&fine, ratio, 7).unwrap().truncate_dims(m).unwrap();
            let second = aggregate_to_rare(&fine.truncate_dims(m).unwrap(), ratio, m).unwrap();
            assert_eq!(first, second);
            assert_eq!(aggregate_to_rare(&fine, ratio, m).unwrap(), second);
        }
    }
}

#[test]
fn grid_step_size_times_steps_is_horizon() {
    for n in [1, 3, 7, 662, 1000, 66200] {
        let g = generate_fine_grid(0, n, HORIZON, StreamKey::new(0, 0, Channel::WienerFine)).unwrap();
        let total = g.step_size() * n as f64;
        assert!((total - HORIZON).abs() <= f64::EPSILON * HORIZON, "{n}: {total}");
    }
}
