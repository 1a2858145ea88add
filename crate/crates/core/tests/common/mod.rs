#![allow(dead_code)]

use l1trend::{ColumnKind, DictionarySpec, Signal};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Instance {
    pub spec: DictionarySpec,
    pub signal: Signal,
    pub gamma: f64,
    /// Fraction of `λ_max` to fit at.
    pub lambda_ratio: f64,
}

pub fn random_omega(rng: &mut ChaCha8Rng, count: usize) -> Vec<f64> {
    let mut omega: Vec<f64> = (0..count)
        .map(|_| rng.random_range(0.05..=std::f64::consts::PI))
        .collect();
    omega.sort_by(f64::total_cmp);
    omega.dedup_by(|a, b| (*a - *b).abs() < 1e-3);
    omega
}

/// A sparse planted series plus Gaussian-ish noise on a random dictionary.
pub fn random_instance(seed: u64, n_range: std::ops::RangeInclusive<usize>, max_freq: usize) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(n_range);
    let count = rng.random_range(0..=max_freq);
    let omega = random_omega(&mut rng, count);
    let spec = DictionarySpec::new(n, omega).unwrap();
    let mut theta = vec![0.0; spec.p()];
    for _ in 0..rng.random_range(1..=4) {
        let pos = rng.random_range(0..spec.p());
        let scale = match spec.column_at(pos).kind {
            ColumnKind::Slope => 0.1,
            _ => 2.0,
        };
        theta[pos] = rng.random_range(-scale..scale);
    }
    let mut y = spec.apply(&theta);
    for v in &mut y {
        *v += 0.3 * (rng.random::<f64>() + rng.random::<f64>() - 1.0) + 1.5;
    }
    let gamma = [0.0, 0.5, 1.0, 2.0][rng.random_range(0..4)];
    let lambda_ratio = 10f64.powf(rng.random_range(-3.0..-0.1));
    Instance {
        spec,
        signal: Signal::new(y).unwrap(),
        gamma,
        lambda_ratio,
    }
}
