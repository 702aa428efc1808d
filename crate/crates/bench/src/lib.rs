//! Fixture generators shared by the benchmarks.

use gogiskip_core::{TokenRecord, Trace};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Trace of `len` tokens with exponential-ish scores and slowly drifting entropy.
pub fn random_trace(seed: u64, len: usize) -> Trace {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut level: f64 = 1.0;
    let tokens = (0..len)
        .map(|t| {
            level = (level + rng.gen_range(-0.2..0.2)).clamp(0.05, 4.0);
            let gogi = -rng.gen_range(1e-12f64..1.0).ln();
            let text = if t % 11 == 0 { " " } else { "step" };
            TokenRecord::new(t, text, (t % 97) as i64, gogi, level * rng.gen_range(0.5..1.5))
        })
        .collect();
    Trace { id: format!("bench-{seed}"), tokens, ..Trace::default() }
}

pub fn random_values(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(0.0..10.0)).collect()
}
