//! Seeded sampling shared by the property checks and the command line.
//!
//! The generator is ChaCha8 seeded from a `u64`; the same seed always yields
//! the same sequence on every platform.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const DEFAULT_SEED: u64 = 42;
pub const MAX_ATTEMPTS: usize = 1000;

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform point in the box `[lower, upper]`.
pub fn uniform_in_box(rng: &mut impl Rng, lower: &[f64], upper: &[f64]) -> Vec<f64> {
    lower
        .iter()
        .zip(upper)
        .map(|(&a, &b)| rng.gen_range(a..b))
        .collect()
}

/// Rejection sampling against `accept`, giving up after [`MAX_ATTEMPTS`].
pub fn sample_where(
    rng: &mut impl Rng,
    lower: &[f64],
    upper: &[f64],
    accept: impl Fn(&[f64]) -> bool,
) -> Result<Vec<f64>> {
    for _ in 0..MAX_ATTEMPTS {
        let x = uniform_in_box(rng, lower, upper);
        if accept(&x) {
            return Ok(x);
        }
    }
    Err(Error::Sampling {
        attempts: MAX_ATTEMPTS,
    })
}
