use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{GenotypeMatrix, Result, SnpError};

/// Seeded random partition into `(train, test)` with `|test| = round(test_fraction · n)`.
///
/// Both halves keep the original sample order.
pub fn split_train_test(
    m: &GenotypeMatrix,
    test_fraction: f64,
    seed: u64,
) -> Result<(GenotypeMatrix, GenotypeMatrix)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(SnpError::InvalidFraction(test_fraction));
    }
    let n = m.n_samples();
    let n_test = (test_fraction * n as f64).round() as usize;
    if n_test == 0 || n_test >= n {
        return Err(SnpError::EmptySplit { samples: n, test: n_test });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (test, train) = order.split_at_mut(n_test);
    test.sort_unstable();
    train.sort_unstable();
    Ok((m.select_samples(train), m.select_samples(test)))
}
