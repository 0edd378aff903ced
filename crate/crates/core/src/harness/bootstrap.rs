use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::HarnessError;

pub const DEFAULT_LEVEL: f64 = 0.95;
pub const DEFAULT_RESAMPLES: usize = 10_000;
pub const MIN_RESAMPLES: usize = 1_000;

/// Percentile bootstrap interval for the mean, on the percent scale.
pub fn bootstrap_ci(
    scores: &[f64],
    level: f64,
    resamples: usize,
    seed: u64,
) -> Result<(f64, f64), HarnessError> {
    if scores.is_empty() {
        return Err(HarnessError::EmptyInput);
    }
    if resamples < MIN_RESAMPLES {
        return Err(HarnessError::InvalidArgument(format!(
            "resamples must be at least {MIN_RESAMPLES}, got {resamples}"
        )));
    }
    if !(0.0 < level && level < 1.0) {
        return Err(HarnessError::InvalidArgument(format!(
            "level {level} outside (0, 1)"
        )));
    }
    let n = scores.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| {
            let total: f64 = (0..n).map(|_| scores[rng.gen_range(0..n)]).sum();
            total / n as f64
        })
        .collect();
    means.sort_by(f64::total_cmp);
    let alpha = 1.0 - level;
    let lo_idx = ((alpha / 2.0) * resamples as f64).floor() as usize;
    let hi_idx = (((1.0 - alpha / 2.0) * resamples as f64).ceil() as usize).saturating_sub(1);
    Ok((
        100.0 * means[lo_idx.min(resamples - 1)],
        100.0 * means[hi_idx.min(resamples - 1)],
    ))
}
