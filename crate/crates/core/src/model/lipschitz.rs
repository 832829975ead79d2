use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{stream, Purpose};

/// All pairs are used up to this many; beyond it pairs are sampled.
pub const DEFAULT_MAX_PAIRS: usize = 1_000_000;

/// Percentile of `|y_i - y_j| / |x_i - x_j|` over distinct pairs.
///
/// Uses every pair when there are at most `max_pairs`, otherwise `max_pairs`
/// uniformly drawn pairs (seeded by `seed`). Zero-distance pairs are skipped.
pub fn estimate_lipschitz_constant(
    xs: &[Vec<f64>],
    ys: &[f64],
    pct: f64,
    max_pairs: usize,
    seed: u64,
) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch {
            expected: xs.len(),
            got: ys.len(),
        });
    }
    let n = xs.len();
    if n < 2 {
        return Err(Error::InvalidConfig("need at least 2 rows".into()));
    }
    if !(pct > 0.0 && pct <= 100.0) {
        return Err(Error::InvalidConfig(format!(
            "percentile must be in (0, 100], got {pct}"
        )));
    }
    let ratio = |i: usize, j: usize| {
        let d = xs[i]
            .iter()
            .zip(&xs[j])
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        (d > 0.0).then(|| (ys[i] - ys[j]).abs() / d)
    };
    let total = n * (n - 1) / 2;
    let mut ratios = Vec::with_capacity(total.min(max_pairs));
    if total <= max_pairs {
        for i in 0..n {
            for j in i + 1..n {
                ratios.extend(ratio(i, j));
            }
        }
    } else {
        let mut rng = stream(seed, Purpose::PairSampling);
        for _ in 0..max_pairs {
            let i = rng.random_range(0..n);
            let mut j = rng.random_range(0..n - 1);
            if j >= i {
                j += 1;
            }
            ratios.extend(ratio(i, j));
        }
    }
    if ratios.is_empty() {
        return Err(Error::Degenerate(
            "every pair of rows has zero distance".into(),
        ));
    }
    Ok(percentile(&mut ratios, pct))
}

/// Linear-interpolation percentile (rank `pct / 100 * (n - 1)`), sorting `values` in place.
pub fn percentile(values: &mut [f64], pct: f64) -> f64 {
    values.sort_by(f64::total_cmp);
    let rank = pct / 100.0 * (values.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    values[lo] + frac * (values[hi] - values[lo])
}
