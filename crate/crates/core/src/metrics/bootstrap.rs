use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::scalar::Scalar;

/// Resamples used when the caller has no preference.
pub const DEFAULT_RESAMPLES: usize = 2000;
pub const DEFAULT_LEVEL: f64 = 0.95;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BootstrapCi<T> {
    pub point: T,
    pub lower: T,
    pub upper: T,
    pub level: f64,
    pub n_resamples: usize,
    pub seed: u64,
}

/// Linear-interpolation quantile of sorted data.
fn quantile_sorted<T: Scalar>(sorted: &[T], p: f64) -> T {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = T::of(h - lo as f64);
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Percentile bootstrap of the sample mean.
///
/// Values are sorted into an internal copy first, so the result depends only
/// on the multiset of values and the seed.
pub fn bootstrap_ci<T: Scalar>(
    values: &[T],
    level: f64,
    n_resamples: usize,
    seed: u64,
) -> Result<BootstrapCi<T>, MetricsError> {
    if values.len() < 2 {
        return Err(MetricsError::TooFewValues(values.len()));
    }
    if n_resamples < 100 {
        return Err(MetricsError::TooFewResamples(n_resamples));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(MetricsError::BadLevel(level));
    }
    let mut data = values.to_vec();
    data.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let n = data.len();
    let nt = T::from_usize(n).unwrap();
    let point = data.iter().copied().sum::<T>() / nt;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut means: Vec<T> = (0..n_resamples)
        .map(|_| {
            let mut acc = T::zero();
            for _ in 0..n {
                acc += data[rng.random_range(0..n)];
            }
            acc / nt
        })
        .collect();
    means.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let alpha = (1.0 - level) / 2.0;
    let lower = quantile_sorted(&means, alpha).min(point);
    let upper = quantile_sorted(&means, 1.0 - alpha).max(point);
    Ok(BootstrapCi {
        point,
        lower,
        upper,
        level,
        n_resamples,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_values_collapse() {
        let ci = bootstrap_ci(&[0.42f64; 17], 0.95, 500, 3).unwrap();
        assert_eq!((ci.point, ci.lower, ci.upper), (0.42, 0.42, 0.42));
    }

    #[test]
    fn two_point_bounds() {
        let ci = bootstrap_ci(&[0.0f64, 1.0], 0.95, 5000, 9).unwrap();
        assert_eq!(ci.point, 0.5);
        assert!(ci.lower >= 0.0 && ci.upper <= 1.0);
        assert!(ci.lower <= ci.point && ci.point <= ci.upper);
    }

    #[test]
    fn errors() {
        assert!(matches!(bootstrap_ci(&[1.0f64], 0.95, 200, 0), Err(MetricsError::TooFewValues(1))));
        assert!(matches!(
            bootstrap_ci(&[1.0f64, 2.0], 0.95, 99, 0),
            Err(MetricsError::TooFewResamples(99))
        ));
    }

    #[test]
    fn deterministic_and_order_invariant() {
        let v: Vec<f64> = (0..50).map(|i| ((i * 37) % 23) as f64 / 23.0).collect();
        let mut rev = v.clone();
        rev.reverse();
        let a = bootstrap_ci(&v, 0.95, 1000, 11).unwrap();
        assert_eq!(a, bootstrap_ci(&v, 0.95, 1000, 11).unwrap());
        assert_eq!(a, bootstrap_ci(&rev, 0.95, 1000, 11).unwrap());
        assert_ne!(a, bootstrap_ci(&v, 0.95, 1000, 12).unwrap());
    }

    #[test]
    fn quantile_interpolates() {
        let s = [0.0f64, 1.0, 2.0, 3.0];
        assert_eq!(quantile_sorted(&s, 0.5), 1.5);
        assert_eq!(quantile_sorted(&s, 1.0), 3.0);
    }
}
