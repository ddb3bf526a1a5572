//! Seeded percentile bootstrap for the mean.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub resamples: usize,
    pub seed: u64,
    pub confidence: f64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            resamples: 1000,
            seed: 0,
            confidence: 0.95,
        }
    }
}

/// FNV-1a, used to give every group its own RNG stream independent of
/// which other groups exist.
pub fn stream_id(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Percentile interval of the resampled mean. Empty input yields `None`.
pub fn percentile_ci(values: &[f64], config: &BootstrapConfig, stream: u64) -> Option<(f64, f64)> {
    if values.is_empty() || config.resamples == 0 {
        return None;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(stream);
    let n = values.len();
    let mut means: Vec<f64> = (0..config.resamples)
        .map(|_| {
            let sum: f64 = (0..n).map(|_| values[rng.gen_range(0..n)]).sum();
            sum / n as f64
        })
        .collect();
    means.sort_by(f64::total_cmp);
    let alpha = (1.0 - config.confidence) / 2.0;
    Some((quantile_sorted(&means, alpha), quantile_sorted(&means, 1.0 - alpha)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_value_collapses() {
        let cfg = BootstrapConfig::default();
        assert_eq!(percentile_ci(&[0.4], &cfg, 1), Some((0.4, 0.4)));
        assert_eq!(percentile_ci(&[], &cfg, 1), None);
    }

    #[test]
    fn reproducible_and_stream_dependent() {
        let cfg = BootstrapConfig { seed: 7, ..Default::default() };
        let v = [0.1, 0.5, 0.9, 0.3, 0.7];
        let a = percentile_ci(&v, &cfg, 3).unwrap();
        assert_eq!(a, percentile_ci(&v, &cfg, 3).unwrap());
        assert_ne!(a, percentile_ci(&v, &cfg, 4).unwrap());
        assert!(a.0 <= mean(&v) && mean(&v) <= a.1);
        assert!(a.0 >= 0.1 && a.1 <= 0.9);
    }

    #[test]
    fn quantiles() {
        let s = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&s, 0.0), 1.0);
        assert_eq!(quantile_sorted(&s, 1.0), 4.0);
        assert_eq!(quantile_sorted(&s, 0.5), 2.5);
    }
}
