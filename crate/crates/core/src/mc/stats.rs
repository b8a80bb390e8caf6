//! Order-independent summaries of per-path samples.

use serde::{Deserialize, Serialize};

/// Pairwise summation over a slice; the result depends only on the slice
/// contents and order, never on how the samples were produced.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 32 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

fn pairwise_sum_by(xs: &[f64], f: &impl Fn(f64) -> f64) -> f64 {
    if xs.len() <= 32 {
        return xs.iter().map(|&x| f(x)).sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum_by(&xs[..mid], f) + pairwise_sum_by(&xs[mid..], f)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MCEstimate {
    pub mean: f64,
    pub std_error: f64,
    /// Number of samples.
    pub n_effective: usize,
    /// Kish effective sample size `(Σx)² / Σx²` for nonnegative samples.
    pub kish_size: f64,
    pub heavy_tail_flag: bool,
    /// Largest sample over the sum of all samples.
    pub max_sample_share: f64,
}

impl MCEstimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Self {
                mean: f64::NAN,
                std_error: f64::NAN,
                n_effective: 0,
                kish_size: 0.0,
                heavy_tail_flag: false,
                max_sample_share: 0.0,
            };
        }
        let total = pairwise_sum(xs);
        let mean = total / n as f64;
        let ss = pairwise_sum_by(xs, &|x| (x - mean) * (x - mean));
        let var = if n > 1 { ss / (n - 1) as f64 } else { 0.0 };
        let std_error = (var / n as f64).sqrt();
        let max = xs.iter().copied().fold(0.0, f64::max);
        let max_sample_share = if total > 0.0 { (max / total).clamp(0.0, 1.0) } else { 0.0 };
        let sq = pairwise_sum_by(xs, &|x| x * x);
        let kish_size = if sq > 0.0 { total * total / sq } else { 0.0 };
        Self {
            mean,
            std_error,
            n_effective: n,
            kish_size,
            heavy_tail_flag: max_sample_share > 0.5,
            max_sample_share,
        }
    }

    /// `|mean - target| <= k * std_error`.
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.mean - target).abs() <= k * self.std_error
    }
}

/// Running means over the nested prefixes `n/2^k, ..., n/2, n` of length at
/// least `min_len`; a stabilizing estimator flattens out along this ladder.
pub fn doubling_ladder(xs: &[f64], min_len: usize) -> Vec<(usize, f64)> {
    let mut sizes = Vec::new();
    let mut n = xs.len();
    while n >= min_len.max(1) {
        sizes.push(n);
        n /= 2;
    }
    sizes.reverse();
    sizes.into_iter().map(|n| (n, pairwise_sum(&xs[..n]) / n as f64)).collect()
}

/// Least-squares slope of `log(mean)` against `log(n)` along a ladder.
pub fn ladder_slope(ladder: &[(usize, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = ladder
        .iter()
        .filter(|(_, m)| *m > 0.0)
        .map(|&(n, m)| ((n as f64).ln(), m.ln()))
        .collect();
    let k = pts.len() as f64;
    if k < 2.0 {
        return 0.0;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constant_samples() {
        let e = MCEstimate::from_samples(&[1.0; 1000]);
        assert_eq!(e.mean, 1.0);
        assert_eq!(e.std_error, 0.0);
        assert_eq!(e.max_sample_share, 0.001);
        assert!(!e.heavy_tail_flag);
    }

    #[test]
    fn one_dominant_sample_flags_heavy_tail() {
        let mut xs = vec![1.0; 100];
        xs[17] = 1000.0;
        let e = MCEstimate::from_samples(&xs);
        assert!(e.heavy_tail_flag);
        assert!(e.kish_size < 2.0);
    }

    #[test]
    fn ladder_shapes() {
        let xs: Vec<f64> = (0..1024).map(|i| i as f64).collect();
        let l = doubling_ladder(&xs, 16);
        assert_eq!(l.first().unwrap().0, 16);
        assert_eq!(l.last().unwrap(), &(1024, 511.5));
        assert!(ladder_slope(&l) > 0.9);
    }

    proptest! {
        #[test]
        fn share_and_error_ranges(xs in proptest::collection::vec(0.0f64..1e6, 1..200)) {
            let e = MCEstimate::from_samples(&xs);
            prop_assert!(e.std_error >= 0.0);
            prop_assert!((0.0..=1.0).contains(&e.max_sample_share));
            prop_assert_eq!(e.heavy_tail_flag, e.max_sample_share > 0.5);
        }

        #[test]
        fn pairwise_matches_naive(xs in proptest::collection::vec(-1e3f64..1e3, 0..500)) {
            let naive: f64 = xs.iter().sum();
            prop_assert!((pairwise_sum(&xs) - naive).abs() <= 1e-9 * (1.0 + naive.abs()));
        }
    }
}
