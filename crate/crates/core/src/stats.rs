//! Order-fixed reductions and small sample statistics.
//!
//! All sums go through [`tree_sum`], a pairwise reduction whose association
//! order depends only on the slice length. Results are therefore identical no
//! matter how the inputs were produced, as long as they arrive in the same
//! index order.

use alloc::vec::Vec;

/// Pairwise sum with a fixed association order.
pub fn tree_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        n if n <= 8 => xs.iter().fold(0.0, |acc, &x| acc + x),
        n => {
            let (lo, hi) = xs.split_at(n / 2);
            tree_sum(lo) + tree_sum(hi)
        }
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    tree_sum(xs) / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let dev: Vec<f64> = xs.iter().map(|x| (x - m) * (x - m)).collect();
    tree_sum(&dev) / (n - 1) as f64
}

/// Mean and its standard error from independent samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

impl Estimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        let stderr = if n > 1 { libm::sqrt(variance(xs) / n as f64) } else { 0.0 };
        Self { mean: mean(xs), stderr, n }
    }

    /// True when `|mean - target| <= k * stderr + rel * |target|`.
    pub fn agrees_with(&self, target: f64, k: f64, rel: f64) -> bool {
        (self.mean - target).abs() <= k * self.stderr + rel * target.abs()
    }
}

/// Sample covariance of paired observations, with a delta-method standard
/// error computed from the products `(x - x̄)(y - ȳ)`.
pub fn covariance(xs: &[f64], ys: &[f64]) -> Estimate {
    assert_eq!(xs.len(), ys.len());
    let mx = mean(xs);
    let my = mean(ys);
    let prods: Vec<f64> = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).collect();
    let mut e = Estimate::from_samples(&prods);
    let n = xs.len() as f64;
    if n > 1.0 {
        e.mean *= n / (n - 1.0);
    }
    e
}

/// Sample skewness and excess kurtosis with their large-sample standard
/// errors for Gaussian data (`sqrt(6/n)` and `sqrt(24/n)`).
pub fn shape(xs: &[f64]) -> (Estimate, Estimate) {
    let n = xs.len();
    let m = mean(xs);
    let c2: Vec<f64> = xs.iter().map(|x| libm::pow(x - m, 2.0)).collect();
    let c3: Vec<f64> = xs.iter().map(|x| libm::pow(x - m, 3.0)).collect();
    let c4: Vec<f64> = xs.iter().map(|x| libm::pow(x - m, 4.0)).collect();
    let m2 = mean(&c2);
    let skew = mean(&c3) / libm::pow(m2, 1.5);
    let kurt = mean(&c4) / (m2 * m2) - 3.0;
    let nf = n as f64;
    (
        Estimate { mean: skew, stderr: libm::sqrt(6.0 / nf), n },
        Estimate { mean: kurt, stderr: libm::sqrt(24.0 / nf), n },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn estimate_basics() {
        let e = Estimate::from_samples(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(e.mean, 2.5);
        assert!((e.stderr - libm::sqrt(1.666_666_666_666_666_7 / 4.0)).abs() < 1e-15);
        assert!(e.agrees_with(2.0, 1.0, 0.0));
        assert!(!e.agrees_with(0.0, 1.0, 0.0));
    }

    proptest! {
        #[test]
        fn tree_sum_close_to_naive(xs in proptest::collection::vec(-1e3f64..1e3, 0..300)) {
            let naive: f64 = xs.iter().sum();
            prop_assert!((tree_sum(&xs) - naive).abs() <= 1e-9 * (1.0 + xs.iter().map(|x| x.abs()).sum::<f64>()));
        }
    }
}
