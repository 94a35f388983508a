//! Small statistical helpers shared by the Monte Carlo harnesses.

use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

/// Two-sided standard normal quantile for confidence level `level`.
pub fn z_for(level: f64) -> f64 {
    Normal::new(0.0, 1.0)
        .expect("standard normal")
        .inverse_cdf(0.5 + level / 2.0)
}

/// Wilson score interval for `successes` out of `trials`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wilson {
    pub rate: f64,
    pub lower: f64,
    pub upper: f64,
}

impl Wilson {
    pub fn new(successes: u64, trials: u64, level: f64) -> Self {
        assert!(trials > 0, "Wilson interval needs at least one trial");
        let n = trials as f64;
        let p = successes as f64 / n;
        let z = z_for(level);
        let z2 = z * z;
        let denom = 1.0 + z2 / n;
        let center = (p + z2 / (2.0 * n)) / denom;
        let half = z / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
        Wilson {
            rate: p,
            lower: (center - half).max(0.0),
            upper: (center + half).min(1.0),
        }
    }

    pub fn half_width(&self) -> f64 {
        0.5 * (self.upper - self.lower)
    }
}

/// Pearson chi-square statistic and upper-tail p-value. Bins whose expected
/// count is below `min_expected` are pooled into the last retained bin.
pub fn chi_square_gof(observed: &[u64], expected_prob: &[f64], min_expected: f64) -> (f64, f64) {
    let total: u64 = observed.iter().sum();
    let n = total as f64;
    let mut bins: Vec<(f64, f64)> = Vec::new();
    let mut acc = (0.0, 0.0);
    for (o, p) in observed.iter().zip(expected_prob) {
        acc.0 += *o as f64;
        acc.1 += p * n;
        if acc.1 >= min_expected {
            bins.push(acc);
            acc = (0.0, 0.0);
        }
    }
    if acc.1 > 0.0 || acc.0 > 0.0 {
        match bins.last_mut() {
            Some(last) => {
                last.0 += acc.0;
                last.1 += acc.1;
            }
            None => bins.push(acc),
        }
    }
    let stat: f64 = bins
        .iter()
        .map(|(o, e)| if *e > 0.0 { (o - e) * (o - e) / e } else { 0.0 })
        .sum();
    let dof = bins.len().saturating_sub(1).max(1) as f64;
    let p = 1.0 - ChiSquared::new(dof).expect("positive dof").cdf(stat);
    (stat, p)
}

/// Mean and standard error of the mean.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn z_values() {
        assert!((z_for(0.95) - 1.959_963_984_540_054).abs() < 1e-9);
        assert!((z_for(0.99) - 2.575_829_303_548_901).abs() < 1e-9);
    }

    #[test]
    fn wilson_zero_successes() {
        let w = Wilson::new(0, 2000, 0.99);
        assert_eq!(w.lower, 0.0);
        let z2 = z_for(0.99).powi(2);
        assert!((w.upper - (z2 / 2000.0) / (1.0 + z2 / 2000.0)).abs() < 1e-15);
    }

    #[test]
    fn wilson_contains_rate() {
        for (s, n) in [(3, 10), (50, 100), (99, 100), (100, 100)] {
            let w = Wilson::new(s, n, 0.95);
            assert!(w.lower <= w.rate && w.rate <= w.upper);
        }
    }

    #[test]
    fn chi_square_perfect_fit() {
        let (stat, p) = chi_square_gof(&[25, 25, 25, 25], &[0.25; 4], 5.0);
        assert_eq!(stat, 0.0);
        assert!((p - 1.0).abs() < 1e-12);
    }
}
