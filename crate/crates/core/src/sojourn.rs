//! Sojourn-time laws: parametric densities on `t > 0` for continuous-time
//! kernels and truncated probability tables on `{1..k_max}` for discrete ones.

use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Gamma};

use crate::error::{Error, Result};

/// Tail mass left beyond the integration cut-off.
pub const TAIL_MASS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum SojournFamily {
    Exponential { rate: f64 },
    Weibull { shape: f64, scale: f64 },
    Gamma { shape: f64, rate: f64 },
}

impl SojournFamily {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            SojournFamily::Exponential { rate } => rate > 0.0 && rate.is_finite(),
            SojournFamily::Weibull { shape, scale } => {
                shape > 0.0 && scale > 0.0 && shape.is_finite() && scale.is_finite()
            }
            SojournFamily::Gamma { shape, rate } => {
                shape > 0.0 && rate > 0.0 && shape.is_finite() && rate.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidKernel(format!(
                "sojourn parameters must be finite and strictly positive: {self:?}"
            )))
        }
    }

    fn gamma(shape: f64, rate: f64) -> Gamma {
        Gamma::new(shape, rate).expect("validated gamma parameters")
    }

    pub fn pdf(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        match *self {
            SojournFamily::Exponential { rate } => rate * (-rate * t).exp(),
            SojournFamily::Weibull { shape, scale } => {
                let z = t / scale;
                shape / scale * z.powf(shape - 1.0) * (-z.powf(shape)).exp()
            }
            SojournFamily::Gamma { shape, rate } => Self::gamma(shape, rate).pdf(t),
        }
    }

    pub fn survival(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 1.0;
        }
        match *self {
            SojournFamily::Exponential { rate } => (-rate * t).exp(),
            SojournFamily::Weibull { shape, scale } => (-(t / scale).powf(shape)).exp(),
            SojournFamily::Gamma { shape, rate } => Self::gamma(shape, rate).sf(t),
        }
    }

    pub fn cdf(&self, t: f64) -> f64 {
        1.0 - self.survival(t)
    }

    pub fn mean(&self) -> f64 {
        match *self {
            SojournFamily::Exponential { rate } => 1.0 / rate,
            SojournFamily::Weibull { shape, scale } => {
                scale * statrs::function::gamma::gamma(1.0 + 1.0 / shape)
            }
            SojournFamily::Gamma { shape, rate } => shape / rate,
        }
    }

    /// Inverse CDF; consumes nothing, so samplers draw exactly one uniform.
    pub fn quantile(&self, u: f64) -> f64 {
        match *self {
            SojournFamily::Exponential { rate } => -(1.0 - u).ln() / rate,
            SojournFamily::Weibull { shape, scale } => scale * (-(1.0 - u).ln()).powf(1.0 / shape),
            SojournFamily::Gamma { shape, rate } => Self::gamma(shape, rate).inverse_cdf(u),
        }
    }

    /// A point beyond which the survival function is below `TAIL_MASS`.
    pub fn t_cut(&self) -> f64 {
        let l = -TAIL_MASS.ln();
        match *self {
            SojournFamily::Exponential { rate } => l / rate,
            SojournFamily::Weibull { shape, scale } => scale * l.powf(1.0 / shape),
            SojournFamily::Gamma { .. } => {
                let mut t = self.mean().max(1e-300);
                while self.survival(t) > TAIL_MASS {
                    t *= 2.0;
                }
                t
            }
        }
    }
}

/// Geometric law `P(X = k) = (1 - stay)·stay^(k-1)` on `{1..k_max}`, tail
/// folded into `k_max`.
pub fn geometric_pmf(stay: f64, k_max: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(k_max);
    for k in 1..k_max {
        out.push((1.0 - stay) * stay.powi(k as i32 - 1));
    }
    out.push(stay.powi(k_max as i32 - 1));
    out
}

/// Discretised Weibull `P(X = k) = S(k-1) - S(k)`, tail folded into `k_max`.
pub fn discrete_weibull_pmf(shape: f64, scale: f64, k_max: usize) -> Vec<f64> {
    let s = |k: f64| (-(k / scale).powf(shape)).exp();
    let mut out = Vec::with_capacity(k_max);
    for k in 1..k_max {
        out.push(s(k as f64 - 1.0) - s(k as f64));
    }
    out.push(s(k_max as f64 - 1.0));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::integrate_positive;

    #[test]
    fn densities_integrate_to_one() {
        let fams = [
            SojournFamily::Exponential { rate: 2.0 },
            SojournFamily::Weibull { shape: 0.5, scale: 1.5 },
            SojournFamily::Weibull { shape: 2.5, scale: 0.7 },
            SojournFamily::Gamma { shape: 0.7, rate: 1.3 },
            SojournFamily::Gamma { shape: 3.0, rate: 0.5 },
        ];
        for f in fams {
            let q = integrate_positive(|t| f.pdf(t), f.t_cut(), 1e-12);
            assert!((q.value - 1.0).abs() < 1e-9, "{f:?}: {}", q.value);
        }
    }

    #[test]
    fn quantile_inverts_cdf() {
        let fams = [
            SojournFamily::Exponential { rate: 0.3 },
            SojournFamily::Weibull { shape: 0.5, scale: 2.0 },
            SojournFamily::Gamma { shape: 2.2, rate: 1.1 },
        ];
        for f in fams {
            for u in [0.01, 0.3, 0.5, 0.9, 0.999] {
                assert!((f.cdf(f.quantile(u)) - u).abs() < 1e-8, "{f:?} {u}");
            }
        }
    }

    #[test]
    fn folded_tables_are_stochastic() {
        let g = geometric_pmf(0.3, 5);
        assert!((g.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!((g[2] - 0.7 * 0.09).abs() < 1e-15);
        let w = discrete_weibull_pmf(0.5, 3.0, 50);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn rejects_nonpositive_parameters() {
        assert!(SojournFamily::Exponential { rate: 0.0 }.validate().is_err());
        assert!(SojournFamily::Weibull { shape: 1.0, scale: -1.0 }.validate().is_err());
        assert!(SojournFamily::Gamma { shape: f64::NAN, rate: 1.0 }.validate().is_err());
    }
}
