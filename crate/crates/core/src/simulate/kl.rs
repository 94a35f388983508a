use rayon::prelude::*;

use super::{log_likelihood_with, Init, Sampler};
use crate::error::{Error, Result};
use crate::kernel::{n_step_transition, stationary_emc, stationary_pair, DiscreteSmk, Kernel, Matrix, StationaryPair};
use crate::rng::substream;
use crate::stats::z_for;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KlMethod {
    Analytic,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KlMode {
    Analytic,
    MonteCarlo { replications: usize, seed: u64 },
}

/// `K(P₀⁽ⁿ⁾, P_q⁽ⁿ⁾)` and `V₀(P₀⁽ⁿ⁾, P_q⁽ⁿ⁾)` for the stationary law of `q0`,
/// including the initial pair.
#[derive(Debug, Clone, PartialEq)]
pub struct KlFunctionals {
    pub n: usize,
    pub kl: f64,
    pub v0: f64,
    /// `Σ_x ρ₀(x) KL(q0_x ‖ q_x)`.
    pub per_step_kl: f64,
    /// `KL(ρ̃₀ ‖ ρ̃_q)`.
    pub initial_kl: f64,
    pub method: KlMethod,
    /// Standard errors of `kl` and `v0` (zero for the analytic method).
    pub kl_se: f64,
    pub v0_se: f64,
    /// 99% half-widths of `kl` and `v0`.
    pub kl_ci_half_width: f64,
    pub v0_ci_half_width: f64,
    /// Set when `q` misses mass where `q0` has some.
    pub infinite: bool,
}

impl KlFunctionals {
    fn infinite(n: usize, method: KlMethod) -> Self {
        KlFunctionals {
            n,
            kl: f64::INFINITY,
            v0: f64::INFINITY,
            per_step_kl: f64::INFINITY,
            initial_kl: f64::INFINITY,
            method,
            kl_se: 0.0,
            v0_se: 0.0,
            kl_ci_half_width: 0.0,
            v0_ci_half_width: 0.0,
            infinite: true,
        }
    }
}

fn stationary_of(kernel: &Kernel) -> Result<StationaryPair> {
    let rho = stationary_emc(&kernel.emc())?;
    stationary_pair(kernel, &rho)
}

fn log_ratio(a: f64, b: f64) -> f64 {
    if a <= 0.0 {
        0.0
    } else if b <= 0.0 {
        f64::INFINITY
    } else {
        (a / b).ln()
    }
}

/// Exact functionals for discrete kernels.
///
/// The centred log-ratio `Λ − K` is a sum of terms driven by the pair chain,
/// so `E₀[(Λ − K)²]` follows from the linear recursion on the per-state
/// moments `(E[1{J=y}], E[(Λ−K)1{J=y}], E[(Λ−K)²1{J=y}])`, iterated `n` times
/// by repeated squaring.
fn analytic(q0: &DiscreteSmk, q: &DiscreteSmk, n: usize) -> Result<KlFunctionals> {
    let e = q0.size();
    let km = q0.k_max();
    let k0 = Kernel::Discrete(q0.clone());
    let sp0 = stationary_of(&k0)?;
    let rho0 = &sp0.rho;
    for x in 0..e {
        if q0.row(x).iter().zip(q.row(x)).any(|(a, b)| *a > 0.0 && *b <= 0.0) && rho0[x] > 0.0 {
            return Ok(KlFunctionals::infinite(n, KlMethod::Analytic));
        }
    }
    let spq = stationary_of(&Kernel::Discrete(q.clone()))?;
    let (c0, cq) = (sp0.rho_tilde_cells.as_ref().unwrap(), spq.rho_tilde_cells.as_ref().unwrap());
    if c0.iter().zip(cq).any(|(a, b)| *a > 0.0 && *b <= 0.0) {
        return Ok(KlFunctionals::infinite(n, KlMethod::Analytic));
    }
    let initial_kl: f64 = c0.iter().zip(cq).map(|(a, b)| a * log_ratio(*a, *b)).sum();
    let per_state: Vec<f64> = (0..e)
        .map(|x| q0.row(x).iter().zip(q.row(x)).map(|(a, b)| a * log_ratio(*a, *b)).sum())
        .collect();
    let rate: f64 = per_state.iter().zip(rho0).map(|(k, r)| k * r).sum();

    let mut m = Matrix::zeros(3 * e, 3 * e);
    for x in 0..e {
        for y in 0..e {
            let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
            for k in 1..=km {
                let p0 = q0.q(x, y, k);
                if p0 > 0.0 {
                    let g = log_ratio(p0, q.q(x, y, k)) - rate;
                    a += p0;
                    b += p0 * g;
                    c += p0 * g * g;
                }
            }
            m[(y, x)] = a;
            m[(e + y, e + x)] = a;
            m[(2 * e + y, 2 * e + x)] = a;
            m[(e + y, x)] = b;
            m[(2 * e + y, e + x)] = 2.0 * b;
            m[(2 * e + y, x)] = c;
        }
    }
    let mut v = nalgebra::DVector::zeros(3 * e);
    for y in 0..e {
        for k in 1..=km {
            let a = c0[y * km + k - 1];
            if a > 0.0 {
                let g = log_ratio(a, cq[y * km + k - 1]) - initial_kl;
                v[y] += a;
                v[e + y] += a * g;
                v[2 * e + y] += a * g * g;
            }
        }
    }
    let out = n_step_transition(&m, n) * v;
    let first: f64 = (0..e).map(|y| out[e + y]).sum();
    let second: f64 = (0..e).map(|y| out[2 * e + y]).sum();
    Ok(KlFunctionals {
        n,
        kl: initial_kl + n as f64 * rate,
        v0: (second - first * first).max(0.0),
        per_step_kl: rate,
        initial_kl,
        method: KlMethod::Analytic,
        kl_se: 0.0,
        v0_se: 0.0,
        kl_ci_half_width: 0.0,
        v0_ci_half_width: 0.0,
        infinite: false,
    })
}

fn monte_carlo(q0: &Kernel, q: &Kernel, n: usize, replications: usize, seed: u64) -> Result<KlFunctionals> {
    if replications < 2 {
        return Err(Error::InvalidParameter("Monte Carlo needs at least 2 replications".into()));
    }
    let sp0 = stationary_of(q0)?;
    let spq = stationary_of(q)?;
    let sampler = Sampler::new(q0, &Init::Stationary)?;
    let draws: Vec<(f64, f64)> = (0..replications as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = substream(seed, "kl", r);
            let t = sampler.sample(n, &mut rng);
            let l0 = log_likelihood_with(q0, Some(&sp0), &t).value;
            let lq = log_likelihood_with(q, Some(&spq), &t).value;
            let per_step = {
                let mut s = 0.0;
                for l in 1..=n {
                    let (x, y, tt) = t.transition(l);
                    s += log_ratio(q0.density(x, y, tt), q.density(x, y, tt));
                }
                s / n as f64
            };
            (l0 - lq, per_step)
        })
        .collect();
    if draws.iter().any(|(d, _)| !d.is_finite()) {
        return Ok(KlFunctionals::infinite(n, KlMethod::MonteCarlo));
    }
    let r = replications as f64;
    let mean = draws.iter().map(|d| d.0).sum::<f64>() / r;
    let rate = draws.iter().map(|d| d.1).sum::<f64>() / r;
    let m2 = draws.iter().map(|d| (d.0 - mean).powi(2)).sum::<f64>() / r;
    let m4 = draws.iter().map(|d| (d.0 - mean).powi(4)).sum::<f64>() / r;
    let var = m2 * r / (r - 1.0);
    let kl_se = (var / r).sqrt();
    let v0_se = ((m4 - m2 * m2).max(0.0) / r).sqrt();
    let z = z_for(0.99);
    let initial_kl = {
        // Same estimator restricted to the initial factor.
        let mut rng = substream(seed, "kl-initial", 0);
        let s: f64 = (0..replications)
            .map(|_| {
                let t = sampler.sample(0, &mut rng);
                let a = sp0.density(q0, t.states[0], t.sojourns[0]);
                let b = spq.density(q, t.states[0], t.sojourns[0]);
                log_ratio(a, b)
            })
            .sum();
        s / r
    };
    Ok(KlFunctionals {
        n,
        kl: mean,
        v0: var,
        per_step_kl: rate,
        initial_kl,
        method: KlMethod::MonteCarlo,
        kl_se,
        v0_se,
        kl_ci_half_width: z * kl_se,
        v0_ci_half_width: z * v0_se,
        infinite: false,
    })
}

pub fn kl_functionals(q0: &Kernel, q: &Kernel, n: usize, mode: KlMode) -> Result<KlFunctionals> {
    q0.check_comparable(q)?;
    match mode {
        KlMode::Analytic => match (q0, q) {
            (Kernel::Discrete(a), Kernel::Discrete(b)) => analytic(a, b, n),
            _ => Err(Error::Unsupported("analytic KL functionals need discrete kernels".into())),
        },
        KlMode::MonteCarlo { replications, seed } => {
            if n == 0 {
                return Err(Error::InvalidParameter("need at least one jump".into()));
            }
            monte_carlo(q0, q, n, replications, seed)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KlMembership {
    pub inside: bool,
    /// `nε²`.
    pub threshold: f64,
    /// `nε² − K` (upper CI edge of `K` for Monte Carlo).
    pub kl_margin: f64,
    pub v0_margin: f64,
    pub functionals: KlFunctionals,
}

/// Whether `q` lies in the KL neighborhood `U(q0, ε)` at horizon `n`.
pub fn in_kl_neighborhood(q: &Kernel, q0: &Kernel, eps: f64, n: usize, mode: KlMode) -> Result<KlMembership> {
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter(format!("epsilon = {eps} must be positive")));
    }
    let f = kl_functionals(q0, q, n, mode)?;
    let threshold = n as f64 * eps * eps;
    let kl_margin = threshold - (f.kl + f.kl_ci_half_width);
    let v0_margin = threshold - (f.v0 + f.v0_ci_half_width);
    Ok(KlMembership {
        inside: !f.infinite && kl_margin >= 0.0 && v0_margin >= 0.0,
        threshold,
        kl_margin,
        v0_margin,
        functionals: f,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::StateSpace;

    fn toy(a: [f64; 8]) -> Kernel {
        DiscreteSmk::new(StateSpace::numbered(2).unwrap(), 2, a.to_vec()).unwrap().into()
    }

    /// Exhaustive enumeration over all `(J_0, X_0), …, (J_n, X_n)`.
    fn enumerate(q0: &Kernel, q: &Kernel, n: usize) -> (f64, f64) {
        let sp0 = stationary_of(q0).unwrap();
        let spq = stationary_of(q).unwrap();
        let cells: Vec<(usize, usize)> = (0..2).flat_map(|y| (1..=2).map(move |k| (y, k))).collect();
        let total = cells.len().pow(n as u32 + 1);
        let (mut m1, mut m2) = (0.0, 0.0);
        for code in 0..total {
            let mut c = code;
            let mut path = Vec::new();
            for _ in 0..=n {
                path.push(cells[c % cells.len()]);
                c /= cells.len();
            }
            let d0 = sp0.density(q0, path[0].0, path[0].1 as f64);
            let dq = spq.density(q, path[0].0, path[0].1 as f64);
            let mut p = d0;
            let mut lr = if d0 > 0.0 { (d0 / dq).ln() } else { 0.0 };
            for w in path.windows(2) {
                let a = q0.density(w[0].0, w[1].0, w[1].1 as f64);
                let b = q.density(w[0].0, w[1].0, w[1].1 as f64);
                p *= a;
                if a > 0.0 {
                    lr += (a / b).ln();
                }
            }
            m1 += p * lr;
            m2 += p * lr * lr;
        }
        (m1, m2 - m1 * m1)
    }

    #[test]
    fn self_divergence_is_zero() {
        let q = toy([0.1, 0.2, 0.3, 0.4, 0.25, 0.25, 0.1, 0.4]);
        let f = kl_functionals(&q, &q, 7, KlMode::Analytic).unwrap();
        assert_eq!(f.kl, 0.0);
        assert_eq!(f.v0, 0.0);
        assert!(in_kl_neighborhood(&q, &q, 1e-3, 7, KlMode::Analytic).unwrap().inside);
    }

    #[test]
    fn recursion_matches_enumeration() {
        let q0 = toy([0.1, 0.2, 0.3, 0.4, 0.25, 0.25, 0.1, 0.4]);
        let q = toy([0.2, 0.2, 0.2, 0.4, 0.1, 0.3, 0.3, 0.3]);
        for n in 1..=4 {
            let f = kl_functionals(&q0, &q, n, KlMode::Analytic).unwrap();
            let (k, v) = enumerate(&q0, &q, n);
            assert!((f.kl - k).abs() < 1e-12, "n={n}: {} vs {k}", f.kl);
            assert!((f.v0 - v).abs() < 1e-12, "n={n}: {} vs {v}", f.v0);
        }
    }

    #[test]
    fn kl_is_affine_in_n() {
        let q0 = toy([0.1, 0.2, 0.3, 0.4, 0.25, 0.25, 0.1, 0.4]);
        let q = toy([0.2, 0.2, 0.2, 0.4, 0.1, 0.3, 0.3, 0.3]);
        let a = kl_functionals(&q0, &q, 10, KlMode::Analytic).unwrap();
        let b = kl_functionals(&q0, &q, 1000, KlMode::Analytic).unwrap();
        assert_eq!(a.per_step_kl, b.per_step_kl);
        assert!((b.kl - a.kl - 990.0 * a.per_step_kl).abs() < 1e-9);
    }

    #[test]
    fn missing_support_is_infinite() {
        let q0 = toy([0.1, 0.2, 0.3, 0.4, 0.25, 0.25, 0.1, 0.4]);
        let q = toy([0.0, 0.5, 0.1, 0.4, 0.25, 0.25, 0.1, 0.4]);
        let f = kl_functionals(&q0, &q, 3, KlMode::Analytic).unwrap();
        assert!(f.infinite && f.kl.is_infinite());
        assert!(!in_kl_neighborhood(&q, &q0, 100.0, 3, KlMode::Analytic).unwrap().inside);
    }
}
