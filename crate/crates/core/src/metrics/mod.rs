//! Hellinger geometry on semi-Markov kernels.
//!
//! Per-state squared Hellinger distances `h²_x`, the weighted semi-distance
//! `d_μ² = Σ_x μ(x) h²_x`, and the least-favorable interpolation between a
//! null and an alternative kernel used by the robust tests.

mod net;

pub use net::{covering_net, CoveringNet, KernelFamily, NetPoint, Shell};

use crate::error::{Error, Result};
use crate::kernel::{ContinuousSmk, DiscreteSmk, Kernel, PairDensity, PAIR_QUAD_TOL};
use crate::quadrature::integrate_positive;

/// Floor on `α_x` below which two rows are treated as identical.
pub const ANGLE_FLOOR: f64 = 1e-8;

/// Per-state squared Hellinger distances between two kernels.
#[derive(Debug, Clone, PartialEq)]
pub struct HellingerProfile {
    pub per_state: Vec<f64>,
}

impl HellingerProfile {
    pub fn affinity(&self, x: usize) -> f64 {
        1.0 - self.per_state[x]
    }

    /// `Σ_x μ(x) h²_x`.
    pub fn weighted(&self, mu: &[f64]) -> f64 {
        self.per_state.iter().zip(mu).map(|(h, m)| h * m).sum()
    }
}

/// `d_μ(q1, q2)` together with the weights that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSemiDistance {
    pub value: f64,
    pub weight_measure: Vec<f64>,
}

/// `½ Σ (√a − √b)²` over two discrete rows.
pub fn hellinger_sq_rows(a: &[f64], b: &[f64]) -> f64 {
    let s: f64 = a
        .iter()
        .zip(b)
        .map(|(p, q)| {
            let d = p.sqrt() - q.sqrt();
            d * d
        })
        .sum();
    (0.5 * s).clamp(0.0, 1.0)
}

/// Hellinger affinity `1 − h²` of two discrete rows.
pub fn hellinger_affinity(a: &[f64], b: &[f64]) -> f64 {
    1.0 - hellinger_sq_rows(a, b)
}

fn continuous_row_sq(a: &ContinuousSmk, b: &ContinuousSmk, x: usize) -> f64 {
    let mut s = 0.0;
    for y in 0..a.size() {
        match (a.pair(x, y), b.pair(x, y)) {
            (None, None) => {}
            (Some(p), None) | (None, Some(p)) => s += p.mass(),
            (Some(p), Some(q)) => {
                let t_cut = p.t_cut().max(q.t_cut());
                s += integrate_positive(
                    |t| {
                        let d = p.eval(t).sqrt() - q.eval(t).sqrt();
                        d * d
                    },
                    t_cut,
                    PAIR_QUAD_TOL,
                )
                .value;
            }
        }
    }
    (0.5 * s).clamp(0.0, 1.0)
}

pub fn hellinger_sq(q1: &Kernel, q2: &Kernel) -> Result<HellingerProfile> {
    q1.check_comparable(q2)?;
    let per_state = match (q1, q2) {
        (Kernel::Discrete(a), Kernel::Discrete(b)) => {
            (0..a.size()).map(|x| hellinger_sq_rows(a.row(x), b.row(x))).collect()
        }
        (Kernel::Continuous(a), Kernel::Continuous(b)) => {
            (0..a.size()).map(|x| continuous_row_sq(a, b, x)).collect()
        }
        _ => unreachable!("checked by check_comparable"),
    };
    Ok(HellingerProfile { per_state })
}

fn check_measure(mu: &[f64], size: usize) -> Result<()> {
    if mu.len() != size {
        return Err(Error::Mismatch(format!("measure has {} entries for {size} states", mu.len())));
    }
    if let Some((x, m)) = mu.iter().enumerate().find(|(_, m)| !(**m >= 0.0 && m.is_finite())) {
        return Err(Error::InvalidParameter(format!("measure entry {x} = {m} is not a nonnegative number")));
    }
    Ok(())
}

/// `d_μ(q1, q2) = (Σ_x μ(x) h²_x)^{1/2}`.
pub fn semi_distance(q1: &Kernel, q2: &Kernel, mu: &[f64]) -> Result<KernelSemiDistance> {
    check_measure(mu, q1.size())?;
    let profile = hellinger_sq(q1, q2)?;
    Ok(KernelSemiDistance {
        value: profile.weighted(mu).sqrt(),
        weight_measure: mu.to_vec(),
    })
}

/// The interpolated kernel `q2` between `q0` and `q1` on the Hellinger sphere.
#[derive(Debug, Clone)]
pub struct LeastFavorablePair {
    pub lambda: f64,
    /// `α_x` with `h²(Q_{x;0}, Q_{x;1}) = 1 − cos α_x`.
    pub alpha: Vec<f64>,
    /// States where `α_x` fell below [`ANGLE_FLOOR`] and `q2` copies `q1`.
    pub degenerate: Vec<bool>,
    /// States where `1 − h²` left `[0, 1]` and the angle was clamped to `π/2`.
    pub clamped: Vec<bool>,
    pub q2: Kernel,
}

impl LeastFavorablePair {
    /// Interpolation weights `(a, b)` of `√q1` and `√q0` at state `x`.
    pub fn weights(&self, x: usize) -> (f64, f64) {
        blend_weights(self.alpha[x], self.lambda)
    }
}

fn blend_weights(alpha: f64, lambda: f64) -> (f64, f64) {
    if alpha < ANGLE_FLOOR {
        return (1.0, 0.0);
    }
    let s = alpha.sin().max(ANGLE_FLOOR.sin());
    (((1.0 - lambda) * alpha).sin() / s, (lambda * alpha).sin() / s)
}

/// Recovers `α ∈ [0, π/2]` from `h² = 1 − cos α`, returning whether it was clamped.
pub fn angle_from_sq(h2: f64) -> (f64, bool) {
    let clamped = !(0.0..=1.0).contains(&h2);
    let h2 = h2.clamp(0.0, 1.0);
    // 1 − cos α = 2 sin²(α/2) keeps precision for small distances.
    (2.0 * (0.5 * h2).sqrt().asin(), clamped)
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda < 0.25) {
        return Err(Error::InvalidParameter(format!("lambda = {lambda} must lie in (0, 1/4)")));
    }
    Ok(())
}

fn scaled_pair(pd: &PairDensity, c: f64) -> PairDensity {
    match pd {
        PairDensity::Scaled { weight, family } => PairDensity::Scaled { weight: weight * c, family: *family },
        PairDensity::SqrtBlend { a, left, b, right, mass } => PairDensity::SqrtBlend {
            a: a * c.sqrt(),
            left: left.clone(),
            b: b * c.sqrt(),
            right: right.clone(),
            mass: mass * c,
        },
    }
}

pub fn least_favorable(q0: &Kernel, q1: &Kernel, lambda: f64) -> Result<LeastFavorablePair> {
    check_lambda(lambda)?;
    let profile = hellinger_sq(q0, q1)?;
    let e = q0.size();
    let mut alpha = Vec::with_capacity(e);
    let mut clamped = Vec::with_capacity(e);
    for &h2 in &profile.per_state {
        let (a, c) = angle_from_sq(h2);
        alpha.push(a);
        clamped.push(c || a >= std::f64::consts::FRAC_PI_2);
    }
    let degenerate: Vec<bool> = alpha.iter().map(|a| *a < ANGLE_FLOOR).collect();

    let q2 = match (q0, q1) {
        (Kernel::Discrete(d0), Kernel::Discrete(d1)) => {
            let mut table = Vec::with_capacity(d0.table().len());
            for x in 0..e {
                if degenerate[x] {
                    table.extend_from_slice(d1.row(x));
                    continue;
                }
                let (a, b) = blend_weights(alpha[x], lambda);
                table.extend(d1.row(x).iter().zip(d0.row(x)).map(|(p1, p0)| {
                    let s = a * p1.sqrt() + b * p0.sqrt();
                    s * s
                }));
            }
            let q2 = DiscreteSmk::from_table_unchecked(d0.states().clone(), d0.k_max(), table)?;
            for x in 0..e {
                let s: f64 = q2.row(x).iter().sum();
                if (s - 1.0).abs() > 1e-10 {
                    return Err(Error::InvalidKernel(format!("least-favorable row {x} sums to {s}")));
                }
            }
            Kernel::Discrete(q2)
        }
        (Kernel::Continuous(c0), Kernel::Continuous(c1)) => {
            let mut pairs = Vec::with_capacity(e * e);
            for x in 0..e {
                let (a, b) = blend_weights(alpha[x], lambda);
                for y in 0..e {
                    pairs.push(match (c1.pair(x, y), c0.pair(x, y)) {
                        (None, None) => None,
                        (Some(p1), None) => Some(scaled_pair(p1, a * a)),
                        (None, Some(p0)) => (b > 0.0).then(|| scaled_pair(p0, b * b)),
                        (Some(p1), Some(_)) if b == 0.0 => Some(p1.clone()),
                        (Some(p1), Some(p0)) => Some(PairDensity::blend(a, p1.clone(), b, p0.clone())),
                    });
                }
            }
            Kernel::Continuous(ContinuousSmk::from_pairs(c0.states().clone(), pairs))
        }
        _ => unreachable!("checked by hellinger_sq"),
    };
    Ok(LeastFavorablePair { lambda, alpha, degenerate, clamped, q2 })
}

/// Largest observed `Φ⁻¹ = √(q0/q2)` against the bound `1/λ`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhiBoundReport {
    pub max_ratio: f64,
    pub per_state_max: Vec<f64>,
    /// `sin α_x / sin(λ α_x)`, the analytic ceiling on `Φ⁻¹` at `x`.
    pub per_state_ceiling: Vec<f64>,
    pub bound: f64,
    pub holds: bool,
}

const PHI_SCAN_POINTS: usize = 400;

pub fn phi_inverse_bound_check(pair: &LeastFavorablePair, q0: &Kernel) -> PhiBoundReport {
    let e = q0.size();
    let mut per_state_max = vec![0.0f64; e];
    let ratio = |p0: f64, p2: f64| -> f64 {
        if p0 <= 0.0 {
            0.0
        } else if p2 <= 0.0 {
            f64::INFINITY
        } else {
            (p0 / p2).sqrt()
        }
    };
    match (q0, &pair.q2) {
        (Kernel::Discrete(d0), Kernel::Discrete(d2)) => {
            for (x, m) in per_state_max.iter_mut().enumerate() {
                for (p0, p2) in d0.row(x).iter().zip(d2.row(x)) {
                    *m = m.max(ratio(*p0, *p2));
                }
            }
        }
        (Kernel::Continuous(c0), Kernel::Continuous(c2)) => {
            for (x, m) in per_state_max.iter_mut().enumerate() {
                let t_cut = c0.t_cut(x).max(c2.t_cut(x));
                for y in 0..e {
                    for i in 1..=PHI_SCAN_POINTS {
                        // Denser near zero, where sojourn densities vary fastest.
                        let u = i as f64 / PHI_SCAN_POINTS as f64;
                        let t = t_cut * u * u;
                        *m = m.max(ratio(c0.density(x, y, t), c2.density(x, y, t)));
                    }
                }
            }
        }
        _ => per_state_max.iter_mut().for_each(|m| *m = f64::INFINITY),
    }
    let per_state_ceiling = (0..e)
        .map(|x| {
            let a = pair.alpha[x];
            if pair.degenerate[x] {
                1.0
            } else {
                a.sin() / (pair.lambda * a).sin()
            }
        })
        .collect();
    let max_ratio = per_state_max.iter().copied().fold(0.0, f64::max);
    let bound = 1.0 / pair.lambda;
    PhiBoundReport {
        max_ratio,
        per_state_max,
        per_state_ceiling,
        bound,
        holds: max_ratio < bound,
    }
}

/// Membership of each state in `G_q = {x : h(Q_x, Q_{x;1}) ≤ λ h(Q_{x;0}, Q_{x;1})}`.
pub fn g_set(q: &Kernel, q0: &Kernel, q1: &Kernel, lambda: f64) -> Result<Vec<bool>> {
    let to_alt = hellinger_sq(q, q1)?;
    let null_alt = hellinger_sq(q0, q1)?;
    Ok(to_alt
        .per_state
        .iter()
        .zip(&null_alt.per_state)
        .map(|(a, b)| a.sqrt() <= lambda * b.sqrt())
        .collect())
}
