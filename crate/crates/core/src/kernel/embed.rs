//! Markov processes written as semi-Markov kernels.

use super::{is_row_stochastic, ContinuousSmk, DiscreteSmk, Matrix, StateSpace};
use crate::error::{Error, Result};
use crate::sojourn::{geometric_pmf, SojournFamily};

/// Discrete-time chain `p̃` as `q_x(y, k) = p̃_xy · p̃_xx^(k-1)` for `y ≠ x`.
///
/// The geometric tail beyond `k_max` is folded into `k = k_max`, so rows stay
/// exactly stochastic. Self-transitions carry no mass.
pub fn embed_markov_discrete(p_tilde: &Matrix, k_max: usize) -> Result<DiscreteSmk> {
    let e = p_tilde.nrows();
    if p_tilde.ncols() != e {
        return Err(Error::InvalidKernel("transition matrix must be square".into()));
    }
    if !is_row_stochastic(p_tilde, 1e-12) {
        return Err(Error::InvalidKernel("transition matrix is not row-stochastic".into()));
    }
    if k_max == 0 {
        return Err(Error::InvalidParameter("k_max must be positive".into()));
    }
    let mut routing = Matrix::zeros(e, e);
    let mut sojourn = Vec::with_capacity(e);
    for x in 0..e {
        let stay = p_tilde[(x, x)];
        if stay >= 1.0 {
            return Err(Error::AbsorbingState(x));
        }
        for y in 0..e {
            if y != x {
                routing[(x, y)] = p_tilde[(x, y)] / (1.0 - stay);
            }
        }
        // p̃_xy·stay^(k-1) = routing(x,y) · (1-stay)·stay^(k-1)
        sojourn.push(geometric_pmf(stay, k_max));
    }
    let states = StateSpace::numbered(e)?;
    let w = e * k_max;
    let mut q = vec![0.0; e * w];
    for x in 0..e {
        for y in 0..e {
            if y == x {
                continue;
            }
            for k in 1..k_max {
                q[x * w + y * k_max + k - 1] = p_tilde[(x, y)] * p_tilde[(x, x)].powi(k as i32 - 1);
            }
            q[x * w + y * k_max + k_max - 1] = routing[(x, y)] * sojourn[x][k_max - 1];
        }
    }
    DiscreteSmk::new(states, k_max, q)
}

/// Generator `A` as `q_x(y, t) = a_xy · exp(-a_x t)`, i.e. routing
/// `a_xy / a_x` and an exponential(`a_x`) sojourn independent of `y`.
pub fn embed_markov_continuous(generator: &Matrix) -> Result<ContinuousSmk> {
    let e = generator.nrows();
    if generator.ncols() != e {
        return Err(Error::InvalidKernel("generator must be square".into()));
    }
    let mut p = Matrix::zeros(e, e);
    let mut families = vec![vec![None; e]; e];
    for x in 0..e {
        let row_sum: f64 = generator.row(x).sum();
        let rate = -generator[(x, x)];
        if !rate.is_finite() {
            return Err(Error::InvalidKernel(format!("infinite exit rate at state {x}")));
        }
        if rate <= 0.0 {
            return Err(Error::AbsorbingState(x));
        }
        if row_sum.abs() > 1e-9 * rate.max(1.0) {
            return Err(Error::InvalidKernel(format!("generator row {x} sums to {row_sum}")));
        }
        for y in 0..e {
            if y == x {
                continue;
            }
            let a = generator[(x, y)];
            if a < 0.0 {
                return Err(Error::InvalidKernel(format!("negative rate a[{x}][{y}]")));
            }
            p[(x, y)] = a / rate;
            families[x][y] = Some(SojournFamily::Exponential { rate });
        }
        // Exact stochasticity despite division rounding.
        let s: f64 = p.row(x).sum();
        for y in 0..e {
            p[(x, y)] /= s;
        }
    }
    ContinuousSmk::new(StateSpace::numbered(e)?, p, families)
}
