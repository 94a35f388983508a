//! Embedded Markov chain algebra: powers, stationary law, connectivity,
//! period and the minorization/majorization measures.

use std::collections::VecDeque;

use super::{Kernel, Matrix};
use crate::error::{Error, Result};

const DIRECT_SOLVE_MAX: usize = 64;
const POWER_TOL: f64 = 1e-12;
const POWER_MAX_ITER: usize = 100_000;

pub fn emc_transition(kernel: &Kernel) -> Matrix {
    kernel.emc()
}

pub fn is_row_stochastic(p: &Matrix, tol: f64) -> bool {
    p.iter().all(|v| *v >= 0.0 && v.is_finite())
        && p.row_iter().all(|r| (r.sum() - 1.0).abs() <= tol)
}

/// `P^(n)`; `n = 0` gives the identity.
pub fn n_step_transition(p: &Matrix, n: usize) -> Matrix {
    let mut result = Matrix::identity(p.nrows(), p.ncols());
    let mut base = p.clone();
    let mut e = n;
    while e > 0 {
        if e & 1 == 1 {
            result = &result * &base;
        }
        e >>= 1;
        if e > 0 {
            base = &base * &base;
        }
    }
    result
}

fn reachable_from(p: &Matrix, start: usize, transpose: bool) -> Vec<bool> {
    let n = p.nrows();
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([start]);
    seen[start] = true;
    while let Some(u) = queue.pop_front() {
        for v in 0..n {
            let w = if transpose { p[(v, u)] } else { p[(u, v)] };
            if w > 0.0 && !seen[v] {
                seen[v] = true;
                queue.push_back(v);
            }
        }
    }
    seen
}

/// `None` if the support digraph of `p` is strongly connected, otherwise a
/// pair `(from, unreachable)`.
pub fn reachability_witness(p: &Matrix) -> Option<(usize, usize)> {
    if let Some(v) = reachable_from(p, 0, false).iter().position(|s| !s) {
        return Some((0, v));
    }
    reachable_from(p, 0, true).iter().position(|s| !s).map(|v| (v, 0))
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Period of an irreducible chain: gcd of `level(u) + 1 - level(v)` over all
/// support edges `u → v`, with levels from a BFS rooted at state 0.
pub fn period(p: &Matrix) -> usize {
    let n = p.nrows();
    let mut level = vec![usize::MAX; n];
    level[0] = 0;
    let mut queue = VecDeque::from([0]);
    while let Some(u) = queue.pop_front() {
        for v in 0..n {
            if p[(u, v)] > 0.0 && level[v] == usize::MAX {
                level[v] = level[u] + 1;
                queue.push_back(v);
            }
        }
    }
    let mut d = 0;
    for u in 0..n {
        for v in 0..n {
            if p[(u, v)] > 0.0 && level[u] != usize::MAX && level[v] != usize::MAX {
                d = gcd(d, (level[u] + 1).abs_diff(level[v]));
            }
        }
    }
    d
}

/// Stationary law of an irreducible EMC.
pub fn stationary_emc(p: &Matrix) -> Result<Vec<f64>> {
    if let Some((from, unreachable)) = reachability_witness(p) {
        return Err(Error::ReducibleEmc { from, unreachable });
    }
    let n = p.nrows();
    let mut rho = if n <= DIRECT_SOLVE_MAX {
        let mut a = p.transpose() - Matrix::identity(n, n);
        for j in 0..n {
            a[(n - 1, j)] = 1.0;
        }
        let mut b = nalgebra::DVector::zeros(n);
        b[n - 1] = 1.0;
        let sol = a
            .lu()
            .solve(&b)
            .ok_or_else(|| Error::InvalidKernel("singular balance system".into()))?;
        sol.iter().copied().collect::<Vec<_>>()
    } else {
        // Lazy chain (P + I)/2 shares the stationary law and is aperiodic.
        let mut v = vec![1.0 / n as f64; n];
        for _ in 0..POWER_MAX_ITER {
            let mut next = vec![0.0; n];
            for (x, vx) in v.iter().enumerate() {
                next[x] += 0.5 * vx;
                for (y, ny) in next.iter_mut().enumerate() {
                    *ny += 0.5 * vx * p[(x, y)];
                }
            }
            let diff = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            v = next;
            if diff < POWER_TOL {
                break;
            }
        }
        v
    };
    for r in rho.iter_mut() {
        if *r < 0.0 {
            *r = 0.0;
        }
    }
    let s: f64 = rho.iter().sum();
    rho.iter_mut().for_each(|r| *r /= s);
    Ok(rho)
}

/// Minorization of Cesàro averages and majorization of the `l`-step kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct MinorizationConstants {
    pub k: usize,
    pub l: usize,
    pub kappa: usize,
    /// `ν*(y) = min_x (1/k) Σ_{u≤k} P^(u)(x, y)`.
    pub nu_star: Vec<f64>,
    /// `η*(y) = max_x P^(l)(x, y)`.
    pub eta_star: Vec<f64>,
    pub nu_mass: f64,
    pub eta_mass: f64,
    /// Set when `ν*` has zero mass at this `k`.
    pub vacuous: bool,
    /// Diagnostic constant `min_{x,y} (1/k) Σ_u P^(u)(x, y)`.
    pub uniform_constant: f64,
}

pub fn minorization(p: &Matrix, k: usize, l: usize) -> Result<MinorizationConstants> {
    if k == 0 || l == 0 {
        return Err(Error::InvalidParameter("k and l must be positive".into()));
    }
    let n = p.nrows();
    let mut cesaro = Matrix::zeros(n, n);
    let mut power = Matrix::identity(n, n);
    for _ in 0..k {
        power = &power * p;
        cesaro += &power;
    }
    cesaro /= k as f64;
    let pl = n_step_transition(p, l);
    let nu_star: Vec<f64> = (0..n)
        .map(|y| (0..n).map(|x| cesaro[(x, y)]).fold(f64::INFINITY, f64::min))
        .collect();
    let eta_star: Vec<f64> = (0..n)
        .map(|y| (0..n).map(|x| pl[(x, y)]).fold(0.0, f64::max))
        .collect();
    let nu_mass: f64 = nu_star.iter().sum();
    let eta_mass = eta_star.iter().sum();
    Ok(MinorizationConstants {
        k,
        l,
        kappa: k + l,
        uniform_constant: cesaro.min(),
        vacuous: nu_mass <= 0.0,
        nu_star,
        eta_star,
        nu_mass,
        eta_mass,
    })
}

/// Smallest `k` (up to `4|E|²`) with non-vacuous `ν*`, paired with `l = 1`.
pub fn default_block_lengths(p: &Matrix) -> Result<(usize, usize)> {
    let n = p.nrows();
    for k in 1..=4 * n * n {
        if !minorization(p, k, 1)?.vacuous {
            return Ok((k, 1));
        }
    }
    Err(Error::InvalidParameter(
        "no k makes the minorization measure non-vacuous (EMC not irreducible?)".into(),
    ))
}
