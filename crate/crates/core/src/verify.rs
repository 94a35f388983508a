//! Randomized checks of the least-favorable-pair identities and of the
//! stationarity of `ρ̃` on random discrete kernels.

use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::error::Result;
use crate::kernel::{reachability_witness, stationary_emc, stationary_pair, DiscreteSmk, Kernel, StateSpace};
use crate::metrics::{hellinger_sq, least_favorable, phi_inverse_bound_check};
use crate::rng::substream;

pub const IDENTITY_TOL: f64 = 1e-10;
pub const LAMBDAS: [f64; 3] = [0.05, 0.1, 0.2];

/// Random kernel on `states` states with `k_max` sojourn cells. Each cell is
/// zeroed with probability `zero_prob` (every row keeps at least one cell);
/// surviving cells get flat Dirichlet weights.
pub fn random_kernel<R: Rng + ?Sized>(rng: &mut R, states: usize, k_max: usize, zero_prob: f64) -> DiscreteSmk {
    let w = states * k_max;
    let mut table = Vec::with_capacity(states * w);
    for _ in 0..states {
        let mut row: Vec<f64> = (0..w)
            .map(|_| if rng.random::<f64>() < zero_prob { 0.0 } else { Exp1.sample(rng) })
            .collect();
        if row.iter().all(|v| *v == 0.0) {
            row[rng.random_range(0..w)] = 1.0;
        }
        let s: f64 = row.iter().sum();
        table.extend(row.into_iter().map(|v| v / s));
    }
    DiscreteSmk::new(StateSpace::numbered(states).expect("positive size"), k_max, table).expect("rows normalised")
}

/// Random kernel whose EMC is irreducible, by rejection.
pub fn random_irreducible_kernel<R: Rng + ?Sized>(rng: &mut R, states: usize, k_max: usize, zero_prob: f64) -> DiscreteSmk {
    loop {
        let q = random_kernel(rng, states, k_max, zero_prob);
        if reachability_witness(&q.emc()).is_none() {
            return q;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub draw: usize,
    pub state: usize,
    pub lambda: f64,
    pub check: &'static str,
    pub excess: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentityReport {
    pub draws: usize,
    pub seed: u64,
    /// State-level comparisons performed.
    pub checks: usize,
    /// Largest deviation seen in the equality identities.
    pub max_equality_error: f64,
    /// Largest `Φ⁻¹ · λ`; below 1 when the bound holds.
    pub max_phi_ratio_scaled: f64,
    pub violations: Vec<Violation>,
}

/// Identity suite over `draws` random pairs of 2–4 state kernels with
/// `k_max ≤ 6`, one λ per draw cycling through [`LAMBDAS`].
///
/// Per state: `λ²h²₀₁ ≤ h²₁₂ ≤ h²₀₁`, `(1−λ)²h²₀₁ ≤ h²₀₂`,
/// `h²₁₂ = 1 − cos(λα)`, `h²₀₂ = 1 − cos((1−λ)α)` within [`IDENTITY_TOL`],
/// and `Φ⁻¹ < 1/λ` on every support cell of `q0`.
pub fn identity_suite(seed: u64, draws: usize) -> Result<IdentityReport> {
    let mut report = IdentityReport {
        draws,
        seed,
        checks: 0,
        max_equality_error: 0.0,
        max_phi_ratio_scaled: 0.0,
        violations: Vec::new(),
    };
    for d in 0..draws {
        let mut rng = substream(seed, "verify-identity", d as u64);
        let e = rng.random_range(2..=4);
        let k_max = rng.random_range(1..=6);
        let lambda = LAMBDAS[d % LAMBDAS.len()];
        let q0: Kernel = random_kernel(&mut rng, e, k_max, 0.3).into();
        let q1: Kernel = random_kernel(&mut rng, e, k_max, 0.3).into();
        let lf = least_favorable(&q0, &q1, lambda)?;
        let h01 = hellinger_sq(&q0, &q1)?.per_state;
        let h12 = hellinger_sq(&q1, &lf.q2)?.per_state;
        let h02 = hellinger_sq(&q0, &lf.q2)?.per_state;
        let mut flag = |state: usize, check: &'static str, excess: f64| {
            if excess > IDENTITY_TOL {
                report.violations.push(Violation { draw: d, state, lambda, check, excess });
            }
        };
        for x in 0..e {
            let a = lf.alpha[x];
            let eq12 = (h12[x] - (1.0 - (lambda * a).cos())).abs();
            let eq02 = (h02[x] - (1.0 - ((1.0 - lambda) * a).cos())).abs();
            flag(x, "chain_lower", lambda * lambda * h01[x] - h12[x]);
            flag(x, "chain_upper", h12[x] - h01[x]);
            flag(x, "far_lower", (1.0 - lambda).powi(2) * h01[x] - h02[x]);
            flag(x, "angle_q1_q2", eq12);
            flag(x, "angle_q0_q2", eq02);
            report.max_equality_error = report.max_equality_error.max(eq12).max(eq02);
            report.checks += 5;
        }
        let phi = phi_inverse_bound_check(&lf, &q0);
        for (x, m) in phi.per_state_max.iter().enumerate() {
            report.checks += 1;
            if !(*m < phi.bound) {
                report.violations.push(Violation {
                    draw: d,
                    state: x,
                    lambda,
                    check: "phi_inverse",
                    excess: m - phi.bound,
                });
            }
        }
        report.max_phi_ratio_scaled = report.max_phi_ratio_scaled.max(phi.max_ratio * lambda);
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationarityReport {
    pub draws: usize,
    pub seed: u64,
    pub max_invariance_residual: f64,
    pub max_mass_error: f64,
    /// Draws whose residual or mass error exceeds [`IDENTITY_TOL`], or whose
    /// stationary pair could not be built.
    pub failures: Vec<usize>,
}

/// `ρ̃Q = ρ̃` and `ρ̃(E × T) = 1` on `draws` random irreducible kernels.
pub fn stationarity_suite(seed: u64, draws: usize) -> StationarityReport {
    let mut report = StationarityReport {
        draws,
        seed,
        max_invariance_residual: 0.0,
        max_mass_error: 0.0,
        failures: Vec::new(),
    };
    for d in 0..draws {
        let mut rng = substream(seed, "verify-stationary", d as u64);
        let e = rng.random_range(2..=4);
        let k_max = rng.random_range(1..=6);
        let q: Kernel = random_irreducible_kernel(&mut rng, e, k_max, 0.3).into();
        let pair = stationary_emc(&q.emc()).and_then(|rho| stationary_pair(&q, &rho));
        match pair {
            Ok(p) => {
                let mass = (p.total_mass - 1.0).abs();
                report.max_invariance_residual = report.max_invariance_residual.max(p.invariance_residual);
                report.max_mass_error = report.max_mass_error.max(mass);
                if p.invariance_residual > IDENTITY_TOL || mass > IDENTITY_TOL {
                    report.failures.push(d);
                }
            }
            Err(_) => report.failures.push(d),
        }
    }
    report
}

impl fmt::Display for IdentityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "identity_draws: {}", self.draws)?;
        writeln!(f, "identity_checks: {}", self.checks)?;
        writeln!(f, "identity_max_equality_error: {:e}", self.max_equality_error)?;
        writeln!(f, "identity_max_phi_inverse_times_lambda: {:.17e}", self.max_phi_ratio_scaled)?;
        writeln!(f, "identity_violations: {}", self.violations.len())?;
        for v in &self.violations {
            writeln!(
                f,
                "violation: draw={} state={} lambda={} check={} excess={:e}",
                v.draw, v.state, v.lambda, v.check, v.excess
            )?;
        }
        Ok(())
    }
}

impl fmt::Display for StationarityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "stationarity_draws: {}", self.draws)?;
        writeln!(f, "stationarity_max_invariance_residual: {:e}", self.max_invariance_residual)?;
        writeln!(f, "stationarity_max_mass_error: {:e}", self.max_mass_error)?;
        writeln!(f, "stationarity_violations: {}", self.failures.len())?;
        for d in &self.failures {
            writeln!(f, "violation: draw={d} check=stationarity")?;
        }
        Ok(())
    }
}
