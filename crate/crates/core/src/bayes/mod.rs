//! Conjugate Dirichlet priors over discrete semi-Markov kernels and Monte
//! Carlo checks of posterior concentration in `d_{ν*}`.
//!
//! Each row `q_x(·, ·)` gets an independent Dirichlet law over its
//! `|E|·k_max` cells. The transition factors of the likelihood are
//! multinomial in those cells, so the posterior is Dirichlet with the
//! observed transition counts added; the initial factor is not used.

use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernel::{default_block_lengths, discrete_sojourn, minorization, DiscreteSmk, Kernel, StateSpace};
use crate::metrics::hellinger_sq_rows;
use crate::rng::{pair_index, substream};
use crate::simulate::{in_kl_neighborhood, Init, KlMode, Sampler, Trajectory};
use crate::stats::{z_for, Wilson};

const LEVEL: f64 = 0.99;

#[derive(Debug, Clone, PartialEq)]
pub struct DirichletSmkPrior {
    states: StateSpace,
    k_max: usize,
    concentration: Vec<f64>,
}

impl DirichletSmkPrior {
    /// Flat table `[x][y][k]` of strictly positive concentrations.
    pub fn new(states: StateSpace, k_max: usize, concentration: Vec<f64>) -> Result<Self> {
        let e = states.size();
        if k_max == 0 || concentration.len() != e * e * k_max {
            return Err(Error::InvalidParameter(format!(
                "expected {} concentrations for k_max = {k_max}",
                e * e * k_max
            )));
        }
        if let Some((i, a)) = concentration.iter().enumerate().find(|(_, a)| !(**a > 0.0 && a.is_finite())) {
            return Err(Error::InvalidParameter(format!("concentration {i} = {a} must be positive")));
        }
        Ok(DirichletSmkPrior { states, k_max, concentration })
    }

    /// Every cell with the same concentration `alpha`.
    pub fn uniform(states: StateSpace, k_max: usize, alpha: f64) -> Result<Self> {
        let e = states.size();
        Self::new(states, k_max, vec![alpha; e * e * k_max])
    }

    pub fn states(&self) -> &StateSpace {
        &self.states
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    pub fn concentration(&self) -> &[f64] {
        &self.concentration
    }

    pub fn cells_per_row(&self) -> usize {
        self.states.size() * self.k_max
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DirichletSmkPosterior {
    pub prior: DirichletSmkPrior,
    /// Transition counts `c_x(y, k)` in the prior's cell layout.
    pub counts: Vec<u64>,
}

impl DirichletSmkPosterior {
    pub fn concentration(&self) -> Vec<f64> {
        self.prior
            .concentration
            .iter()
            .zip(&self.counts)
            .map(|(a, c)| a + *c as f64)
            .collect()
    }

    /// Posterior mean kernel.
    pub fn mean(&self) -> Result<DiscreteSmk> {
        let w = self.prior.cells_per_row();
        let mut table = self.concentration();
        for row in table.chunks_mut(w) {
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= s);
        }
        DiscreteSmk::new(self.prior.states.clone(), self.prior.k_max, table)
    }
}

pub fn posterior_update(prior: &DirichletSmkPrior, traj: &Trajectory) -> Result<DirichletSmkPosterior> {
    if traj.labels.size() != prior.states.size() {
        return Err(Error::Mismatch("trajectory and prior state spaces differ".into()));
    }
    let w = prior.cells_per_row();
    let mut counts = vec![0u64; prior.concentration.len()];
    for l in 1..=traj.n() {
        let (x, y, t) = traj.transition(l);
        let k = discrete_sojourn(t)
            .ok_or_else(|| Error::InvalidParameter(format!("step {l}: sojourn {t} is not a positive integer")))?;
        if k > prior.k_max {
            return Err(Error::ExceedsPriorSupport { step: l, sojourn: k, k_max: prior.k_max });
        }
        counts[x * w + y * prior.k_max + k - 1] += 1;
    }
    Ok(DirichletSmkPosterior { prior: prior.clone(), counts })
}

fn sample_row<R: Rng + ?Sized>(alpha: &[f64], rng: &mut R, out: &mut Vec<f64>) {
    let start = out.len();
    for a in alpha {
        out.push(Gamma::new(*a, 1.0).expect("positive concentration").sample(rng));
    }
    let row = &mut out[start..];
    let s: f64 = row.iter().sum();
    if s > 0.0 {
        row.iter_mut().for_each(|v| *v /= s);
    } else {
        // Every gamma draw underflowed: fall back to the largest concentration.
        let best = (0..alpha.len()).fold(0, |b, i| if alpha[i] > alpha[b] { i } else { b });
        row.iter_mut().enumerate().for_each(|(i, v)| *v = if i == best { 1.0 } else { 0.0 });
    }
}

fn sample_kernels(states: &StateSpace, k_max: usize, concentration: &[f64], seed: u64, tag: &str, count: usize) -> Vec<DiscreteSmk> {
    let w = states.size() * k_max;
    (0..count as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, tag, i);
            let mut table = Vec::with_capacity(concentration.len());
            for row in concentration.chunks(w) {
                sample_row(row, &mut rng, &mut table);
            }
            DiscreteSmk::from_table_unchecked(states.clone(), k_max, table).expect("shape fixed by the law")
        })
        .collect()
}

/// Independent Dirichlet draws of every row; sample `i` uses its own substream.
pub fn posterior_sample(posterior: &DirichletSmkPosterior, seed: u64, count: usize) -> Vec<DiscreteSmk> {
    let p = &posterior.prior;
    sample_kernels(&p.states, p.k_max, &posterior.concentration(), seed, "posterior-sample", count)
}

pub fn prior_sample(prior: &DirichletSmkPrior, seed: u64, count: usize) -> Vec<DiscreteSmk> {
    sample_kernels(&prior.states, prior.k_max, &prior.concentration, seed, "prior-sample", count)
}

/// Monte Carlo estimate of a probability with its 99% Wilson interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MassEstimate {
    pub mass: f64,
    pub hits: u64,
    pub samples: u64,
    pub ci_lower: f64,
    pub ci_upper: f64,
}

impl MassEstimate {
    fn from_hits(hits: u64, samples: u64) -> Self {
        let w = Wilson::new(hits, samples, LEVEL);
        MassEstimate { mass: w.rate, hits, samples, ci_lower: w.lower, ci_upper: w.upper }
    }
}

fn check_on_grid(prior: &DirichletSmkPrior, q0: &DiscreteSmk) -> Result<()> {
    if q0.size() != prior.states.size() || q0.k_max() != prior.k_max {
        return Err(Error::Mismatch("q0 is not on the prior's support grid".into()));
    }
    Ok(())
}

/// `Π(U(q0, ε))` at horizon `n`: the fraction of prior draws whose exact
/// `K` and `V₀` are both at most `nε²`.
pub fn prior_mass_kl(prior: &DirichletSmkPrior, q0: &DiscreteSmk, eps: f64, n: usize, mc_samples: usize, seed: u64) -> Result<MassEstimate> {
    check_on_grid(prior, q0)?;
    if mc_samples == 0 {
        return Err(Error::InvalidParameter("mc_samples must be positive".into()));
    }
    let q0k = Kernel::Discrete(q0.clone());
    let draws = prior_sample(prior, seed, mc_samples);
    let inside: Result<Vec<bool>> = draws
        .into_par_iter()
        .map(|q| Ok(in_kl_neighborhood(&Kernel::Discrete(q), &q0k, eps, n, KlMode::Analytic)?.inside))
        .collect();
    let hits = inside?.into_iter().filter(|b| *b).count() as u64;
    Ok(MassEstimate::from_hits(hits, mc_samples as u64))
}

/// Sieve `𝒬_n` as a predicate on kernels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Sieve {
    Everything,
    Nothing,
    /// Kernels whose every cell is at least the floor.
    CellFloor(f64),
}

impl Sieve {
    pub fn contains(&self, q: &DiscreteSmk) -> bool {
        match *self {
            Sieve::Everything => true,
            Sieve::Nothing => false,
            Sieve::CellFloor(d) => q.table().iter().all(|v| *v >= d),
        }
    }
}

/// `Π(𝒬_n^∁)` by prior sampling.
pub fn sieve_mass(prior: &DirichletSmkPrior, sieve: Sieve, mc_samples: usize, seed: u64) -> Result<MassEstimate> {
    if mc_samples == 0 {
        return Err(Error::InvalidParameter("mc_samples must be positive".into()));
    }
    let outside = prior_sample(prior, seed, mc_samples).iter().filter(|q| !sieve.contains(q)).count() as u64;
    Ok(MassEstimate::from_hits(outside, mc_samples as u64))
}

/// Rule producing `ε_n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EpsRule {
    /// `√(log n / n)`.
    SqrtLogOverN,
    /// `n^{−p}`.
    Power(f64),
}

impl EpsRule {
    pub fn eps(&self, n: usize) -> f64 {
        let x = n as f64;
        match *self {
            EpsRule::SqrtLogOverN => (x.ln() / x).sqrt(),
            EpsRule::Power(p) => x.powf(-p),
        }
    }

    /// `sqrt-log` or `power:<p>`.
    pub fn parse(s: &str) -> Result<Self> {
        match s.split_once(':') {
            None if s == "sqrt-log" => Ok(EpsRule::SqrtLogOverN),
            Some(("power", p)) => p
                .parse::<f64>()
                .ok()
                .filter(|p| *p > 0.0 && *p < 0.5)
                .map(EpsRule::Power)
                .ok_or_else(|| Error::Parse(format!("power exponent {p:?} must lie in (0, 1/2)"))),
            _ => Err(Error::Parse(format!("unknown eps rule {s:?} (expected sqrt-log or power:<p>)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConcentrationRow {
    pub n: usize,
    pub eps_n: f64,
    pub m: f64,
    pub posterior_mass_outside: f64,
    pub mc_samples: usize,
    pub replications: usize,
    pub ci_lower: f64,
    pub ci_upper: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConcentrationCurve {
    pub rows: Vec<ConcentrationRow>,
    /// `ν*` used for `d_{ν*}`.
    pub nu_star: Vec<f64>,
    pub k: usize,
    pub l: usize,
}

impl ConcentrationCurve {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for r in &self.rows {
            out.serialize(r)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Rows for one `M`, in increasing `n`.
    pub fn series(&self, m: f64) -> Vec<&ConcentrationRow> {
        self.rows.iter().filter(|r| r.m == m).collect()
    }

    /// True when each step along `n` is a decrease or the 99% intervals overlap.
    pub fn nonincreasing(&self, m: f64) -> bool {
        self.series(m)
            .windows(2)
            .all(|w| w[1].posterior_mass_outside <= w[0].posterior_mass_outside || w[1].ci_lower <= w[0].ci_upper)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveConfig {
    pub n_grid: Vec<usize>,
    pub eps_rule: EpsRule,
    pub m_values: Vec<f64>,
    pub replications: usize,
    pub mc_samples: usize,
    /// Block lengths for `ν*`; the smallest non-vacuous `k` with `l = 1` when unset.
    pub block_lengths: Option<(usize, usize)>,
}

/// Posterior mass outside `B_{d_{ν*}}(q0, Mε_n)` along the `n` grid.
///
/// For each replication and `n`, a stationary path of `n` jumps is drawn
/// from `q0`, the prior is updated, and `mc_samples` posterior kernels are
/// scored. The reported mass averages the replications; the interval is the
/// pooled Wilson interval widened to `z·SE` of the replication means when
/// that is larger.
pub fn concentration_curve(q0: &DiscreteSmk, prior: &DirichletSmkPrior, cfg: &CurveConfig, seed: u64) -> Result<ConcentrationCurve> {
    check_on_grid(prior, q0)?;
    if cfg.replications == 0 || cfg.mc_samples == 0 {
        return Err(Error::InvalidParameter("replications and mc_samples must be positive".into()));
    }
    let q0k = Kernel::Discrete(q0.clone());
    let emc = q0k.emc();
    let (k, l) = match cfg.block_lengths {
        Some(kl) => kl,
        None => default_block_lengths(&emc)?,
    };
    let nu_star = minorization(&emc, k, l)?.nu_star;
    let sampler = Sampler::new(&q0k, &Init::Stationary)?;
    let e = q0.size();
    let mut rows = Vec::new();
    for (ni, &n) in cfg.n_grid.iter().enumerate() {
        if n == 0 {
            return Err(Error::InvalidParameter("n grid entries must be positive".into()));
        }
        let eps_n = cfg.eps_rule.eps(n);
        // distances[r][s] = d_{ν*}(q0, draw s of replication r)
        let distances: Result<Vec<Vec<f64>>> = (0..cfg.replications as u64)
            .into_par_iter()
            .map(|r| {
                let idx = pair_index(ni as u64, r);
                let traj = sampler.sample(n, &mut substream(seed, "curve-path", idx));
                let post = posterior_update(prior, &traj)?;
                let draws = posterior_sample(&post, crate::rng::splitmix64(seed ^ idx), cfg.mc_samples);
                Ok(draws
                    .iter()
                    .map(|q| {
                        (0..e)
                            .map(|x| nu_star[x] * hellinger_sq_rows(q0.row(x), q.row(x)))
                            .sum::<f64>()
                            .sqrt()
                    })
                    .collect())
            })
            .collect();
        let distances = distances?;
        for &m in &cfg.m_values {
            let radius = m * eps_n;
            let per_rep: Vec<u64> = distances
                .iter()
                .map(|ds| ds.iter().filter(|d| **d > radius).count() as u64)
                .collect();
            let total: u64 = per_rep.iter().sum();
            let draws = (cfg.replications * cfg.mc_samples) as u64;
            let w = Wilson::new(total, draws, LEVEL);
            let fracs: Vec<f64> = per_rep.iter().map(|h| *h as f64 / cfg.mc_samples as f64).collect();
            let (mean, se) = if fracs.len() > 1 {
                crate::stats::mean_se(&fracs)
            } else {
                (fracs[0], 0.0)
            };
            let half = w.half_width().max(z_for(LEVEL) * se);
            rows.push(ConcentrationRow {
                n,
                eps_n,
                m,
                posterior_mass_outside: mean,
                mc_samples: cfg.mc_samples,
                replications: cfg.replications,
                ci_lower: (mean - half).max(0.0),
                ci_upper: (mean + half).min(1.0),
            });
        }
    }
    rows.sort_by(|a, b| a.m.total_cmp(&b.m).then(a.n.cmp(&b.n)));
    Ok(ConcentrationCurve { rows, nu_star, k, l })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeasibilityRow {
    pub c: f64,
    pub n: usize,
    pub eps_n: f64,
    pub prior_kl_mass: f64,
    pub prior_kl_ci_lower: f64,
    pub h3_bound: f64,
    pub h3_holds: bool,
    pub sieve_floor: f64,
    pub sieve_complement_mass: f64,
    pub sieve_ci_upper: f64,
    pub h4_bound: f64,
    pub h4_holds: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Feasibility {
    pub rows: Vec<FeasibilityRow>,
    /// Values of `c` for which both conditions hold at every `n`.
    pub feasible: Vec<f64>,
}

impl Feasibility {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for r in &self.rows {
            out.serialize(r)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Searches `c` such that `Π(U(q0, ε_n)) > e^{−cnε_n²}` and
/// `Π(𝒬_n^∁) ≤ e^{−2n(c+1)ε_n²}` on the grid, with the floor sieve
/// `δ_n = n^{−floor_power}`. Point estimates decide; the CI edges are
/// reported alongside.
pub fn feasibility_search(
    prior: &DirichletSmkPrior,
    q0: &DiscreteSmk,
    n_grid: &[usize],
    eps_rule: EpsRule,
    c_grid: &[f64],
    floor_power: f64,
    mc_samples: usize,
    seed: u64,
) -> Result<Feasibility> {
    let mut rows = Vec::new();
    for (ni, &n) in n_grid.iter().enumerate() {
        let eps_n = eps_rule.eps(n);
        let kl = prior_mass_kl(prior, q0, eps_n, n, mc_samples, seed ^ (ni as u64) << 40)?;
        let floor = (n as f64).powf(-floor_power);
        let sieve = sieve_mass(prior, Sieve::CellFloor(floor), mc_samples, seed ^ (ni as u64) << 48)?;
        let ne2 = n as f64 * eps_n * eps_n;
        for &c in c_grid {
            let h3 = (-c * ne2).exp();
            let h4 = (-2.0 * (c + 1.0) * ne2).exp();
            rows.push(FeasibilityRow {
                c,
                n,
                eps_n,
                prior_kl_mass: kl.mass,
                prior_kl_ci_lower: kl.ci_lower,
                h3_bound: h3,
                h3_holds: kl.mass > h3,
                sieve_floor: floor,
                sieve_complement_mass: sieve.mass,
                sieve_ci_upper: sieve.ci_upper,
                h4_bound: h4,
                h4_holds: sieve.mass <= h4,
            });
        }
    }
    rows.sort_by(|a, b| a.c.total_cmp(&b.c).then(a.n.cmp(&b.n)));
    let feasible = c_grid
        .iter()
        .copied()
        .filter(|c| rows.iter().filter(|r| r.c == *c).all(|r| r.h3_holds && r.h4_holds))
        .collect();
    Ok(Feasibility { rows, feasible })
}
