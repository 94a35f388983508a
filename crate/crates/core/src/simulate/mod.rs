//! Trajectories of a Markov renewal process, their likelihood, and the
//! Kullback–Leibler functionals that define KL neighborhoods of a kernel.
//!
//! RNG consumption order: the initial pair draws one uniform for a discrete
//! kernel (a cell of `ρ̃`), or one uniform for the origin `x ~ ρ`, one for the
//! destination and then the sojourn sampler's uniforms for a continuous one.
//! Each transition then draws one uniform for a discrete cell, or one uniform
//! for the destination followed by the sojourn sampler's uniforms.

mod kl;

pub use kl::{in_kl_neighborhood, kl_functionals, KlFunctionals, KlMembership, KlMethod, KlMode};

use std::io::{Read, Write};

use rand::Rng;

use crate::error::{Error, Result};
use crate::kernel::{stationary_emc, stationary_pair, Kernel, StateSpace, StationaryPair};
use crate::rng::{substream, SimRng};

/// A path `J_0..J_n` with jump times `S_0..S_n`.
///
/// `sojourns[ℓ] = S_ℓ − S_{ℓ−1}` for `ℓ ≥ 1`, and `sojourns[0] = S_0`. Under a
/// stationary start `S_0 = X_0` is the sojourn coordinate of `(J_0, X_0) ~ ρ̃`;
/// under an explicit initial law `S_0 = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub labels: StateSpace,
    pub states: Vec<usize>,
    pub jump_times: Vec<f64>,
    pub sojourns: Vec<f64>,
}

impl Trajectory {
    /// Builds a trajectory from states and sojourns, accumulating jump times.
    pub fn from_sojourns(labels: StateSpace, states: Vec<usize>, sojourns: Vec<f64>) -> Result<Self> {
        if states.is_empty() || states.len() != sojourns.len() {
            return Err(Error::InvalidParameter(format!(
                "{} states but {} sojourns",
                states.len(),
                sojourns.len()
            )));
        }
        if let Some(s) = states.iter().find(|s| **s >= labels.size()) {
            return Err(Error::InvalidParameter(format!("state index {s} out of range")));
        }
        if sojourns[0] < 0.0 || sojourns[1..].iter().any(|x| !(*x > 0.0)) {
            return Err(Error::InvalidParameter("sojourns must be positive (S_0 nonnegative)".into()));
        }
        let mut t = 0.0;
        let jump_times = sojourns
            .iter()
            .map(|x| {
                t += x;
                t
            })
            .collect();
        Ok(Trajectory { labels, states, jump_times, sojourns })
    }

    /// Number of jumps `n`.
    pub fn n(&self) -> usize {
        self.states.len() - 1
    }

    /// Transition `ℓ ≥ 1` as `(J_{ℓ−1}, J_ℓ, X_ℓ)`.
    pub fn transition(&self, l: usize) -> (usize, usize, f64) {
        (self.states[l - 1], self.states[l], self.sojourns[l])
    }

    /// CSV with columns `index,state,jump_time`; states are written as labels.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["index", "state", "jump_time"])?;
        for (i, (s, t)) in self.states.iter().zip(&self.jump_times).enumerate() {
            out.write_record([i.to_string(), self.labels.label(*s).to_string(), t.to_string()])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R, labels: &StateSpace) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let mut states = Vec::new();
        let mut times = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != 3 {
                return Err(Error::Parse(format!("row {row}: expected 3 columns")));
            }
            let s = labels
                .index_of(&rec[1])
                .ok_or_else(|| Error::Parse(format!("row {row}: unknown state {:?}", &rec[1])))?;
            let t: f64 = rec[2]
                .parse()
                .map_err(|_| Error::Parse(format!("row {row}: bad jump time {:?}", &rec[2])))?;
            states.push(s);
            times.push(t);
        }
        if times.is_empty() {
            return Err(Error::Parse("trajectory has no rows".into()));
        }
        let mut sojourns = vec![times[0]];
        sojourns.extend(times.windows(2).map(|w| w[1] - w[0]));
        Self::from_sojourns(labels.clone(), states, sojourns)
    }
}

/// Law of the initial pair.
#[derive(Debug, Clone, PartialEq)]
pub enum Init {
    /// `(J_0, X_0) ~ ρ̃` and `S_0 = X_0`.
    Stationary,
    /// `J_0 ~ π` and `S_0 = 0`.
    Distribution(Vec<f64>),
}

#[derive(Debug, Clone)]
enum Start {
    Cells(Vec<f64>),
    Origin(Vec<f64>),
    Explicit(Vec<f64>),
}

/// Precomputed cumulative tables for repeated sampling from one kernel.
#[derive(Debug, Clone)]
pub struct Sampler<'a> {
    kernel: &'a Kernel,
    rows: Vec<Vec<f64>>,
    start: Start,
}

fn cumulative(p: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let mut acc = 0.0;
    p.into_iter()
        .map(|v| {
            acc += v;
            acc
        })
        .collect()
}

fn pick<R: Rng + ?Sized>(cdf: &[f64], rng: &mut R) -> usize {
    let total = *cdf.last().expect("nonempty table");
    let u = rng.random::<f64>() * total;
    cdf.partition_point(|c| *c <= u).min(cdf.len() - 1)
}

impl<'a> Sampler<'a> {
    pub fn new(kernel: &'a Kernel, init: &Init) -> Result<Self> {
        let e = kernel.size();
        let rows = match kernel {
            Kernel::Discrete(d) => (0..e).map(|x| cumulative(d.row(x).iter().copied())).collect(),
            Kernel::Continuous(c) => (0..e).map(|x| cumulative(c.p().row(x).iter().copied())).collect(),
        };
        let start = match init {
            Init::Stationary => {
                let rho = stationary_emc(&kernel.emc())?;
                match kernel {
                    Kernel::Discrete(_) => {
                        let sp = stationary_pair(kernel, &rho)?;
                        Start::Cells(cumulative(sp.rho_tilde_cells.expect("discrete cells")))
                    }
                    Kernel::Continuous(_) => Start::Origin(cumulative(rho)),
                }
            }
            Init::Distribution(pi) => {
                if pi.len() != e {
                    return Err(Error::Mismatch(format!("initial law has {} entries for {e} states", pi.len())));
                }
                if pi.iter().any(|p| !(*p >= 0.0)) || (pi.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                    return Err(Error::InvalidParameter("initial law must be a probability vector".into()));
                }
                let p = kernel.emc();
                if let Some(x) = (0..e).find(|&x| pi[x] > 0.0 && (0..e).all(|z| p[(z, x)] == 0.0)) {
                    return Err(Error::UnreachableInit(x));
                }
                Start::Explicit(cumulative(pi.iter().copied()))
            }
        };
        Ok(Sampler { kernel, rows, start })
    }

    fn step<R: Rng + ?Sized>(&self, x: usize, rng: &mut R) -> (usize, f64) {
        match self.kernel {
            Kernel::Discrete(d) => {
                let (y, k) = d.cell_coords(pick(&self.rows[x], rng));
                (y, k as f64)
            }
            Kernel::Continuous(c) => {
                let y = pick(&self.rows[x], rng);
                let t = c.pair(x, y).expect("sampled pair has mass").sample(rng);
                (y, t)
            }
        }
    }

    /// Draws `n` transitions after the initial pair.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Trajectory {
        let mut states = Vec::with_capacity(n + 1);
        let mut sojourns = Vec::with_capacity(n + 1);
        let (j0, s0) = match &self.start {
            Start::Cells(cdf) => {
                let Kernel::Discrete(d) = self.kernel else { unreachable!() };
                let (y, k) = d.cell_coords(pick(cdf, rng));
                (y, k as f64)
            }
            Start::Origin(cdf) => {
                let x = pick(cdf, rng);
                self.step(x, rng)
            }
            Start::Explicit(cdf) => (pick(cdf, rng), 0.0),
        };
        states.push(j0);
        sojourns.push(s0);
        let mut x = j0;
        for _ in 0..n {
            let (y, t) = self.step(x, rng);
            states.push(y);
            sojourns.push(t);
            x = y;
        }
        let mut acc = 0.0;
        let jump_times = sojourns
            .iter()
            .map(|s| {
                acc += s;
                acc
            })
            .collect();
        Trajectory {
            labels: self.kernel.states().clone(),
            states,
            jump_times,
            sojourns,
        }
    }
}

/// Samples `n` jumps using the `"trajectory"` substream of `seed`.
pub fn sample_trajectory(kernel: &Kernel, n: usize, init: &Init, seed: u64) -> Result<Trajectory> {
    if n == 0 {
        return Err(Error::InvalidParameter("need at least one jump".into()));
    }
    let sampler = Sampler::new(kernel, init)?;
    let mut rng: SimRng = substream(seed, "trajectory", 0);
    Ok(sampler.sample(n, &mut rng))
}

/// Log-likelihood with the step index of the first zero factor, if any
/// (step 0 is the initial pair).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogLikelihood {
    pub value: f64,
    pub first_violation: Option<usize>,
}

/// `log ρ̃(J_0, S_0) + Σ_ℓ log q_{J_{ℓ−1}}(J_ℓ, X_ℓ)`, with the initial term
/// present only when `stationary` is supplied.
pub fn log_likelihood_with(kernel: &Kernel, stationary: Option<&StationaryPair>, traj: &Trajectory) -> LogLikelihood {
    let mut value = 0.0;
    let mut first_violation = None;
    let mut add = |v: f64, step: usize| {
        if v > 0.0 {
            value += v.ln();
        } else if first_violation.is_none() {
            first_violation = Some(step);
        }
    };
    if let Some(sp) = stationary {
        add(sp.density(kernel, traj.states[0], traj.sojourns[0]), 0);
    }
    for l in 1..traj.states.len() {
        let (x, y, t) = traj.transition(l);
        add(kernel.density(x, y, t), l);
    }
    LogLikelihood {
        value: if first_violation.is_some() { f64::NEG_INFINITY } else { value },
        first_violation,
    }
}

pub fn log_likelihood(kernel: &Kernel, traj: &Trajectory, include_initial: bool) -> Result<LogLikelihood> {
    if traj.labels.size() != kernel.size() {
        return Err(Error::Mismatch("trajectory and kernel state spaces differ".into()));
    }
    let sp = if include_initial {
        let rho = stationary_emc(&kernel.emc())?;
        Some(stationary_pair(kernel, &rho)?)
    } else {
        None
    };
    Ok(log_likelihood_with(kernel, sp.as_ref(), traj))
}
