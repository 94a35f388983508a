//! Finite-state semi-Markov kernels.
//!
//! A kernel gives, for every current state `x`, the joint law of the next
//! state `y` and the sojourn `X` spent in `x` before jumping. Discrete kernels
//! store `q_x(y, k)` on `k ∈ {1..k_max}`; continuous kernels store per-pair
//! densities `q_x(y, t) = P(x, y) f_xy(t)` on `t > 0`.

mod assumptions;
mod chain;
mod continuous;
mod discrete;
mod embed;
pub mod io;
mod stationary;

pub use assumptions::{validate_assumptions, AssumptionCheck, AssumptionReport};
pub use chain::{
    default_block_lengths, emc_transition, is_row_stochastic, minorization, n_step_transition,
    period, reachability_witness, stationary_emc, MinorizationConstants,
};
pub use continuous::{ContinuousSmk, PairDensity, PAIR_QUAD_TOL};
pub use discrete::DiscreteSmk;
pub use embed::{embed_markov_continuous, embed_markov_discrete};
pub use stationary::{mean_sojourn, stationary_pair, MeanSojourn, StationaryPair};

use crate::error::{Error, Result};

pub type Matrix = nalgebra::DMatrix<f64>;

/// Row-sum tolerance for constructed kernels.
pub const ROW_TOL: f64 = 1e-12;

/// Ordered, distinct state labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateSpace {
    labels: Vec<String>,
}

impl StateSpace {
    pub fn new<S: Into<String>>(labels: impl IntoIterator<Item = S>) -> Result<Self> {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.len() < 2 {
            return Err(Error::StateSpace(format!(
                "need at least 2 states, got {}",
                labels.len()
            )));
        }
        for (i, a) in labels.iter().enumerate() {
            if labels[..i].contains(a) {
                return Err(Error::StateSpace(format!("duplicate label {a:?}")));
            }
        }
        Ok(StateSpace { labels })
    }

    /// States labelled `"1"..="n"`.
    pub fn numbered(n: usize) -> Result<Self> {
        Self::new((1..=n).map(|i| i.to_string()))
    }

    pub fn size(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, x: usize) -> &str {
        &self.labels[x]
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    Discrete,
    Continuous,
}

/// Either kind of semi-Markov kernel.
#[derive(Debug, Clone)]
pub enum Kernel {
    Discrete(DiscreteSmk),
    Continuous(ContinuousSmk),
}

impl Kernel {
    pub fn kind(&self) -> KernelKind {
        match self {
            Kernel::Discrete(_) => KernelKind::Discrete,
            Kernel::Continuous(_) => KernelKind::Continuous,
        }
    }

    pub fn states(&self) -> &StateSpace {
        match self {
            Kernel::Discrete(d) => d.states(),
            Kernel::Continuous(c) => c.states(),
        }
    }

    pub fn size(&self) -> usize {
        self.states().size()
    }

    /// EMC transition matrix `P(x, y)`.
    pub fn emc(&self) -> Matrix {
        match self {
            Kernel::Discrete(d) => d.emc(),
            Kernel::Continuous(c) => c.p().clone(),
        }
    }

    /// Kernel density `q_x(y, t)`. For discrete kernels `t` must be an integer
    /// sojourn; non-integer or out-of-range values have density zero.
    pub fn density(&self, x: usize, y: usize, t: f64) -> f64 {
        match self {
            Kernel::Discrete(d) => match discrete_sojourn(t) {
                Some(k) if k <= d.k_max() => d.q(x, y, k),
                _ => 0.0,
            },
            Kernel::Continuous(c) => c.density(x, y, t),
        }
    }

    pub fn as_discrete(&self) -> Option<&DiscreteSmk> {
        match self {
            Kernel::Discrete(d) => Some(d),
            Kernel::Continuous(_) => None,
        }
    }

    pub fn as_continuous(&self) -> Option<&ContinuousSmk> {
        match self {
            Kernel::Continuous(c) => Some(c),
            Kernel::Discrete(_) => None,
        }
    }

    /// Checks that two kernels live on the same states, kind and grid.
    pub fn check_comparable(&self, other: &Kernel) -> Result<()> {
        if self.states().size() != other.states().size() {
            return Err(Error::Mismatch(format!(
                "state spaces differ in size ({} vs {})",
                self.size(),
                other.size()
            )));
        }
        match (self, other) {
            (Kernel::Discrete(a), Kernel::Discrete(b)) if a.k_max() != b.k_max() => Err(
                Error::Mismatch(format!("k_max differs ({} vs {})", a.k_max(), b.k_max())),
            ),
            (Kernel::Discrete(_), Kernel::Discrete(_))
            | (Kernel::Continuous(_), Kernel::Continuous(_)) => Ok(()),
            _ => Err(Error::Mismatch("discrete and continuous kernels mixed".into())),
        }
    }
}

impl From<DiscreteSmk> for Kernel {
    fn from(d: DiscreteSmk) -> Self {
        Kernel::Discrete(d)
    }
}

impl From<ContinuousSmk> for Kernel {
    fn from(c: ContinuousSmk) -> Self {
        Kernel::Continuous(c)
    }
}

/// Interprets a sojourn value as a positive integer step count.
pub fn discrete_sojourn(t: f64) -> Option<usize> {
    if t >= 1.0 && t.fract() == 0.0 && t < 9.0e15 {
        Some(t as usize)
    } else {
        None
    }
}
