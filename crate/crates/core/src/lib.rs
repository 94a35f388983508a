//! Finite-state semi-Markov processes: kernel algebra and stationary
//! measures, Hellinger-metric hypothesis tests with exponentially small
//! errors, Markov-versus-semi-Markov testing, and posterior concentration
//! studies under a conjugate Dirichlet prior.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::too_many_arguments)]

pub mod bayes;
pub mod error;
pub mod hypothesis;
pub mod kernel;
pub mod metrics;
pub mod quadrature;
pub mod rng;
pub mod simulate;
pub mod sojourn;
pub mod stats;
pub mod verify;

pub use error::{Error, Result};
pub use kernel::{DiscreteSmk, ContinuousSmk, Kernel, Matrix, StateSpace};
