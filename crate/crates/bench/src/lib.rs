//! Fixtures shared by the benchmarks.

use semimarkov::kernel::{embed_markov_discrete, Matrix};
use semimarkov::rng::substream;
use semimarkov::verify::random_irreducible_kernel;
use semimarkov::Kernel;

/// Two-state geometric-sojourn kernel with stay probability `stay`.
pub fn geometric(stay: f64, k_max: usize) -> Kernel {
    let p = Matrix::from_row_slice(2, 2, &[stay, 1.0 - stay, 1.0 - stay, stay]);
    embed_markov_discrete(&p, k_max).expect("valid chain").into()
}

/// Reproducible random irreducible kernel.
pub fn random(seed: u64, states: usize, k_max: usize) -> Kernel {
    random_irreducible_kernel(&mut substream(seed, "bench", 0), states, k_max, 0.2).into()
}
