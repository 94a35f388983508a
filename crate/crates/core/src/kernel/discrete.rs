use super::{Matrix, StateSpace, ROW_TOL};
use crate::error::{Error, Result};

/// Discrete-time kernel `q[x][y][k] = P(J₊ = y, X₊ = k | J = x)` on
/// `k ∈ {1..k_max}`.
///
/// Each row `x` is stored as a flat slice of `|E|·k_max` cells indexed by
/// `y·k_max + (k - 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteSmk {
    states: StateSpace,
    k_max: usize,
    q: Vec<f64>,
}

impl DiscreteSmk {
    /// Builds a kernel from a flat `[x][y][k]` table, validating every row.
    pub fn new(states: StateSpace, k_max: usize, q: Vec<f64>) -> Result<Self> {
        let smk = Self::from_table_unchecked(states, k_max, q)?;
        smk.validate()?;
        Ok(smk)
    }

    /// Builds a kernel from nested `q[x][y][k-1]`.
    pub fn from_nested(states: StateSpace, q: &[Vec<Vec<f64>>]) -> Result<Self> {
        let e = states.size();
        if q.len() != e || q.iter().any(|r| r.len() != e) {
            return Err(Error::InvalidKernel("table shape does not match the state space".into()));
        }
        let k_max = q[0][0].len();
        if q.iter().flatten().any(|c| c.len() != k_max) {
            return Err(Error::InvalidKernel("ragged sojourn axis".into()));
        }
        let flat = q.iter().flatten().flatten().copied().collect();
        Self::new(states, k_max, flat)
    }

    /// `q[x][y][k] = routing(x, y) · sojourn[x][k-1]`.
    pub fn from_routing(states: StateSpace, routing: &Matrix, sojourn: &[Vec<f64>]) -> Result<Self> {
        let e = states.size();
        if routing.nrows() != e || routing.ncols() != e || sojourn.len() != e {
            return Err(Error::InvalidKernel("routing/sojourn shape mismatch".into()));
        }
        let k_max = sojourn[0].len();
        if k_max == 0 || sojourn.iter().any(|s| s.len() != k_max) {
            return Err(Error::InvalidKernel("sojourn tables must share k_max >= 1".into()));
        }
        let mut q = Vec::with_capacity(e * e * k_max);
        for x in 0..e {
            for y in 0..e {
                q.extend(sojourn[x].iter().map(|&s| routing[(x, y)] * s));
            }
        }
        Self::new(states, k_max, q)
    }

    pub(crate) fn from_table_unchecked(states: StateSpace, k_max: usize, q: Vec<f64>) -> Result<Self> {
        let e = states.size();
        if k_max == 0 {
            return Err(Error::InvalidKernel("k_max must be positive".into()));
        }
        if q.len() != e * e * k_max {
            return Err(Error::InvalidKernel(format!(
                "expected {} cells, got {}",
                e * e * k_max,
                q.len()
            )));
        }
        Ok(DiscreteSmk { states, k_max, q })
    }

    fn validate(&self) -> Result<()> {
        if let Some((i, v)) = self
            .q
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(Error::InvalidKernel(format!("cell {i} = {v} outside [0,1]")));
        }
        for x in 0..self.size() {
            let s: f64 = self.row(x).iter().sum();
            if (s - 1.0).abs() > ROW_TOL {
                return Err(Error::InvalidKernel(format!(
                    "row {x} sums to {s:.17} (tolerance {ROW_TOL:e})"
                )));
            }
        }
        Ok(())
    }

    pub fn states(&self) -> &StateSpace {
        &self.states
    }

    pub fn size(&self) -> usize {
        self.states.size()
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    /// Number of `(y, k)` cells per row.
    pub fn cells_per_row(&self) -> usize {
        self.size() * self.k_max
    }

    pub fn cell(&self, y: usize, k: usize) -> usize {
        y * self.k_max + (k - 1)
    }

    /// Inverse of [`cell`](Self::cell): `(y, k)` with `k` one-based.
    pub fn cell_coords(&self, cell: usize) -> (usize, usize) {
        (cell / self.k_max, cell % self.k_max + 1)
    }

    /// `q[x][y][k]` with `k` one-based.
    pub fn q(&self, x: usize, y: usize, k: usize) -> f64 {
        self.q[x * self.cells_per_row() + self.cell(y, k)]
    }

    pub fn row(&self, x: usize) -> &[f64] {
        let w = self.cells_per_row();
        &self.q[x * w..(x + 1) * w]
    }

    pub fn table(&self) -> &[f64] {
        &self.q
    }

    /// `P(x, y) = Σ_k q[x][y][k]`.
    pub fn emc(&self) -> Matrix {
        let e = self.size();
        Matrix::from_fn(e, e, |x, y| {
            let start = x * self.cells_per_row() + y * self.k_max;
            self.q[start..start + self.k_max].iter().sum()
        })
    }

    /// Sojourn law in `x`, marginalised over the destination.
    pub fn sojourn_marginal(&self, x: usize) -> Vec<f64> {
        let mut m = vec![0.0; self.k_max];
        for y in 0..self.size() {
            for (k, v) in m.iter_mut().enumerate() {
                *v += self.q(x, y, k + 1);
            }
        }
        m
    }
}
