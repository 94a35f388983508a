use super::{stationary_emc, Kernel};
use crate::error::{Error, Result};
use crate::quadrature::integrate_positive;

const STATIONARY_TOL: f64 = 1e-10;

/// `ρ` for the EMC and `ρ̃(y, ·) = Σ_x ρ(x) q_x(y, ·)` for the pair chain `(J, X)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryPair {
    pub rho: Vec<f64>,
    /// Cell masses `ρ̃(y, k)` indexed `y·k_max + k - 1`; `None` for
    /// continuous kernels, whose density is evaluated on demand.
    pub rho_tilde_cells: Option<Vec<f64>>,
    pub total_mass: f64,
    /// Max discrepancy between `ρ̃Q` and `ρ̃`.
    pub invariance_residual: f64,
}

impl StationaryPair {
    /// Density (discrete: cell mass) of `ρ̃` at `(y, t)`.
    pub fn density(&self, kernel: &Kernel, y: usize, t: f64) -> f64 {
        match (&self.rho_tilde_cells, kernel) {
            (Some(cells), Kernel::Discrete(d)) => match super::discrete_sojourn(t) {
                Some(k) if k <= d.k_max() => cells[d.cell(y, k)],
                _ => 0.0,
            },
            _ => self
                .rho
                .iter()
                .enumerate()
                .map(|(x, r)| r * kernel.density(x, y, t))
                .sum(),
        }
    }
}

/// Builds `ρ̃` from a stationary `ρ` and checks invariance and total mass.
pub fn stationary_pair(kernel: &Kernel, rho: &[f64]) -> Result<StationaryPair> {
    let p = kernel.emc();
    let e = kernel.size();
    if rho.len() != e {
        return Err(Error::Mismatch(format!("rho has {} entries, expected {e}", rho.len())));
    }
    let rho_p: Vec<f64> = (0..e).map(|y| (0..e).map(|x| rho[x] * p[(x, y)]).sum()).collect();
    let residual = rho_p
        .iter()
        .zip(rho)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    if residual > STATIONARY_TOL || (rho.iter().sum::<f64>() - 1.0).abs() > STATIONARY_TOL {
        return Err(Error::NotStationary(residual));
    }
    let out = match kernel {
        Kernel::Discrete(d) => {
            let w = d.cells_per_row();
            let mut cells = vec![0.0; w];
            for (x, r) in rho.iter().enumerate() {
                for (c, q) in cells.iter_mut().zip(d.row(x)) {
                    *c += r * q;
                }
            }
            // (ρ̃Q)(a, k) = Σ_{y,s} ρ̃(y, s) q_y(a, k)
            let mut image = vec![0.0; w];
            for y in 0..e {
                let mass_y: f64 = cells[y * d.k_max()..(y + 1) * d.k_max()].iter().sum();
                for (c, q) in image.iter_mut().zip(d.row(y)) {
                    *c += mass_y * q;
                }
            }
            let invariance_residual = image
                .iter()
                .zip(&cells)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            StationaryPair {
                rho: rho.to_vec(),
                total_mass: cells.iter().sum(),
                rho_tilde_cells: Some(cells),
                invariance_residual,
            }
        }
        Kernel::Continuous(c) => {
            // ρ̃(y, R+) by quadrature; ρ̃Q weights the rows of q by those masses,
            // so invariance reduces to comparing them with ρ pairwise.
            let mut invariance_residual: f64 = 0.0;
            let mut total = 0.0;
            for y in 0..e {
                let t_cut = (0..e).map(|x| c.t_cut(x)).fold(0.0, f64::max);
                let mass_y = integrate_positive(
                    |t| (0..e).map(|x| rho[x] * c.density(x, y, t)).sum(),
                    t_cut.max(1e-12),
                    1e-12,
                )
                .value;
                total += mass_y;
                for a in 0..e {
                    invariance_residual =
                        invariance_residual.max(((mass_y - rho[y]) * p[(y, a)]).abs());
                }
            }
            StationaryPair {
                rho: rho.to_vec(),
                rho_tilde_cells: None,
                total_mass: total,
                invariance_residual,
            }
        }
    };
    if out.invariance_residual > STATIONARY_TOL || (out.total_mass - 1.0).abs() > STATIONARY_TOL {
        return Err(Error::NotStationary(out.invariance_residual.max((out.total_mass - 1.0).abs())));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeanSojourn {
    pub per_state: Vec<f64>,
    /// `Σ_x ρ(x) m(x)`, absent when the EMC is reducible.
    pub stationary_mean: Option<f64>,
}

pub fn mean_sojourn(kernel: &Kernel) -> MeanSojourn {
    let e = kernel.size();
    let per_state: Vec<f64> = match kernel {
        Kernel::Discrete(d) => (0..e)
            .map(|x| {
                d.sojourn_marginal(x)
                    .iter()
                    .enumerate()
                    .map(|(i, p)| (i + 1) as f64 * p)
                    .sum()
            })
            .collect(),
        Kernel::Continuous(c) => (0..e)
            .map(|x| {
                integrate_positive(
                    |t| t * (0..e).map(|y| c.density(x, y, t)).sum::<f64>(),
                    c.t_cut(x),
                    1e-10,
                )
                .value
            })
            .collect(),
    };
    let stationary_mean = stationary_emc(&kernel.emc())
        .ok()
        .map(|rho| rho.iter().zip(&per_state).map(|(r, m)| r * m).sum());
    MeanSojourn { per_state, stationary_mean }
}
