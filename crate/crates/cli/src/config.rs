//! TOML documents for net alternatives and power-study grids.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use semimarkov::hypothesis::{ball_probes, Alternative, StudyCell, TestParams, TestPlan};
use semimarkov::kernel::{io, minorization};
use semimarkov::metrics::{covering_net, KernelFamily, Shell};
use semimarkov::{Error, Kernel, Matrix, Result};

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn matrix(rows: &[Vec<f64>]) -> Result<Matrix> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(Error::Parse("routing must be a non-empty square matrix".into()));
    }
    Ok(Matrix::from_fn(n, n, |i, j| rows[i][j]))
}

#[derive(Debug, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase", deny_unknown_fields)]
enum FamilyConfig {
    Geometric {
        routing: Vec<Vec<f64>>,
        k_max: usize,
        stays: Vec<f64>,
    },
    Weibull {
        routing: Vec<Vec<f64>>,
        k_max: usize,
        shapes: Vec<f64>,
        scales: Vec<f64>,
    },
}

/// Net alternative: a parametric grid, a `d_{ν*}` shell around the null and
/// the `d_{η*}` covering radius.
#[derive(Debug, Deserialize)]
pub struct NetConfig {
    #[serde(flatten)]
    family: FamilyConfig,
    #[serde(default)]
    inner: f64,
    outer: f64,
    net_radius: f64,
}

impl NetConfig {
    pub fn load(path: &Path) -> Result<Self> {
        toml::from_str(&read(path)?).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
    }

    /// Covering net around `q0`, with `ν*`, `η*` taken from `q0` at `(k, l)`.
    pub fn build(&self, q0: &Kernel, k: usize, l: usize) -> Result<Alternative> {
        let family = match &self.family {
            FamilyConfig::Geometric { routing, k_max, stays } => KernelFamily::geometric(&matrix(routing)?, stays, *k_max)?,
            FamilyConfig::Weibull { routing, k_max, shapes, scales } => {
                KernelFamily::discrete_weibull(&matrix(routing)?, shapes, scales, *k_max)?
            }
        };
        let m = minorization(&q0.emc(), k, l)?;
        let shell = Shell { inner: self.inner, outer: self.outer };
        let net = covering_net(q0, shell, self.net_radius, &family, &m.nu_star, &m.eta_star)?;
        if net.cardinality() == 0 {
            return Err(Error::InvalidParameter("no family point falls in the shell".into()));
        }
        Ok(Alternative::Net(net))
    }
}

#[derive(Debug, Deserialize, Clone, Copy, PartialEq, Default)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    #[default]
    Ball,
    Simple,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CellConfig {
    null: PathBuf,
    alternative: PathBuf,
    #[serde(default)]
    variant: Variant,
    lambda: Option<f64>,
    xi: Option<f64>,
    epsilon: Option<f64>,
    #[serde(default = "one")]
    k: usize,
    #[serde(default = "one")]
    l: usize,
    n: Vec<usize>,
    #[serde(default = "twenty")]
    probes: usize,
}

fn one() -> usize {
    1
}

fn twenty() -> usize {
    20
}

/// Power-study grid: shared replication count and seed, and a list of cells.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub replications: usize,
    pub seed: Option<u64>,
    cells: Vec<CellConfig>,
    #[serde(skip)]
    base: PathBuf,
}

impl GridConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let mut g: GridConfig = toml::from_str(&read(path)?).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        if g.cells.is_empty() {
            return Err(Error::Parse("grid has no cells".into()));
        }
        g.base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(g)
    }

    /// Expands every cell over its `n` list. Ball cells are probed at
    /// `probes` points of the `d_{η*}` ball; simple cells at the alternative.
    pub fn study_cells(&self, seed: u64) -> Result<Vec<StudyCell>> {
        let mut out = Vec::new();
        for (i, c) in self.cells.iter().enumerate() {
            let (q0, _) = io::load(&self.base.join(&c.null))?;
            let (q1, _) = io::load(&self.base.join(&c.alternative))?;
            let alt = match c.variant {
                Variant::Ball => Alternative::Ball(q1.clone()),
                Variant::Simple => Alternative::Simple(q1.clone()),
            };
            let plan = plan_with_default_epsilon(q0, alt, c.lambda, c.xi, c.epsilon, c.k, c.l, seed)?;
            let probes = match c.variant {
                Variant::Ball => ball_probes(&q1, &plan.minorization.eta_star, plan.ball_radius(), c.probes, seed ^ i as u64)?,
                Variant::Simple => vec![q1],
            };
            if c.n.is_empty() {
                return Err(Error::Parse(format!("cell {i} has an empty n list")));
            }
            for &n in &c.n {
                out.push(StudyCell { plan: plan.clone(), n, probes: probes.clone() });
            }
        }
        Ok(out)
    }
}

/// Builds a plan; an unset ε defaults to the smallest `d_{ν*}` separation.
#[allow(clippy::too_many_arguments)]
pub fn plan_with_default_epsilon(
    q0: Kernel,
    alt: Alternative,
    lambda: Option<f64>,
    xi: Option<f64>,
    epsilon: Option<f64>,
    k: usize,
    l: usize,
    seed: u64,
) -> Result<TestPlan> {
    let mut params = TestParams::with_defaults(epsilon.unwrap_or(f64::MIN_POSITIVE), k, l);
    if let Some(lambda) = lambda {
        params.lambda = lambda;
        params.xi = semimarkov::hypothesis::largest_feasible_xi(lambda).unwrap_or(params.xi);
    }
    if let Some(xi) = xi {
        params.xi = xi;
    }
    let plan = TestPlan::new(q0, alt, params, seed)?;
    if epsilon.is_some() {
        return Ok(plan);
    }
    let eps = plan.separations.iter().copied().fold(f64::INFINITY, f64::min);
    if !(eps > 0.0) {
        return Err(Error::NotSeparated { distance: 0.0, epsilon: 0.0 });
    }
    params.epsilon = eps;
    TestPlan::new(plan.q0, plan.alternative, params, seed)
}
