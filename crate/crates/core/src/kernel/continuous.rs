use rand::Rng;

use super::{Matrix, StateSpace, ROW_TOL};
use crate::error::{Error, Result};
use crate::quadrature::integrate_positive;
use crate::sojourn::SojournFamily;

/// Absolute tolerance for per-pair density integrals.
pub const PAIR_QUAD_TOL: f64 = 1e-10;

/// Unnormalised density of `(y, t)` for a fixed origin `x`.
#[derive(Debug, Clone, PartialEq)]
pub enum PairDensity {
    /// `weight · f(t)`.
    Scaled { weight: f64, family: SojournFamily },
    /// `(a·√left(t) + b·√right(t))²`, with `mass` its integral over `t > 0`.
    SqrtBlend {
        a: f64,
        left: Box<PairDensity>,
        b: f64,
        right: Box<PairDensity>,
        mass: f64,
    },
}

impl PairDensity {
    pub fn blend(a: f64, left: PairDensity, b: f64, right: PairDensity) -> Self {
        let t_cut = left.t_cut().max(right.t_cut());
        let mass = integrate_positive(
            |t| {
                let s = a * left.eval(t).sqrt() + b * right.eval(t).sqrt();
                s * s
            },
            t_cut,
            PAIR_QUAD_TOL,
        )
        .value;
        PairDensity::SqrtBlend {
            a,
            left: Box::new(left),
            b,
            right: Box::new(right),
            mass,
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            PairDensity::Scaled { weight, family } => weight * family.pdf(t),
            PairDensity::SqrtBlend { a, left, b, right, .. } => {
                let s = a * left.eval(t).sqrt() + b * right.eval(t).sqrt();
                s * s
            }
        }
    }

    pub fn mass(&self) -> f64 {
        match self {
            PairDensity::Scaled { weight, .. } => *weight,
            PairDensity::SqrtBlend { mass, .. } => *mass,
        }
    }

    pub fn t_cut(&self) -> f64 {
        match self {
            PairDensity::Scaled { family, .. } => family.t_cut(),
            PairDensity::SqrtBlend { left, right, .. } => left.t_cut().max(right.t_cut()),
        }
    }

    /// Draws a sojourn from the normalised density.
    ///
    /// Parametric pairs use one uniform through the inverse CDF. Blends use
    /// rejection from the mixture `2(a²·left + b²·right)`, which dominates
    /// `(a√left + b√right)²`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            PairDensity::Scaled { family, .. } => family.quantile(rng.random::<f64>()),
            PairDensity::SqrtBlend { a, left, b, right, .. } => {
                let wl = a * a * left.mass();
                let wr = b * b * right.mass();
                loop {
                    let t = if rng.random::<f64>() * (wl + wr) < wl {
                        left.sample(rng)
                    } else {
                        right.sample(rng)
                    };
                    let l = left.eval(t);
                    let r = right.eval(t);
                    let env = 2.0 * (a * a * l + b * b * r);
                    let u: f64 = rng.random();
                    if env > 0.0 {
                        let s = a * l.sqrt() + b * r.sqrt();
                        if u * env <= s * s {
                            return t;
                        }
                    }
                }
            }
        }
    }
}

/// Continuous-time kernel `q_x(y, t)` with per-pair densities.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousSmk {
    states: StateSpace,
    p: Matrix,
    pairs: Vec<Option<PairDensity>>,
}

impl ContinuousSmk {
    /// `q_x(y, t) = p(x, y) · f_xy(t)`; `families[x][y]` may be `None` only
    /// where `p(x, y) = 0`.
    pub fn new(states: StateSpace, p: Matrix, families: Vec<Vec<Option<SojournFamily>>>) -> Result<Self> {
        let e = states.size();
        if p.nrows() != e || p.ncols() != e || families.len() != e || families.iter().any(|r| r.len() != e) {
            return Err(Error::InvalidKernel("matrix/family shape does not match the state space".into()));
        }
        if !super::is_row_stochastic(&p, ROW_TOL) {
            return Err(Error::InvalidKernel("p is not row-stochastic within 1e-12".into()));
        }
        let mut pairs = Vec::with_capacity(e * e);
        for (x, row) in families.into_iter().enumerate() {
            for (y, fam) in row.into_iter().enumerate() {
                let w = p[(x, y)];
                match fam {
                    Some(f) => {
                        f.validate()?;
                        pairs.push((w > 0.0).then_some(PairDensity::Scaled { weight: w, family: f }));
                    }
                    None if w > 0.0 => {
                        return Err(Error::InvalidKernel(format!(
                            "p({x},{y}) = {w} > 0 but no sojourn family given"
                        )))
                    }
                    None => pairs.push(None),
                }
            }
        }
        let smk = ContinuousSmk { states, p, pairs };
        for x in 0..e {
            for y in 0..e {
                if let Some(pd) = smk.pair(x, y) {
                    let m = integrate_positive(|t| pd.eval(t), pd.t_cut(), PAIR_QUAD_TOL).value;
                    if (m - pd.mass()).abs() > 1e-8 {
                        return Err(Error::InvalidKernel(format!(
                            "q_{x}({y}, .) integrates to {m}, expected {}",
                            pd.mass()
                        )));
                    }
                }
            }
        }
        Ok(smk)
    }

    /// Builds a kernel from arbitrary pair densities; `p` is read off their masses.
    pub(crate) fn from_pairs(states: StateSpace, pairs: Vec<Option<PairDensity>>) -> Self {
        let e = states.size();
        let p = Matrix::from_fn(e, e, |x, y| pairs[x * e + y].as_ref().map_or(0.0, PairDensity::mass));
        ContinuousSmk { states, p, pairs }
    }

    pub fn states(&self) -> &StateSpace {
        &self.states
    }

    pub fn size(&self) -> usize {
        self.states.size()
    }

    pub fn p(&self) -> &Matrix {
        &self.p
    }

    pub fn pair(&self, x: usize, y: usize) -> Option<&PairDensity> {
        self.pairs[x * self.size() + y].as_ref()
    }

    /// Sojourn family of a parametric pair, if it is one.
    pub fn family(&self, x: usize, y: usize) -> Option<SojournFamily> {
        match self.pair(x, y) {
            Some(PairDensity::Scaled { family, .. }) => Some(*family),
            _ => None,
        }
    }

    pub fn density(&self, x: usize, y: usize, t: f64) -> f64 {
        self.pair(x, y).map_or(0.0, |pd| pd.eval(t))
    }

    /// Integration cut-off covering every pair leaving `x`.
    pub fn t_cut(&self, x: usize) -> f64 {
        (0..self.size())
            .filter_map(|y| self.pair(x, y).map(PairDensity::t_cut))
            .fold(0.0, f64::max)
    }
}
