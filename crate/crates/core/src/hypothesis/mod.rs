//! Robust tests between semi-Markov kernels.
//!
//! The statistic `T = Σ_i log Φ_{J_{τ_i−1}}(J_{τ_i}, X_{τ_i})` reads one
//! randomly placed transition per block of `κ` jumps, and the test rejects the
//! null iff `T > 0`. The ball variant uses `Φ = √(q2/q0)` with `q2` the
//! least-favorable interpolation toward the alternative; the simple variant
//! uses `Φ = √(q1/q0)`.

mod study;

pub use study::{ball_probes, error_study, ErrorStudy, ErrorStudyRow, SkippedCell, StudyCell};

use rand::Rng;

use crate::error::{Error, Result};
use crate::kernel::{minorization, Kernel, MinorizationConstants, Matrix};
use crate::metrics::{hellinger_sq, least_favorable, CoveringNet};
use crate::rng::{fnv1a64, substream};
use crate::simulate::Trajectory;

/// `ι = π²/16`.
pub const IOTA: f64 = std::f64::consts::PI * std::f64::consts::PI / 16.0;

/// `K(λ) = ((1−3λ)/(1−λ))(1−ι) − 8((1−λ)/λ)ξ²`.
pub fn k_lambda(lambda: f64, xi: f64) -> f64 {
    (1.0 - 3.0 * lambda) / (1.0 - lambda) * (1.0 - IOTA) - 8.0 * (1.0 - lambda) / lambda * xi * xi
}

/// Largest `ξ ∈ {0.01, 0.02, …, 0.99}` with `K(λ) > 0`.
pub fn largest_feasible_xi(lambda: f64) -> Option<f64> {
    (1..100).rev().map(|i| i as f64 / 100.0).find(|&xi| k_lambda(lambda, xi) > 0.0)
}

pub const DEFAULT_LAMBDA: f64 = 0.1;

/// Relative slack in the separation check `d_{ν*}(q0, q1) ≥ ε`.
pub const SEPARATION_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestParams {
    pub lambda: f64,
    pub xi: f64,
    pub epsilon: f64,
    pub k: usize,
    pub l: usize,
}

impl TestParams {
    /// `λ = 0.1`, the largest feasible grid `ξ`, and the given `ε, k, l`.
    pub fn with_defaults(epsilon: f64, k: usize, l: usize) -> Self {
        TestParams {
            lambda: DEFAULT_LAMBDA,
            xi: largest_feasible_xi(DEFAULT_LAMBDA).expect("a feasible xi exists at lambda = 0.1"),
            epsilon,
            k,
            l,
        }
    }
}

#[derive(Debug, Clone)]
pub enum Alternative {
    Simple(Kernel),
    /// Ball of radius `ξε` in `d_{η*}` around the center.
    Ball(Kernel),
    Net(CoveringNet),
}

impl Alternative {
    fn centers(&self) -> Vec<&Kernel> {
        match self {
            Alternative::Simple(k) | Alternative::Ball(k) => vec![k],
            Alternative::Net(net) => net.points().map(|p| &p.kernel).collect(),
        }
    }
}

/// A validated test: null, alternative, constants and the kernels entering `Φ`.
#[derive(Debug, Clone)]
pub struct TestPlan {
    pub q0: Kernel,
    pub alternative: Alternative,
    pub params: TestParams,
    /// Block length: `k + l`, or `k + 1` for the simple variant.
    pub kappa: usize,
    /// Offset inside each block (`l`, or 1 for the simple variant).
    pub offset: usize,
    /// `ν*` is the pointwise minimum and `η*` the pointwise maximum of the
    /// constants of every EMC in the plan.
    pub minorization: MinorizationConstants,
    /// `d_{ν*}(q0, ·)` for each alternative center.
    pub separations: Vec<f64>,
    /// Numerator kernels of `Φ`, one per alternative center.
    pub test_kernels: Vec<Kernel>,
    pub digests: Vec<u64>,
    pub seed: u64,
}

fn digest(kernel: &Kernel) -> u64 {
    let mut bytes = Vec::new();
    match kernel {
        Kernel::Discrete(d) => d.table().iter().for_each(|v| bytes.extend(v.to_bits().to_le_bytes())),
        Kernel::Continuous(c) => {
            let e = c.size();
            for x in 0..e {
                let t_cut = c.t_cut(x);
                for y in 0..e {
                    bytes.extend(c.p()[(x, y)].to_bits().to_le_bytes());
                    for i in 1..=16 {
                        let v = c.density(x, y, t_cut * i as f64 / 16.0);
                        bytes.extend(v.to_bits().to_le_bytes());
                    }
                }
            }
        }
    }
    fnv1a64(&bytes)
}

fn joint_minorization(kernels: &[&Kernel], k: usize, l: usize) -> Result<MinorizationConstants> {
    let mut out: Option<MinorizationConstants> = None;
    for kern in kernels {
        let m = minorization(&kern.emc(), k, l)?;
        out = Some(match out {
            None => m,
            Some(mut acc) => {
                for (a, b) in acc.nu_star.iter_mut().zip(&m.nu_star) {
                    *a = a.min(*b);
                }
                for (a, b) in acc.eta_star.iter_mut().zip(&m.eta_star) {
                    *a = a.max(*b);
                }
                acc.uniform_constant = acc.uniform_constant.min(m.uniform_constant);
                acc
            }
        });
    }
    let mut m = out.expect("at least one kernel");
    m.nu_mass = m.nu_star.iter().sum();
    m.eta_mass = m.eta_star.iter().sum();
    m.vacuous = m.nu_mass <= 0.0;
    Ok(m)
}

impl TestPlan {
    pub fn new(q0: Kernel, alternative: Alternative, params: TestParams, seed: u64) -> Result<Self> {
        let TestParams { lambda, xi, epsilon, k, l } = params;
        if !(lambda > 0.0 && lambda < 0.25) {
            return Err(Error::InvalidParameter(format!("lambda = {lambda} must lie in (0, 1/4)")));
        }
        if !(xi > 0.0 && xi < 1.0) {
            return Err(Error::InvalidParameter(format!("xi = {xi} must lie in (0, 1)")));
        }
        if !(epsilon > 0.0) {
            return Err(Error::InvalidParameter(format!("epsilon = {epsilon} must be positive")));
        }
        if k == 0 || l == 0 {
            return Err(Error::InvalidParameter("k and l must be positive".into()));
        }
        let simple = matches!(alternative, Alternative::Simple(_));
        if !simple && k_lambda(lambda, xi) <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "K(lambda) = {} <= 0 at lambda = {lambda}, xi = {xi}",
                k_lambda(lambda, xi)
            )));
        }
        let centers = alternative.centers();
        if centers.is_empty() {
            return Err(Error::InvalidParameter("alternative net is empty".into()));
        }
        let (kappa, offset) = if simple { (k + 1, 1) } else { (k + l, l) };
        let mut all: Vec<&Kernel> = vec![&q0];
        all.extend(centers.iter().copied());
        let minor = joint_minorization(&all, k, offset)?;
        if minor.vacuous {
            return Err(Error::InvalidParameter(format!(
                "nu* has zero mass at k = {k}; increase k"
            )));
        }
        let mut separations = Vec::with_capacity(centers.len());
        let mut test_kernels = Vec::with_capacity(centers.len());
        for c in &centers {
            q0.check_comparable(c)?;
            let d = hellinger_sq(&q0, c)?.weighted(&minor.nu_star).sqrt();
            if d < epsilon * (1.0 - SEPARATION_RTOL) {
                return Err(Error::NotSeparated { distance: d, epsilon });
            }
            separations.push(d);
            test_kernels.push(if simple {
                (*c).clone()
            } else {
                least_favorable(&q0, c, lambda)?.q2
            });
        }
        let digests = test_kernels.iter().map(digest).collect();
        Ok(TestPlan {
            q0,
            alternative,
            params,
            kappa,
            offset,
            minorization: minor,
            separations,
            test_kernels,
            digests,
            seed,
        })
    }

    /// `K = (1−λ)²/κ`.
    pub fn k_type_one(&self) -> f64 {
        (1.0 - self.params.lambda).powi(2) / self.kappa as f64
    }

    /// `K̃ = K(λ)/κ` (ball and net), or `K` for the simple variant.
    pub fn k_type_two(&self) -> f64 {
        match self.alternative {
            Alternative::Simple(_) => self.k_type_one(),
            _ => k_lambda(self.params.lambda, self.params.xi) / self.kappa as f64,
        }
    }

    /// `exp(−Knε²)`, times the number of constituent tests for a net.
    pub fn type_one_bound(&self, n: usize) -> f64 {
        let e = self.params.epsilon;
        self.test_kernels.len() as f64 * (-self.k_type_one() * n as f64 * e * e).exp()
    }

    /// `exp(−K̃nε²)`.
    pub fn type_two_bound(&self, n: usize) -> f64 {
        let e = self.params.epsilon;
        (-self.k_type_two() * n as f64 * e * e).exp()
    }

    /// Radius `ξε` of the alternative ball in `d_{η*}`.
    pub fn ball_radius(&self) -> f64 {
        self.params.xi * self.params.epsilon
    }
}

/// The two readings of the aggregated type-I bound, `exp(−K n ε² M²/4)` and
/// `exp(−K n ε² M/4)`.
pub fn aggregate_type_one_bounds(k: f64, n: usize, eps_n: f64, m: f64) -> (f64, f64) {
    let base = k * n as f64 * eps_n * eps_n;
    ((-base * m * m / 4.0).exp(), (-base * m / 4.0).exp())
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockIndices {
    pub n_blocks: usize,
    pub tau: Vec<usize>,
}

/// `τ_i = κ(i−1) + offset + Y_i` with `Y_i` uniform on `{1..k}`.
pub fn draw_blocks<R: Rng + ?Sized>(n: usize, k: usize, offset: usize, rng: &mut R) -> Result<BlockIndices> {
    let kappa = k + offset;
    if k == 0 || offset == 0 {
        return Err(Error::InvalidParameter("k and l must be positive".into()));
    }
    if n < kappa {
        return Err(Error::TrajectoryTooShort { n, kappa });
    }
    let n_blocks = n / kappa;
    let tau = (0..n_blocks)
        .map(|i| kappa * i + offset + rng.random_range(1..=k))
        .collect();
    Ok(BlockIndices { n_blocks, tau })
}

/// Block indices from the `"tau"` substream of `seed`.
pub fn draw_block_indices(n: usize, k: usize, l: usize, seed: u64) -> Result<BlockIndices> {
    draw_blocks(n, k, l, &mut substream(seed, "tau", 0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Statistic {
    pub value: f64,
    /// First selected step where one of the two densities vanished.
    pub infinite_at: Option<usize>,
}

/// `Σ_i ½ log(q_test/q0)` over the selected transitions.
///
/// A step with `q0 = 0 < q_test` makes the statistic `+∞` (reject), one with
/// `q_test = 0 < q0` contributes `−∞` unless some step is `+∞`; a step where
/// both vanish is an error.
pub fn test_statistic(traj: &Trajectory, q0: &Kernel, q_test: &Kernel, tau: &[usize]) -> Result<Statistic> {
    let mut sum = 0.0;
    let mut plus = false;
    let mut minus = false;
    let mut infinite_at = None;
    for &t in tau {
        if t == 0 || t > traj.n() {
            return Err(Error::InvalidParameter(format!("tau = {t} outside 1..={}", traj.n())));
        }
        let (x, y, s) = traj.transition(t);
        let a = q_test.density(x, y, s);
        let b = q0.density(x, y, s);
        match (a > 0.0, b > 0.0) {
            (true, true) => sum += 0.5 * (a / b).ln(),
            (false, false) => return Err(Error::OffSupport { step: t }),
            (true, false) => plus = true,
            (false, true) => minus = true,
        }
        if !(a > 0.0 && b > 0.0) && infinite_at.is_none() {
            infinite_at = Some(t);
        }
    }
    let value = if plus {
        f64::INFINITY
    } else if minus {
        f64::NEG_INFINITY
    } else {
        sum
    };
    Ok(Statistic { value, infinite_at })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestOutcome {
    pub statistic: f64,
    pub reject_null: bool,
    pub tau_indices: Vec<usize>,
    pub n_blocks: usize,
    pub kappa: usize,
    /// Constituent that rejected first, for aggregated tests.
    pub rejecting_index: Option<usize>,
    /// Digest of the kernel used in `Φ` (the first rejecting one for nets).
    pub q2_digest: u64,
    pub infinite_at: Option<usize>,
}

/// Runs every constituent of `plan` on `traj` with shared indices `tau`.
pub fn evaluate(traj: &Trajectory, plan: &TestPlan, blocks: &BlockIndices) -> Result<TestOutcome> {
    let mut best: Option<(usize, Statistic)> = None;
    let mut rejecting = None;
    for (j, qt) in plan.test_kernels.iter().enumerate() {
        let s = test_statistic(traj, &plan.q0, qt, &blocks.tau)?;
        if s.value > 0.0 && rejecting.is_none() {
            rejecting = Some(j);
        }
        if best.as_ref().is_none_or(|(_, b)| s.value > b.value) {
            best = Some((j, s));
        }
    }
    let (j, s) = best.expect("plan has at least one test kernel");
    let shown = rejecting.unwrap_or(j);
    Ok(TestOutcome {
        statistic: s.value,
        reject_null: s.value > 0.0,
        tau_indices: blocks.tau.clone(),
        n_blocks: blocks.n_blocks,
        kappa: plan.kappa,
        rejecting_index: rejecting,
        q2_digest: plan.digests[shown],
        infinite_at: s.infinite_at,
    })
}

fn run(traj: &Trajectory, plan: &TestPlan) -> Result<TestOutcome> {
    let blocks = draw_blocks(traj.n(), plan.params.k, plan.offset, &mut substream(plan.seed, "tau", 0))?;
    evaluate(traj, plan, &blocks)
}

/// Ball alternative: `Φ = √(q2/q0)` with the least-favorable `q2`.
pub fn psi_ball(traj: &Trajectory, plan: &TestPlan) -> Result<TestOutcome> {
    if !matches!(plan.alternative, Alternative::Ball(_)) {
        return Err(Error::InvalidParameter("psi_ball needs a ball alternative".into()));
    }
    run(traj, plan)
}

/// Simple alternative: `Φ = √(q1/q0)`, `κ = k + 1`.
pub fn psi_simple(traj: &Trajectory, plan: &TestPlan) -> Result<TestOutcome> {
    if !matches!(plan.alternative, Alternative::Simple(_)) {
        return Err(Error::InvalidParameter("psi_simple needs a simple alternative".into()));
    }
    run(traj, plan)
}

/// Maximum of the ball tests centred at every net point, on shared indices.
pub fn psi_aggregate(traj: &Trajectory, plan: &TestPlan) -> Result<TestOutcome> {
    match &plan.alternative {
        Alternative::Net(net) if net.cardinality() > 0 => run(traj, plan),
        Alternative::Net(_) => Err(Error::InvalidParameter("covering net is empty".into())),
        _ => Err(Error::InvalidParameter("psi_aggregate needs a net alternative".into())),
    }
}

/// A Markov null written as a semi-Markov kernel.
#[derive(Debug, Clone)]
pub enum MarkovNull {
    Discrete { p_tilde: Matrix, k_max: usize },
    Continuous { generator: Matrix },
}

impl MarkovNull {
    pub fn embed(&self) -> Result<Kernel> {
        Ok(match self {
            MarkovNull::Discrete { p_tilde, k_max } => crate::kernel::embed_markov_discrete(p_tilde, *k_max)?.into(),
            MarkovNull::Continuous { generator } => crate::kernel::embed_markov_continuous(generator)?.into(),
        })
    }
}

/// Plan for testing a Markov null against a semi-Markov ball alternative.
pub fn markov_plan(null: &MarkovNull, alternative: Kernel, params: TestParams, seed: u64) -> Result<TestPlan> {
    let q0 = null.embed()?;
    TestPlan::new(q0, Alternative::Ball(alternative), params, seed)
}

pub fn markov_vs_semimarkov(
    traj: &Trajectory,
    null: &MarkovNull,
    alternative: Kernel,
    params: TestParams,
    seed: u64,
) -> Result<TestOutcome> {
    psi_ball(traj, &markov_plan(null, alternative, params, seed)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{embed_markov_discrete, DiscreteSmk, StateSpace};
    use crate::simulate::{sample_trajectory, Init};

    fn geometric(a: f64, b: f64) -> Kernel {
        let p = Matrix::from_row_slice(2, 2, &[a, 1.0 - a, 1.0 - b, b]);
        embed_markov_discrete(&p, 40).unwrap().into()
    }

    #[test]
    fn constants_at_default_lambda() {
        assert!((k_lambda(0.1, 0.0) - 0.7 / 0.9 * (1.0 - IOTA)).abs() < 1e-15);
        assert_eq!(largest_feasible_xi(0.1), Some(0.06));
        assert!((k_lambda(0.1, 0.06) - 0.038806).abs() < 1e-5);
        assert!(k_lambda(0.1, 0.07) < 0.0);
    }

    #[test]
    fn block_indices_by_hand() {
        let b = draw_block_indices(10, 2, 1, 5).unwrap();
        assert_eq!(b.n_blocks, 3);
        for (i, t) in b.tau.iter().enumerate() {
            assert!(*t == 3 * i + 2 || *t == 3 * i + 3);
        }
        let b = draw_block_indices(10, 1, 2, 5).unwrap();
        assert_eq!(b.tau, vec![3, 6, 9]);
        assert_eq!(
            draw_block_indices(2, 2, 1, 0).unwrap_err(),
            Error::TrajectoryTooShort { n: 2, kappa: 3 }
        );
        assert_eq!(draw_block_indices(50, 3, 1, 9).unwrap(), draw_block_indices(50, 3, 1, 9).unwrap());
    }

    #[test]
    fn statistic_of_null_against_itself_is_zero() {
        let q = geometric(0.2, 0.2);
        let t = sample_trajectory(&q, 100, &Init::Stationary, 1).unwrap();
        let b = draw_block_indices(100, 2, 1, 1).unwrap();
        assert_eq!(test_statistic(&t, &q, &q, &b.tau).unwrap().value, 0.0);
    }

    #[test]
    fn single_block_ratio_four() {
        let s = StateSpace::numbered(2).unwrap();
        let q0 = DiscreteSmk::new(s.clone(), 2, vec![0.0, 0.0, 0.2, 0.8, 0.5, 0.5, 0.0, 0.0]).unwrap();
        let q1 = DiscreteSmk::new(s.clone(), 2, vec![0.0, 0.0, 0.8, 0.2, 0.5, 0.5, 0.0, 0.0]).unwrap();
        let t = Trajectory::from_sojourns(s, vec![0, 1, 0, 1], vec![0.0, 1.0, 1.0, 1.0]).unwrap();
        let st = test_statistic(&t, &q0.into(), &q1.into(), &[3]).unwrap();
        assert!((st.value - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn infinite_and_off_support_steps() {
        let s = StateSpace::numbered(2).unwrap();
        let q0: Kernel = DiscreteSmk::new(s.clone(), 2, vec![0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0]).unwrap().into();
        let q1: Kernel = DiscreteSmk::new(s.clone(), 2, vec![0.0, 0.0, 0.5, 0.5, 1.0, 0.0, 0.0, 0.0]).unwrap().into();
        let t = Trajectory::from_sojourns(s.clone(), vec![0, 1, 0], vec![0.0, 2.0, 1.0]).unwrap();
        let st = test_statistic(&t, &q0, &q1, &[1]).unwrap();
        assert_eq!(st.value, f64::INFINITY);
        assert_eq!(st.infinite_at, Some(1));
        let t = Trajectory::from_sojourns(s, vec![0, 0], vec![0.0, 1.0]).unwrap();
        assert_eq!(test_statistic(&t, &q0, &q1, &[1]).unwrap_err(), Error::OffSupport { step: 1 });
    }

    #[test]
    fn plan_validation() {
        let (q0, q1) = (geometric(0.2, 0.2), geometric(0.6, 0.6));
        let p = TestParams::with_defaults(0.1, 2, 1);
        assert!(TestPlan::new(q0.clone(), Alternative::Ball(q1.clone()), p, 0).is_ok());
        // the swap chain needs k = 2 for a non-vacuous nu*
        let p1 = TestParams { k: 1, ..p };
        assert!(TestPlan::new(q0.clone(), Alternative::Ball(q1.clone()), p1, 0).is_err());
        let far = TestParams { epsilon: 5.0, ..p };
        assert!(matches!(
            TestPlan::new(q0.clone(), Alternative::Ball(q1.clone()), far, 0),
            Err(Error::NotSeparated { .. })
        ));
        let bad_xi = TestParams { xi: 0.07, ..p };
        assert!(TestPlan::new(q0.clone(), Alternative::Ball(q1.clone()), bad_xi, 0).is_err());
        assert!(TestPlan::new(q0.clone(), Alternative::Ball(q0.clone()), p, 0).is_err());
        let plan = TestPlan::new(q0, Alternative::Ball(q1), p, 0).unwrap();
        assert_eq!(plan.kappa, 3);
        assert!((plan.k_type_one() - 0.27).abs() < 1e-15);
        let ratio = plan.type_one_bound(400) / plan.type_one_bound(200).powi(2);
        assert!((ratio - 1.0).abs() < 1e-12);
    }

    #[test]
    fn markov_null_own_embedding_rejected() {
        let p = Matrix::from_row_slice(2, 2, &[0.2, 0.8, 0.4, 0.6]);
        let null = MarkovNull::Discrete { p_tilde: p.clone(), k_max: 20 };
        let alt: Kernel = embed_markov_discrete(&p, 20).unwrap().into();
        assert!(markov_plan(&null, alt, TestParams::with_defaults(0.05, 2, 1), 0).is_err());
    }

    #[test]
    fn simple_test_detects_alternative() {
        let (q0, q1) = (geometric(0.2, 0.2), geometric(0.6, 0.6));
        let p = TestParams::with_defaults(0.3, 2, 1);
        let plan = TestPlan::new(q0, Alternative::Simple(q1.clone()), p, 3).unwrap();
        assert_eq!(plan.kappa, 3);
        let t = sample_trajectory(&q1, 3000, &Init::Stationary, 4).unwrap();
        assert!(psi_simple(&t, &plan).unwrap().reject_null);
        assert!(psi_ball(&t, &plan).is_err());
    }
}
