//! End-to-end acceptance checks. Each test writes one `criterion N: PASS|FAIL`
//! line to stderr (bypassing libtest capture) and then asserts.

use std::io::Write as _;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use semimarkov::bayes::{concentration_curve, posterior_update, CurveConfig, DirichletSmkPrior, EpsRule};
use semimarkov::hypothesis::{ball_probes, error_study, Alternative, ErrorStudy, StudyCell, TestParams, TestPlan};
use semimarkov::kernel::{embed_markov_discrete, minorization, DiscreteSmk, Matrix};
use semimarkov::metrics::{semi_distance, KernelFamily};
use semimarkov::rng::substream;
use semimarkov::simulate::{kl_functionals, sample_trajectory, Init, KlMode};
use semimarkov::verify::{identity_suite, random_irreducible_kernel, stationarity_suite};
use semimarkov::{Kernel, StateSpace};

const MASTER_SEED: u64 = 20_261_019;
const N_GRID: [usize; 5] = [200, 500, 1000, 2000, 5000];

fn report(criterion: u32, pass: bool, elapsed: Duration, detail: &str) {
    let line = format!(
        "criterion {criterion}: {} ({:.1}s) {detail}\n",
        if pass { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64()
    );
    let mut err = std::io::stderr().lock();
    err.write_all(line.as_bytes()).unwrap();
}

fn geometric_pair_kernel(stay: f64, k_max: usize) -> Kernel {
    let p = Matrix::from_row_slice(2, 2, &[stay, 1.0 - stay, 1.0 - stay, stay]);
    embed_markov_discrete(&p, k_max).unwrap().into()
}

/// Null p̃_xx = 0.2, alternative p̃_xx = 0.6, λ = 0.1, ξ = 0.06, (k,l) = (2,1)
/// and ε equal to the `d_{ν*}` separation.
fn geometric_plan() -> TestPlan {
    let q0 = geometric_pair_kernel(0.2, 40);
    let q1 = geometric_pair_kernel(0.6, 40);
    let m = minorization(&q0.emc(), 2, 1).unwrap();
    let eps = semi_distance(&q0, &q1, &m.nu_star).unwrap().value;
    let params = TestParams { lambda: 0.1, xi: 0.06, epsilon: eps, k: 2, l: 1 };
    TestPlan::new(q0, Alternative::Ball(q1), params, MASTER_SEED).unwrap()
}

fn run_error_study() -> ErrorStudy {
    let plan = geometric_plan();
    let Alternative::Ball(center) = &plan.alternative else { unreachable!() };
    let probes = ball_probes(center, &plan.minorization.eta_star, plan.ball_radius(), 20, MASTER_SEED).unwrap();
    let cells: Vec<StudyCell> = N_GRID
        .iter()
        .map(|&n| StudyCell { plan: plan.clone(), n, probes: probes.clone() })
        .collect();
    error_study(&cells, 2000, MASTER_SEED).unwrap()
}

fn study_csv(s: &ErrorStudy) -> Vec<u8> {
    let mut buf = Vec::new();
    s.write_csv(&mut buf).unwrap();
    buf
}

/// The criteria 3/4 study, run once and shared; the elapsed time is kept.
fn shared_study() -> &'static (ErrorStudy, Duration) {
    static STUDY: OnceLock<(ErrorStudy, Duration)> = OnceLock::new();
    STUDY.get_or_init(|| {
        let t = Instant::now();
        let s = run_error_study();
        (s, t.elapsed())
    })
}

fn curve_inputs() -> (DiscreteSmk, DirichletSmkPrior, CurveConfig) {
    let p = Matrix::from_row_slice(2, 2, &[0.3, 0.7, 0.4, 0.6]);
    let q0 = embed_markov_discrete(&p, 10).unwrap();
    let prior = DirichletSmkPrior::uniform(StateSpace::numbered(2).unwrap(), 10, 1.0).unwrap();
    let cfg = CurveConfig {
        n_grid: vec![100, 1_000, 10_000, 100_000],
        eps_rule: EpsRule::SqrtLogOverN,
        m_values: vec![2.0, 5.0, 10.0],
        replications: 20,
        mc_samples: 1000,
        block_lengths: None,
    };
    (q0, prior, cfg)
}

fn curve_csv() -> Vec<u8> {
    let (q0, prior, cfg) = curve_inputs();
    let c = concentration_curve(&q0, &prior, &cfg, MASTER_SEED).unwrap();
    let mut buf = Vec::new();
    c.write_csv(&mut buf).unwrap();
    buf
}

#[test]
fn criterion_1_identity_suite() {
    let t = Instant::now();
    let r = identity_suite(MASTER_SEED, 1000).unwrap();
    let el = t.elapsed();
    let pass = r.violations.is_empty() && r.max_phi_ratio_scaled < 1.0 && el < Duration::from_secs(10);
    report(
        1,
        pass,
        el,
        &format!(
            "draws=1000 checks={} violations={} max_equality_error={:e} max(lambda*phi_inv)={:.6}",
            r.checks,
            r.violations.len(),
            r.max_equality_error,
            r.max_phi_ratio_scaled
        ),
    );
    assert!(pass, "{r}");
}

#[test]
fn criterion_2_stationary_pair() {
    let t = Instant::now();
    let r = stationarity_suite(MASTER_SEED, 1000);
    let el = t.elapsed();
    let pass = r.failures.is_empty() && el < Duration::from_secs(10);
    report(
        2,
        pass,
        el,
        &format!(
            "kernels=1000 failures={} max_residual={:e} max_mass_error={:e}",
            r.failures.len(),
            r.max_invariance_residual,
            r.max_mass_error
        ),
    );
    assert!(pass, "{r}");
}

#[test]
fn criterion_3_type_one_bound() {
    let (study, el) = shared_study();
    let ok = study.rows.iter().filter(|r| r.type_one_within()).count();
    let cells: Vec<String> = study
        .rows
        .iter()
        .map(|r| format!("n={}:{:.4}<={:.3e}+{:.4}", r.n, r.type_one_rate, r.type_one_bound, r.type_one_half_width))
        .collect();
    let pass = study.rows.len() == 5 && ok >= 4 && *el < Duration::from_secs(15 * 60);
    report(3, pass, *el, &format!("cells_within={ok}/5 [{}]", cells.join(" ")));
    assert!(pass);
}

#[test]
fn criterion_4_type_two_bound() {
    let (study, el) = shared_study();
    let ok = study.rows.iter().filter(|r| r.type_two_within()).count();
    let cells: Vec<String> = study
        .rows
        .iter()
        .map(|r| format!("n={}:{:.4}<={:.3e}+{:.4}", r.n, r.type_two_rate, r.type_two_bound, r.type_two_half_width))
        .collect();
    let pass = study.rows.len() == 5 && ok >= 4 && *el < Duration::from_secs(15 * 60);
    report(4, pass, *el, &format!("probes=20 cells_within={ok}/5 [{}]", cells.join(" ")));
    assert!(pass);
}

#[test]
fn criterion_5_markov_vs_semimarkov_power() {
    let t = Instant::now();
    let k_max = 30;
    let swap = Matrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
    let fam = KernelFamily::discrete_weibull(&swap, &[0.5], &[3.0], k_max).unwrap();
    let alt = fam.points()[0].1.clone();
    let w = alt.as_discrete().unwrap();
    let mean: f64 = w.sojourn_marginal(0).iter().enumerate().map(|(i, p)| (i + 1) as f64 * p).sum();
    let null = geometric_pair_kernel(1.0 - 1.0 / mean, k_max);
    let m = minorization(&null.emc(), 2, 1).unwrap();
    let eps = semi_distance(&null, &alt, &m.nu_star).unwrap().value;
    let params = TestParams { lambda: 0.1, xi: 0.06, epsilon: eps, k: 2, l: 1 };
    let plan = TestPlan::new(null, Alternative::Ball(alt.clone()), params, MASTER_SEED).unwrap();
    let cell = StudyCell { plan, n: 5000, probes: vec![alt] };
    let s = error_study(&[cell], 500, MASTER_SEED ^ 5).unwrap();
    let r = &s.rows[0];
    let power = 1.0 - r.type_two_rate;
    let el = t.elapsed();
    let pass = power >= 0.95 && r.type_one_within() && el < Duration::from_secs(5 * 60);
    report(
        5,
        pass,
        el,
        &format!(
            "mean_sojourn={mean:.4} eps={eps:.4} power={power:.4} type_one={:.4}<={:.3e}+{:.4}",
            r.type_one_rate, r.type_one_bound, r.type_one_half_width
        ),
    );
    assert!(pass);
}

/// Exhaustive `K` and `V₀` for 2-state kernels with `k_max = 2`: every
/// initial pair and every `n`-step continuation, with `ρ` from power iteration.
fn enumerate_kl(q0: &DiscreteSmk, q: &DiscreteSmk, n: usize) -> (f64, f64) {
    fn rho_tilde(q: &DiscreteSmk) -> Vec<f64> {
        let emc = q.emc();
        let mut rho = vec![0.5, 0.5];
        for _ in 0..10_000 {
            rho = (0..2).map(|y| (0..2).map(|x| rho[x] * emc[(x, y)]).sum()).collect();
        }
        let mut cells = vec![0.0; 4];
        for x in 0..2 {
            for c in 0..4 {
                cells[c] += rho[x] * q.row(x)[c];
            }
        }
        cells
    }
    let (r0, rq) = (rho_tilde(q0), rho_tilde(q));
    let mut paths: Vec<(f64, f64, usize)> = (0..4).map(|c| (r0[c], (r0[c] / rq[c]).ln(), c / 2)).collect();
    for _ in 0..n {
        let mut next = Vec::with_capacity(paths.len() * 4);
        for (p, lr, x) in paths {
            for c in 0..4 {
                let (a, b) = (q0.row(x)[c], q.row(x)[c]);
                next.push((p * a, lr + (a / b).ln(), c / 2));
            }
        }
        paths = next;
    }
    let k: f64 = paths.iter().map(|(p, lr, _)| p * lr).sum();
    let v: f64 = paths.iter().map(|(p, lr, _)| p * (lr - k).powi(2)).sum();
    (k, v)
}

#[test]
fn criterion_6_kl_monte_carlo_vs_enumeration() {
    let t = Instant::now();
    let mut worst: f64 = 0.0;
    let mut ok = 0;
    for case in 0..10u64 {
        let mut rng = substream(MASTER_SEED, "acceptance-kl", case);
        let q0 = random_irreducible_kernel(&mut rng, 2, 2, 0.0);
        let q = random_irreducible_kernel(&mut rng, 2, 2, 0.0);
        let (k, v) = enumerate_kl(&q0, &q, 3);
        let mc = kl_functionals(
            &q0.clone().into(),
            &q.into(),
            3,
            KlMode::MonteCarlo { replications: 20_000, seed: MASTER_SEED + case },
        )
        .unwrap();
        let zk = (mc.kl - k).abs() / mc.kl_se;
        let zv = (mc.v0 - v).abs() / mc.v0_se;
        worst = worst.max(zk).max(zv);
        if zk <= 3.0 && zv <= 3.0 {
            ok += 1;
        }
    }
    let el = t.elapsed();
    let pass = ok == 10 && el < Duration::from_secs(60);
    report(6, pass, el, &format!("cases_within_3se={ok}/10 worst_z={worst:.3}"));
    assert!(pass);
}

#[test]
fn criterion_7_posterior_concentration_trend() {
    let t = Instant::now();
    let (q0, prior, cfg) = curve_inputs();
    let c = concentration_curve(&q0, &prior, &cfg, MASTER_SEED).unwrap();
    let el = t.elapsed();
    let series = c.series(10.0);
    let last = series.last().unwrap().posterior_mass_outside;
    let pass = series.len() == 4 && c.nonincreasing(10.0) && last < 0.05 && el < Duration::from_secs(10 * 60);
    let fmt = |m: f64| {
        c.series(m)
            .iter()
            .map(|r| format!("{:.4}", r.posterior_mass_outside))
            .collect::<Vec<_>>()
            .join(",")
    };
    report(
        7,
        pass,
        el,
        &format!(
            "k,l=({},{}) M=10:[{}] M=5:[{}] M=2:[{}]",
            c.k,
            c.l,
            fmt(10.0),
            fmt(5.0),
            fmt(2.0)
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_8_conjugacy_exactness() {
    let t = Instant::now();
    let mut exact = 0;
    for i in 0..100u64 {
        let mut rng = substream(MASTER_SEED, "acceptance-conjugacy", i);
        let e = 2 + (i % 3) as usize;
        let k_max = 1 + (i % 5) as usize;
        let q: Kernel = random_irreducible_kernel(&mut rng, e, k_max, 0.3).into();
        let traj = sample_trajectory(&q, 50 + (i as usize) * 7, &Init::Stationary, i).unwrap();
        let conc: Vec<f64> = (0..e * e * k_max).map(|c| 0.25 + (c % 7) as f64).collect();
        let prior = DirichletSmkPrior::new(StateSpace::numbered(e).unwrap(), k_max, conc.clone()).unwrap();
        let post = posterior_update(&prior, &traj).unwrap();
        let mut tally = vec![0u64; conc.len()];
        for l in 1..=traj.n() {
            let (x, y) = (traj.states[l - 1], traj.states[l]);
            let k = traj.sojourns[l] as usize;
            tally[x * e * k_max + y * k_max + k - 1] += 1;
        }
        let expected: Vec<f64> = conc.iter().zip(&tally).map(|(a, c)| a + *c as f64).collect();
        if post.counts == tally && post.concentration() == expected {
            exact += 1;
        }
    }
    let el = t.elapsed();
    let pass = exact == 100 && el < Duration::from_secs(5);
    report(8, pass, el, &format!("exact={exact}/100"));
    assert!(pass);
}

#[test]
fn criterion_9_determinism() {
    let t = Instant::now();
    let first = study_csv(&shared_study().0);
    let second = study_csv(&run_error_study());
    let (c1, c2) = (curve_csv(), curve_csv());
    let el = t.elapsed();
    let pass = first == second && c1 == c2;
    report(
        9,
        pass,
        el,
        &format!(
            "error_study_bytes={} identical={} curve_bytes={} identical={}",
            first.len(),
            first == second,
            c1.len(),
            c1 == c2
        ),
    );
    assert!(pass);
}
