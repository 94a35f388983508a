use proptest::prelude::*;

use semimarkov::bayes::{posterior_update, DirichletSmkPrior};
use semimarkov::hypothesis::{draw_block_indices, k_lambda, largest_feasible_xi};
use semimarkov::kernel::{io, stationary_emc, stationary_pair, DiscreteSmk, Matrix};
use semimarkov::metrics::{
    angle_from_sq, covering_net, hellinger_sq, least_favorable, phi_inverse_bound_check, semi_distance, KernelFamily, Shell,
};
use semimarkov::rng::substream;
use semimarkov::simulate::{kl_functionals, log_likelihood, sample_trajectory, Init, KlMode, Trajectory};
use semimarkov::verify::{random_irreducible_kernel, random_kernel};
use semimarkov::{Kernel, StateSpace};

fn kernel(seed: u64, e: usize, k_max: usize, zero: f64) -> DiscreteSmk {
    random_kernel(&mut substream(seed, "prop", 0), e, k_max, zero)
}

fn kernel_triple(seed: u64, e: usize, k_max: usize) -> (Kernel, Kernel, Kernel) {
    let mut rng = substream(seed, "prop-triple", 0);
    (
        random_kernel(&mut rng, e, k_max, 0.3).into(),
        random_kernel(&mut rng, e, k_max, 0.3).into(),
        random_kernel(&mut rng, e, k_max, 0.3).into(),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn hellinger_is_bounded_and_symmetric(seed in any::<u64>(), e in 2usize..5, k_max in 1usize..7) {
        let (a, b, _) = kernel_triple(seed, e, k_max);
        let ab = hellinger_sq(&a, &b).unwrap().per_state;
        let ba = hellinger_sq(&b, &a).unwrap().per_state;
        for x in 0..e {
            prop_assert!((0.0..=1.0).contains(&ab[x]));
            prop_assert!((ab[x] - ba[x]).abs() < 1e-15);
        }
        prop_assert!(hellinger_sq(&a, &a).unwrap().per_state.iter().all(|h| h.abs() < 1e-15));
    }

    #[test]
    fn semi_distance_triangle_inequality(seed in any::<u64>(), e in 2usize..5, k_max in 1usize..5, w in prop::collection::vec(0.0f64..2.0, 4)) {
        let (a, b, c) = kernel_triple(seed, e, k_max);
        let mu = &w[..e];
        let d = |p: &Kernel, q: &Kernel| semi_distance(p, q, mu).unwrap().value;
        prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c) + 1e-12);
    }

    #[test]
    fn least_favorable_identities(seed in any::<u64>(), e in 2usize..5, k_max in 1usize..7, lambda in 0.001f64..0.249) {
        let (q0, q1, _) = kernel_triple(seed, e, k_max);
        let lf = least_favorable(&q0, &q1, lambda).unwrap();
        let h01 = hellinger_sq(&q0, &q1).unwrap().per_state;
        let h12 = hellinger_sq(&q1, &lf.q2).unwrap().per_state;
        let h02 = hellinger_sq(&q0, &lf.q2).unwrap().per_state;
        for x in 0..e {
            let a = lf.alpha[x];
            prop_assert!((h12[x] - (1.0 - (lambda * a).cos())).abs() < 1e-10);
            prop_assert!((h02[x] - (1.0 - ((1.0 - lambda) * a).cos())).abs() < 1e-10);
            prop_assert!(lambda * lambda * h01[x] <= h12[x] + 1e-10);
            prop_assert!(h12[x] <= h01[x] + 1e-10);
            prop_assert!((1.0 - lambda).powi(2) * h01[x] <= h02[x] + 1e-10);
        }
        let phi = phi_inverse_bound_check(&lf, &q0);
        prop_assert!(phi.holds, "{} >= {}", phi.max_ratio, phi.bound);
        for x in 0..e {
            prop_assert!(phi.per_state_max[x] <= phi.per_state_ceiling[x] * (1.0 + 1e-9));
        }
    }

    #[test]
    fn angle_round_trip(alpha in 0.0f64..std::f64::consts::FRAC_PI_2) {
        let h2 = 1.0 - alpha.cos();
        let (back, clamped) = angle_from_sq(h2);
        prop_assert!(!clamped || alpha > std::f64::consts::FRAC_PI_2 - 1e-9);
        // 1 − cos α loses relative precision as α → 0; compare on the h² scale.
        prop_assert!((1.0 - back.cos() - h2).abs() < 1e-15 || (back - alpha).abs() < 1e-7);
    }

    #[test]
    fn stationary_pair_is_invariant(seed in any::<u64>(), e in 2usize..6, k_max in 1usize..8) {
        let q: Kernel = random_irreducible_kernel(&mut substream(seed, "prop-stat", 0), e, k_max, 0.4).into();
        let rho = stationary_emc(&q.emc()).unwrap();
        let sp = stationary_pair(&q, &rho).unwrap();
        prop_assert!(sp.invariance_residual < 1e-10);
        prop_assert!((sp.total_mass - 1.0).abs() < 1e-10);
    }

    #[test]
    fn kernel_documents_round_trip(seed in any::<u64>(), e in 2usize..5, k_max in 1usize..5) {
        let q = kernel(seed, e, k_max, 0.3);
        let text = io::to_document(&q.clone().into()).unwrap();
        let (back, report) = io::from_document(&text).unwrap();
        prop_assert!(report.adjustments.is_empty());
        prop_assert_eq!(back.as_discrete(), Some(&q));
    }

    #[test]
    fn trajectories_are_consistent(seed in any::<u64>(), n in 1usize..200) {
        let q: Kernel = random_irreducible_kernel(&mut substream(seed, "prop-traj", 0), 3, 4, 0.3).into();
        let t = sample_trajectory(&q, n, &Init::Stationary, seed).unwrap();
        prop_assert_eq!(t.n(), n);
        let mut acc = 0.0;
        for i in 0..=n {
            acc += t.sojourns[i];
            prop_assert_eq!(t.jump_times[i], acc);
        }
        prop_assert!(log_likelihood(&q, &t, true).unwrap().value.is_finite());
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let back = Trajectory::read_csv(&buf[..], &t.labels).unwrap();
        prop_assert_eq!(back.states, t.states);
        prop_assert_eq!(back.jump_times, t.jump_times);
    }

    #[test]
    fn posterior_counts_match_path_length(seed in any::<u64>(), n in 1usize..300, alpha in 0.01f64..5.0) {
        let q: Kernel = random_irreducible_kernel(&mut substream(seed, "prop-post", 0), 2, 3, 0.2).into();
        let t = sample_trajectory(&q, n, &Init::Stationary, seed).unwrap();
        let prior = DirichletSmkPrior::uniform(StateSpace::numbered(2).unwrap(), 3, alpha).unwrap();
        let post = posterior_update(&prior, &t).unwrap();
        prop_assert_eq!(post.counts.iter().sum::<u64>(), n as u64);
        let d = q.as_discrete().unwrap();
        for (c, count) in post.counts.iter().enumerate() {
            if *count > 0 {
                prop_assert!(d.table()[c] > 0.0);
            }
        }
    }

    #[test]
    fn kl_is_nonnegative_and_affine(seed in any::<u64>()) {
        let mut rng = substream(seed, "prop-kl", 0);
        let q0: Kernel = random_irreducible_kernel(&mut rng, 2, 3, 0.0).into();
        let q: Kernel = random_irreducible_kernel(&mut rng, 2, 3, 0.0).into();
        let f = |n| kl_functionals(&q0, &q, n, KlMode::Analytic).unwrap();
        let (a, b, c) = (f(1), f(2), f(3));
        prop_assert!(a.kl >= -1e-12 && a.v0 >= -1e-12);
        prop_assert!(((c.kl - b.kl) - (b.kl - a.kl)).abs() < 1e-10);
        prop_assert!(kl_functionals(&q0, &q0, 5, KlMode::Analytic).unwrap().kl.abs() < 1e-12);
    }

    #[test]
    fn block_indices_stay_in_their_blocks(n in 2usize..500, k in 1usize..5, l in 1usize..4, seed in any::<u64>()) {
        prop_assume!(n >= k + l);
        let b = draw_block_indices(n, k, l, seed).unwrap();
        let kappa = k + l;
        prop_assert_eq!(b.n_blocks, n / kappa);
        for (i, t) in b.tau.iter().enumerate() {
            prop_assert!(*t > kappa * i + l && *t <= kappa * i + kappa && *t <= n);
        }
    }

    #[test]
    fn k_lambda_is_decreasing_in_xi(lambda in 0.01f64..0.249, a in 0.0f64..0.5, b in 0.0f64..0.5) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(k_lambda(lambda, hi) <= k_lambda(lambda, lo));
        if let Some(xi) = largest_feasible_xi(lambda) {
            prop_assert!(k_lambda(lambda, xi) > 0.0);
            prop_assert!(xi >= 0.99 || k_lambda(lambda, xi + 0.01) <= 0.0);
        }
    }
}

fn geometric_family() -> (Kernel, KernelFamily) {
    let swap = Matrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
    let stays: Vec<f64> = (1..20).map(|i| i as f64 * 0.05).collect();
    let fam = KernelFamily::geometric(&swap, &stays, 30).unwrap();
    let center = fam.points()[0].1.clone();
    (center, fam)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn net_cardinality_is_monotone_and_covers(d1 in 0.0f64..0.5, d2 in 0.0f64..0.5) {
        let (center, fam) = geometric_family();
        let (lo, hi) = if d1 < d2 { (d1, d2) } else { (d2, d1) };
        let nu = [0.5, 0.5];
        let eta = [1.0, 1.0];
        let shell = Shell { inner: 0.05, outer: 1.0 };
        let a = covering_net(&center, shell, lo, &fam, &nu, &eta).unwrap();
        let b = covering_net(&center, shell, hi, &fam, &nu, &eta).unwrap();
        prop_assert!(b.cardinality() <= a.cardinality());
        for net in [&a, &b] {
            for p in &net.shell {
                prop_assert!(shell.contains(p.d_nu_star_to_center));
                prop_assert!(p.d_eta_star_to_nearest_net_point <= net.net_radius + 1e-12);
            }
        }
    }
}
