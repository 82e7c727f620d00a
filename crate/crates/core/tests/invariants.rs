//! Property tests for the structural invariants: projector algebra,
//! feasibility of constrained fits, Holm monotonicity and permutation
//! behavior, U-statistic exchangeability, and the trace identity.

mod common;

use common::*;
use constrex_core::estimators::{fit_cls, fit_cls_via_nullspace, fit_projected, orthogonal_projector};
use constrex_core::highdim::ustat_moment;
use constrex_core::inference::holm_bonferroni;
use constrex_core::linalg;
use constrex_core::model::{realize_covariance, validate_constraints, CovarianceSpec, Dataset};
use constrex_core::theory::conditional_minimax_risk;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn projector_pair_invariants(seed in 0u64..10_000, q in 1usize..4, p_extra in 1usize..6) {
        let p = q + p_extra;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = standard_normal_matrix(&mut rng, q, p);
        let c = standard_normal_vector(&mut rng, q);
        let cs = match validate_constraints(a.clone(), c.clone(), 1e-10) {
            Ok(cs) => cs,
            Err(_) => return Ok(()),
        };
        let pp = orthogonal_projector(&cs).unwrap();
        prop_assert!(linalg::mat_inf_norm(&(&pp.p_orth * &pp.p_orth - &pp.p_orth)) <= 1e-10);
        prop_assert!(linalg::mat_inf_norm(&(pp.p_orth.transpose() - &pp.p_orth)) <= 1e-10);
        prop_assert!(linalg::mat_inf_norm(&(&a * &pp.p_orth)) <= 1e-10 * linalg::mat_inf_norm(&a));
        prop_assert!(linalg::inf_norm(&(&a * &pp.feasible_point - &c)) <= 1e-10 * (1.0 + linalg::inf_norm(&c)));
    }

    #[test]
    fn constrained_fits_stay_feasible(seed in 0u64..10_000) {
        let inst = random_feasible_instance(seed, 24, 5, 2, 1.3);
        let cls = fit_cls(&inst.data, &inst.cs).unwrap();
        let proj = fit_projected(&inst.data, &inst.cs).unwrap();
        prop_assert!(cls.feasibility_residual.unwrap() <= 1e-8);
        prop_assert!(proj.feasibility_residual.unwrap() <= 1e-8);
    }

    #[test]
    fn cls_nullspace_route_matches_lagrangian(seed in 0u64..10_000) {
        let inst = random_feasible_instance(seed.wrapping_add(777), 30, 6, 2, 0.9);
        let a = fit_cls(&inst.data, &inst.cs).unwrap();
        let b = fit_cls_via_nullspace(&inst.data, &inst.cs).unwrap();
        let rel = (&a.beta_hat - &b.beta_hat).norm() / a.beta_hat.norm().max(1.0);
        prop_assert!(rel <= 1e-8, "routes disagree: {}", rel);
    }

    #[test]
    fn holm_adjusted_values_are_sound(raw in proptest::collection::vec(0.0f64..=1.0, 1..12)) {
        let (adjusted, rejected) = holm_bonferroni(&raw, 0.05).unwrap();
        // Adjusted p-values dominate raw ones and respect the sorted order.
        for (a, r) in adjusted.iter().zip(raw.iter()) {
            prop_assert!(a >= r && *a <= 1.0);
        }
        let mut order: Vec<usize> = (0..raw.len()).collect();
        order.sort_by(|&i, &j| raw[i].partial_cmp(&raw[j]).unwrap());
        for w in order.windows(2) {
            prop_assert!(adjusted[w[0]] <= adjusted[w[1]]);
        }
        // Rejection is equivalent to adjusted < level under the strict rule.
        for (r, a) in rejected.iter().zip(adjusted.iter()) {
            prop_assert_eq!(*r, *a < 0.05);
        }
    }

    #[test]
    fn holm_is_permutation_invariant(raw in proptest::collection::vec(0.0f64..=1.0, 2..10), swap in 0usize..8) {
        let (adjusted, rejected) = holm_bonferroni(&raw, 0.05).unwrap();
        let mut permuted = raw.clone();
        let i = swap % permuted.len();
        let j = (swap + 1) % permuted.len();
        permuted.swap(i, j);
        let (adj_p, rej_p) = holm_bonferroni(&permuted, 0.05).unwrap();
        let mut back_adj = adj_p.clone();
        let mut back_rej = rej_p.clone();
        back_adj.swap(i, j);
        back_rej.swap(i, j);
        for (a, b) in adjusted.iter().zip(back_adj.iter()) {
            prop_assert!((a - b).abs() < 1e-15);
        }
        prop_assert_eq!(rejected, back_rej);
    }

    #[test]
    fn lowering_level_never_adds_rejections(raw in proptest::collection::vec(0.0f64..=1.0, 1..10)) {
        let (_, strict) = holm_bonferroni(&raw, 0.01).unwrap();
        let (_, loose) = holm_bonferroni(&raw, 0.10).unwrap();
        for (s, l) in strict.iter().zip(loose.iter()) {
            prop_assert!(!s || *l);
        }
    }

    #[test]
    fn ustat_is_exchangeable(seed in 0u64..5_000, ell in 0usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 5usize;
        let x = standard_normal_matrix(&mut rng, n, 2);
        let y = standard_normal_vector(&mut rng, n);
        let data = Dataset::new(x.clone(), y.clone()).unwrap();
        let base = ustat_moment(&data, ell, 0).unwrap();
        let perm = [2usize, 0, 4, 1, 3];
        let xp = DMatrix::from_fn(n, 2, |i, j| x[(perm[i], j)]);
        let yp = DVector::from_fn(n, |i, _| y[perm[i]]);
        let shuffled = Dataset::new(xp, yp).unwrap();
        let val = ustat_moment(&shuffled, ell, 0).unwrap();
        prop_assert!(close(base, val, 1e-12));
    }
}

#[test]
fn covariance_realizations_are_spd() {
    for spec in [
        CovarianceSpec::isotropic(7),
        CovarianceSpec::equicorrelated(7, 0.5),
        CovarianceSpec::equicorrelated(7, -0.1),
    ] {
        let m = realize_covariance(&spec).unwrap();
        assert!(linalg::mat_inf_norm(&(&m - m.transpose())) == 0.0);
        let min_eig = m
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        assert!(min_eig > 0.0);
    }
}

#[test]
fn trace_identity_through_nullspace_basis() {
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (n, p, q) = (40usize, 8usize, 3usize);
        let x = standard_normal_matrix(&mut rng, n, p);
        let a = standard_normal_matrix(&mut rng, q, p);
        let cs = validate_constraints(a.clone(), DVector::zeros(q), 1e-10).unwrap();
        let direct = conditional_minimax_risk(&x, &cs, 1.0).unwrap();
        let v = linalg::null_space_basis(&a);
        let reduced = v.transpose() * (x.transpose() * &x / n as f64) * &v;
        let via_basis = reduced.try_inverse().unwrap().trace() / n as f64;
        assert!(close(direct, via_basis, 1e-8), "{direct} vs {via_basis}");
    }
}

#[test]
fn reference_constraints_feasible_to_roundoff() {
    for seed in 0..50u64 {
        let inst = random_feasible_instance(seed, 20, 6, 2, 1.0);
        assert!(inst.cs.residual(&inst.beta_star) <= 1e-10 * (1.0 + linalg::inf_norm(&inst.beta_star)));
    }
}
