mod common;

use common::*;
use nalgebra::DMatrix;
use proptest::prelude::*;
use sifa::metrics::{grassmannian, max_principal_angle, recovery_error};
use sifa::numerics::{orthonormalize, procrustes};
use sifa::{
    estimate_signal_rank, fix_signs, log_likelihood, two_step_ranks, Mode, RankSet,
};

fn orthogonal_matrix(seed: u64, r: usize) -> DMatrix<f64> {
    orthonormalize(&gaussian(&mut rng(seed), r, r))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn two_step_recovers_exact_ranks(r0 in 0usize..30, r in prop::collection::vec(0usize..30, 2..5)) {
        let r_star: Vec<usize> = r.iter().map(|x| x + r0).collect();
        let total = r0 + r.iter().sum::<usize>();
        let out = two_step_ranks(total, &r_star).unwrap();
        prop_assert_eq!(out.ranks, RankSet::new(r0, r));
        prop_assert!(!out.r0_clamped);
        prop_assert!(out.clamped_views.is_empty());
    }

    #[test]
    fn two_step_output_is_non_negative(total in 0usize..100, r_star in prop::collection::vec(0usize..40, 2..5)) {
        let out = two_step_ranks(total, &r_star).unwrap();
        for (k, (&rs, &rk)) in r_star.iter().zip(&out.ranks.r).enumerate() {
            prop_assert_eq!(rk, rs.saturating_sub(out.ranks.r0), "view {}", k);
        }
    }

    #[test]
    fn rank_set_text_round_trip(r0 in 0usize..10, r in prop::collection::vec(0usize..10, 1..5)) {
        let set = RankSet::new(r0, r);
        let text = format!("{},{}", set.r0, set.r.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(","));
        prop_assert_eq!(text.parse::<RankSet>().unwrap(), set);
    }

    #[test]
    fn subspace_metrics_ignore_basis(seed in 0u64..1000, p in 4usize..12, r in 1usize..4) {
        let mut g = rng(seed);
        let v = orthonormalize(&gaussian(&mut g, p, r));
        let w = orthonormalize(&gaussian(&mut g, p, r));
        let q1 = orthogonal_matrix(seed + 1, r);
        let q2 = orthogonal_matrix(seed + 2, r);
        let d = grassmannian(&v, &w).unwrap();
        prop_assert!((grassmannian(&(&v * &q1), &(&w * &q2)).unwrap() - d).abs() < 1e-8);
        prop_assert!((grassmannian(&w, &v).unwrap() - d).abs() < 1e-10);
        let a = max_principal_angle(&v, &w).unwrap();
        prop_assert!((max_principal_angle(&(&v * &q1), &(&w * &q2)).unwrap() - a).abs() < 1e-6);
        prop_assert!((0.0..=90.0).contains(&a));
        prop_assert!(d >= 0.0);
    }

    #[test]
    fn procrustes_is_orthonormal(seed in 0u64..1000, p in 3usize..10, r in 1usize..3) {
        let m = gaussian(&mut rng(seed), p, r);
        let w = procrustes(&m).unwrap();
        prop_assert!((w.transpose() * &w - DMatrix::identity(r, r)).amax() < 1e-10);
    }

    #[test]
    fn signal_rank_monotone_in_threshold(seed in 0u64..1000, a in 0.05f64..0.95, b in 0.05f64..0.95) {
        let y = gaussian(&mut rng(seed), 20, 8);
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(estimate_signal_rank(&y, lo).unwrap() <= estimate_signal_rank(&y, hi).unwrap());
    }

    #[test]
    fn sign_fix_is_idempotent_and_preserves_likelihood(seed in 0u64..500) {
        let mut g = rng(seed);
        let dims = random_dims(&mut g, 2, 4, 8);
        let ranks = random_ranks(&mut g, &dims);
        let mut params = random_params(&mut g, &dims, &ranks, Mode::General, 2);
        // scramble signs
        for b in &mut params.v0 {
            b.neg_mut();
        }
        params.functions[0].mix.neg_mut();
        let data = sample_data(&mut g, &params, 20, 2);
        let once = fix_signs(&params);
        prop_assert_eq!(fix_signs(&once), once.clone());
        let a = log_likelihood(&params, &data).unwrap();
        let b = log_likelihood(&once, &data).unwrap();
        prop_assert!((a - b).abs() <= 1e-10 * a.abs());
    }

    #[test]
    fn recovery_error_ignores_sign_flips(seed in 0u64..500, flips in prop::collection::vec(any::<bool>(), 3)) {
        let mut g = rng(seed);
        let signal = gaussian(&mut g, 10, 6);
        let mut scores = gaussian(&mut g, 10, 3);
        let mut loadings = gaussian(&mut g, 6, 3);
        let e = recovery_error(&signal, &scores, &loadings).unwrap();
        for (j, f) in flips.iter().enumerate() {
            if *f {
                scores.column_mut(j).neg_mut();
                loadings.column_mut(j).neg_mut();
            }
        }
        prop_assert!((recovery_error(&signal, &scores, &loadings).unwrap() - e).abs() < 1e-12);
    }
}
