//! Property tests for the numeric invariants that must hold on any input.

mod common;

use adaptive_lrf::conditioning::{normalize_condition_numbers, sncn};
use adaptive_lrf::{
    frobenius_norm, lrf_simplify, rank1_factorize, slice_conv_kernel, unslice_conv_kernel, Tensor,
};
use proptest::prelude::*;

fn small_matrix() -> impl Strategy<Value = Tensor> {
    ((1usize..=8), (1usize..=8)).prop_flat_map(|(r, c)| {
        proptest::collection::vec(-10.0f64..10.0, r * c)
            .prop_map(move |data| Tensor::matrix(r, c, data).unwrap())
    })
}

fn small_kernel() -> impl Strategy<Value = Tensor> {
    ((1usize..=3), (1usize..=3), (1usize..=3), (1usize..=3)).prop_flat_map(|(kh, kw, ci, co)| {
        proptest::collection::vec(-5.0f64..5.0, kh * kw * ci * co)
            .prop_map(move |data| Tensor::new(vec![kh, kw, ci, co], data).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn slice_round_trip_is_bit_exact(kernel in small_kernel()) {
        let back = unslice_conv_kernel(&slice_conv_kernel(&kernel).unwrap()).unwrap();
        prop_assert_eq!(kernel, back);
    }

    #[test]
    fn frobenius_scales_absolutely(a in small_matrix(), c in -8.0f64..8.0) {
        let scaled = frobenius_norm(&a.scale(c));
        let direct = c.abs() * frobenius_norm(&a);
        prop_assert!((scaled - direct).abs() <= 1e-12 * direct.max(1.0));
    }

    #[test]
    fn simplification_contracts_the_norm(a in small_matrix()) {
        let s = lrf_simplify(&a).unwrap();
        prop_assert!(frobenius_norm(&s) <= frobenius_norm(&a) + 1e-9);
    }

    #[test]
    fn simplification_is_idempotent_prop(a in small_matrix()) {
        let once = lrf_simplify(&a).unwrap();
        let twice = lrf_simplify(&once).unwrap();
        let drift = frobenius_norm(&once.sub(&twice).unwrap());
        prop_assert!(drift <= 1e-8 * frobenius_norm(&once).max(1.0), "drift {}", drift);
    }

    #[test]
    fn factor_pair_signs_are_canonical(a in small_matrix()) {
        let pair = rank1_factorize(&a).unwrap();
        if let Some(first) = pair.column.data().iter().find(|v| **v != 0.0) {
            prop_assert!(*first > 0.0);
        }
    }

    #[test]
    fn normalization_is_scale_invariant_for_exact_scalings(
        kappa in proptest::collection::vec(0.0f64..100.0, 1..6),
        pow in -8i32..8,
    ) {
        prop_assume!(kappa.iter().any(|k| *k > 0.0));
        // Powers of two multiply without rounding, so invariance is exact.
        let c = 2.0f64.powi(pow);
        let scaled: Vec<f64> = kappa.iter().map(|k| k * c).collect();
        let g1 = normalize_condition_numbers(&kappa).unwrap();
        let g2 = normalize_condition_numbers(&scaled).unwrap();
        prop_assert_eq!(g1, g2);
    }

    #[test]
    fn sncn_stays_between_one_and_layer_count(
        kappa in proptest::collection::vec(0.0f64..1e6, 1..8),
    ) {
        prop_assume!(kappa.iter().any(|k| *k > 0.0));
        let gamma = normalize_condition_numbers(&kappa).unwrap();
        let s = sncn(&gamma);
        let l = kappa.len() as f64;
        prop_assert!((1.0..=l + 1e-12).contains(&s), "sncn {} for {} layers", s, l);
        let max = gamma.iter().cloned().fold(0.0f64, f64::max);
        prop_assert_eq!(max, 1.0);
    }
}
