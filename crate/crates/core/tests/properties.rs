mod common;

use armour::analysis::{redundancy, redundancy_layers, RedundancyMode, RedundancyOptions};
use armour::attention::{self, AttentionConfig, AttentionVariant};
use armour::autodiff::Eager;
use armour::io::{DType, WeightContainer};
use armour::levit::{levit_block_forward, LevitBlockConfig, LevitVariant};
use armour::Tensor;
use common::{attention_setup, levit_setup};
use proptest::prelude::*;

fn matrix(rows: usize, cols: usize, bound: f64) -> impl Strategy<Value = Tensor> {
    prop::collection::vec(-bound..bound, rows * cols)
        .prop_map(move |data| Tensor::new(vec![rows, cols], data).unwrap())
}

fn any_matrix(bound: f64) -> impl Strategy<Value = Tensor> {
    (1usize..6, 1usize..6).prop_flat_map(move |(r, c)| matrix(r, c, bound))
}

fn permute_rows(t: &Tensor, perm: &[usize]) -> Tensor {
    let cols = t.shape()[1];
    let data = perm
        .iter()
        .flat_map(|&i| t.data()[i * cols..(i + 1) * cols].to_vec())
        .collect();
    Tensor::new(t.shape().to_vec(), data).unwrap()
}

fn attention_variant() -> impl Strategy<Value = AttentionVariant> {
    prop::sample::select(AttentionVariant::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn identity_is_neutral_for_matmul(a in any_matrix(10.0)) {
        let (r, c) = (a.shape()[0], a.shape()[1]);
        prop_assert_eq!(&a.matmul(&Tensor::identity(c)).unwrap(), &a);
        prop_assert_eq!(&Tensor::identity(r).matmul(&a).unwrap(), &a);
    }

    #[test]
    fn transpose_is_an_involution(a in any_matrix(10.0)) {
        prop_assert_eq!(a.transpose().unwrap().transpose().unwrap(), a);
    }

    #[test]
    fn split_undoes_concat(a in matrix(3, 4, 5.0), b in matrix(3, 2, 5.0)) {
        let joined = a.concat_last_axis(&b).unwrap();
        let (left, right) = joined.split_last_axis(4).unwrap();
        prop_assert_eq!(&left, &a);
        prop_assert_eq!(&right, &b);
    }

    #[test]
    fn softmax_rows_are_distributions(a in any_matrix(1e4)) {
        let p = a.softmax_rows().unwrap();
        let cols = a.shape()[1];
        for row in p.data().chunks(cols) {
            prop_assert!(row.iter().all(|v| v.is_finite() && *v >= 0.0));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn attention_is_permutation_equivariant(
        variant in attention_variant(),
        seed in 0u64..1000,
        perm in Just((0..5).collect::<Vec<usize>>()).prop_shuffle(),
    ) {
        let cfg = AttentionConfig::new(variant, 5, 4, 2);
        let (x, w) = attention_setup(&cfg, seed);
        let y = attention::forward(&mut Eager, &x, &w, &cfg).unwrap();
        let yp = attention::forward(&mut Eager, &permute_rows(&x, &perm), &w, &cfg).unwrap();
        let expected = permute_rows(&y, &perm);
        for (a, b) in yp.data().iter().zip(expected.data()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn levit_is_permutation_equivariant(
        variant in prop::sample::select(LevitVariant::ALL.to_vec()),
        seed in 0u64..1000,
        perm in Just((0..4).collect::<Vec<usize>>()).prop_shuffle(),
    ) {
        let cfg = LevitBlockConfig::new(variant, 2, 2, 2, 2, 3);
        let (x, w) = levit_setup(&cfg, seed);
        let y = levit_block_forward(&mut Eager, &x, &w, &cfg).unwrap();
        let yp = levit_block_forward(&mut Eager, &permute_rows(&x, &perm), &w, &cfg).unwrap();
        let expected = permute_rows(&y, &perm);
        for (a, b) in yp.data().iter().zip(expected.data()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn redundancy_is_symmetric(a in matrix(4, 4, 0.05), b in matrix(4, 4, 0.05), eps in 1e-4f64..0.1) {
        let ab = redundancy(&a, &b, eps).unwrap();
        let ba = redundancy(&b, &a, eps).unwrap();
        prop_assert_eq!(ab.below, ba.below);
        prop_assert!((0.0..=1.0).contains(&ab.fraction_below));
    }

    #[test]
    fn redundancy_grows_with_epsilon(a in matrix(4, 6, 0.05), b in matrix(4, 6, 0.05), e1 in 1e-4f64..0.1, e2 in 1e-4f64..0.1) {
        let (lo, hi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
        let r_lo = redundancy(&a, &b, lo).unwrap().fraction_below;
        let r_hi = redundancy(&a, &b, hi).unwrap().fraction_below;
        prop_assert!(r_lo <= r_hi);
    }

    #[test]
    fn per_head_rows_pool_to_whole(a in matrix(4, 6, 0.05), b in matrix(4, 6, 0.05)) {
        let whole = redundancy(&a, &b, 0.02).unwrap();
        let opts = RedundancyOptions { mode: RedundancyMode::PerHead { heads: 3 }, normalize: false };
        let split = redundancy_layers("a_b", &[("l", &a, &b)], 0.02, opts).unwrap();
        prop_assert_eq!(split.layers.len(), 3);
        prop_assert_eq!(split.below, whole.below);
    }

    #[test]
    fn armw_round_trip_is_bit_exact(
        tensors in prop::collection::vec((any_matrix(1e6), any::<bool>()), 0..5),
    ) {
        let mut c = WeightContainer::new();
        for (i, (t, single)) in tensors.into_iter().enumerate() {
            let dtype = if single { DType::F32 } else { DType::F64 };
            c.insert(format!("t{i}"), t, dtype).unwrap();
        }
        let bytes = c.to_bytes();
        let back = WeightContainer::from_bytes(&bytes).unwrap();
        prop_assert_eq!(back.to_bytes(), bytes);
        for (x, y) in c.entries().iter().zip(back.entries()) {
            prop_assert_eq!(&x.name, &y.name);
            prop_assert_eq!(x.dtype, y.dtype);
            let xb: Vec<u64> = x.tensor.data().iter().map(|v| v.to_bits()).collect();
            let yb: Vec<u64> = y.tensor.data().iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(xb, yb);
        }
    }
}

#[test]
fn redundancy_of_identical_matrices_is_total() {
    let a = Tensor::new(vec![2, 2], vec![0.1, -0.2, 0.3, 0.0]).unwrap();
    assert_eq!(redundancy(&a, &a, 1e-2).unwrap().fraction_below, 1.0);
    let b = a.map(|v| v + 1.0);
    assert_eq!(redundancy(&a, &b, 1e-2).unwrap().fraction_below, 0.0);
}

#[test]
fn redundancy_threshold_is_strict() {
    let a = Tensor::new(vec![1, 2], vec![0.0, 0.0]).unwrap();
    let b = Tensor::new(vec![1, 2], vec![0.5, 0.25]).unwrap();
    assert_eq!(redundancy(&a, &b, 0.5).unwrap().below, 1);
}
