use armour::attention::{AttentionConfig, AttentionVariant};
use armour::gradcheck::{gradcheck_attention, gradcheck_levit, GRAD_TOLERANCE};
use armour::levit::{LevitBlockConfig, LevitVariant};

const SEEDS: u64 = 10;

#[test]
fn attention_gradients_match_finite_differences() {
    for variant in AttentionVariant::ALL {
        for seed in 0..SEEDS {
            let (l, d, h) = [(4, 8, 2), (3, 6, 3), (5, 4, 1)][seed as usize % 3];
            let cfg = AttentionConfig::new(variant, l, d, h);
            let r = gradcheck_attention(&cfg, seed).unwrap();
            assert!(r.passed, "{variant} seed {seed}: {r:?}");
            assert!(r.max_rel_err < GRAD_TOLERANCE);
            assert_eq!(r.tensors.len(), 1 + cfg.required_names().len());
        }
    }
}

#[test]
fn attention_gradients_without_bias_or_output_projection() {
    for variant in AttentionVariant::ALL {
        let mut cfg = AttentionConfig::new(variant, 4, 4, 2);
        cfg.use_bias = false;
        cfg.include_output_proj = false;
        let r = gradcheck_attention(&cfg, 3).unwrap();
        assert!(r.passed, "{r:?}");
    }
}

#[test]
fn levit_gradients_match_finite_differences() {
    for variant in LevitVariant::ALL {
        for seed in 0..SEEDS {
            let cfg = LevitBlockConfig::new(variant, 2, 3, 2, 2, 5);
            let r = gradcheck_levit(&cfg, seed).unwrap();
            assert!(r.passed, "{variant} seed {seed}: {r:?}");
            assert_eq!(r.tensors.len(), 1 + cfg.required_names().len());
        }
    }
}
