use armour::analysis::{
    attention_macs, levit_block_macs, model_flop_count, model_param_count, param_report, ArchSpec,
};
use armour::attention::{AttentionConfig, AttentionVariant};
use armour::levit::{block_param_count, block_param_savings, LevitBlockConfig, LevitVariant};

const ORACLE: &str = include_str!("fixtures/deit_param_oracle.csv");

fn oracle_rows() -> Vec<(String, AttentionVariant, usize)> {
    ORACLE
        .lines()
        .skip(1)
        .map(|line| {
            let f: Vec<_> = line.split(',').collect();
            (
                f[0].to_string(),
                f[1].parse().unwrap(),
                f[2].parse().unwrap(),
            )
        })
        .collect()
}

#[test]
fn deit_totals_match_frozen_oracle() {
    let rows = oracle_rows();
    assert_eq!(rows.len(), 15);
    for (arch, variant, total) in rows {
        let spec = ArchSpec::builtin(&arch)
            .unwrap()
            .with_attention_variant(variant);
        assert_eq!(model_param_count(&spec).unwrap(), total, "{arch} {variant}");
    }
}

#[test]
fn armour_saving_is_one_projection_per_block() {
    for (arch, d) in [("deit-ti", 192), ("deit-s", 384), ("deit-b", 768)] {
        let r = param_report(&ArchSpec::builtin(arch).unwrap(), AttentionVariant::Armour).unwrap();
        assert_eq!(r.saved, 12 * (d * d + d));
        assert_eq!(r.baseline_total - r.total, r.saved);
        assert!(r.delta_pct < 0.0);
    }
}

#[test]
fn rounded_totals_and_deltas() {
    let expect = [
        ("deit-ti", 5.7, 5.3, -7.8),
        ("deit-s", 22.1, 20.3, -8.1),
        ("deit-b", 86.6, 79.5, -8.2),
    ];
    for (arch, regular_m, armour_m, delta) in expect {
        let r = param_report(&ArchSpec::builtin(arch).unwrap(), AttentionVariant::Armour).unwrap();
        assert!(
            (r.baseline_total as f64 / 1e6 - regular_m).abs() <= 0.05,
            "{arch}"
        );
        assert!((r.total as f64 / 1e6 - armour_m).abs() <= 0.05, "{arch}");
        assert!(
            (r.delta_pct - delta).abs() <= 0.1,
            "{arch}: {}",
            r.delta_pct
        );
    }
}

#[test]
fn arch_file_matches_builtin() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/deit_ti.json");
    let spec = ArchSpec::load(path).unwrap();
    let builtin = ArchSpec::builtin("deit-ti").unwrap();
    assert_eq!(
        model_param_count(&spec).unwrap(),
        model_param_count(&builtin).unwrap()
    );
}

#[test]
fn malformed_arch_file_is_rejected() {
    assert!(ArchSpec::from_json("{\"name\": \"x\"}").is_err());
    let bad_heads = r#"{"name":"x","layers":[{"name":"a","kind":"attention","dim":10,"heads":3}]}"#;
    assert!(ArchSpec::from_json(bad_heads).is_err());
}

#[test]
fn projection_macs_drop_by_a_third() {
    for (l, d, h) in [
        (197, 192, 3),
        (197, 384, 6),
        (197, 768, 12),
        (1, 4, 1),
        (50, 64, 4),
    ] {
        let reg = attention_macs(&AttentionConfig::new(AttentionVariant::Regular, l, d, h));
        let arm = attention_macs(&AttentionConfig::new(AttentionVariant::Armour, l, d, h));
        assert_eq!(3 * arm.projection, 2 * reg.projection);
        assert_eq!(reg.attention_matmul, arm.attention_matmul);
        assert_eq!(reg.attention_matmul, 2 * (l * l * d) as u64);
        assert_eq!(reg.projection - arm.projection, (l * d * d) as u64);
    }
}

#[test]
fn deit_ti_model_macs() {
    let spec = ArchSpec::builtin("deit-ti").unwrap();
    let reg = model_flop_count(&spec, 197).unwrap();
    let arm =
        model_flop_count(&spec.with_attention_variant(AttentionVariant::Armour), 197).unwrap();
    assert_eq!(reg.projection_macs, 12 * 3 * 197 * 192 * 192);
    assert_eq!(3 * arm.projection_macs, 2 * reg.projection_macs);
    assert_eq!(reg.attention_matmul_macs, arm.attention_matmul_macs);
    assert_eq!(reg.total_macs - arm.total_macs, 12 * 7_262_208);
}

#[test]
fn levit_savings_match_closed_form() {
    for (n, d, c) in [(4, 16, 128), (1, 1, 1), (8, 32, 384), (3, 5, 7)] {
        for bias in [false, true] {
            let mut base = LevitBlockConfig::new(LevitVariant::Baseline, n, d, 4, 4, c);
            base.use_bias = bias;
            let per_d = if bias { c * n * d + n * d } else { c * n * d };
            let half = base.with_variant(LevitVariant::HalfVConcatQ);
            let qk = base.with_variant(LevitVariant::QkReplacesV);
            assert_eq!(block_param_savings(&half), per_d);
            assert_eq!(block_param_savings(&qk), 2 * per_d);
            assert_eq!(block_param_count(&base) - block_param_count(&half), per_d);
        }
    }
}

#[test]
fn levit_value_projection_macs() {
    let base = LevitBlockConfig::new(LevitVariant::Baseline, 4, 16, 7, 7, 128);
    let half = levit_block_macs(&base.with_variant(LevitVariant::HalfVConcatQ));
    let none = levit_block_macs(&base.with_variant(LevitVariant::QkReplacesV));
    let full = levit_block_macs(&base);
    assert_eq!(full.projection - half.projection, 49 * 128 * 64);
    assert_eq!(full.projection - none.projection, 49 * 128 * 128);
    assert_eq!(full.attention_matmul, none.attention_matmul);
}
