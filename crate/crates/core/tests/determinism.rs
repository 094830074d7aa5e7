use armour::attention::AttentionVariant;
use armour::bench::{run_bench, BenchOptions, BenchTarget};
use armour::gradcheck::gradcheck_attention;
use armour::io::{DType, WeightContainer};
use armour::report::{parse_jsonl, render, Format};
use armour::train::{train, ToyTask, TrainOptions, TrainRecord};
use armour::AttentionConfig;

fn short_run(variant: AttentionVariant, seed: u64) -> TrainRecord {
    let task = ToyTask {
        train_samples: 64,
        eval_samples: 32,
        ..ToyTask::default()
    };
    let opts = TrainOptions {
        epochs: 2,
        seed,
        ..TrainOptions::default()
    };
    train(variant, &task, &opts).unwrap()
}

#[test]
fn training_is_reproducible() {
    let a = short_run(AttentionVariant::Armour, 3);
    let b = short_run(AttentionVariant::Armour, 3);
    assert_eq!(a.without_timings(), b.without_timings());
    assert_eq!(a.weights, b.weights);
    let c = short_run(AttentionVariant::Armour, 4);
    assert_ne!(a.without_timings(), c.without_timings());
}

#[test]
fn trained_weights_serialize_identically() {
    let a = short_run(AttentionVariant::Regular, 1).weights.unwrap();
    let b = short_run(AttentionVariant::Regular, 1).weights.unwrap();
    let bytes = a.to_container(DType::F64).unwrap().to_bytes();
    assert_eq!(bytes, b.to_container(DType::F64).unwrap().to_bytes());
    let back = WeightContainer::from_bytes(&bytes).unwrap();
    assert_eq!(back.to_bytes(), bytes);
    assert!(back.get("layer0.w_v").is_some());
    assert!(back.get("layer1.mlp.w2").is_some());
}

#[test]
fn jsonl_record_round_trips() {
    let rec = short_run(AttentionVariant::KvShared, 2);
    let line = render(&rec, Format::Jsonl).unwrap();
    assert_eq!(line.matches('\n').count(), 1);
    let back: Vec<TrainRecord> = parse_jsonl(&line).unwrap();
    assert_eq!(back.len(), 1);
    assert_eq!(
        back[0].without_timings(),
        TrainRecord {
            weights: None,
            ..rec.without_timings()
        }
    );
}

#[test]
fn gradcheck_reports_are_reproducible() {
    let cfg = AttentionConfig::new(AttentionVariant::QkSharedDiagMasked, 4, 8, 2);
    let a = render(&gradcheck_attention(&cfg, 5).unwrap(), Format::Jsonl).unwrap();
    let b = render(&gradcheck_attention(&cfg, 5).unwrap(), Format::Jsonl).unwrap();
    assert_eq!(a, b);
}

#[test]
fn bench_reports_agree_apart_from_timings() {
    let target = BenchTarget::Attention(AttentionConfig::new(AttentionVariant::KvShared, 8, 8, 2));
    let opts = BenchOptions::default();
    let a = run_bench(&target, &opts).unwrap();
    let b = run_bench(&target, &opts).unwrap();
    assert_eq!(a.without_timings(), b.without_timings());
    assert!(a.transpose_median_ns.is_some());
    assert!(a.p10_ns <= a.median_ns && a.median_ns <= a.p90_ns);
}
