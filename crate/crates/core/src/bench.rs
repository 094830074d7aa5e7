//! Single-threaded wall-clock harness for forward passes.
//!
//! Inputs and weights are generated once from the seed before any timing;
//! the timed region is the forward call alone. Only same-process relative
//! comparisons are meaningful.

use std::hint::black_box;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::{
    levit_block_macs, model_flop_count, ArchSpec, AttentionMacs, LayerEntry, LayerKind,
};
use crate::attention::{self, AttentionConfig, AttentionVariant, AttentionWeights};
use crate::autodiff::Eager;
use crate::error::{ArmourError, Result};
use crate::levit::{levit_block_forward, LevitBlockConfig, LevitBlockWeights};
use crate::tensor::Tensor;

pub const MIN_WARMUP: usize = 5;
pub const MIN_ITERS: usize = 30;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "block", rename_all = "snake_case")]
pub enum BenchTarget {
    Attention(AttentionConfig),
    Levit(LevitBlockConfig),
}

impl BenchTarget {
    pub fn variant_name(&self) -> &'static str {
        match self {
            Self::Attention(c) => c.variant.as_str(),
            Self::Levit(c) => c.variant.as_str(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchOptions {
    pub warmup: usize,
    pub iters: usize,
    pub seed: u64,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            warmup: MIN_WARMUP,
            iters: MIN_ITERS,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub variant: String,
    pub target: BenchTarget,
    pub warmup: usize,
    pub iters: usize,
    pub seed: u64,
    pub median_ns: f64,
    pub p10_ns: f64,
    pub p90_ns: f64,
    /// Time to materialize `K^T` for the whole layer, reported for
    /// `kv_shared` where `K` is needed both transposed and as the value.
    pub transpose_median_ns: Option<f64>,
    pub macs: AttentionMacs,
}

impl BenchReport {
    /// Copy with every timing field cleared.
    pub fn without_timings(&self) -> Self {
        Self {
            median_ns: 0.0,
            p10_ns: 0.0,
            p90_ns: 0.0,
            transpose_median_ns: self.transpose_median_ns.map(|_| 0.0),
            ..self.clone()
        }
    }
}

/// Nearest-rank percentile of sorted samples.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

fn time_loop(warmup: usize, iters: usize, mut f: impl FnMut()) -> Vec<f64> {
    for _ in 0..warmup {
        f();
    }
    let mut samples = Vec::with_capacity(iters);
    for _ in 0..iters {
        let start = Instant::now();
        f();
        samples.push(start.elapsed().as_nanos() as f64);
    }
    samples
}

/// MAC counts for an attention config, taken from the whole-model accounting.
pub fn attention_bench_macs(cfg: &AttentionConfig) -> Result<AttentionMacs> {
    let spec = ArchSpec {
        name: "bench".into(),
        layers: vec![LayerEntry {
            name: "attn".into(),
            count: 1,
            kind: LayerKind::Attention {
                dim: cfg.model_dim,
                heads: cfg.heads,
                variant: cfg.variant,
                bias: cfg.use_bias,
                output_proj: cfg.include_output_proj,
            },
        }],
    };
    let report = model_flop_count(&spec, cfg.seq_len)?;
    Ok(report.layers[0].attention.clone().expect("attention layer"))
}

/// Inputs and weights generated up front, so the timed call only runs the forward pass.
enum Prepared {
    Attention(AttentionConfig, Tensor, AttentionWeights),
    Levit(LevitBlockConfig, Tensor, LevitBlockWeights),
}

impl Prepared {
    fn new(target: &BenchTarget, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match *target {
            BenchTarget::Attention(cfg) => {
                cfg.validate()?;
                let x = Tensor::uniform(&[cfg.seq_len, cfg.model_dim], 1.0, &mut rng);
                let w = AttentionWeights::init(&cfg, &mut rng);
                w.validate(&cfg)?;
                Ok(Self::Attention(cfg, x, w))
            }
            BenchTarget::Levit(cfg) => {
                cfg.validate()?;
                let x = Tensor::uniform(&[cfg.tokens(), cfg.in_channels], 1.0, &mut rng);
                let w = LevitBlockWeights::init(&cfg, &mut rng);
                w.validate(&cfg)?;
                Ok(Self::Levit(cfg, x, w))
            }
        }
    }

    fn call(&self) {
        match self {
            Self::Attention(cfg, x, w) => {
                let out = attention::forward(&mut Eager, black_box(x), black_box(w), cfg);
                black_box(out.expect("validated"));
            }
            Self::Levit(cfg, x, w) => {
                let out = levit_block_forward(&mut Eager, black_box(x), black_box(w), cfg);
                black_box(out.expect("validated"));
            }
        }
    }

    fn transpose_median(&self, opts: &BenchOptions) -> Result<Option<f64>> {
        match self {
            Self::Attention(cfg, x, w) if cfg.variant == AttentionVariant::KvShared => {
                let k = x.matmul(w.w_k.as_ref().expect("validated"))?;
                let mut t = time_loop(opts.warmup, opts.iters, || {
                    black_box(black_box(&k).transpose().expect("rank 2"));
                });
                t.sort_by(f64::total_cmp);
                Ok(Some(median(&t)))
            }
            _ => Ok(None),
        }
    }

    fn macs(&self) -> Result<AttentionMacs> {
        match self {
            Self::Attention(cfg, ..) => attention_bench_macs(cfg),
            Self::Levit(cfg, ..) => Ok(levit_block_macs(cfg)),
        }
    }
}

fn check_options(opts: &BenchOptions) -> Result<()> {
    if opts.warmup < MIN_WARMUP || opts.iters < MIN_ITERS {
        return Err(ArmourError::Config(format!(
            "benchmarks need >= {MIN_WARMUP} warmups and >= {MIN_ITERS} iterations"
        )));
    }
    Ok(())
}

fn report(
    target: &BenchTarget,
    p: &Prepared,
    opts: &BenchOptions,
    mut samples: Vec<f64>,
) -> Result<BenchReport> {
    samples.sort_by(f64::total_cmp);
    Ok(BenchReport {
        variant: target.variant_name().to_string(),
        target: *target,
        warmup: opts.warmup,
        iters: opts.iters,
        seed: opts.seed,
        median_ns: median(&samples),
        p10_ns: percentile(&samples, 0.10),
        p90_ns: percentile(&samples, 0.90),
        transpose_median_ns: p.transpose_median(opts)?,
        macs: p.macs()?,
    })
}

pub fn run_bench(target: &BenchTarget, opts: &BenchOptions) -> Result<BenchReport> {
    check_options(opts)?;
    let prepared = Prepared::new(target, opts.seed)?;
    let samples = time_loop(opts.warmup, opts.iters, || prepared.call());
    report(target, &prepared, opts, samples)
}

/// Times several targets round-robin, one call each per iteration, so that
/// drift in machine load affects every target alike. Each target gets the
/// same seed.
pub fn run_interleaved(targets: &[BenchTarget], opts: &BenchOptions) -> Result<Vec<BenchReport>> {
    check_options(opts)?;
    let prepared = targets
        .iter()
        .map(|t| Prepared::new(t, opts.seed))
        .collect::<Result<Vec<_>>>()?;
    for _ in 0..opts.warmup {
        prepared.iter().for_each(Prepared::call);
    }
    let mut samples = vec![Vec::with_capacity(opts.iters); targets.len()];
    for _ in 0..opts.iters {
        for (p, s) in prepared.iter().zip(&mut samples) {
            let start = Instant::now();
            p.call();
            s.push(start.elapsed().as_nanos() as f64);
        }
    }
    targets
        .iter()
        .zip(&prepared)
        .zip(samples)
        .map(|((t, p), s)| report(t, p, opts, s))
        .collect()
}
