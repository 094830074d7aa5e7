//! Seeded toy-scale training of a two-block attention classifier.
//!
//! The task: each sequence holds tokens from `labels` groups (token `t` is
//! in group `t % labels`); the label is the group that occurs most often.
//! One group gets `majority` tokens and every other group strictly fewer.
//! A fraction `label_noise` of training labels is replaced by a different
//! random class; evaluation labels are always clean, so the training loss
//! settles at a floor instead of collapsing to zero.
//!
//! Model: token embedding, two residual blocks of attention + GELU MLP,
//! mean-pool over tokens, linear head. Plain SGD with a fixed rate.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::{redundancy_layers, RedundancyOptions, RedundancyReport, DEFAULT_EPSILON};
use crate::attention::{self, AttentionConfig, AttentionVariant, AttentionWeights};
use crate::autodiff::{Eager, GradTape, TensorOps, Var};
use crate::error::{ArmourError, Result};
use crate::io::{DType, WeightContainer};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyTask {
    pub seed: u64,
    pub seq_len: usize,
    pub vocab: usize,
    pub labels: usize,
    /// Occurrences of the winning group in every sequence.
    pub majority: usize,
    pub label_noise: f64,
    pub train_samples: usize,
    pub eval_samples: usize,
}

impl Default for ToyTask {
    fn default() -> Self {
        Self {
            seed: 7,
            seq_len: 8,
            vocab: 12,
            labels: 4,
            majority: 3,
            label_noise: 0.1,
            train_samples: 512,
            eval_samples: 256,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sample {
    pub tokens: Vec<usize>,
    pub label: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dataset {
    pub train: Vec<Sample>,
    pub eval: Vec<Sample>,
}

impl ToyTask {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(ArmourError::Config(format!("toy task: {m}")));
        if self.labels < 2 || !self.vocab.is_multiple_of(self.labels) {
            return bad("vocab must be a positive multiple of labels >= 2");
        }
        if !(0.0..1.0).contains(&self.label_noise) {
            return bad("label_noise must be in [0, 1)");
        }
        if self.majority < 2 || self.majority > self.seq_len {
            return bad("majority must be in 2..=seq_len");
        }
        // the others must fit with at most majority - 1 each
        if (self.labels - 1) * (self.majority - 1) < self.seq_len - self.majority {
            return bad("sequence too long for a strict majority");
        }
        Ok(())
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> Sample {
        let label = rng.gen_range(0..self.labels);
        let per_group = self.vocab / self.labels;
        let mut counts = vec![0usize; self.labels];
        counts[label] = self.majority;
        let mut groups = vec![label; self.majority];
        while groups.len() < self.seq_len {
            let g = rng.gen_range(0..self.labels);
            if g != label && counts[g] + 1 < self.majority {
                counts[g] += 1;
                groups.push(g);
            }
        }
        groups.shuffle(rng);
        let tokens = groups
            .into_iter()
            .map(|g| g + self.labels * rng.gen_range(0..per_group))
            .collect();
        Sample { tokens, label }
    }

    /// Same seed, same dataset.
    pub fn generate(&self) -> Result<Dataset> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let train = (0..self.train_samples)
            .map(|_| {
                let mut s = self.sample(&mut rng);
                if rng.gen::<f64>() < self.label_noise {
                    s.label = (s.label + rng.gen_range(1..self.labels)) % self.labels;
                }
                s
            })
            .collect();
        let eval = (0..self.eval_samples)
            .map(|_| self.sample(&mut rng))
            .collect();
        Ok(Dataset { train, eval })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyModelConfig {
    pub variant: AttentionVariant,
    pub dim: usize,
    pub heads: usize,
    pub hidden: usize,
    pub blocks: usize,
}

impl ToyModelConfig {
    pub fn new(variant: AttentionVariant) -> Self {
        Self {
            variant,
            dim: 16,
            heads: 2,
            hidden: 32,
            blocks: 2,
        }
    }

    fn attention(&self, seq_len: usize) -> AttentionConfig {
        AttentionConfig::new(self.variant, seq_len, self.dim, self.heads)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ToyBlock<T = Tensor> {
    pub attn: AttentionWeights<T>,
    pub w1: T,
    pub b1: T,
    pub w2: T,
    pub b2: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ToyModel<T = Tensor> {
    pub embed: T,
    pub blocks: Vec<ToyBlock<T>>,
    pub head_w: T,
    pub head_b: T,
}

impl<T> ToyModel<T> {
    /// Every parameter with its container name, in a fixed order.
    pub fn named(&self) -> Vec<(String, &T)> {
        let mut out = vec![("embed".to_string(), &self.embed)];
        for (i, b) in self.blocks.iter().enumerate() {
            for (n, t) in b.attn.named() {
                out.push((format!("layer{i}.{n}"), t));
            }
            out.push((format!("layer{i}.mlp.w1"), &b.w1));
            out.push((format!("layer{i}.mlp.b1"), &b.b1));
            out.push((format!("layer{i}.mlp.w2"), &b.w2));
            out.push((format!("layer{i}.mlp.b2"), &b.b2));
        }
        out.push(("head.w".to_string(), &self.head_w));
        out.push(("head.b".to_string(), &self.head_b));
        out
    }

    pub fn map<U>(&self, mut f: impl FnMut(&T) -> U) -> ToyModel<U> {
        ToyModel {
            embed: f(&self.embed),
            blocks: self
                .blocks
                .iter()
                .map(|b| ToyBlock {
                    attn: b.attn.map(&mut f),
                    w1: f(&b.w1),
                    b1: f(&b.b1),
                    w2: f(&b.w2),
                    b2: f(&b.b2),
                })
                .collect(),
            head_w: f(&self.head_w),
            head_b: f(&self.head_b),
        }
    }
}

impl ToyModel<Tensor> {
    pub fn init(cfg: &ToyModelConfig, task: &ToyTask, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = cfg.dim;
        let attn_cfg = cfg.attention(task.seq_len);
        let bd = 1.0 / (d as f64).sqrt();
        let bh = 1.0 / (cfg.hidden as f64).sqrt();
        let embed = Tensor::uniform(&[task.vocab, d], 1.0, &mut rng);
        let blocks = (0..cfg.blocks)
            .map(|_| ToyBlock {
                attn: AttentionWeights::init(&attn_cfg, &mut rng),
                w1: Tensor::uniform(&[d, cfg.hidden], bd, &mut rng),
                b1: Tensor::uniform(&[cfg.hidden], bd, &mut rng),
                w2: Tensor::uniform(&[cfg.hidden, d], bh, &mut rng),
                b2: Tensor::uniform(&[d], bh, &mut rng),
            })
            .collect();
        Self {
            embed,
            blocks,
            head_w: Tensor::uniform(&[d, task.labels], bd, &mut rng),
            head_b: Tensor::uniform(&[task.labels], bd, &mut rng),
        }
    }

    pub fn param_count(&self) -> usize {
        self.named().iter().map(|(_, t)| t.numel()).sum()
    }

    pub fn to_container(&self, dtype: DType) -> Result<WeightContainer> {
        let mut c = WeightContainer::new();
        for (name, t) in self.named() {
            c.insert(name, t.clone(), dtype)?;
        }
        Ok(c)
    }

    fn apply_sgd(&mut self, grads: &ToyModel<Tensor>, lr: f64) -> Result<()> {
        let updates: Vec<Tensor> = self
            .named()
            .into_iter()
            .zip(grads.named())
            .map(|((_, p), (_, g))| p.sub(&g.scale(lr)))
            .collect::<Result<_>>()?;
        let mut it = updates.into_iter();
        *self = self.map(|_| it.next().expect("same structure"));
        Ok(())
    }
}

/// Logits `[1 x labels]` for one token sequence.
pub fn model_forward<O: TensorOps>(
    ops: &mut O,
    model: &ToyModel<O::Value>,
    cfg: &ToyModelConfig,
    tokens: &[usize],
) -> Result<O::Value> {
    let attn_cfg = cfg.attention(tokens.len());
    let mut h = ops.gather_rows(&model.embed, tokens)?;
    for block in &model.blocks {
        let a = attention::forward(ops, &h, &block.attn, &attn_cfg)?;
        h = ops.add(&h, &a)?;
        let m = ops.matmul(&h, &block.w1)?;
        let m = ops.add_row_bias(&m, &block.b1)?;
        let m = ops.gelu(&m)?;
        let m = ops.matmul(&m, &block.w2)?;
        let m = ops.add_row_bias(&m, &block.b2)?;
        h = ops.add(&h, &m)?;
    }
    let pooled = ops.mean_rows(&h)?;
    let logits = ops.matmul(&pooled, &model.head_w)?;
    ops.add_row_bias(&logits, &model.head_b)
}

/// Mean cross-entropy and accuracy over `samples`.
pub fn evaluate(model: &ToyModel, cfg: &ToyModelConfig, samples: &[Sample]) -> Result<(f64, f64)> {
    let mut loss = 0.0;
    let mut correct = 0usize;
    for s in samples {
        let logits = model_forward(&mut Eager, model, cfg, &s.tokens)?;
        loss += logits.cross_entropy(s.label)?;
        correct += usize::from(logits.argmax() == s.label);
    }
    let n = samples.len().max(1) as f64;
    Ok((loss / n, correct as f64 / n))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            epochs: 30,
            lr: 0.1,
            batch_size: 16,
            seed: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub eval_loss: f64,
    pub eval_accuracy: f64,
    pub wall_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub variant: AttentionVariant,
    pub task: ToyTask,
    pub model: ToyModelConfig,
    pub options: TrainOptions,
    pub param_count: usize,
    pub initial_eval_loss: f64,
    pub initial_eval_accuracy: f64,
    pub epochs: Vec<EpochRecord>,
    #[serde(skip)]
    pub weights: Option<ToyModel>,
}

impl TrainRecord {
    pub fn final_eval_accuracy(&self) -> f64 {
        self.epochs
            .last()
            .map_or(self.initial_eval_accuracy, |e| e.eval_accuracy)
    }

    pub fn final_eval_loss(&self) -> f64 {
        self.epochs
            .last()
            .map_or(self.initial_eval_loss, |e| e.eval_loss)
    }

    /// Copy with wall-clock fields zeroed, for reproducibility comparisons.
    pub fn without_timings(&self) -> Self {
        let mut out = self.clone();
        for e in &mut out.epochs {
            e.wall_ms = 0.0;
        }
        out
    }
}

/// Trains a fresh model. Parameters are initialized from `opts.seed`.
pub fn train(
    variant: AttentionVariant,
    task: &ToyTask,
    opts: &TrainOptions,
) -> Result<TrainRecord> {
    if opts.batch_size == 0 || !(opts.lr.is_finite() && opts.lr > 0.0) {
        return Err(ArmourError::Config(format!(
            "need batch_size > 0 and a positive learning rate, got {opts:?}"
        )));
    }
    let data = task.generate()?;
    let cfg = ToyModelConfig::new(variant);
    let mut model = ToyModel::init(&cfg, task, opts.seed);
    let (initial_eval_loss, initial_eval_accuracy) = evaluate(&model, &cfg, &data.eval)?;
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x5eed);
    let mut order: Vec<usize> = (0..data.train.len()).collect();
    let mut epochs = Vec::with_capacity(opts.epochs);

    for epoch in 1..=opts.epochs {
        let start = Instant::now();
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(opts.batch_size) {
            let mut tape = GradTape::new();
            let vars: ToyModel<Var> = model.map(|t| tape.leaf(t.clone()));
            let mut total: Option<Var> = None;
            for &i in batch {
                let s = &data.train[i];
                let logits = model_forward(&mut tape, &vars, &cfg, &s.tokens)?;
                let ce = tape.cross_entropy(&logits, s.label)?;
                total = Some(match total {
                    Some(acc) => tape.add(&acc, &ce)?,
                    None => ce,
                });
            }
            let total = total.expect("non-empty batch");
            let batch_loss = tape.value(total).data()[0];
            if !batch_loss.is_finite() {
                return Err(ArmourError::Diverged {
                    epoch,
                    loss: batch_loss,
                });
            }
            epoch_loss += batch_loss;
            let loss = tape.scale(&total, 1.0 / batch.len() as f64)?;
            let grads = tape.backward(loss)?;
            let grad_model = vars.map(|v| grads.wrt(*v));
            model.apply_sgd(&grad_model, opts.lr)?;
        }
        let train_loss = epoch_loss / data.train.len().max(1) as f64;
        let (eval_loss, eval_accuracy) = evaluate(&model, &cfg, &data.eval)?;
        if !eval_loss.is_finite() {
            return Err(ArmourError::Diverged {
                epoch,
                loss: eval_loss,
            });
        }
        epochs.push(EpochRecord {
            epoch,
            train_loss,
            eval_loss,
            eval_accuracy,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        });
    }

    Ok(TrainRecord {
        variant,
        task: task.clone(),
        model: cfg,
        options: *opts,
        param_count: model.param_count(),
        initial_eval_loss,
        initial_eval_accuracy,
        epochs,
        weights: Some(model),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeRow {
    pub model: AttentionVariant,
    pub report: RedundancyReport,
}

/// Weight-redundancy comparison of a trained regular and armour model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntanglementReport {
    pub epsilon: f64,
    pub rows: Vec<ProbeRow>,
    /// Whether `W_Q`/`W_K` are more redundant than `W_Q`/`W_V` in the
    /// regular model. Reported only.
    pub regular_qk_exceeds_qv: bool,
}

fn pair_report(model: &ToyModel, pair: (&str, &str), epsilon: f64) -> Result<RedundancyReport> {
    let pick = |w: &AttentionWeights, name: &str| -> Result<Tensor> {
        w.named()
            .into_iter()
            .find(|(n, _)| *n == name)
            .map(|(_, t)| t.clone())
            .ok_or_else(|| ArmourError::Config(format!("model has no `{name}`")))
    };
    let mut owned = Vec::new();
    for (i, b) in model.blocks.iter().enumerate() {
        owned.push((
            format!("layer{i}"),
            pick(&b.attn, pair.0)?,
            pick(&b.attn, pair.1)?,
        ));
    }
    let layers: Vec<(&str, &Tensor, &Tensor)> =
        owned.iter().map(|(n, a, b)| (n.as_str(), a, b)).collect();
    let label = format!("{}_{}", pair.0.replace('_', ""), pair.1.replace('_', ""));
    redundancy_layers(&label, &layers, epsilon, RedundancyOptions::default())
}

/// Redundancy of `(W_Q, W_K)` and `(W_Q, W_V)` in the regular model and of
/// `(W_Q, W_K)` in the armour model.
pub fn entanglement_probe(
    regular: &ToyModel,
    armour: &ToyModel,
    epsilon: f64,
) -> Result<EntanglementReport> {
    let qk = pair_report(regular, ("w_q", "w_k"), epsilon)?;
    let qv = pair_report(regular, ("w_q", "w_v"), epsilon)?;
    let armour_qk = pair_report(armour, ("w_q", "w_k"), epsilon)?;
    Ok(EntanglementReport {
        epsilon,
        regular_qk_exceeds_qv: qk.fraction_below > qv.fraction_below,
        rows: vec![
            ProbeRow {
                model: AttentionVariant::Regular,
                report: qk,
            },
            ProbeRow {
                model: AttentionVariant::Regular,
                report: qv,
            },
            ProbeRow {
                model: AttentionVariant::Armour,
                report: armour_qk,
            },
        ],
    })
}

/// [`entanglement_probe`] on two finished training records.
pub fn probe_records(regular: &TrainRecord, armour: &TrainRecord) -> Result<EntanglementReport> {
    let missing = || ArmourError::Config("training record carries no weights".into());
    entanglement_probe(
        regular.weights.as_ref().ok_or_else(missing)?,
        armour.weights.as_ref().ok_or_else(missing)?,
        DEFAULT_EPSILON,
    )
}
