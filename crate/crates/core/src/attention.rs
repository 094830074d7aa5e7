//! Single-block multi-head self-attention and its weight-sharing variants.
//!
//! Every variant runs through one forward definition, [`forward`], which is
//! generic over [`TensorOps`]: evaluate it with [`Eager`] for values or with
//! a [`GradTape`](crate::autodiff::GradTape) to differentiate it.
//!
//! | variant                  | query     | key       | value     |
//! |--------------------------|-----------|-----------|-----------|
//! | `regular`                | `x W_Q`   | `x W_K`   | `x W_V`   |
//! | `armour`                 | `x W_Q`   | `x W_K`   | query     |
//! | `qk_shared`              | `x W_Q`   | query     | `x W_V`   |
//! | `qk_shared_diag_masked`  | `x W_Q`   | query     | `x W_V`   |
//! | `kv_shared`              | `x W_Q`   | `x W_K`   | key       |
//!
//! Scores are scaled by `1/sqrt(d/h)`, the per-head width.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Eager, TensorOps};
use crate::error::{ArmourError, Result};
use crate::io::{DType, WeightContainer};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttentionVariant {
    Regular,
    Armour,
    QkShared,
    QkSharedDiagMasked,
    KvShared,
}

impl AttentionVariant {
    pub const ALL: [AttentionVariant; 5] = [
        AttentionVariant::Regular,
        AttentionVariant::Armour,
        AttentionVariant::QkShared,
        AttentionVariant::QkSharedDiagMasked,
        AttentionVariant::KvShared,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Regular => "regular",
            Self::Armour => "armour",
            Self::QkShared => "qk_shared",
            Self::QkSharedDiagMasked => "qk_shared_diag_masked",
            Self::KvShared => "kv_shared",
        }
    }

    /// Number of distinct `d x d` input projections (3 for regular, 2 otherwise).
    pub fn input_projections(self) -> usize {
        match self {
            Self::Regular => 3,
            _ => 2,
        }
    }

    fn has_key_proj(self) -> bool {
        !matches!(self, Self::QkShared | Self::QkSharedDiagMasked)
    }

    fn has_value_proj(self) -> bool {
        matches!(
            self,
            Self::Regular | Self::QkShared | Self::QkSharedDiagMasked
        )
    }
}

impl fmt::Display for AttentionVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for AttentionVariant {
    type Err = ArmourError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| {
                ArmourError::Config(format!(
                    "unknown attention variant `{s}` (expected one of regular, armour, qk_shared, qk_shared_diag_masked, kv_shared)"
                ))
            })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttentionConfig {
    pub variant: AttentionVariant,
    pub seq_len: usize,
    pub model_dim: usize,
    pub heads: usize,
    pub use_bias: bool,
    pub include_output_proj: bool,
}

impl AttentionConfig {
    /// Biased projections with an output projection.
    pub fn new(variant: AttentionVariant, seq_len: usize, model_dim: usize, heads: usize) -> Self {
        Self {
            variant,
            seq_len,
            model_dim,
            heads,
            use_bias: true,
            include_output_proj: true,
        }
    }

    pub fn with_variant(mut self, variant: AttentionVariant) -> Self {
        self.variant = variant;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.seq_len == 0 || self.model_dim == 0 || self.heads == 0 {
            return Err(ArmourError::Config(format!(
                "dimensions must be positive (L={}, d={}, h={})",
                self.seq_len, self.model_dim, self.heads
            )));
        }
        if !self.model_dim.is_multiple_of(self.heads) {
            return Err(ArmourError::Config(format!(
                "model dim {} is not divisible by {} heads",
                self.model_dim, self.heads
            )));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.model_dim / self.heads
    }

    /// Logit scale `1/sqrt(d_h)`.
    pub fn scale(&self) -> f64 {
        1.0 / (self.head_dim() as f64).sqrt()
    }

    /// Names of the tensors this config needs, in canonical order.
    pub fn required_names(&self) -> Vec<&'static str> {
        let mut names = vec!["w_q"];
        if self.variant.has_key_proj() {
            names.push("w_k");
        }
        if self.variant.has_value_proj() {
            names.push("w_v");
        }
        if self.include_output_proj {
            names.push("w_o");
        }
        if self.use_bias {
            names.push("b_q");
            if self.variant.has_key_proj() {
                names.push("b_k");
            }
            if self.variant.has_value_proj() {
                names.push("b_v");
            }
            if self.include_output_proj {
                names.push("b_o");
            }
        }
        names
    }

    /// Analytic parameter count of the block.
    pub fn param_count(&self) -> usize {
        let d = self.model_dim;
        let per_proj = d * d + if self.use_bias { d } else { 0 };
        let projections = self.variant.input_projections() + usize::from(self.include_output_proj);
        projections * per_proj
    }
}

/// Projection tensors of one attention block.
///
/// Generic over the value type so the same bundle can hold plain tensors or
/// tape handles.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionWeights<T = Tensor> {
    pub w_q: Option<T>,
    pub w_k: Option<T>,
    pub w_v: Option<T>,
    pub w_o: Option<T>,
    pub b_q: Option<T>,
    pub b_k: Option<T>,
    pub b_v: Option<T>,
    pub b_o: Option<T>,
}

impl<T> Default for AttentionWeights<T> {
    fn default() -> Self {
        Self {
            w_q: None,
            w_k: None,
            w_v: None,
            w_o: None,
            b_q: None,
            b_k: None,
            b_v: None,
            b_o: None,
        }
    }
}

impl<T> AttentionWeights<T> {
    fn slots(&self) -> [(&'static str, &Option<T>); 8] {
        [
            ("w_q", &self.w_q),
            ("w_k", &self.w_k),
            ("w_v", &self.w_v),
            ("w_o", &self.w_o),
            ("b_q", &self.b_q),
            ("b_k", &self.b_k),
            ("b_v", &self.b_v),
            ("b_o", &self.b_o),
        ]
    }

    pub(crate) fn slot_mut(&mut self, name: &str) -> Option<&mut Option<T>> {
        Some(match name {
            "w_q" => &mut self.w_q,
            "w_k" => &mut self.w_k,
            "w_v" => &mut self.w_v,
            "w_o" => &mut self.w_o,
            "b_q" => &mut self.b_q,
            "b_k" => &mut self.b_k,
            "b_v" => &mut self.b_v,
            "b_o" => &mut self.b_o,
            _ => return None,
        })
    }

    /// Present tensors with their short names.
    pub fn named(&self) -> Vec<(&'static str, &T)> {
        self.slots()
            .into_iter()
            .filter_map(|(n, t)| t.as_ref().map(|t| (n, t)))
            .collect()
    }

    pub fn map<U>(&self, mut f: impl FnMut(&T) -> U) -> AttentionWeights<U> {
        AttentionWeights {
            w_q: self.w_q.as_ref().map(&mut f),
            w_k: self.w_k.as_ref().map(&mut f),
            w_v: self.w_v.as_ref().map(&mut f),
            w_o: self.w_o.as_ref().map(&mut f),
            b_q: self.b_q.as_ref().map(&mut f),
            b_k: self.b_k.as_ref().map(&mut f),
            b_v: self.b_v.as_ref().map(&mut f),
            b_o: self.b_o.as_ref().map(&mut f),
        }
    }

    /// Fails unless the present tensors are exactly those `cfg` requires.
    pub fn check_census(&self, cfg: &AttentionConfig) -> Result<()> {
        let present: Vec<&str> = self.named().into_iter().map(|(n, _)| n).collect();
        strict_census(cfg.variant.as_str(), &present, &cfg.required_names())
    }
}

pub(crate) fn strict_census(variant: &str, present: &[&str], required: &[&str]) -> Result<()> {
    let missing: Vec<String> = required
        .iter()
        .filter(|r| !present.contains(r))
        .map(|s| s.to_string())
        .collect();
    let unexpected: Vec<String> = present
        .iter()
        .filter(|p| !required.contains(p))
        .map(|s| s.to_string())
        .collect();
    if missing.is_empty() && unexpected.is_empty() {
        Ok(())
    } else {
        Err(ArmourError::StrictWeights {
            variant: variant.to_string(),
            missing,
            unexpected,
        })
    }
}

impl AttentionWeights<Tensor> {
    /// Seeded `uniform(-1/sqrt(d), 1/sqrt(d))` initialization for every
    /// tensor the config requires.
    pub fn init<R: Rng + ?Sized>(cfg: &AttentionConfig, rng: &mut R) -> Self {
        let d = cfg.model_dim;
        let bound = 1.0 / (d as f64).sqrt();
        let mut w = Self::default();
        for name in cfg.required_names() {
            let shape: &[usize] = if name.starts_with('w') { &[d, d] } else { &[d] };
            *w.slot_mut(name).unwrap() = Some(Tensor::uniform(shape, bound, rng));
        }
        w
    }

    pub fn param_count(&self) -> usize {
        self.named().iter().map(|(_, t)| t.numel()).sum()
    }

    /// Census plus per-tensor shape checks.
    pub fn validate(&self, cfg: &AttentionConfig) -> Result<()> {
        cfg.validate()?;
        self.check_census(cfg)?;
        let d = cfg.model_dim;
        for (name, t) in self.named() {
            let expected: Vec<usize> = if name.starts_with('w') {
                vec![d, d]
            } else {
                vec![d]
            };
            if t.shape() != expected.as_slice() {
                return Err(ArmourError::Dimension {
                    op: "attention weights",
                    left: t.shape().to_vec(),
                    right: expected,
                });
            }
        }
        Ok(())
    }

    /// Writes present tensors as `{prefix}{name}`.
    pub fn export(
        &self,
        container: &mut WeightContainer,
        prefix: &str,
        dtype: DType,
    ) -> Result<()> {
        for (name, t) in self.named() {
            container.insert(format!("{prefix}{name}"), t.clone(), dtype)?;
        }
        Ok(())
    }

    /// Reads the tensors under `prefix`, failing on missing or extra names.
    pub fn import(
        container: &WeightContainer,
        prefix: &str,
        cfg: &AttentionConfig,
    ) -> Result<Self> {
        let mut w = Self::default();
        let mut present = Vec::new();
        for (full, t) in container.iter() {
            let Some(short) = full.strip_prefix(prefix) else {
                continue;
            };
            present.push(short.to_string());
            if let Some(slot) = w.slot_mut(short) {
                *slot = Some(t.clone());
            }
        }
        let present_refs: Vec<&str> = present.iter().map(String::as_str).collect();
        strict_census(cfg.variant.as_str(), &present_refs, &cfg.required_names())?;
        w.validate(cfg)?;
        Ok(w)
    }
}

fn project<O: TensorOps>(
    ops: &mut O,
    x: &O::Value,
    w: Option<&O::Value>,
    b: Option<&O::Value>,
) -> Result<O::Value> {
    let w = w.expect("census checked");
    let y = ops.matmul(x, w)?;
    match b {
        Some(b) => ops.add_row_bias(&y, b),
        None => Ok(y),
    }
}

struct Projected<V> {
    query: V,
    key: V,
    value: V,
}

fn project_all<O: TensorOps>(
    ops: &mut O,
    x: &O::Value,
    w: &AttentionWeights<O::Value>,
    cfg: &AttentionConfig,
) -> Result<Projected<O::Value>> {
    cfg.validate()?;
    w.check_census(cfg)?;
    let shape = ops.shape_of(x);
    if shape != [cfg.seq_len, cfg.model_dim] {
        return Err(ArmourError::Dimension {
            op: "attention input",
            left: shape,
            right: vec![cfg.seq_len, cfg.model_dim],
        });
    }
    let query = project(ops, x, w.w_q.as_ref(), w.b_q.as_ref())?;
    let key = if cfg.variant.has_key_proj() {
        project(ops, x, w.w_k.as_ref(), w.b_k.as_ref())?
    } else {
        query.clone()
    };
    let value = match cfg.variant {
        AttentionVariant::Armour => query.clone(),
        AttentionVariant::KvShared => key.clone(),
        _ => project(ops, x, w.w_v.as_ref(), w.b_v.as_ref())?,
    };
    Ok(Projected { query, key, value })
}

fn head_probabilities<O: TensorOps>(
    ops: &mut O,
    p: &Projected<O::Value>,
    head: usize,
    cfg: &AttentionConfig,
) -> Result<O::Value> {
    let dh = cfg.head_dim();
    let q = ops.slice_last_axis(&p.query, head * dh, dh)?;
    let k = ops.slice_last_axis(&p.key, head * dh, dh)?;
    let kt = ops.transpose(&k)?;
    let scores = ops.matmul(&q, &kt)?;
    let mut scores = ops.scale(&scores, cfg.scale())?;
    // a lone token has no other target, so it keeps attending to itself
    if cfg.variant == AttentionVariant::QkSharedDiagMasked && cfg.seq_len >= 2 {
        scores = ops.mask_diagonal(&scores)?;
    }
    ops.softmax_rows(&scores)
}

/// Forward pass of any variant: `x` is `L x d`, the result is `L x d`.
pub fn forward<O: TensorOps>(
    ops: &mut O,
    x: &O::Value,
    w: &AttentionWeights<O::Value>,
    cfg: &AttentionConfig,
) -> Result<O::Value> {
    let projected = project_all(ops, x, w, cfg)?;
    let dh = cfg.head_dim();
    let mut merged: Option<O::Value> = None;
    for head in 0..cfg.heads {
        let probs = head_probabilities(ops, &projected, head, cfg)?;
        let v = ops.slice_last_axis(&projected.value, head * dh, dh)?;
        let out = ops.matmul(&probs, &v)?;
        merged = Some(match merged {
            Some(acc) => ops.concat_last_axis(&acc, &out)?,
            None => out,
        });
    }
    let merged = merged.expect("at least one head");
    if cfg.include_output_proj {
        project(ops, &merged, w.w_o.as_ref(), w.b_o.as_ref())
    } else {
        Ok(merged)
    }
}

fn expect_variant(cfg: &AttentionConfig, allowed: &[AttentionVariant], op: &str) -> Result<()> {
    if allowed.contains(&cfg.variant) {
        Ok(())
    } else {
        Err(ArmourError::Config(format!(
            "{op} called with variant `{}`",
            cfg.variant
        )))
    }
}

/// `softmax(Q K^T / sqrt(d_h)) V` per head.
pub fn regular_attention(
    x: &Tensor,
    w: &AttentionWeights,
    cfg: &AttentionConfig,
) -> Result<Tensor> {
    expect_variant(cfg, &[AttentionVariant::Regular], "regular_attention")?;
    forward(&mut Eager, x, w, cfg)
}

/// `softmax(Q K^T / sqrt(d_h)) Q` per head; there is no value projection.
pub fn armour_attention(x: &Tensor, w: &AttentionWeights, cfg: &AttentionConfig) -> Result<Tensor> {
    expect_variant(cfg, &[AttentionVariant::Armour], "armour_attention")?;
    forward(&mut Eager, x, w, cfg)
}

/// Keys reuse the query projection. With `diag_masked` each token is barred
/// from attending to itself unless it is the only token.
pub fn qk_shared_attention(
    x: &Tensor,
    w: &AttentionWeights,
    cfg: &AttentionConfig,
    diag_masked: bool,
) -> Result<Tensor> {
    let expected = if diag_masked {
        AttentionVariant::QkSharedDiagMasked
    } else {
        AttentionVariant::QkShared
    };
    expect_variant(cfg, &[expected], "qk_shared_attention")?;
    forward(&mut Eager, x, w, cfg)
}

/// Values reuse the key projection, so `K` is used both transposed and
/// untransposed.
pub fn kv_shared_attention(
    x: &Tensor,
    w: &AttentionWeights,
    cfg: &AttentionConfig,
) -> Result<Tensor> {
    expect_variant(cfg, &[AttentionVariant::KvShared], "kv_shared_attention")?;
    forward(&mut Eager, x, w, cfg)
}

/// Attention probability matrices, shape `h x L x L`.
pub fn attention_probabilities(
    x: &Tensor,
    w: &AttentionWeights,
    cfg: &AttentionConfig,
) -> Result<Tensor> {
    let ops = &mut Eager;
    let projected = project_all(ops, x, w, cfg)?;
    let l = cfg.seq_len;
    let mut data = Vec::with_capacity(cfg.heads * l * l);
    for head in 0..cfg.heads {
        data.extend_from_slice(head_probabilities(ops, &projected, head, cfg)?.data());
    }
    Tensor::new(vec![cfg.heads, l, l], data)
}

/// Regular-attention weights that reproduce `w` under `shared`'s tying:
/// `W_V := W_Q` for armour, `W_V := W_K` for kv_shared.
pub fn untie_weights(w: &AttentionWeights, shared: AttentionVariant) -> Result<AttentionWeights> {
    let mut out = w.clone();
    match shared {
        AttentionVariant::Armour => {
            out.w_v = w.w_q.clone();
            out.b_v = w.b_q.clone();
        }
        AttentionVariant::KvShared => {
            out.w_v = w.w_k.clone();
            out.b_v = w.b_k.clone();
        }
        AttentionVariant::QkShared => {
            out.w_k = w.w_q.clone();
            out.b_k = w.b_q.clone();
        }
        other => {
            return Err(ArmourError::Config(format!(
                "`{other}` cannot be expressed as tied regular attention"
            )))
        }
    }
    Ok(out)
}
