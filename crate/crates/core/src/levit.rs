//! LeViT-style attention block over an `H x W` token map, plus the two
//! compact variants that build the value matrix from the query and key.
//!
//! The 1x1 convolutions are per-token linear maps on channels, so the input
//! is laid out as `(H*W) x C`. Per head, queries and keys are `HW x D` and
//! the value fed to the second matmul is always `HW x 2D`:
//!
//! * `baseline`: `V` from its own `C x 2D` projection
//! * `half_v_concat_q`: `[V | Q]` with `V` now `HW x D`
//! * `qk_replaces_v`: `[Q | K]`, no value projection at all

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::attention::strict_census;
use crate::autodiff::{Eager, TensorOps};
use crate::error::{ArmourError, Result};
use crate::io::{DType, WeightContainer};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LevitVariant {
    Baseline,
    HalfVConcatQ,
    QkReplacesV,
}

impl LevitVariant {
    pub const ALL: [LevitVariant; 3] = [
        LevitVariant::Baseline,
        LevitVariant::HalfVConcatQ,
        LevitVariant::QkReplacesV,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Baseline => "baseline",
            Self::HalfVConcatQ => "half_v_concat_q",
            Self::QkReplacesV => "qk_replaces_v",
        }
    }

    /// Per-head width of the value projection (0 when absent).
    fn value_proj_width(self, key_dim: usize) -> usize {
        match self {
            Self::Baseline => 2 * key_dim,
            Self::HalfVConcatQ => key_dim,
            Self::QkReplacesV => 0,
        }
    }
}

impl fmt::Display for LevitVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for LevitVariant {
    type Err = ArmourError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| {
                ArmourError::Config(format!(
                "unknown block variant `{s}` (expected baseline, half_v_concat_q, qk_replaces_v)"
            ))
            })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevitBlockConfig {
    pub variant: LevitVariant,
    pub heads: usize,
    pub key_dim: usize,
    pub height: usize,
    pub width: usize,
    pub in_channels: usize,
    pub use_bias: bool,
}

impl LevitBlockConfig {
    pub fn new(
        variant: LevitVariant,
        heads: usize,
        key_dim: usize,
        height: usize,
        width: usize,
        in_channels: usize,
    ) -> Self {
        Self {
            variant,
            heads,
            key_dim,
            height,
            width,
            in_channels,
            use_bias: true,
        }
    }

    pub fn with_variant(mut self, variant: LevitVariant) -> Self {
        self.variant = variant;
        self
    }

    pub fn tokens(&self) -> usize {
        self.height * self.width
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            self.heads,
            self.key_dim,
            self.height,
            self.width,
            self.in_channels,
        ];
        if dims.contains(&0) {
            return Err(ArmourError::Config(format!(
                "block dimensions must be positive: {self:?}"
            )));
        }
        Ok(())
    }

    pub fn required_names(&self) -> Vec<&'static str> {
        let has_v = self.variant != LevitVariant::QkReplacesV;
        let mut names = vec!["p_q", "p_k"];
        if has_v {
            names.push("p_v");
        }
        names.push("p_o");
        if self.use_bias {
            names.extend(["b_q", "b_k"]);
            if has_v {
                names.push("b_v");
            }
            names.push("b_o");
        }
        names
    }

    fn expected_shape(&self, name: &str) -> Vec<usize> {
        let (c, nd) = (self.in_channels, self.heads * self.key_dim);
        let nv = self.heads * self.variant.value_proj_width(self.key_dim);
        match name {
            "p_q" | "p_k" => vec![c, nd],
            "p_v" => vec![c, nv],
            "p_o" => vec![2 * nd, c],
            "b_q" | "b_k" => vec![nd],
            "b_v" => vec![nv],
            "b_o" => vec![c],
            _ => unreachable!("unknown slot {name}"),
        }
    }
}

/// Analytic parameter total of all projections (and biases when enabled).
pub fn block_param_count(cfg: &LevitBlockConfig) -> usize {
    cfg.required_names()
        .into_iter()
        .map(|n| cfg.expected_shape(n).iter().product::<usize>())
        .sum()
}

/// Parameters saved relative to the baseline block at the same dims.
pub fn block_param_savings(cfg: &LevitBlockConfig) -> usize {
    block_param_count(&cfg.with_variant(LevitVariant::Baseline)) - block_param_count(cfg)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LevitBlockWeights<T = Tensor> {
    pub p_q: Option<T>,
    pub p_k: Option<T>,
    pub p_v: Option<T>,
    pub p_o: Option<T>,
    pub b_q: Option<T>,
    pub b_k: Option<T>,
    pub b_v: Option<T>,
    pub b_o: Option<T>,
}

impl<T> Default for LevitBlockWeights<T> {
    fn default() -> Self {
        Self {
            p_q: None,
            p_k: None,
            p_v: None,
            p_o: None,
            b_q: None,
            b_k: None,
            b_v: None,
            b_o: None,
        }
    }
}

impl<T> LevitBlockWeights<T> {
    pub fn named(&self) -> Vec<(&'static str, &T)> {
        [
            ("p_q", &self.p_q),
            ("p_k", &self.p_k),
            ("p_v", &self.p_v),
            ("p_o", &self.p_o),
            ("b_q", &self.b_q),
            ("b_k", &self.b_k),
            ("b_v", &self.b_v),
            ("b_o", &self.b_o),
        ]
        .into_iter()
        .filter_map(|(n, t)| t.as_ref().map(|t| (n, t)))
        .collect()
    }

    pub(crate) fn slot_mut(&mut self, name: &str) -> Option<&mut Option<T>> {
        Some(match name {
            "p_q" => &mut self.p_q,
            "p_k" => &mut self.p_k,
            "p_v" => &mut self.p_v,
            "p_o" => &mut self.p_o,
            "b_q" => &mut self.b_q,
            "b_k" => &mut self.b_k,
            "b_v" => &mut self.b_v,
            "b_o" => &mut self.b_o,
            _ => return None,
        })
    }

    pub fn map<U>(&self, mut f: impl FnMut(&T) -> U) -> LevitBlockWeights<U> {
        LevitBlockWeights {
            p_q: self.p_q.as_ref().map(&mut f),
            p_k: self.p_k.as_ref().map(&mut f),
            p_v: self.p_v.as_ref().map(&mut f),
            p_o: self.p_o.as_ref().map(&mut f),
            b_q: self.b_q.as_ref().map(&mut f),
            b_k: self.b_k.as_ref().map(&mut f),
            b_v: self.b_v.as_ref().map(&mut f),
            b_o: self.b_o.as_ref().map(&mut f),
        }
    }

    pub fn check_census(&self, cfg: &LevitBlockConfig) -> Result<()> {
        let present: Vec<&str> = self.named().into_iter().map(|(n, _)| n).collect();
        strict_census(cfg.variant.as_str(), &present, &cfg.required_names())
    }
}

impl LevitBlockWeights<Tensor> {
    /// Seeded `uniform(-1/sqrt(fan_in), 1/sqrt(fan_in))` initialization.
    pub fn init<R: Rng + ?Sized>(cfg: &LevitBlockConfig, rng: &mut R) -> Self {
        let mut w = Self::default();
        let c_bound = 1.0 / (cfg.in_channels as f64).sqrt();
        let o_bound = 1.0 / ((2 * cfg.heads * cfg.key_dim) as f64).sqrt();
        for name in cfg.required_names() {
            let bound = if name.ends_with('o') {
                o_bound
            } else {
                c_bound
            };
            let t = Tensor::uniform(&cfg.expected_shape(name), bound, rng);
            *w.slot_mut(name).unwrap() = Some(t);
        }
        w
    }

    pub fn param_count(&self) -> usize {
        self.named().iter().map(|(_, t)| t.numel()).sum()
    }

    pub fn validate(&self, cfg: &LevitBlockConfig) -> Result<()> {
        cfg.validate()?;
        self.check_census(cfg)?;
        for (name, t) in self.named() {
            let expected = cfg.expected_shape(name);
            if t.shape() != expected.as_slice() {
                return Err(ArmourError::Dimension {
                    op: "block weights",
                    left: t.shape().to_vec(),
                    right: expected,
                });
            }
        }
        Ok(())
    }

    /// Writes present tensors as `{prefix}{name}`, e.g. `block.p_q`.
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

    pub fn import(
        container: &WeightContainer,
        prefix: &str,
        cfg: &LevitBlockConfig,
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
        let refs: Vec<&str> = present.iter().map(String::as_str).collect();
        strict_census(cfg.variant.as_str(), &refs, &cfg.required_names())?;
        w.validate(cfg)?;
        Ok(w)
    }
}

fn affine<O: TensorOps>(
    ops: &mut O,
    x: &O::Value,
    w: &Option<O::Value>,
    b: &Option<O::Value>,
) -> Result<O::Value> {
    let y = ops.matmul(x, w.as_ref().expect("census checked"))?;
    match b {
        Some(b) => ops.add_row_bias(&y, b),
        None => Ok(y),
    }
}

fn block_heads<O: TensorOps>(
    ops: &mut O,
    x: &O::Value,
    w: &LevitBlockWeights<O::Value>,
    cfg: &LevitBlockConfig,
    mut on_probs: impl FnMut(&mut O, &O::Value),
) -> Result<O::Value> {
    cfg.validate()?;
    w.check_census(cfg)?;
    let shape = ops.shape_of(x);
    if shape != [cfg.tokens(), cfg.in_channels] {
        return Err(ArmourError::Dimension {
            op: "block input",
            left: shape,
            right: vec![cfg.tokens(), cfg.in_channels],
        });
    }
    let d = cfg.key_dim;
    let vw = cfg.variant.value_proj_width(d);
    let q_all = affine(ops, x, &w.p_q, &w.b_q)?;
    let k_all = affine(ops, x, &w.p_k, &w.b_k)?;
    let v_all = match cfg.variant {
        LevitVariant::QkReplacesV => None,
        _ => Some(affine(ops, x, &w.p_v, &w.b_v)?),
    };
    let scale = 1.0 / (d as f64).sqrt();

    let mut merged: Option<O::Value> = None;
    for n in 0..cfg.heads {
        let q = ops.slice_last_axis(&q_all, n * d, d)?;
        let k = ops.slice_last_axis(&k_all, n * d, d)?;
        let kt = ops.transpose(&k)?;
        let scores = ops.matmul(&q, &kt)?;
        let scores = ops.scale(&scores, scale)?;
        let probs = ops.softmax_rows(&scores)?;
        on_probs(ops, &probs);
        let value = match (&cfg.variant, &v_all) {
            (LevitVariant::Baseline, Some(v)) => ops.slice_last_axis(v, n * vw, vw)?,
            (LevitVariant::HalfVConcatQ, Some(v)) => {
                let v = ops.slice_last_axis(v, n * vw, vw)?;
                ops.concat_last_axis(&v, &q)?
            }
            _ => ops.concat_last_axis(&q, &k)?,
        };
        let out = ops.matmul(&probs, &value)?;
        merged = Some(match merged {
            Some(acc) => ops.concat_last_axis(&acc, &out)?,
            None => out,
        });
    }
    affine(ops, &merged.expect("at least one head"), &w.p_o, &w.b_o)
}

/// Block forward: `(H*W) x C` in, `(H*W) x C` out.
pub fn levit_block_forward<O: TensorOps>(
    ops: &mut O,
    x: &O::Value,
    w: &LevitBlockWeights<O::Value>,
    cfg: &LevitBlockConfig,
) -> Result<O::Value> {
    block_heads(ops, x, w, cfg, |_, _| {})
}

/// Per-head probability matrices, shape `N x HW x HW`.
pub fn levit_probabilities(
    x: &Tensor,
    w: &LevitBlockWeights,
    cfg: &LevitBlockConfig,
) -> Result<Tensor> {
    let mut data = Vec::new();
    block_heads(&mut Eager, x, w, cfg, |_, p: &Tensor| {
        data.extend_from_slice(p.data())
    })?;
    let l = cfg.tokens();
    Tensor::new(vec![cfg.heads, l, l], data)
}

/// Baseline weights whose value projection reproduces a `half_v_concat_q`
/// block: head `n`'s `2D` value columns are `[P_V head n | P_Q head n]`.
pub fn expand_half_v_to_baseline(
    w: &LevitBlockWeights,
    cfg: &LevitBlockConfig,
) -> Result<LevitBlockWeights> {
    if cfg.variant != LevitVariant::HalfVConcatQ {
        return Err(ArmourError::Config(format!(
            "expected half_v_concat_q weights, got `{}`",
            cfg.variant
        )));
    }
    w.validate(cfg)?;
    let d = cfg.key_dim;
    let (pv, pq) = (w.p_v.as_ref().unwrap(), w.p_q.as_ref().unwrap());
    let mut p_v: Option<Tensor> = None;
    let mut b_v: Option<Tensor> = None;
    for n in 0..cfg.heads {
        let cols = pv
            .slice_last_axis(n * d, d)?
            .concat_last_axis(&pq.slice_last_axis(n * d, d)?)?;
        p_v = Some(match p_v {
            Some(acc) => acc.concat_last_axis(&cols)?,
            None => cols,
        });
        if let (Some(bv), Some(bq)) = (&w.b_v, &w.b_q) {
            let b = bv
                .slice_last_axis(n * d, d)?
                .concat_last_axis(&bq.slice_last_axis(n * d, d)?)?;
            b_v = Some(match b_v {
                Some(acc) => acc.concat_last_axis(&b)?,
                None => b,
            });
        }
    }
    Ok(LevitBlockWeights {
        p_v,
        b_v,
        ..w.clone()
    })
}
