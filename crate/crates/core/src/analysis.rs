//! Weight-redundancy measurement and analytic parameter / MAC accounting.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::attention::{AttentionConfig, AttentionVariant};
use crate::error::{ArmourError, Result};
use crate::levit::{LevitBlockConfig, LevitVariant};
use crate::tensor::Tensor;

/// Threshold used for the redundancy metric unless overridden.
pub const DEFAULT_EPSILON: f64 = 1e-2;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RedundancyMode {
    /// One comparison over the whole matrix.
    #[default]
    Whole,
    /// Breakdown per column block of `d / heads` (one block per head).
    PerHead { heads: usize },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RedundancyOptions {
    pub mode: RedundancyMode,
    /// Divide each matrix by its largest magnitude before comparing.
    pub normalize: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerRedundancy {
    pub layer: String,
    pub fraction_below: f64,
    pub below: usize,
    pub element_count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RedundancyReport {
    pub pair: String,
    pub epsilon: f64,
    pub fraction_below: f64,
    pub below: usize,
    pub element_count: usize,
    pub layers: Vec<LayerRedundancy>,
}

fn count_below(a: &[f64], b: &[f64], epsilon: f64) -> usize {
    a.iter()
        .zip(b)
        .filter(|(x, y)| (*x - *y).abs() < epsilon)
        .count()
}

fn fraction(below: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        below as f64 / total as f64
    }
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon.is_finite() && epsilon > 0.0 {
        Ok(())
    } else {
        Err(ArmourError::Config(format!(
            "epsilon must be positive, got {epsilon}"
        )))
    }
}

/// Fraction of elements with `|a_i - b_i| < epsilon`.
pub fn redundancy(a: &Tensor, b: &Tensor, epsilon: f64) -> Result<RedundancyReport> {
    redundancy_layers("a_b", &[("0", a, b)], epsilon, RedundancyOptions::default())
}

fn normalized(t: &Tensor) -> Tensor {
    let max = t.data().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if max == 0.0 {
        t.clone()
    } else {
        t.scale(1.0 / max)
    }
}

/// Redundancy of one weight pair across several layers.
///
/// The top-level fraction pools every element; `layers` holds one row per
/// layer (or per layer and head in [`RedundancyMode::PerHead`]).
pub fn redundancy_layers(
    pair: &str,
    layers: &[(&str, &Tensor, &Tensor)],
    epsilon: f64,
    opts: RedundancyOptions,
) -> Result<RedundancyReport> {
    check_epsilon(epsilon)?;
    let mut rows = Vec::new();
    let (mut below, mut total) = (0, 0);
    for &(layer, a, b) in layers {
        if a.shape() != b.shape() {
            return Err(ArmourError::Dimension {
                op: "redundancy",
                left: a.shape().to_vec(),
                right: b.shape().to_vec(),
            });
        }
        let (a, b) = if opts.normalize {
            (normalized(a), normalized(b))
        } else {
            (a.clone(), b.clone())
        };
        match opts.mode {
            RedundancyMode::Whole => {
                let n = count_below(a.data(), b.data(), epsilon);
                rows.push(LayerRedundancy {
                    layer: layer.to_string(),
                    fraction_below: fraction(n, a.numel()),
                    below: n,
                    element_count: a.numel(),
                });
            }
            RedundancyMode::PerHead { heads } => {
                let cols = *a.shape().last().unwrap_or(&0);
                if heads == 0 || cols % heads != 0 {
                    return Err(ArmourError::Config(format!(
                        "cannot split {cols} columns into {heads} heads"
                    )));
                }
                let dh = cols / heads;
                for h in 0..heads {
                    let ah = a.slice_last_axis(h * dh, dh)?;
                    let bh = b.slice_last_axis(h * dh, dh)?;
                    let n = count_below(ah.data(), bh.data(), epsilon);
                    rows.push(LayerRedundancy {
                        layer: format!("{layer}.head{h}"),
                        fraction_below: fraction(n, ah.numel()),
                        below: n,
                        element_count: ah.numel(),
                    });
                }
            }
        }
    }
    for r in &rows {
        below += r.below;
        total += r.element_count;
    }
    Ok(RedundancyReport {
        pair: pair.to_string(),
        epsilon,
        fraction_below: fraction(below, total),
        below,
        element_count: total,
        layers: rows,
    })
}

fn default_true() -> bool {
    true
}

fn default_count() -> usize {
    1
}

/// One kind of layer in an architecture spec.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerKind {
    Attention {
        dim: usize,
        heads: usize,
        #[serde(default = "regular")]
        variant: AttentionVariant,
        #[serde(default = "default_true")]
        bias: bool,
        #[serde(default = "default_true")]
        output_proj: bool,
    },
    Mlp {
        dim: usize,
        hidden: usize,
        #[serde(default = "default_true")]
        bias: bool,
    },
    /// Patch-embedding convolution plus a learned table of class and
    /// position tokens.
    Embed {
        in_channels: usize,
        patch_size: usize,
        dim: usize,
        positions: usize,
        class_tokens: usize,
        #[serde(default = "default_true")]
        bias: bool,
    },
    Norm {
        dim: usize,
    },
    Head {
        dim: usize,
        classes: usize,
        #[serde(default = "default_true")]
        bias: bool,
    },
    Other {
        params: usize,
    },
}

fn regular() -> AttentionVariant {
    AttentionVariant::Regular
}

impl LayerKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Attention { .. } => "attention",
            Self::Mlp { .. } => "mlp",
            Self::Embed { .. } => "embed",
            Self::Norm { .. } => "norm",
            Self::Head { .. } => "head",
            Self::Other { .. } => "other",
        }
    }

    fn attention_config(&self, seq_len: usize) -> Option<AttentionConfig> {
        match *self {
            Self::Attention {
                dim,
                heads,
                variant,
                bias,
                output_proj,
            } => Some(AttentionConfig {
                variant,
                seq_len,
                model_dim: dim,
                heads,
                use_bias: bias,
                include_output_proj: output_proj,
            }),
            _ => None,
        }
    }

    pub fn params(&self) -> usize {
        let b = |on: bool, n: usize| if on { n } else { 0 };
        match *self {
            Self::Attention { .. } => self.attention_config(1).unwrap().param_count(),
            Self::Mlp { dim, hidden, bias } => 2 * dim * hidden + b(bias, hidden + dim),
            Self::Embed {
                in_channels,
                patch_size,
                dim,
                positions,
                class_tokens,
                bias,
            } => {
                in_channels * patch_size * patch_size * dim
                    + b(bias, dim)
                    + (positions + class_tokens) * dim
            }
            Self::Norm { dim } => 2 * dim,
            Self::Head { dim, classes, bias } => dim * classes + b(bias, classes),
            Self::Other { params } => params,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerEntry {
    pub name: String,
    #[serde(default = "default_count")]
    pub count: usize,
    #[serde(flatten)]
    pub kind: LayerKind,
}

/// Declarative layer list for a model family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchSpec {
    pub name: String,
    pub layers: Vec<LayerEntry>,
}

impl ArchSpec {
    /// DeiT-style ViT: 224x224 input, 16x16 patches, MLP ratio 4, 1000 classes.
    pub fn deit(name: &str, dim: usize, heads: usize, depth: usize) -> Self {
        let entry = |name: &str, count, kind| LayerEntry {
            name: name.to_string(),
            count,
            kind,
        };
        Self {
            name: name.to_string(),
            layers: vec![
                entry(
                    "patch_embed",
                    1,
                    LayerKind::Embed {
                        in_channels: 3,
                        patch_size: 16,
                        dim,
                        positions: 197,
                        class_tokens: 1,
                        bias: true,
                    },
                ),
                entry("blocks.norm1", depth, LayerKind::Norm { dim }),
                entry(
                    "blocks.attn",
                    depth,
                    LayerKind::Attention {
                        dim,
                        heads,
                        variant: AttentionVariant::Regular,
                        bias: true,
                        output_proj: true,
                    },
                ),
                entry("blocks.norm2", depth, LayerKind::Norm { dim }),
                entry(
                    "blocks.mlp",
                    depth,
                    LayerKind::Mlp {
                        dim,
                        hidden: 4 * dim,
                        bias: true,
                    },
                ),
                entry("norm", 1, LayerKind::Norm { dim }),
                entry(
                    "head",
                    1,
                    LayerKind::Head {
                        dim,
                        classes: 1000,
                        bias: true,
                    },
                ),
            ],
        }
    }

    /// Built-in specs: `deit-ti`, `deit-s`, `deit-b`.
    pub fn builtin(name: &str) -> Result<Self> {
        match name {
            "deit-ti" => Ok(Self::deit("deit-ti", 192, 3, 12)),
            "deit-s" => Ok(Self::deit("deit-s", 384, 6, 12)),
            "deit-b" => Ok(Self::deit("deit-b", 768, 12, 12)),
            other => Err(ArmourError::Spec(format!(
                "unknown architecture `{other}` (built-ins: deit-ti, deit-s, deit-b)"
            ))),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self =
            serde_json::from_str(text).map_err(|e| ArmourError::Spec(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        for layer in &self.layers {
            if let Some(cfg) = layer.kind.attention_config(1) {
                cfg.validate()
                    .map_err(|e| ArmourError::Spec(format!("layer `{}`: {e}", layer.name)))?;
            }
        }
        Ok(())
    }

    /// Copy with every attention layer switched to `variant`.
    pub fn with_attention_variant(&self, variant: AttentionVariant) -> Self {
        let mut out = self.clone();
        for layer in &mut out.layers {
            if let LayerKind::Attention { variant: v, .. } = &mut layer.kind {
                *v = variant;
            }
        }
        out
    }

    pub fn attention_layer_count(&self) -> usize {
        self.layers
            .iter()
            .filter(|l| matches!(l.kind, LayerKind::Attention { .. }))
            .map(|l| l.count)
            .sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    pub name: String,
    pub kind: String,
    pub count: usize,
    pub params_each: usize,
    pub params_total: usize,
}

/// Per-layer parameter table for a spec.
pub fn param_table(spec: &ArchSpec) -> Result<Vec<LayerParams>> {
    spec.validate()?;
    Ok(spec
        .layers
        .iter()
        .map(|l| LayerParams {
            name: l.name.clone(),
            kind: l.kind.name().to_string(),
            count: l.count,
            params_each: l.kind.params(),
            params_total: l.count * l.kind.params(),
        })
        .collect())
}

/// Exact parameter total of a spec.
pub fn model_param_count(spec: &ArchSpec) -> Result<usize> {
    Ok(param_table(spec)?.iter().map(|l| l.params_total).sum())
}

/// Comparison of a spec against a copy with a different attention variant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamReport {
    pub arch: String,
    pub variant: AttentionVariant,
    pub baseline_total: usize,
    pub total: usize,
    pub saved: usize,
    pub delta_pct: f64,
    pub layers: Vec<LayerParams>,
}

pub fn param_report(spec: &ArchSpec, variant: AttentionVariant) -> Result<ParamReport> {
    let baseline_total = model_param_count(spec)?;
    let swapped = spec.with_attention_variant(variant);
    let total = model_param_count(&swapped)?;
    let delta = total as f64 - baseline_total as f64;
    Ok(ParamReport {
        arch: spec.name.clone(),
        variant,
        baseline_total,
        total,
        saved: baseline_total.saturating_sub(total),
        delta_pct: 100.0 * delta / baseline_total as f64,
        layers: param_table(&swapped)?,
    })
}

/// Multiply-accumulate counts of one attention layer for a sequence of `L` tokens.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttentionMacs {
    /// Q/K/V input projections.
    pub projection: u64,
    pub output_projection: u64,
    /// `Q K^T` plus `P V`.
    pub attention_matmul: u64,
}

pub fn attention_macs(cfg: &AttentionConfig) -> AttentionMacs {
    let (l, d) = (cfg.seq_len as u64, cfg.model_dim as u64);
    AttentionMacs {
        projection: cfg.variant.input_projections() as u64 * l * d * d,
        output_projection: if cfg.include_output_proj {
            l * d * d
        } else {
            0
        },
        attention_matmul: 2 * l * l * d,
    }
}

/// MACs of a LeViT-style block; `projection` covers Q, K and V.
pub fn levit_block_macs(cfg: &LevitBlockConfig) -> AttentionMacs {
    let hw = cfg.tokens() as u64;
    let (c, n, d) = (cfg.in_channels as u64, cfg.heads as u64, cfg.key_dim as u64);
    let v_width = match cfg.variant {
        LevitVariant::Baseline => 2 * n * d,
        LevitVariant::HalfVConcatQ => n * d,
        LevitVariant::QkReplacesV => 0,
    };
    AttentionMacs {
        projection: hw * c * (2 * n * d + v_width),
        output_projection: hw * 2 * n * d * c,
        attention_matmul: n * hw * hw * d + n * hw * hw * 2 * d,
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerMacs {
    pub name: String,
    pub kind: String,
    pub count: usize,
    /// Per instance of the layer.
    pub macs: u64,
    pub attention: Option<AttentionMacs>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlopReport {
    pub arch: String,
    pub seq_len: usize,
    pub layers: Vec<LayerMacs>,
    pub projection_macs: u64,
    pub attention_matmul_macs: u64,
    pub total_macs: u64,
}

/// Analytic MAC counts over a whole spec.
pub fn model_flop_count(spec: &ArchSpec, seq_len: usize) -> Result<FlopReport> {
    spec.validate()?;
    if seq_len == 0 {
        return Err(ArmourError::Config(
            "sequence length must be positive".into(),
        ));
    }
    let l = seq_len as u64;
    let mut layers = Vec::new();
    let (mut projection, mut matmul, mut total) = (0u64, 0u64, 0u64);
    for entry in &spec.layers {
        let (macs, attention) = match entry.kind {
            LayerKind::Attention { .. } => {
                let m = attention_macs(&entry.kind.attention_config(seq_len).unwrap());
                projection += entry.count as u64 * m.projection;
                matmul += entry.count as u64 * m.attention_matmul;
                (
                    m.projection + m.output_projection + m.attention_matmul,
                    Some(m),
                )
            }
            LayerKind::Mlp { dim, hidden, .. } => (2 * l * (dim * hidden) as u64, None),
            LayerKind::Embed {
                in_channels,
                patch_size,
                dim,
                class_tokens,
                ..
            } => {
                let patches = l.saturating_sub(class_tokens as u64);
                (
                    patches * (in_channels * patch_size * patch_size * dim) as u64,
                    None,
                )
            }
            LayerKind::Head { dim, classes, .. } => ((dim * classes) as u64, None),
            LayerKind::Norm { .. } | LayerKind::Other { .. } => (0, None),
        };
        total += entry.count as u64 * macs;
        layers.push(LayerMacs {
            name: entry.name.clone(),
            kind: entry.kind.name().to_string(),
            count: entry.count,
            macs,
            attention,
        });
    }
    Ok(FlopReport {
        arch: spec.name.clone(),
        seq_len,
        layers,
        projection_macs: projection,
        attention_matmul_macs: matmul,
        total_macs: total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> Tensor {
        Tensor::new(vec![xs.len()], xs.to_vec()).unwrap()
    }

    #[test]
    fn redundancy_examples() {
        let a = v(&[0.0, 0.0, 1.0, 1.0]);
        let b = v(&[0.005, 0.5, 1.005, 2.0]);
        let r = redundancy(&a, &b, 0.01).unwrap();
        assert_eq!(r.fraction_below, 0.5);
        assert_eq!(r.element_count, 4);
        assert_eq!(
            redundancy(&a, &a, DEFAULT_EPSILON).unwrap().fraction_below,
            1.0
        );
        assert_eq!(DEFAULT_EPSILON, 1e-2);
    }

    #[test]
    fn threshold_is_strict() {
        let r = redundancy(&v(&[0.0]), &v(&[0.5]), 0.5).unwrap();
        assert_eq!(r.fraction_below, 0.0);
    }

    #[test]
    fn redundancy_errors() {
        assert!(redundancy(&v(&[0.0]), &v(&[0.0, 1.0]), 0.1).is_err());
        assert!(redundancy(&v(&[0.0]), &v(&[0.0]), 0.0).is_err());
    }

    #[test]
    fn per_head_breakdown_pools_to_whole() {
        let a = Tensor::from_rows(&[&[0.0, 0.0, 1.0, 1.0], &[0.0, 0.0, 0.0, 0.0]]).unwrap();
        let b = Tensor::from_rows(&[&[0.0, 1.0, 1.0, 1.0], &[0.0, 0.0, 0.0, 5.0]]).unwrap();
        let opts = RedundancyOptions {
            mode: RedundancyMode::PerHead { heads: 2 },
            normalize: false,
        };
        let r = redundancy_layers("wq_wk", &[("layer0", &a, &b)], 0.01, opts).unwrap();
        assert_eq!(r.layers.len(), 2);
        assert_eq!(r.layers[0].fraction_below, 0.75);
        assert_eq!(r.layers[1].fraction_below, 0.75);
        assert_eq!(
            r.fraction_below,
            redundancy(&a, &b, 0.01).unwrap().fraction_below
        );
    }

    #[test]
    fn deit_ti_attention_savings() {
        let spec = ArchSpec::builtin("deit-ti").unwrap();
        let r = param_report(&spec, AttentionVariant::Armour).unwrap();
        assert_eq!(r.saved, 12 * (192 * 192 + 192));
        assert_eq!(r.saved, 444_672);
    }

    #[test]
    fn flop_split_per_layer() {
        let cfg = AttentionConfig::new(AttentionVariant::Regular, 197, 192, 3);
        let reg = attention_macs(&cfg);
        let arm = attention_macs(&cfg.with_variant(AttentionVariant::Armour));
        assert_eq!(reg.projection, 3 * 197 * 192 * 192);
        assert_eq!(arm.projection, 2 * 197 * 192 * 192);
        assert_eq!(reg.projection - arm.projection, 7_262_208);
        assert_eq!(reg.attention_matmul, 2 * 197 * 197 * 192);
        assert_eq!(reg.attention_matmul, arm.attention_matmul);
    }

    #[test]
    fn unknown_layer_kind_is_spec_error() {
        let text = r#"{"name":"x","layers":[{"name":"a","kind":"conv","dim":3}]}"#;
        assert!(matches!(
            ArchSpec::from_json(text),
            Err(ArmourError::Spec(_))
        ));
        assert!(matches!(
            ArchSpec::builtin("vit-h"),
            Err(ArmourError::Spec(_))
        ));
    }

    #[test]
    fn spec_json_round_trip() {
        let spec = ArchSpec::builtin("deit-s").unwrap();
        let text = serde_json::to_string(&spec).unwrap();
        assert_eq!(ArchSpec::from_json(&text).unwrap(), spec);
    }
}
