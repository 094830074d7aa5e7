//! Loop-level reference implementations, written without any tensor op
//! from the crate so they can serve as an independent oracle.

#![allow(dead_code)]

use armour::attention::{AttentionConfig, AttentionVariant, AttentionWeights};
use armour::levit::{LevitBlockConfig, LevitBlockWeights, LevitVariant};
use armour::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Mat = Vec<Vec<f64>>;

pub fn to_mat(t: &Tensor) -> Mat {
    let cols = t.shape()[1];
    t.data().chunks(cols).map(<[f64]>::to_vec).collect()
}

/// `x W + b` by explicit triple loop.
pub fn affine(x: &Mat, w: &Tensor, b: Option<&Tensor>) -> Mat {
    let (rows_w, cols) = (w.shape()[0], w.shape()[1]);
    x.iter()
        .map(|row| {
            (0..cols)
                .map(|j| {
                    let mut s = b.map_or(0.0, |b| b.data()[j]);
                    for (i, xi) in row.iter().enumerate().take(rows_w) {
                        s += xi * w.data()[i * cols + j];
                    }
                    s
                })
                .collect()
        })
        .collect()
}

fn columns(m: &Mat, start: usize, len: usize) -> Mat {
    m.iter().map(|r| r[start..start + len].to_vec()).collect()
}

fn hconcat(a: &Mat, b: &Mat) -> Mat {
    a.iter()
        .zip(b)
        .map(|(x, y)| [x.as_slice(), y.as_slice()].concat())
        .collect()
}

/// Row-wise softmax of `scale * q k^T`, with the diagonal excluded when asked.
pub fn probabilities(q: &Mat, k: &Mat, scale: f64, skip_diagonal: bool) -> Mat {
    let l = q.len();
    (0..l)
        .map(|i| {
            let scores: Vec<Option<f64>> = (0..l)
                .map(|j| {
                    if skip_diagonal && i == j {
                        None
                    } else {
                        Some(scale * q[i].iter().zip(&k[j]).map(|(a, b)| a * b).sum::<f64>())
                    }
                })
                .collect();
            let max = scores
                .iter()
                .flatten()
                .fold(f64::NEG_INFINITY, |m, &s| m.max(s));
            let exps: Vec<f64> = scores
                .iter()
                .map(|s| s.map_or(0.0, |s| (s - max).exp()))
                .collect();
            let total: f64 = exps.iter().sum();
            exps.iter().map(|e| e / total).collect()
        })
        .collect()
}

fn weighted_sum(p: &Mat, v: &Mat) -> Mat {
    let cols = v[0].len();
    p.iter()
        .map(|row| {
            (0..cols)
                .map(|c| row.iter().zip(v).map(|(pj, vj)| pj * vj[c]).sum())
                .collect()
        })
        .collect()
}

pub fn brute_attention(x: &Tensor, w: &AttentionWeights, cfg: &AttentionConfig) -> Mat {
    let x = to_mat(x);
    let q = affine(&x, w.w_q.as_ref().unwrap(), w.b_q.as_ref());
    let k = match cfg.variant {
        AttentionVariant::QkShared | AttentionVariant::QkSharedDiagMasked => q.clone(),
        _ => affine(&x, w.w_k.as_ref().unwrap(), w.b_k.as_ref()),
    };
    let v = match cfg.variant {
        AttentionVariant::Armour => q.clone(),
        AttentionVariant::KvShared => k.clone(),
        _ => affine(&x, w.w_v.as_ref().unwrap(), w.b_v.as_ref()),
    };
    let dh = cfg.model_dim / cfg.heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let skip = cfg.variant == AttentionVariant::QkSharedDiagMasked && cfg.seq_len > 1;
    let mut merged: Mat = vec![Vec::new(); cfg.seq_len];
    for h in 0..cfg.heads {
        let p = probabilities(
            &columns(&q, h * dh, dh),
            &columns(&k, h * dh, dh),
            scale,
            skip,
        );
        merged = hconcat(&merged, &weighted_sum(&p, &columns(&v, h * dh, dh)));
    }
    match (&w.w_o, cfg.include_output_proj) {
        (Some(wo), true) => affine(&merged, wo, w.b_o.as_ref()),
        _ => merged,
    }
}

pub fn brute_levit(x: &Tensor, w: &LevitBlockWeights, cfg: &LevitBlockConfig) -> Mat {
    let x = to_mat(x);
    let d = cfg.key_dim;
    let q = affine(&x, w.p_q.as_ref().unwrap(), w.b_q.as_ref());
    let k = affine(&x, w.p_k.as_ref().unwrap(), w.b_k.as_ref());
    let v = w.p_v.as_ref().map(|p| affine(&x, p, w.b_v.as_ref()));
    let scale = 1.0 / (d as f64).sqrt();
    let mut merged: Mat = vec![Vec::new(); cfg.tokens()];
    for n in 0..cfg.heads {
        let qn = columns(&q, n * d, d);
        let kn = columns(&k, n * d, d);
        let value = match cfg.variant {
            LevitVariant::Baseline => columns(v.as_ref().unwrap(), n * 2 * d, 2 * d),
            LevitVariant::HalfVConcatQ => hconcat(&columns(v.as_ref().unwrap(), n * d, d), &qn),
            LevitVariant::QkReplacesV => hconcat(&qn, &kn),
        };
        let p = probabilities(&qn, &kn, scale, false);
        merged = hconcat(&merged, &weighted_sum(&p, &value));
    }
    affine(&merged, w.p_o.as_ref().unwrap(), w.b_o.as_ref())
}

pub fn max_abs_diff(a: &Tensor, b: &Mat) -> f64 {
    a.data()
        .iter()
        .zip(b.iter().flatten())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

pub fn attention_setup(cfg: &AttentionConfig, seed: u64) -> (Tensor, AttentionWeights) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Tensor::uniform(&[cfg.seq_len, cfg.model_dim], 1.0, &mut rng);
    (x, AttentionWeights::init(cfg, &mut rng))
}

pub fn levit_setup(cfg: &LevitBlockConfig, seed: u64) -> (Tensor, LevitBlockWeights) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Tensor::uniform(&[cfg.tokens(), cfg.in_channels], 1.0, &mut rng);
    (x, LevitBlockWeights::init(cfg, &mut rng))
}
