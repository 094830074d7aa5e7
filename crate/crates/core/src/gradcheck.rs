//! Finite-difference gradient oracle and per-tensor gradient checks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attention::{self, AttentionConfig, AttentionWeights};
use crate::autodiff::{Eager, GradTape, TensorOps};
use crate::error::Result;
use crate::levit::{levit_block_forward, LevitBlockConfig, LevitBlockWeights};
use crate::tensor::Tensor;

/// Default central-difference step for 64-bit values.
pub const FD_STEP: f64 = 1e-5;

/// Largest acceptable relative error between analytic and numeric gradients.
pub const GRAD_TOLERANCE: f64 = 1e-4;

/// Below this magnitude (on both sides) elements are compared absolutely.
pub const ABS_FLOOR: f64 = 1e-8;

/// Central-difference gradient of a scalar function at `x`.
///
/// Element `i` is `(f(x + h e_i) - f(x - h e_i)) / 2h`.
pub fn finite_diff_grad<F>(mut f: F, x: &Tensor, step: f64) -> Tensor
where
    F: FnMut(&Tensor) -> f64,
{
    let shape = x.shape().to_vec();
    let mut probe = x.data().to_vec();
    let mut out = Vec::with_capacity(probe.len());
    for i in 0..probe.len() {
        let orig = probe[i];
        probe[i] = orig + step;
        let plus = f(&Tensor::new(shape.clone(), probe.clone()).unwrap());
        probe[i] = orig - step;
        let minus = f(&Tensor::new(shape.clone(), probe.clone()).unwrap());
        probe[i] = orig;
        out.push((plus - minus) / (2.0 * step));
    }
    Tensor::new(shape, out).unwrap()
}

/// Largest relative error between two gradients of equal shape.
///
/// Pairs where both magnitudes are below [`ABS_FLOOR`] contribute their
/// absolute difference instead.
pub fn max_relative_error(analytic: &Tensor, numeric: &Tensor) -> f64 {
    assert_eq!(analytic.shape(), numeric.shape());
    analytic
        .data()
        .iter()
        .zip(numeric.data())
        .map(|(&a, &n)| {
            let diff = (a - n).abs();
            if a.abs() < ABS_FLOOR && n.abs() < ABS_FLOOR {
                diff
            } else {
                diff / a.abs().max(n.abs())
            }
        })
        .fold(0.0, f64::max)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorCheck {
    pub name: String,
    pub max_rel_err: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub block: String,
    pub variant: String,
    pub seed: u64,
    pub tolerance: f64,
    pub tensors: Vec<TensorCheck>,
    pub max_rel_err: f64,
    pub passed: bool,
}

impl GradCheckReport {
    fn new(block: &str, variant: &str, seed: u64, tensors: Vec<TensorCheck>) -> Self {
        let max_rel_err = tensors.iter().map(|t| t.max_rel_err).fold(0.0, f64::max);
        Self {
            block: block.to_string(),
            variant: variant.to_string(),
            seed,
            tolerance: GRAD_TOLERANCE,
            tensors,
            max_rel_err,
            passed: max_rel_err < GRAD_TOLERANCE,
        }
    }
}

/// Loss `sum(out * probe)` with a fixed random probe, so that every output
/// element carries a distinct weight.
fn probe_loss(out: &Tensor, probe: &Tensor) -> f64 {
    out.mul(probe).expect("probe shape").sum()
}

/// Checks analytic gradients of one attention block against central
/// differences, w.r.t. the input and every weight tensor present.
pub fn gradcheck_attention(cfg: &AttentionConfig, seed: u64) -> Result<GradCheckReport> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Tensor::uniform(&[cfg.seq_len, cfg.model_dim], 1.0, &mut rng);
    let w = AttentionWeights::init(cfg, &mut rng);
    let probe = Tensor::uniform(&[cfg.seq_len, cfg.model_dim], 1.0, &mut rng);

    let mut tape = GradTape::new();
    let xv = tape.leaf(x.clone());
    let wv = w.map(|t| tape.leaf(t.clone()));
    let out = attention::forward(&mut tape, &xv, &wv, cfg)?;
    let pv = tape.leaf(probe.clone());
    let prod = tape.mul(&out, &pv)?;
    let loss = tape.sum(&prod)?;
    let grads = tape.backward(loss)?;

    let eval = |x: &Tensor, w: &AttentionWeights| -> f64 {
        probe_loss(
            &attention::forward(&mut Eager, x, w, cfg).expect("valid"),
            &probe,
        )
    };

    let mut checks = Vec::new();
    let numeric = finite_diff_grad(|xp| eval(xp, &w), &x, FD_STEP);
    checks.push(TensorCheck {
        name: "x".into(),
        max_rel_err: max_relative_error(&grads.wrt(xv), &numeric),
    });
    for ((name, t), (_, v)) in w.named().into_iter().zip(wv.named()) {
        let numeric = finite_diff_grad(
            |tp| {
                let mut w2 = w.clone();
                *w2.slot_mut(name).unwrap() = Some(tp.clone());
                eval(&x, &w2)
            },
            t,
            FD_STEP,
        );
        checks.push(TensorCheck {
            name: name.into(),
            max_rel_err: max_relative_error(&grads.wrt(*v), &numeric),
        });
    }
    Ok(GradCheckReport::new(
        "attention",
        cfg.variant.as_str(),
        seed,
        checks,
    ))
}

/// Same as [`gradcheck_attention`] for a LeViT-style block.
pub fn gradcheck_levit(cfg: &LevitBlockConfig, seed: u64) -> Result<GradCheckReport> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Tensor::uniform(&[cfg.tokens(), cfg.in_channels], 1.0, &mut rng);
    let w = LevitBlockWeights::init(cfg, &mut rng);
    let probe = Tensor::uniform(&[cfg.tokens(), cfg.in_channels], 1.0, &mut rng);

    let mut tape = GradTape::new();
    let xv = tape.leaf(x.clone());
    let wv = w.map(|t| tape.leaf(t.clone()));
    let out = levit_block_forward(&mut tape, &xv, &wv, cfg)?;
    let pv = tape.leaf(probe.clone());
    let prod = tape.mul(&out, &pv)?;
    let loss = tape.sum(&prod)?;
    let grads = tape.backward(loss)?;

    let eval = |x: &Tensor, w: &LevitBlockWeights| -> f64 {
        probe_loss(
            &levit_block_forward(&mut Eager, x, w, cfg).expect("valid"),
            &probe,
        )
    };

    let mut checks = Vec::new();
    let numeric = finite_diff_grad(|xp| eval(xp, &w), &x, FD_STEP);
    checks.push(TensorCheck {
        name: "x".into(),
        max_rel_err: max_relative_error(&grads.wrt(xv), &numeric),
    });
    for ((name, t), (_, v)) in w.named().into_iter().zip(wv.named()) {
        let numeric = finite_diff_grad(
            |tp| {
                let mut w2 = w.clone();
                *w2.slot_mut(name).unwrap() = Some(tp.clone());
                eval(&x, &w2)
            },
            t,
            FD_STEP,
        );
        checks.push(TensorCheck {
            name: name.into(),
            max_rel_err: max_relative_error(&grads.wrt(*v), &numeric),
        });
    }
    Ok(GradCheckReport::new(
        "levit",
        cfg.variant.as_str(),
        seed,
        checks,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attention::AttentionVariant;

    #[test]
    fn finite_diff_examples() {
        let x = Tensor::new(vec![2], vec![1.0, 2.0]).unwrap();
        let g = finite_diff_grad(|t| t.data().iter().map(|v| v * v).sum(), &x, FD_STEP);
        assert!((g.data()[0] - 2.0).abs() < 1e-8);
        assert!((g.data()[1] - 4.0).abs() < 1e-8);
        let g = finite_diff_grad(|_| 3.5, &x, FD_STEP);
        assert_eq!(g, Tensor::zeros(&[2]));
    }

    #[test]
    fn relative_error_uses_absolute_floor() {
        let a = Tensor::new(vec![2], vec![1e-10, 1.0]).unwrap();
        let b = Tensor::new(vec![2], vec![3e-10, 1.0 + 1e-6]).unwrap();
        let e = max_relative_error(&a, &b);
        assert!(e < 2e-6 && e > 9e-7, "{e}");
    }

    #[test]
    fn armour_gradcheck_passes() {
        let cfg = AttentionConfig::new(AttentionVariant::Armour, 4, 8, 2);
        let r = gradcheck_attention(&cfg, 1).unwrap();
        assert!(r.passed, "{r:?}");
        let names: Vec<_> = r.tensors.iter().map(|t| t.name.as_str()).collect();
        assert_eq!(names, ["x", "w_q", "w_k", "w_o", "b_q", "b_k", "b_o"]);
    }
}
