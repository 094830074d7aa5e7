//! Reverse-mode differentiation over the tensor op set.
//!
//! Model code is written once against [`TensorOps`]. Running it with
//! [`Eager`] computes plain values; running it with a [`GradTape`] records
//! every primitive so [`GradTape::backward`] can replay the tape in reverse.

use crate::error::{ArmourError, Result};
use crate::tensor::{gelu_grad, is_masked, Tensor};

/// The primitive set shared by every forward pass in the crate.
pub trait TensorOps {
    type Value: Clone;

    fn shape_of(&self, a: &Self::Value) -> Vec<usize>;
    fn matmul(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value>;
    fn transpose(&mut self, a: &Self::Value) -> Result<Self::Value>;
    fn softmax_rows(&mut self, a: &Self::Value) -> Result<Self::Value>;
    fn concat_last_axis(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value>;
    fn slice_last_axis(&mut self, a: &Self::Value, start: usize, len: usize)
        -> Result<Self::Value>;
    fn add_row_bias(&mut self, a: &Self::Value, bias: &Self::Value) -> Result<Self::Value>;
    fn add(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value>;
    fn mul(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value>;
    fn scale(&mut self, a: &Self::Value, factor: f64) -> Result<Self::Value>;
    fn mask_diagonal(&mut self, a: &Self::Value) -> Result<Self::Value>;
    fn gelu(&mut self, a: &Self::Value) -> Result<Self::Value>;
    fn mean_rows(&mut self, a: &Self::Value) -> Result<Self::Value>;
    fn gather_rows(&mut self, table: &Self::Value, indices: &[usize]) -> Result<Self::Value>;
    fn sum(&mut self, a: &Self::Value) -> Result<Self::Value>;
    fn cross_entropy(&mut self, logits: &Self::Value, label: usize) -> Result<Self::Value>;
}

/// Immediate evaluation on owned tensors.
#[derive(Clone, Copy, Debug, Default)]
pub struct Eager;

impl TensorOps for Eager {
    type Value = Tensor;

    fn shape_of(&self, a: &Tensor) -> Vec<usize> {
        a.shape().to_vec()
    }
    fn matmul(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        a.matmul(b)
    }
    fn transpose(&mut self, a: &Tensor) -> Result<Tensor> {
        a.transpose()
    }
    fn softmax_rows(&mut self, a: &Tensor) -> Result<Tensor> {
        a.softmax_rows()
    }
    fn concat_last_axis(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        a.concat_last_axis(b)
    }
    fn slice_last_axis(&mut self, a: &Tensor, start: usize, len: usize) -> Result<Tensor> {
        a.slice_last_axis(start, len)
    }
    fn add_row_bias(&mut self, a: &Tensor, bias: &Tensor) -> Result<Tensor> {
        a.add_row_bias(bias)
    }
    fn add(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        a.add(b)
    }
    fn mul(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        a.mul(b)
    }
    fn scale(&mut self, a: &Tensor, factor: f64) -> Result<Tensor> {
        Ok(a.scale(factor))
    }
    fn mask_diagonal(&mut self, a: &Tensor) -> Result<Tensor> {
        a.mask_diagonal()
    }
    fn gelu(&mut self, a: &Tensor) -> Result<Tensor> {
        Ok(a.gelu())
    }
    fn mean_rows(&mut self, a: &Tensor) -> Result<Tensor> {
        a.mean_rows()
    }
    fn gather_rows(&mut self, table: &Tensor, indices: &[usize]) -> Result<Tensor> {
        table.gather_rows(indices)
    }
    fn sum(&mut self, a: &Tensor) -> Result<Tensor> {
        Ok(Tensor::scalar(a.sum()))
    }
    fn cross_entropy(&mut self, logits: &Tensor, label: usize) -> Result<Tensor> {
        Ok(Tensor::scalar(logits.cross_entropy(label)?))
    }
}

/// Handle to a value recorded on a [`GradTape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Softmax(Var),
    Concat(Var, Var),
    Slice { src: Var, start: usize },
    AddBias(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    MaskDiag(Var),
    Gelu(Var),
    MeanRows(Var),
    Gather { table: Var, indices: Vec<usize> },
    Sum(Var),
    CrossEntropy { logits: Var, label: usize },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Append-only record of one forward pass.
#[derive(Debug, Default)]
pub struct GradTape {
    nodes: Vec<Node>,
}

/// Gradients produced by [`GradTape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `var`.
    ///
    /// Values the loss does not depend on get an all-zero gradient.
    pub fn wrt(&self, var: Var) -> Tensor {
        match &self.grads[var.0] {
            Some(g) => g.clone(),
            None => Tensor::zeros(&self.shapes[var.0]),
        }
    }
}

impl GradTape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers an input or parameter.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Propagates d(loss)/d(node) from a scalar `loss` back to every node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let loss_val = self.value(loss);
        if loss_val.numel() != 1 {
            return Err(ArmourError::Shape {
                shape: loss_val.shape().to_vec(),
                reason: "backward needs a scalar loss".into(),
            });
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::full(loss_val.shape(), 1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            match &node.op {
                // leaves keep their gradient for the caller
                Op::Leaf => grads[idx] = Some(g),
                Op::MatMul(a, b) => {
                    let av = self.value(*a);
                    let bv = self.value(*b);
                    accumulate(&mut grads, *a, g.matmul(&bv.transpose()?)?)?;
                    accumulate(&mut grads, *b, av.transpose()?.matmul(&g)?)?;
                }
                Op::Transpose(a) => accumulate(&mut grads, *a, g.transpose()?)?,
                Op::Softmax(a) => {
                    let p = &node.value;
                    let n = *p.shape().last().unwrap();
                    let mut out = vec![0.0; p.numel()];
                    for ((prow, grow), orow) in p
                        .data()
                        .chunks(n)
                        .zip(g.data().chunks(n))
                        .zip(out.chunks_mut(n))
                    {
                        let dot: f64 = prow.iter().zip(grow).map(|(p, g)| p * g).sum();
                        for ((o, &pv), &gv) in orow.iter_mut().zip(prow).zip(grow) {
                            *o = pv * (gv - dot);
                        }
                    }
                    accumulate(&mut grads, *a, Tensor::new(p.shape().to_vec(), out)?)?;
                }
                Op::Concat(a, b) => {
                    let p = *self.value(*a).shape().last().unwrap();
                    let (ga, gb) = g.split_last_axis(p)?;
                    accumulate(&mut grads, *a, ga)?;
                    accumulate(&mut grads, *b, gb)?;
                }
                Op::Slice { src, start } => {
                    let sv = self.value(*src);
                    let n = *sv.shape().last().unwrap();
                    let len = *g.shape().last().unwrap();
                    let mut out = vec![0.0; sv.numel()];
                    for (orow, grow) in out.chunks_mut(n).zip(g.data().chunks(len.max(1))) {
                        orow[*start..start + len].copy_from_slice(&grow[..len]);
                    }
                    accumulate(&mut grads, *src, Tensor::new(sv.shape().to_vec(), out)?)?;
                }
                Op::AddBias(a, bias) => {
                    let n = self.value(*bias).numel();
                    let mut gb = vec![0.0; n];
                    for row in g.data().chunks(n) {
                        for (acc, v) in gb.iter_mut().zip(row) {
                            *acc += v;
                        }
                    }
                    accumulate(&mut grads, *bias, Tensor::new(vec![n], gb)?)?;
                    accumulate(&mut grads, *a, g)?;
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone())?;
                    accumulate(&mut grads, *b, g)?;
                }
                Op::Mul(a, b) => {
                    accumulate(&mut grads, *a, g.mul(self.value(*b))?)?;
                    accumulate(&mut grads, *b, g.mul(self.value(*a))?)?;
                }
                Op::Scale(a, factor) => accumulate(&mut grads, *a, g.scale(*factor))?,
                Op::MaskDiag(a) => {
                    let masked = &node.value;
                    let data = g
                        .data()
                        .iter()
                        .zip(masked.data())
                        .map(|(&gv, &m)| if is_masked(m) { 0.0 } else { gv })
                        .collect();
                    accumulate(&mut grads, *a, Tensor::new(g.shape().to_vec(), data)?)?;
                }
                Op::Gelu(a) => {
                    let x = self.value(*a);
                    let dx = x.map(gelu_grad).mul(&g)?;
                    accumulate(&mut grads, *a, dx)?;
                }
                Op::MeanRows(a) => {
                    let shape = self.value(*a).shape().to_vec();
                    let m = shape[0] as f64;
                    let mut out = Vec::with_capacity(shape[0] * shape[1]);
                    for _ in 0..shape[0] {
                        out.extend(g.data().iter().map(|v| v / m));
                    }
                    accumulate(&mut grads, *a, Tensor::new(shape, out)?)?;
                }
                Op::Gather { table, indices } => {
                    let shape = self.value(*table).shape().to_vec();
                    let n = shape[1];
                    let mut out = vec![0.0; shape[0] * n];
                    for (row, &i) in g.data().chunks(n).zip(indices) {
                        for (o, v) in out[i * n..(i + 1) * n].iter_mut().zip(row) {
                            *o += v;
                        }
                    }
                    accumulate(&mut grads, *table, Tensor::new(shape, out)?)?;
                }
                Op::Sum(a) => {
                    let upstream = g.data()[0];
                    accumulate(
                        &mut grads,
                        *a,
                        Tensor::full(self.value(*a).shape(), upstream),
                    )?;
                }
                Op::CrossEntropy { logits, label } => {
                    let upstream = g.data()[0];
                    let z = self.value(*logits);
                    let max = z.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let denom: f64 = z.data().iter().map(|v| (v - max).exp()).sum();
                    let data = z
                        .data()
                        .iter()
                        .enumerate()
                        .map(|(i, v)| {
                            let p = (v - max).exp() / denom;
                            upstream * (p - if i == *label { 1.0 } else { 0.0 })
                        })
                        .collect();
                    accumulate(&mut grads, *logits, Tensor::new(z.shape().to_vec(), data)?)?;
                }
            }
        }

        Ok(Gradients {
            grads,
            shapes: self
                .nodes
                .iter()
                .map(|n| n.value.shape().to_vec())
                .collect(),
        })
    }
}

fn accumulate(grads: &mut [Option<Tensor>], var: Var, g: Tensor) -> Result<()> {
    let slot = &mut grads[var.0];
    *slot = Some(match slot.take() {
        Some(prev) => prev.add(&g)?,
        None => g,
    });
    Ok(())
}

impl TensorOps for GradTape {
    type Value = Var;

    fn shape_of(&self, a: &Var) -> Vec<usize> {
        self.value(*a).shape().to_vec()
    }
    fn matmul(&mut self, a: &Var, b: &Var) -> Result<Var> {
        let v = self.value(*a).matmul(self.value(*b))?;
        Ok(self.push(v, Op::MatMul(*a, *b)))
    }
    fn transpose(&mut self, a: &Var) -> Result<Var> {
        let v = self.value(*a).transpose()?;
        Ok(self.push(v, Op::Transpose(*a)))
    }
    fn softmax_rows(&mut self, a: &Var) -> Result<Var> {
        let v = self.value(*a).softmax_rows()?;
        Ok(self.push(v, Op::Softmax(*a)))
    }
    fn concat_last_axis(&mut self, a: &Var, b: &Var) -> Result<Var> {
        let v = self.value(*a).concat_last_axis(self.value(*b))?;
        Ok(self.push(v, Op::Concat(*a, *b)))
    }
    fn slice_last_axis(&mut self, a: &Var, start: usize, len: usize) -> Result<Var> {
        let v = self.value(*a).slice_last_axis(start, len)?;
        Ok(self.push(v, Op::Slice { src: *a, start }))
    }
    fn add_row_bias(&mut self, a: &Var, bias: &Var) -> Result<Var> {
        let v = self.value(*a).add_row_bias(self.value(*bias))?;
        Ok(self.push(v, Op::AddBias(*a, *bias)))
    }
    fn add(&mut self, a: &Var, b: &Var) -> Result<Var> {
        let v = self.value(*a).add(self.value(*b))?;
        Ok(self.push(v, Op::Add(*a, *b)))
    }
    fn mul(&mut self, a: &Var, b: &Var) -> Result<Var> {
        let v = self.value(*a).mul(self.value(*b))?;
        Ok(self.push(v, Op::Mul(*a, *b)))
    }
    fn scale(&mut self, a: &Var, factor: f64) -> Result<Var> {
        let v = self.value(*a).scale(factor);
        Ok(self.push(v, Op::Scale(*a, factor)))
    }
    fn mask_diagonal(&mut self, a: &Var) -> Result<Var> {
        let v = self.value(*a).mask_diagonal()?;
        Ok(self.push(v, Op::MaskDiag(*a)))
    }
    fn gelu(&mut self, a: &Var) -> Result<Var> {
        let v = self.value(*a).gelu();
        Ok(self.push(v, Op::Gelu(*a)))
    }
    fn mean_rows(&mut self, a: &Var) -> Result<Var> {
        let v = self.value(*a).mean_rows()?;
        Ok(self.push(v, Op::MeanRows(*a)))
    }
    fn gather_rows(&mut self, table: &Var, indices: &[usize]) -> Result<Var> {
        let v = self.value(*table).gather_rows(indices)?;
        Ok(self.push(
            v,
            Op::Gather {
                table: *table,
                indices: indices.to_vec(),
            },
        ))
    }
    fn sum(&mut self, a: &Var) -> Result<Var> {
        let v = Tensor::scalar(self.value(*a).sum());
        Ok(self.push(v, Op::Sum(*a)))
    }
    fn cross_entropy(&mut self, logits: &Var, label: usize) -> Result<Var> {
        let v = Tensor::scalar(self.value(*logits).cross_entropy(label)?);
        Ok(self.push(
            v,
            Op::CrossEntropy {
                logits: *logits,
                label,
            },
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_gradient_is_ones() {
        let mut tape = GradTape::new();
        let a = tape.leaf(Tensor::from_rows(&[&[1.0, -2.0], &[0.5, 3.0]]).unwrap());
        let loss = tape.sum(&a).unwrap();
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.wrt(a), Tensor::full(&[2, 2], 1.0));
    }

    #[test]
    fn matmul_sum_gradient_is_ones_times_bt() {
        let a_val = Tensor::from_rows(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]]).unwrap();
        let b_val = Tensor::from_rows(&[&[1.0, -1.0], &[0.5, 2.0], &[-3.0, 0.0]]).unwrap();
        let mut tape = GradTape::new();
        let a = tape.leaf(a_val);
        let b = tape.leaf(b_val.clone());
        let c = tape.matmul(&a, &b).unwrap();
        let loss = tape.sum(&c).unwrap();
        let g = tape.backward(loss).unwrap();
        let expected = Tensor::full(&[2, 2], 1.0)
            .matmul(&b_val.transpose().unwrap())
            .unwrap();
        assert_eq!(g.wrt(a), expected);
    }

    #[test]
    fn unreachable_leaf_gets_zeros() {
        let mut tape = GradTape::new();
        let a = tape.leaf(Tensor::full(&[2], 1.0));
        let unused = tape.leaf(Tensor::full(&[3, 2], 1.0));
        let loss = tape.sum(&a).unwrap();
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.wrt(unused), Tensor::zeros(&[3, 2]));
    }

    #[test]
    fn backward_rejects_non_scalar_loss() {
        let mut tape = GradTape::new();
        let a = tape.leaf(Tensor::zeros(&[2, 2]));
        assert!(tape.backward(a).is_err());
    }

    #[test]
    fn eager_and_tape_agree_on_values() {
        let x = Tensor::from_rows(&[&[0.3, -0.2], &[1.1, 0.4], &[-0.5, 0.9]]).unwrap();
        let w = Tensor::from_rows(&[&[0.7, -0.1], &[0.2, 0.5]]).unwrap();
        fn f<O: TensorOps>(ops: &mut O, x: &O::Value, w: &O::Value) -> O::Value {
            let h = ops.matmul(x, w).unwrap();
            let t = ops.transpose(&h).unwrap();
            let s = ops.matmul(&h, &t).unwrap();
            let s = ops.mask_diagonal(&s).unwrap();
            let p = ops.softmax_rows(&s).unwrap();
            let o = ops.matmul(&p, &h).unwrap();
            ops.gelu(&o).unwrap()
        }
        let eager = f(&mut Eager, &x, &w);
        let mut tape = GradTape::new();
        let (xv, wv) = (tape.leaf(x), tape.leaf(w));
        let out = f(&mut tape, &xv, &wv);
        assert_eq!(tape.value(out), &eager);
    }
}
