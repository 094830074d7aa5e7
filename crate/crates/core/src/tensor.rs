//! Dense row-major tensor with the small op set the attention variants need.
//!
//! Values are always `f64`. Shapes are checked eagerly and there is no
//! implicit broadcasting: batched ops only accept equal leading axes, and
//! the one broadcast-like op, [`Tensor::add_row_bias`], is explicit about it.

use rand::Rng;

use crate::error::{ArmourError, Result};

/// Score value marking a masked attention logit.
///
/// Softmax gives such entries probability exactly zero; it is a finite
/// number so arithmetic around it never produces NaN.
pub const MASK_SENTINEL: f64 = -1e30;

// Anything at or below this is treated as masked by softmax.
const MASK_THRESHOLD: f64 = MASK_SENTINEL * 0.5;

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

pub(crate) fn is_masked(v: f64) -> bool {
    v <= MASK_THRESHOLD
}

impl Tensor {
    /// Builds a tensor, checking that `data` fills `shape` exactly.
    ///
    /// Zero extents are accepted so that empty slices along the last axis
    /// are representable.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(ArmourError::Shape {
                shape,
                reason: format!("needs {expected} elements, got {}", data.len()),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    /// Rank-2 tensor from equally long rows.
    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            if row.len() != cols {
                return Err(ArmourError::Shape {
                    shape: vec![rows.len(), row.len()],
                    reason: format!("ragged rows, expected {cols} columns"),
                });
            }
            data.extend_from_slice(row);
        }
        Self::new(vec![rows.len(), cols], data)
    }

    /// Samples i.i.d. from `uniform(-bound, bound)`.
    pub fn uniform<R: Rng + ?Sized>(shape: &[usize], bound: f64, rng: &mut R) -> Self {
        let n = shape.iter().product();
        let data = (0..n).map(|_| rng.gen_range(-bound..=bound)).collect();
        Self {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// Element at a full multi-index. Panics when out of range.
    pub fn at(&self, index: &[usize]) -> f64 {
        assert_eq!(index.len(), self.shape.len(), "index rank");
        let mut flat = 0;
        for (&i, &n) in index.iter().zip(&self.shape) {
            assert!(i < n, "index {index:?} out of range for {:?}", self.shape);
            flat = flat * n + i;
        }
        self.data[flat]
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        Self::new(shape.to_vec(), self.data.clone())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    fn last(&self) -> usize {
        *self.shape.last().unwrap_or(&1)
    }

    fn require_rank(&self, op: &'static str, expected: usize) -> Result<()> {
        if self.rank() < expected {
            return Err(ArmourError::Rank {
                op,
                expected,
                shape: self.shape.clone(),
            });
        }
        Ok(())
    }

    fn same_shape(&self, op: &'static str, other: &Self) -> Result<()> {
        if self.shape != other.shape {
            return Err(ArmourError::Dimension {
                op,
                left: self.shape.clone(),
                right: other.shape.clone(),
            });
        }
        Ok(())
    }

    /// Matrix product over the last two axes; leading axes must agree.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        self.require_rank("matmul", 2)?;
        other.require_rank("matmul", 2)?;
        let r = self.rank();
        let (m, k) = (self.shape[r - 2], self.shape[r - 1]);
        let (k2, n) = (other.shape[other.rank() - 2], other.shape[other.rank() - 1]);
        if k != k2 || self.shape[..r - 2] != other.shape[..other.rank() - 2] {
            return Err(ArmourError::Dimension {
                op: "matmul",
                left: self.shape.clone(),
                right: other.shape.clone(),
            });
        }
        let batch: usize = self.shape[..r - 2].iter().product();
        let mut out = vec![0.0; batch * m * n];
        for b in 0..batch {
            let a = &self.data[b * m * k..(b + 1) * m * k];
            let bm = &other.data[b * k * n..(b + 1) * k * n];
            let c = &mut out[b * m * n..(b + 1) * m * n];
            for i in 0..m {
                let c_row = &mut c[i * n..(i + 1) * n];
                for (p, &a_ip) in a[i * k..(i + 1) * k].iter().enumerate() {
                    if a_ip == 0.0 {
                        continue;
                    }
                    let b_row = &bm[p * n..(p + 1) * n];
                    for (cv, &bv) in c_row.iter_mut().zip(b_row) {
                        *cv += a_ip * bv;
                    }
                }
            }
        }
        let mut shape = self.shape[..r - 2].to_vec();
        shape.extend([m, n]);
        Ok(Self { shape, data: out })
    }

    /// Swaps the last two axes.
    pub fn transpose(&self) -> Result<Self> {
        self.require_rank("transpose", 2)?;
        let r = self.rank();
        let (m, n) = (self.shape[r - 2], self.shape[r - 1]);
        let batch: usize = self.shape[..r - 2].iter().product();
        let mut out = vec![0.0; self.data.len()];
        for b in 0..batch {
            let src = &self.data[b * m * n..(b + 1) * m * n];
            let dst = &mut out[b * m * n..(b + 1) * m * n];
            for i in 0..m {
                for j in 0..n {
                    dst[j * m + i] = src[i * n + j];
                }
            }
        }
        let mut shape = self.shape.clone();
        shape.swap(r - 2, r - 1);
        Ok(Self { shape, data: out })
    }

    /// Row-wise softmax over the last axis with max subtraction.
    ///
    /// Entries at [`MASK_SENTINEL`] get probability exactly 0. A row made
    /// only of sentinels is rejected.
    pub fn softmax_rows(&self) -> Result<Self> {
        self.require_rank("softmax_rows", 2)?;
        let n = self.last();
        let mut out = vec![0.0; self.data.len()];
        for (row_idx, (src, dst)) in self.data.chunks(n).zip(out.chunks_mut(n)).enumerate() {
            let max = src
                .iter()
                .copied()
                .filter(|&v| !is_masked(v))
                .fold(f64::NEG_INFINITY, f64::max);
            if max == f64::NEG_INFINITY {
                return Err(ArmourError::InvalidMask { row: row_idx });
            }
            let mut sum = 0.0;
            for (d, &s) in dst.iter_mut().zip(src) {
                if !is_masked(s) {
                    *d = (s - max).exp();
                    sum += *d;
                }
            }
            for d in dst.iter_mut() {
                *d /= sum;
            }
        }
        Ok(Self {
            shape: self.shape.clone(),
            data: out,
        })
    }

    /// Joins two tensors along the last axis; `self` fills the first slots.
    pub fn concat_last_axis(&self, other: &Self) -> Result<Self> {
        self.require_rank("concat_last_axis", 1)?;
        other.require_rank("concat_last_axis", 1)?;
        let r = self.rank();
        if r != other.rank() || self.shape[..r - 1] != other.shape[..r - 1] {
            return Err(ArmourError::Dimension {
                op: "concat_last_axis",
                left: self.shape.clone(),
                right: other.shape.clone(),
            });
        }
        let (p, q) = (self.last(), other.last());
        let rows: usize = self.shape[..r - 1].iter().product();
        let mut data = Vec::with_capacity(rows * (p + q));
        for i in 0..rows {
            data.extend_from_slice(&self.data[i * p..(i + 1) * p]);
            data.extend_from_slice(&other.data[i * q..(i + 1) * q]);
        }
        let mut shape = self.shape.clone();
        shape[r - 1] = p + q;
        Ok(Self { shape, data })
    }

    /// Columns `start..start + len` of the last axis.
    pub fn slice_last_axis(&self, start: usize, len: usize) -> Result<Self> {
        self.require_rank("slice_last_axis", 1)?;
        let n = self.last();
        if start + len > n {
            return Err(ArmourError::Shape {
                shape: self.shape.clone(),
                reason: format!("slice {start}..{} exceeds last axis", start + len),
            });
        }
        let mut data = Vec::with_capacity(self.data.len() / n.max(1) * len);
        for row in self.data.chunks(n.max(1)) {
            data.extend_from_slice(&row[start..start + len]);
        }
        let mut shape = self.shape.clone();
        *shape.last_mut().unwrap() = len;
        Ok(Self { shape, data })
    }

    /// Splits the last axis at `at`; inverse of [`Tensor::concat_last_axis`].
    pub fn split_last_axis(&self, at: usize) -> Result<(Self, Self)> {
        let n = self.last();
        Ok((
            self.slice_last_axis(0, at)?,
            self.slice_last_axis(at, n.saturating_sub(at))?,
        ))
    }

    /// Adds a rank-1 `bias` to every row (last axis).
    pub fn add_row_bias(&self, bias: &Self) -> Result<Self> {
        if bias.rank() != 1 || bias.numel() != self.last() {
            return Err(ArmourError::Dimension {
                op: "add_row_bias",
                left: self.shape.clone(),
                right: bias.shape.clone(),
            });
        }
        let n = self.last();
        let mut data = self.data.clone();
        for row in data.chunks_mut(n) {
            for (v, b) in row.iter_mut().zip(&bias.data) {
                *v += b;
            }
        }
        Ok(Self {
            shape: self.shape.clone(),
            data,
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.same_shape("add", other)?;
        Ok(self.zip_with(other, |a, b| a + b))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.same_shape("sub", other)?;
        Ok(self.zip_with(other, |a, b| a - b))
    }

    /// Elementwise product.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.same_shape("mul", other)?;
        Ok(self.zip_with(other, |a, b| a * b))
    }

    fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn scale(&self, factor: f64) -> Self {
        self.map(|v| v * factor)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Replaces the diagonal of every trailing square matrix with the mask
    /// sentinel.
    pub fn mask_diagonal(&self) -> Result<Self> {
        self.require_rank("mask_diagonal", 2)?;
        let r = self.rank();
        let (m, n) = (self.shape[r - 2], self.shape[r - 1]);
        if m != n {
            return Err(ArmourError::Shape {
                shape: self.shape.clone(),
                reason: "diagonal mask needs square trailing matrices".into(),
            });
        }
        let mut data = self.data.clone();
        for mat in data.chunks_mut(n * n) {
            for i in 0..n {
                mat[i * n + i] = MASK_SENTINEL;
            }
        }
        Ok(Self {
            shape: self.shape.clone(),
            data,
        })
    }

    /// Mean over the second-to-last axis: `[m, n] -> [1, n]`.
    pub fn mean_rows(&self) -> Result<Self> {
        if self.rank() != 2 || self.shape[0] == 0 {
            return Err(ArmourError::Rank {
                op: "mean_rows",
                expected: 2,
                shape: self.shape.clone(),
            });
        }
        let (m, n) = (self.shape[0], self.shape[1]);
        let mut data = vec![0.0; n];
        for row in self.data.chunks(n) {
            for (d, v) in data.iter_mut().zip(row) {
                *d += v;
            }
        }
        for d in &mut data {
            *d /= m as f64;
        }
        Ok(Self {
            shape: vec![1, n],
            data,
        })
    }

    /// Picks rows of a rank-2 table.
    pub fn gather_rows(&self, indices: &[usize]) -> Result<Self> {
        if self.rank() != 2 {
            return Err(ArmourError::Rank {
                op: "gather_rows",
                expected: 2,
                shape: self.shape.clone(),
            });
        }
        let (rows, n) = (self.shape[0], self.shape[1]);
        let mut data = Vec::with_capacity(indices.len() * n);
        for &i in indices {
            if i >= rows {
                return Err(ArmourError::Shape {
                    shape: self.shape.clone(),
                    reason: format!("row index {i} out of range"),
                });
            }
            data.extend_from_slice(&self.data[i * n..(i + 1) * n]);
        }
        Ok(Self {
            shape: vec![indices.len(), n],
            data,
        })
    }

    pub fn gelu(&self) -> Self {
        self.map(gelu)
    }

    /// Index of the largest element.
    pub fn argmax(&self) -> usize {
        self.data
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &v)| {
                if v > best.1 {
                    (i, v)
                } else {
                    best
                }
            })
            .0
    }

    /// Softmax cross-entropy of a logit vector against a class index.
    pub fn cross_entropy(&self, label: usize) -> Result<f64> {
        if label >= self.numel() {
            return Err(ArmourError::Shape {
                shape: self.shape.clone(),
                reason: format!("label {label} out of range"),
            });
        }
        let max = self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + self.data.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        Ok(lse - self.data[label])
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)

/// Tanh approximation of GELU.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

pub(crate) fn gelu_grad(x: f64) -> f64 {
    let u = GELU_C * (x + 0.044715 * x * x * x);
    let t = u.tanh();
    let du = GELU_C * (1.0 + 3.0 * 0.044715 * x * x);
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du
}
