//! Dense rank-1/rank-2 arrays of `f64`, the seeded generator, and the handful
//! of kernels the networks need.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Row-major dense array with an explicit shape.
///
/// A zero-length leading dimension is allowed so that empty utterances can be
/// represented as `[0, D]` feature matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() {
            return Err(Error::dimension("tensor", "shape must have at least one axis"));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::dimension(
                "tensor",
                format!("shape {:?} needs {} values, got {}", shape, expected, data.len()),
            ));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![0.0; n] }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Tensor { shape: vec![data.len()], data }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Tensor::new(vec![rows, cols], data)
    }

    /// Builds a matrix from equally long rows.
    pub fn from_rows(rows: &[Vec<f64>], cols: usize) -> Result<Self> {
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != cols {
                return Err(Error::dimension(
                    "from_rows",
                    format!("row {} has {} columns, expected {}", i, row.len(), cols),
                ));
            }
            data.extend_from_slice(row);
        }
        Tensor::new(vec![rows.len(), cols], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// Number of rows of a matrix (length of a vector).
    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    /// Number of columns of a matrix; 1 for a vector.
    pub fn cols(&self) -> usize {
        if self.shape.len() >= 2 {
            self.shape[1]
        } else {
            1
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let c = self.cols();
        &mut self.data[i * c..(i + 1) * c]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols() + j]
    }

    pub fn fill(&mut self, value: f64) {
        self.data.iter_mut().for_each(|v| *v = value);
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn scale(&mut self, factor: f64) {
        self.data.iter_mut().for_each(|v| *v *= factor);
    }

    /// `self += alpha * other`, shapes must agree.
    pub fn axpy(&mut self, alpha: f64, other: &Tensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::dimension(
                "axpy",
                format!("{:?} vs {:?}", self.shape, other.shape),
            ));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn sum_squares(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn argmax(&self) -> usize {
        argmax(&self.data)
    }

    /// Standard matrix product of two rank-2 tensors.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        if self.rank() != 2 || other.rank() != 2 || self.shape[1] != other.shape[0] {
            return Err(Error::dimension(
                "matmul",
                format!("cannot multiply {:?} by {:?}", self.shape, other.shape),
            ));
        }
        let (m, k, n) = (self.shape[0], self.shape[1], other.shape[1]);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let out_row = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let a = self.data[i * k + p];
                let b_row = &other.data[p * n..(p + 1) * n];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Tensor::new(vec![m, n], out)
    }

    pub fn transpose(&self) -> Result<Tensor> {
        if self.rank() != 2 {
            return Err(Error::dimension("transpose", format!("rank-2 required, got {:?}", self.shape)));
        }
        let (r, c) = (self.shape[0], self.shape[1]);
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = self.data[i * c + j];
            }
        }
        Tensor::new(vec![c, r], out)
    }
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// `out = w * x` for a row-major `rows x cols` weight block.
pub(crate) fn matvec_into(w: &[f64], cols: usize, x: &[f64], out: &mut [f64]) {
    debug_assert_eq!(x.len(), cols);
    for (o, row) in out.iter_mut().zip(w.chunks_exact(cols)) {
        *o = dot(row, x);
    }
}

/// `out += w^T * v`.
pub(crate) fn matvec_t_acc(w: &[f64], cols: usize, v: &[f64], out: &mut [f64]) {
    debug_assert_eq!(out.len(), cols);
    for (&scale, row) in v.iter().zip(w.chunks_exact(cols)) {
        if scale == 0.0 {
            continue;
        }
        for (o, &r) in out.iter_mut().zip(row) {
            *o += scale * r;
        }
    }
}

/// `w += a * b^T`.
pub(crate) fn add_outer(w: &mut [f64], a: &[f64], b: &[f64]) {
    let cols = b.len();
    for (&scale, row) in a.iter().zip(w.chunks_exact_mut(cols)) {
        if scale == 0.0 {
            continue;
        }
        for (r, &bv) in row.iter_mut().zip(b) {
            *r += scale * bv;
        }
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    // Four accumulators let the compiler vectorise; summation order is fixed.
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        let j = i * 4;
        acc[0] += a[j] * b[j];
        acc[1] += a[j + 1] * b[j + 1];
        acc[2] += a[j + 2] * b[j + 2];
        acc[3] += a[j + 3] * b[j + 3];
    }
    let mut sum = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for j in chunks * 4..a.len() {
        sum += a[j] * b[j];
    }
    sum
}

/// In-place softmax with max subtraction.
pub(crate) fn softmax_in_place(values: &mut [f64]) {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in values.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in values.iter_mut() {
        *v /= total;
    }
}

pub fn softmax(logits: &Tensor) -> Result<Tensor> {
    if logits.is_empty() {
        return Err(Error::dimension("softmax", "empty input"));
    }
    let mut data = logits.data.clone();
    softmax_in_place(&mut data);
    Ok(Tensor { shape: logits.shape.clone(), data })
}

/// Concatenates rank-1 tensors in order.
pub fn concat(parts: &[&Tensor]) -> Result<Tensor> {
    if parts.is_empty() {
        return Err(Error::dimension("concat", "no parts given"));
    }
    let mut data = Vec::with_capacity(parts.iter().map(|p| p.len()).sum());
    for (i, p) in parts.iter().enumerate() {
        if p.rank() != 1 {
            return Err(Error::dimension(
                "concat",
                format!("part {} has shape {:?}, rank-1 required", i, p.shape),
            ));
        }
        data.extend_from_slice(&p.data);
    }
    Ok(Tensor::vector(data))
}

/// I.i.d. values in `[-scale, +scale]`.
pub fn uniform_init(rng: &mut Rng, shape: &[usize], scale: f64) -> Result<Tensor> {
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::parameter("scale", format!("must be positive and finite, got {}", scale)));
    }
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.uniform(-scale, scale)).collect();
    Tensor::new(shape.to_vec(), data)
}

/// Seeded generator: ChaCha with 8 rounds (`rand_chacha::ChaCha8Rng`), seeded
/// with `seed_from_u64`. Its output stream is specified independently of
/// platform and word size.
///
/// Uniform reals take the top 53 bits of one `u64` draw:
/// `u = (next_u64 >> 11) * 2^-53`, so `u` is in `[0, 1)`.
#[derive(Clone, Debug)]
pub struct Rng {
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng { inner: ChaCha8Rng::seed_from_u64(seed) }
    }

    /// Derives an independent child generator; used to give each stage of a
    /// pipeline its own stream without consuming the parent's draws.
    pub fn fork(&self, stream: u64) -> Rng {
        let mut probe = self.inner.clone();
        let base = probe.next_u64();
        Rng::new(base ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    pub fn next_f64(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    /// Uniform integer in `0..n` by rejection (no modulo bias).
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        let n = n as u64;
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let v = self.inner.next_u64();
            if v < zone {
                return (v % n) as usize;
            }
        }
    }

    /// Index drawn from a discrete distribution (weights summing to ~1).
    pub fn categorical(&mut self, weights: &[f64]) -> usize {
        let u = self.next_f64();
        let mut acc = 0.0;
        for (i, w) in weights.iter().enumerate() {
            acc += w;
            if u < acc {
                return i;
            }
        }
        weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}
