use std::fmt;

use crate::real::{gemm, Real};

/// Dense row-major n-dimensional array.
///
/// Shape errors are programming errors and panic, as in `ndarray`; callers
/// that accept shapes from the outside validate them first.
#[derive(Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: fmt::Debug> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.data.len() <= 16 {
            write!(f, "Tensor{:?} {:?}", self.shape, self.data)
        } else {
            write!(f, "Tensor{:?} [{} elements]", self.shape, self.data.len())
        }
    }
}

pub fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

/// Row-major strides for `shape`.
pub fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

/// Splits `shape` around `axis` into (outer, axis extent, inner) sizes.
pub(crate) fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    assert!(axis < shape.len(), "axis {axis} out of range for shape {shape:?}");
    (numel(&shape[..axis]), shape[axis], numel(&shape[axis + 1..]))
}

impl<T: Copy> Tensor<T> {
    pub fn from_vec(shape: impl Into<Vec<usize>>, data: Vec<T>) -> Self {
        let shape = shape.into();
        assert_eq!(
            numel(&shape),
            data.len(),
            "shape {shape:?} does not match {} elements",
            data.len()
        );
        Self { shape, data }
    }

    pub fn full(shape: impl Into<Vec<usize>>, value: T) -> Self {
        let shape = shape.into();
        let n = numel(&shape);
        Self { shape, data: vec![value; n] }
    }

    pub fn from_fn(shape: impl Into<Vec<usize>>, mut f: impl FnMut(usize) -> T) -> Self {
        let shape = shape.into();
        let data = (0..numel(&shape)).map(&mut f).collect();
        Self { shape, data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn dim(&self, axis: usize) -> usize {
        self.shape[axis]
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn at(&self, index: &[usize]) -> T {
        assert_eq!(index.len(), self.shape.len(), "index rank mismatch");
        let mut off = 0;
        for (i, (&ix, &n)) in index.iter().zip(&self.shape).enumerate() {
            assert!(ix < n, "index {ix} out of bounds for axis {i} of size {n}");
            off = off * n + ix;
        }
        self.data[off]
    }

    pub fn reshape(self, shape: impl Into<Vec<usize>>) -> Self {
        Self::from_vec(shape, self.data)
    }

    pub fn map<U: Copy>(&self, f: impl Fn(T) -> U) -> Tensor<U> {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_map<U: Copy, V: Copy>(&self, other: &Tensor<U>, f: impl Fn(T, U) -> V) -> Tensor<V> {
        assert_eq!(self.shape, other.shape, "elementwise shape mismatch");
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    /// Reorders axes so that output axis `i` is input axis `perm[i]`.
    pub fn permute(&self, perm: &[usize]) -> Self {
        let nd = self.shape.len();
        assert_eq!(perm.len(), nd, "permutation rank mismatch");
        let mut seen = vec![false; nd];
        for &p in perm {
            assert!(p < nd && !seen[p], "invalid permutation {perm:?}");
            seen[p] = true;
        }
        let in_strides = strides(&self.shape);
        let out_shape: Vec<usize> = perm.iter().map(|&p| self.shape[p]).collect();
        let src: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
        let n = self.data.len();
        let mut out = Vec::with_capacity(n);
        if n > 0 {
            let mut idx = vec![0usize; nd];
            let mut off = 0usize;
            for _ in 0..n {
                out.push(self.data[off]);
                for ax in (0..nd).rev() {
                    idx[ax] += 1;
                    off += src[ax];
                    if idx[ax] < out_shape[ax] {
                        break;
                    }
                    off -= src[ax] * out_shape[ax];
                    idx[ax] = 0;
                }
            }
        }
        Self { shape: out_shape, data: out }
    }

    /// Sub-range `start..start + len` along `axis`.
    pub fn narrow(&self, axis: usize, start: usize, len: usize) -> Self {
        let (outer, extent, inner) = split_axis(&self.shape, axis);
        assert!(start + len <= extent, "narrow {start}+{len} exceeds axis size {extent}");
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * extent + start) * inner;
            out.extend_from_slice(&self.data[base..base + len * inner]);
        }
        let mut shape = self.shape.clone();
        shape[axis] = len;
        Self { shape, data: out }
    }

    /// Joins tensors along `axis`; all other extents must agree.
    pub fn concat(parts: &[&Self], axis: usize) -> Self {
        assert!(!parts.is_empty(), "concat of zero tensors");
        let first = parts[0];
        let mut shape = first.shape.clone();
        let mut total = 0;
        for p in parts {
            assert_eq!(p.shape.len(), shape.len(), "concat rank mismatch");
            for (i, (&a, &b)) in p.shape.iter().zip(&first.shape).enumerate() {
                assert!(i == axis || a == b, "concat extent mismatch on axis {i}");
            }
            total += p.shape[axis];
        }
        shape[axis] = total;
        let (outer, _, inner) = split_axis(&first.shape, axis);
        let mut out = Vec::with_capacity(numel(&shape));
        for o in 0..outer {
            for p in parts {
                let chunk = p.shape[axis] * inner;
                out.extend_from_slice(&p.data[o * chunk..(o + 1) * chunk]);
            }
        }
        Self { shape, data: out }
    }

    /// Reverses element order along `axis`.
    pub fn flip(&self, axis: usize) -> Self {
        let (outer, extent, inner) = split_axis(&self.shape, axis);
        let mut out = Vec::with_capacity(self.data.len());
        for o in 0..outer {
            for a in (0..extent).rev() {
                let base = (o * extent + a) * inner;
                out.extend_from_slice(&self.data[base..base + inner]);
            }
        }
        Self { shape: self.shape.clone(), data: out }
    }
}

impl<T: Real> Tensor<T> {
    pub fn zeros(shape: impl Into<Vec<usize>>) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn ones(shape: impl Into<Vec<usize>>) -> Self {
        Self::full(shape, T::one())
    }

    pub fn scalar(value: T) -> Self {
        Self { shape: vec![], data: vec![value] }
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> T {
        assert_eq!(self.data.len(), 1, "item() on tensor of shape {:?}", self.shape);
        self.data[0]
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn mean(&self) -> T {
        self.sum() / T::from_usize(self.data.len()).unwrap()
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn scale(&self, s: T) -> Self {
        self.map(|v| v * s)
    }

    pub fn add_assign(&mut self, other: &Self) {
        assert_eq!(self.shape, other.shape, "accumulate shape mismatch");
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, &v| m.max(v.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Sums out `axis`, removing it from the shape.
    pub fn sum_axis(&self, axis: usize) -> Self {
        let (outer, extent, inner) = split_axis(&self.shape, axis);
        let mut out = vec![T::zero(); outer * inner];
        for o in 0..outer {
            for a in 0..extent {
                let src = &self.data[(o * extent + a) * inner..(o * extent + a + 1) * inner];
                for (d, &s) in out[o * inner..(o + 1) * inner].iter_mut().zip(src) {
                    *d += s;
                }
            }
        }
        let mut shape = self.shape.clone();
        shape.remove(axis);
        Self { shape, data: out }
    }

    /// Batched matrix product `[B, M, K] x [B, K, N] -> [B, M, N]`.
    pub fn bmm(&self, other: &Self) -> Self {
        assert_eq!(self.ndim(), 3, "bmm lhs must be rank 3");
        assert_eq!(other.ndim(), 3, "bmm rhs must be rank 3");
        let (b, m, k) = (self.shape[0], self.shape[1], self.shape[2]);
        assert_eq!(other.shape[0], b, "bmm batch mismatch");
        assert_eq!(other.shape[1], k, "bmm inner dimension mismatch");
        let n = other.shape[2];
        let mut out = vec![T::zero(); b * m * n];
        for i in 0..b {
            gemm(
                m,
                k,
                n,
                &self.data[i * m * k..(i + 1) * m * k],
                false,
                &other.data[i * k * n..(i + 1) * k * n],
                false,
                &mut out[i * m * n..(i + 1) * m * n],
                false,
            );
        }
        Tensor::from_vec(vec![b, m, n], out)
    }

    /// Plain matrix product of two rank-2 tensors.
    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.ndim(), 2, "matmul lhs must be rank 2");
        assert_eq!(other.ndim(), 2, "matmul rhs must be rank 2");
        let (m, k) = (self.shape[0], self.shape[1]);
        let n = other.shape[1];
        let lhs = Tensor::from_vec(vec![1, m, k], self.data.clone());
        let rhs = Tensor::from_vec(vec![1, k, other.shape[1]], other.data.clone());
        lhs.bmm(&rhs).reshape(vec![m, n])
    }

    /// Softmax over the last axis.
    pub fn softmax_last(&self) -> Self {
        let n = *self.shape.last().expect("softmax of a scalar");
        let mut out = self.data.clone();
        if n > 0 {
            for row in out.chunks_mut(n) {
                let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
                let mut total = T::zero();
                for v in row.iter_mut() {
                    *v = (*v - max).exp();
                    total += *v;
                }
                for v in row.iter_mut() {
                    *v /= total;
                }
            }
        }
        Self { shape: self.shape.clone(), data: out }
    }

    pub fn cast<U: Real>(&self) -> Tensor<U> {
        self.map(|v| U::from_f64(v.to_f64_lossy()).unwrap())
    }
}
