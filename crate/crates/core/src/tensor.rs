//! Dense N-way tensors stored column-major (first index fastest).
//!
//! Element `(i_1, …, i_N)` (1-based) lives at flat offset
//! `(i_1 - 1) + Σ_{s≥2} (i_s - 1) · n_1 ⋯ n_{s-1}`. All public APIs take
//! 0-based indices and 0-based mode numbers; [`ModePair`] displays itself
//! 1-based to match the usual mathematical notation.

use std::fmt;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Dense real tensor of arbitrary order.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

/// An ordered pair of modes `k1 < k2` (0-based).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ModePair {
    k1: usize,
    k2: usize,
}

impl ModePair {
    pub fn new(k1: usize, k2: usize, order: usize) -> Result<Self> {
        if k1 < k2 && k2 < order {
            Ok(ModePair { k1, k2 })
        } else {
            Err(Error::InvalidPair { k1, k2, order })
        }
    }

    pub fn k1(&self) -> usize {
        self.k1
    }

    pub fn k2(&self) -> usize {
        self.k2
    }

    /// All pairs of an `order`-way tensor in lexicographic order
    /// `(1,2), (1,3), …, (N-1,N)`.
    pub fn all(order: usize) -> Vec<ModePair> {
        let mut pairs = Vec::with_capacity(pair_count(order));
        for k1 in 0..order {
            for k2 in k1 + 1..order {
                pairs.push(ModePair { k1, k2 });
            }
        }
        pairs
    }

    /// Mode permutation `[k1, k2, remaining modes ascending]`.
    pub fn permutation(&self, order: usize) -> Vec<usize> {
        let mut perm = vec![self.k1, self.k2];
        perm.extend((0..order).filter(|&s| s != self.k1 && s != self.k2));
        perm
    }
}

impl fmt::Display for ModePair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.k1 + 1, self.k2 + 1)
    }
}

/// Number of mode pairs of an `order`-way tensor, `N(N-1)/2`.
pub fn pair_count(order: usize) -> usize {
    order * order.saturating_sub(1) / 2
}

fn checked_numel(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() {
        return Err(Error::ShapeMismatch("a tensor needs at least one mode".into()));
    }
    shape.iter().try_fold(1usize, |acc, &n| {
        if n == 0 {
            return Err(Error::ShapeMismatch(format!("zero extent in shape {shape:?}")));
        }
        acc.checked_mul(n)
            .ok_or_else(|| Error::ShapeMismatch(format!("shape {shape:?} overflows usize")))
    })
}

fn strides(shape: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(shape.len());
    let mut acc = 1;
    for &n in shape {
        out.push(acc);
        acc *= n;
    }
    out
}

impl Tensor {
    /// Builds a tensor from column-major data.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let numel = checked_numel(&shape)?;
        if data.len() != numel {
            return Err(Error::ShapeMismatch(format!(
                "shape {shape:?} needs {numel} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        let numel = checked_numel(shape)?;
        Ok(Tensor { shape: shape.to_vec(), data: vec![0.0; numel] })
    }

    pub fn filled(shape: &[usize], value: f64) -> Result<Self> {
        let numel = checked_numel(shape)?;
        Ok(Tensor { shape: shape.to_vec(), data: vec![value; numel] })
    }

    /// Builds a tensor by evaluating `f` at every 0-based multi-index.
    pub fn from_fn(shape: &[usize], mut f: impl FnMut(&[usize]) -> f64) -> Result<Self> {
        let numel = checked_numel(shape)?;
        let mut data = Vec::with_capacity(numel);
        let mut idx = vec![0usize; shape.len()];
        for _ in 0..numel {
            data.push(f(&idx));
            advance(&mut idx, shape);
        }
        Ok(Tensor { shape: shape.to_vec(), data })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn order(&self) -> usize {
        self.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
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

    /// Column-major vectorization; a copy of the flat storage.
    pub fn vectorize(&self) -> Vec<f64> {
        self.data.clone()
    }

    /// Flat offset of a 0-based multi-index.
    pub fn offset(&self, idx: &[usize]) -> Result<usize> {
        if idx.len() != self.order() {
            return Err(Error::ShapeMismatch(format!(
                "index of length {} for a {}-way tensor",
                idx.len(),
                self.order()
            )));
        }
        let mut off = 0;
        let mut stride = 1;
        for (&i, &n) in idx.iter().zip(&self.shape) {
            if i >= n {
                return Err(Error::InvalidArgument(format!("index {idx:?} out of bounds {:?}", self.shape)));
            }
            off += i * stride;
            stride *= n;
        }
        Ok(off)
    }

    pub fn get(&self, idx: &[usize]) -> Result<f64> {
        Ok(self.data[self.offset(idx)?])
    }

    pub fn set(&mut self, idx: &[usize], value: f64) -> Result<()> {
        let off = self.offset(idx)?;
        self.data[off] = value;
        Ok(())
    }

    /// Same data under a new shape with the same element count.
    pub fn reshape(self, shape: Vec<usize>) -> Result<Self> {
        Tensor::new(shape, self.data)
    }

    /// Reorders modes: output mode `d` is input mode `perm[d]`.
    pub fn permute(&self, perm: &[usize]) -> Result<Self> {
        let order = self.order();
        let mut seen = vec![false; order];
        if perm.len() != order || perm.iter().any(|&p| p >= order || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::InvalidArgument(format!("{perm:?} is not a permutation of {order} modes")));
        }
        let src_strides = strides(&self.shape);
        let out_shape: Vec<usize> = perm.iter().map(|&p| self.shape[p]).collect();
        let walk: Vec<usize> = perm.iter().map(|&p| src_strides[p]).collect();

        let mut data = Vec::with_capacity(self.numel());
        let mut idx = vec![0usize; order];
        let mut src = 0usize;
        for _ in 0..self.numel() {
            data.push(self.data[src]);
            // odometer over the output index, tracking the source offset
            for d in 0..order {
                idx[d] += 1;
                src += walk[d];
                if idx[d] < out_shape[d] {
                    break;
                }
                src -= walk[d] * out_shape[d];
                idx[d] = 0;
            }
        }
        Ok(Tensor { shape: out_shape, data })
    }

    fn check_mode(&self, k: usize) -> Result<()> {
        if k < self.order() {
            Ok(())
        } else {
            Err(Error::InvalidMode { mode: k, order: self.order() })
        }
    }

    /// Mode-`k` matricization: an `n_k × ∏_{s≠k} n_s` matrix whose columns
    /// run over the remaining indices in column-major order.
    pub fn mode_k_unfold(&self, k: usize) -> Result<DMatrix<f64>> {
        self.check_mode(k)?;
        let mut perm = vec![k];
        perm.extend((0..self.order()).filter(|&s| s != k));
        let permuted = self.permute(&perm)?;
        let rows = self.shape[k];
        let cols = self.numel() / rows;
        Ok(DMatrix::from_vec(rows, cols, permuted.data))
    }

    /// Inverse of [`Tensor::mode_k_unfold`].
    pub fn mode_k_fold(m: &DMatrix<f64>, k: usize, shape: &[usize]) -> Result<Self> {
        let numel = checked_numel(shape)?;
        if k >= shape.len() {
            return Err(Error::InvalidMode { mode: k, order: shape.len() });
        }
        if m.nrows() != shape[k] || m.nrows() * m.ncols() != numel {
            return Err(Error::ShapeMismatch(format!(
                "{}×{} matrix cannot fold along mode {k} into {shape:?}",
                m.nrows(),
                m.ncols()
            )));
        }
        let mut perm = vec![k];
        perm.extend((0..shape.len()).filter(|&s| s != k));
        let permuted_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
        let permuted = Tensor { shape: permuted_shape, data: m.as_slice().to_vec() };
        permuted.permute(&inverse_permutation(&perm))
    }

    /// Mode-`k1k2` unfolding: a three-way tensor `n_{k1} × n_{k2} × d` whose
    /// frontal slices are the mode-`k1k2` slices in lexicographic order.
    pub fn mode_k1k2_unfold(&self, pair: ModePair) -> Result<Self> {
        if pair.k2 >= self.order() {
            return Err(Error::InvalidPair { k1: pair.k1, k2: pair.k2, order: self.order() });
        }
        let permuted = self.permute(&pair.permutation(self.order()))?;
        let (a, b) = (self.shape[pair.k1], self.shape[pair.k2]);
        let d = self.numel() / (a * b);
        permuted.reshape(vec![a, b, d])
    }

    /// Inverse of [`Tensor::mode_k1k2_unfold`] for a target `shape`.
    pub fn mode_k1k2_fold(y: &Tensor, pair: ModePair, shape: &[usize]) -> Result<Self> {
        let numel = checked_numel(shape)?;
        if pair.k2 >= shape.len() {
            return Err(Error::InvalidPair { k1: pair.k1, k2: pair.k2, order: shape.len() });
        }
        let (a, b) = (shape[pair.k1], shape[pair.k2]);
        let expected = [a, b, numel / (a * b)];
        if y.shape() != expected {
            return Err(Error::ShapeMismatch(format!(
                "unfolding of shape {:?} does not match {expected:?} for pair {pair}",
                y.shape()
            )));
        }
        let perm = pair.permutation(shape.len());
        let permuted_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
        let permuted = Tensor { shape: permuted_shape, data: y.data.clone() };
        permuted.permute(&inverse_permutation(&perm))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn l1_norm(&self) -> f64 {
        self.data.iter().map(|v| v.abs()).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_with(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        self.check_same_shape(other)?;
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(Tensor { shape: self.shape.clone(), data })
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, c: f64) -> Tensor {
        self.map(|v| c * v)
    }

    /// `self += a · x`
    pub fn axpy(&mut self, a: f64, x: &Tensor) -> Result<()> {
        self.check_same_shape(x)?;
        for (s, &v) in self.data.iter_mut().zip(&x.data) {
            *s += a * v;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn check_same_shape(&self, other: &Tensor) -> Result<()> {
        if self.shape == other.shape {
            Ok(())
        } else {
            Err(Error::ShapeMismatch(format!("{:?} vs {:?}", self.shape, other.shape)))
        }
    }
}

/// Increments a column-major multi-index in place.
pub(crate) fn advance(idx: &mut [usize], shape: &[usize]) {
    for (i, &n) in idx.iter_mut().zip(shape) {
        *i += 1;
        if *i < n {
            return;
        }
        *i = 0;
    }
}

fn inverse_permutation(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (d, &p) in perm.iter().enumerate() {
        inv[p] = d;
    }
    inv
}
