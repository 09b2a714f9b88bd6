//! Three-way t-SVD algebra.
//!
//! Everything here works in the Fourier domain along mode 3: a forward DFT
//! (unnormalized) of every tube turns the t-product into independent
//! matrix products on the frontal slices, and the t-SVD into independent
//! matrix SVDs. The inverse DFT carries the `1/n3` factor.
//!
//! For real input the Fourier slices come in conjugate pairs
//! (`X̄⁽ⁱ⁾ = conj(X̄⁽ⁿ³⁺²⁻ⁱ⁾)`), so only `⌊n3/2⌋ + 1` of them carry
//! information. [`t_svd`] always mirrors its factors across the pairs so
//! that `U`, `S`, `V` come back real; [`t_svt_with`] can either compute
//! every slice or mirror, see [`SliceStrategy`].

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Convergence tolerance for the bidiagonal SVD iteration. nalgebra
/// mis-converges with a bare machine epsilon, `5ε` is its own default.
pub(crate) const SVD_EPS: f64 = 5.0 * f64::EPSILON;
pub(crate) const SVD_MAX_ITER: usize = 10_000;

/// Dense three-way complex tensor, same column-major layout as [`Tensor`].
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexTensor {
    shape: [usize; 3],
    data: Vec<Complex64>,
}

impl ComplexTensor {
    pub fn new(shape: [usize; 3], data: Vec<Complex64>) -> Result<Self> {
        if shape.contains(&0) || data.len() != shape.iter().product::<usize>() {
            return Err(Error::ShapeMismatch(format!(
                "complex tensor {shape:?} with {} values",
                data.len()
            )));
        }
        Ok(ComplexTensor { shape, data })
    }

    pub fn zeros(shape: [usize; 3]) -> Self {
        ComplexTensor { shape, data: vec![Complex64::new(0.0, 0.0); shape.iter().product()] }
    }

    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> Complex64 {
        let [n1, n2, _] = self.shape;
        self.data[i + n1 * (j + n2 * k)]
    }

    /// Frontal slice `k` (0-based) as an `n1 × n2` matrix.
    pub fn slice(&self, k: usize) -> DMatrix<Complex64> {
        let [n1, n2, _] = self.shape;
        let len = n1 * n2;
        DMatrix::from_column_slice(n1, n2, &self.data[k * len..(k + 1) * len])
    }

    fn from_slices(n1: usize, n2: usize, slices: Vec<DMatrix<Complex64>>) -> Self {
        let n3 = slices.len();
        let mut data = Vec::with_capacity(n1 * n2 * n3);
        for s in &slices {
            debug_assert_eq!(s.shape(), (n1, n2));
            data.extend_from_slice(s.as_slice());
        }
        ComplexTensor { shape: [n1, n2, n3], data }
    }
}

/// Which Fourier slices a slice-wise operation evaluates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SliceStrategy {
    /// Every slice independently.
    #[default]
    All,
    /// Slices `0..=n3/2`; the rest are conjugate mirrors.
    ConjugateSymmetric,
}

/// When a singular value counts as nonzero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RankTolerance {
    /// `σ > max(n1, n2) · ε · σ_max`, with `σ_max` over all Fourier slices.
    Machine,
    /// `σ > r · σ_max`, with `σ_max` over all Fourier slices.
    Relative(f64),
    /// `σ > t`.
    Absolute(f64),
}

impl RankTolerance {
    fn threshold(&self, n1: usize, n2: usize, sigma_max: f64) -> f64 {
        match *self {
            RankTolerance::Machine => n1.max(n2) as f64 * f64::EPSILON * sigma_max,
            RankTolerance::Relative(r) => r * sigma_max,
            RankTolerance::Absolute(t) => t,
        }
    }
}

/// `t_svd` output: `X = U * S * Vᵀ`.
#[derive(Clone, Debug)]
pub struct TSvdFactors {
    pub u: Tensor,
    pub s: Tensor,
    pub v: Tensor,
}

/// Per-Fourier-slice matrix ranks.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MultiRank(pub Vec<usize>);

impl MultiRank {
    pub fn tubal_rank(&self) -> usize {
        self.0.iter().copied().max().unwrap_or(0)
    }
}

fn three_way_shape(x: &Tensor) -> Result<[usize; 3]> {
    match *x.shape() {
        [a, b, c] => Ok([a, b, c]),
        _ => Err(Error::ShapeMismatch(format!("expected a three-way tensor, got shape {:?}", x.shape()))),
    }
}

fn fft_tubes(shape: [usize; 3], data: &mut [Complex64], inverse: bool) {
    let [n1, n2, n3] = shape;
    let plane = n1 * n2;
    let mut planner = FftPlanner::<f64>::new();
    let fft = if inverse { planner.plan_fft_inverse(n3) } else { planner.plan_fft_forward(n3) };
    // tube-major scratch so the batch transform sees contiguous tubes
    let mut tubes = vec![Complex64::new(0.0, 0.0); plane * n3];
    for k in 0..n3 {
        for p in 0..plane {
            tubes[p * n3 + k] = data[k * plane + p];
        }
    }
    fft.process(&mut tubes);
    let scale = if inverse { 1.0 / n3 as f64 } else { 1.0 };
    for k in 0..n3 {
        for p in 0..plane {
            data[k * plane + p] = tubes[p * n3 + k] * scale;
        }
    }
}

/// Unnormalized DFT along every tube `x(i, j, :)`.
pub fn dft_tubes(x: &Tensor) -> Result<ComplexTensor> {
    let shape = three_way_shape(x)?;
    let mut data: Vec<Complex64> = x.data().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_tubes(shape, &mut data, false);
    Ok(ComplexTensor { shape, data })
}

/// Inverse DFT along tubes, without discarding the imaginary part.
pub fn idft_tubes_complex(y: &ComplexTensor) -> ComplexTensor {
    let mut data = y.data.clone();
    fft_tubes(y.shape, &mut data, true);
    ComplexTensor { shape: y.shape, data }
}

/// Inverse DFT along tubes back to a real tensor.
///
/// Imaginary residue up to `1e-9 · (1 + ‖x‖_F)` is dropped; anything larger
/// is reported as a numeric failure since real input should never produce it.
pub fn idft_tubes(y: &ComplexTensor) -> Result<Tensor> {
    let z = idft_tubes_complex(y);
    let norm = z.data.iter().map(|c| c.re * c.re).sum::<f64>().sqrt();
    let max_imag = z.data.iter().fold(0.0f64, |m, c| m.max(c.im.abs()));
    if max_imag > 1e-9 * (1.0 + norm) {
        return Err(Error::NumericFailure(format!(
            "inverse DFT left imaginary residue {max_imag:.3e} (‖x‖_F = {norm:.3e})"
        )));
    }
    Tensor::new(z.shape.to_vec(), z.data.iter().map(|c| c.re).collect())
}

/// t-product `x * y` of `n1 × n2 × n3` and `n2 × n4 × n3` tensors.
pub fn t_product(x: &Tensor, y: &Tensor) -> Result<Tensor> {
    let [n1, n2, n3] = three_way_shape(x)?;
    let [m2, n4, m3] = three_way_shape(y)?;
    if n2 != m2 || n3 != m3 {
        return Err(Error::ShapeMismatch(format!(
            "t-product of {:?} and {:?}",
            x.shape(),
            y.shape()
        )));
    }
    let xb = dft_tubes(x)?;
    let yb = dft_tubes(y)?;
    let slices: Vec<_> = (0..n3).into_par_iter().map(|k| xb.slice(k) * yb.slice(k)).collect();
    idft_tubes(&ComplexTensor::from_slices(n1, n4, slices))
}

/// Transposes every frontal slice and reverses the order of slices `2..n3`.
pub fn conj_transpose(x: &Tensor) -> Result<Tensor> {
    let [n1, n2, n3] = three_way_shape(x)?;
    let mut out = Tensor::zeros(&[n2, n1, n3])?;
    let src = x.data();
    let dst = out.data_mut();
    for k in 0..n3 {
        let target = (n3 - k) % n3;
        for j in 0..n2 {
            for i in 0..n1 {
                dst[j + n2 * (i + n1 * target)] = src[i + n1 * (j + n2 * k)];
            }
        }
    }
    Ok(out)
}

/// Identity tensor: first frontal slice `I_n`, the rest zero.
pub fn identity_tensor(n: usize, n3: usize) -> Result<Tensor> {
    let mut out = Tensor::zeros(&[n, n, n3])?;
    for i in 0..n {
        out.data_mut()[i + n * i] = 1.0;
    }
    Ok(out)
}

fn is_self_conjugate(k: usize, n3: usize) -> bool {
    k == 0 || 2 * k == n3
}

fn computed_slices(n3: usize, strategy: SliceStrategy) -> Vec<usize> {
    match strategy {
        SliceStrategy::All => (0..n3).collect(),
        SliceStrategy::ConjugateSymmetric => (0..=n3 / 2).collect(),
    }
}

/// Assembles all `n3` slices from the computed ones, mirroring when needed.
fn fill_mirrored(n3: usize, computed: Vec<DMatrix<Complex64>>) -> Vec<DMatrix<Complex64>> {
    if computed.len() == n3 {
        return computed;
    }
    let mut all = computed;
    for k in all.len()..n3 {
        let mirror = all[n3 - k].conjugate();
        all.push(mirror);
    }
    all
}

fn svd_failure(k: usize) -> Error {
    Error::NumericFailure(format!("SVD did not converge on Fourier slice {}", k + 1))
}

fn to_complex(m: &DMatrix<f64>) -> DMatrix<Complex64> {
    m.map(|v| Complex64::new(v, 0.0))
}

/// Thin SVD of one Fourier slice: `(U, σ, Vᴴ)` with σ sorted descending.
/// Self-conjugate slices of real input are real, and go through a real SVD.
fn slice_svd(
    m: DMatrix<Complex64>,
    real: bool,
    k: usize,
) -> Result<(DMatrix<Complex64>, DVector<f64>, DMatrix<Complex64>)> {
    if real {
        let svd = m.map(|c| c.re).try_svd(true, true, SVD_EPS, SVD_MAX_ITER).ok_or_else(|| svd_failure(k))?;
        let (u, vt) = (svd.u.expect("u requested"), svd.v_t.expect("v_t requested"));
        Ok((to_complex(&u), svd.singular_values, to_complex(&vt)))
    } else {
        let svd = m.try_svd(true, true, SVD_EPS, SVD_MAX_ITER).ok_or_else(|| svd_failure(k))?;
        Ok((svd.u.expect("u requested"), svd.singular_values, svd.v_t.expect("v_t requested")))
    }
}

fn slice_singular_values(m: DMatrix<Complex64>, real: bool, k: usize) -> Result<DVector<f64>> {
    let sv = if real {
        m.map(|c| c.re).try_svd(false, false, SVD_EPS, SVD_MAX_ITER).map(|s| s.singular_values)
    } else {
        m.try_svd(false, false, SVD_EPS, SVD_MAX_ITER).map(|s| s.singular_values)
    };
    sv.ok_or_else(|| svd_failure(k))
}

/// Extends orthonormal columns `q` (`n × m`) to an `n × n` unitary matrix by
/// greedily orthogonalizing standard basis vectors.
fn complete_unitary(q: DMatrix<Complex64>) -> DMatrix<Complex64> {
    let n = q.nrows();
    let mut cols: Vec<DVector<Complex64>> = q.column_iter().map(|c| c.into_owned()).collect();
    while cols.len() < n {
        let mut best: Option<(f64, DVector<Complex64>)> = None;
        for i in 0..n {
            let mut v = DVector::<Complex64>::zeros(n);
            v[i] = Complex64::new(1.0, 0.0);
            for _ in 0..2 {
                for c in &cols {
                    let proj = c.dotc(&v);
                    v -= c * proj;
                }
            }
            let norm = v.norm();
            if best.as_ref().map_or(true, |(b, _)| norm > *b) {
                best = Some((norm, v));
            }
        }
        let (norm, v) = best.expect("n > 0");
        cols.push(v / Complex64::new(norm, 0.0));
    }
    DMatrix::from_columns(&cols)
}

/// t-SVD of a three-way tensor with full (square) `U` and `V`.
pub fn t_svd(x: &Tensor) -> Result<TSvdFactors> {
    let [n1, n2, n3] = three_way_shape(x)?;
    let xb = dft_tubes(x)?;
    let factors: Vec<_> = computed_slices(n3, SliceStrategy::ConjugateSymmetric)
        .into_par_iter()
        .map(|k| {
            let (u, sigma, vt) = slice_svd(xb.slice(k), is_self_conjugate(k, n3), k)?;
            let mut s = DMatrix::<Complex64>::zeros(n1, n2);
            for (i, &v) in sigma.iter().enumerate() {
                s[(i, i)] = Complex64::new(v, 0.0);
            }
            Ok((complete_unitary(u), s, complete_unitary(vt.adjoint())))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut us = Vec::with_capacity(factors.len());
    let mut ss = Vec::with_capacity(factors.len());
    let mut vs = Vec::with_capacity(factors.len());
    for (u, s, v) in factors {
        us.push(u);
        ss.push(s);
        vs.push(v);
    }
    let u = idft_tubes(&ComplexTensor::from_slices(n1, n1, fill_mirrored(n3, us)))?;
    let s = idft_tubes(&ComplexTensor::from_slices(n1, n2, fill_mirrored(n3, ss)))?;
    let v = idft_tubes(&ComplexTensor::from_slices(n2, n2, fill_mirrored(n3, vs)))?;
    Ok(TSvdFactors { u, s, v })
}

/// Singular values of every Fourier slice, each sorted descending.
pub fn fourier_singular_values(x: &Tensor) -> Result<Vec<DVector<f64>>> {
    let [_, _, n3] = three_way_shape(x)?;
    let xb = dft_tubes(x)?;
    let computed = computed_slices(n3, SliceStrategy::ConjugateSymmetric)
        .into_par_iter()
        .map(|k| slice_singular_values(xb.slice(k), is_self_conjugate(k, n3), k))
        .collect::<Result<Vec<_>>>()?;
    // conjugate slices share singular values
    let mut all = computed;
    for k in all.len()..n3 {
        let mirror = all[n3 - k].clone();
        all.push(mirror);
    }
    Ok(all)
}

pub fn multi_rank(x: &Tensor, tol: RankTolerance) -> Result<MultiRank> {
    let [n1, n2, _] = three_way_shape(x)?;
    let svals = fourier_singular_values(x)?;
    let sigma_max = svals.iter().flat_map(|s| s.iter()).fold(0.0f64, |m, &v| m.max(v));
    let thr = tol.threshold(n1, n2, sigma_max);
    Ok(MultiRank(svals.iter().map(|s| s.iter().filter(|&&v| v > thr).count()).collect()))
}

pub fn tubal_rank(x: &Tensor, tol: RankTolerance) -> Result<usize> {
    Ok(multi_rank(x, tol)?.tubal_rank())
}

/// Tensor nuclear norm: sum of nuclear norms of all Fourier slices.
pub fn tnn(x: &Tensor) -> Result<f64> {
    Ok(fourier_singular_values(x)?.iter().map(|s| s.sum()).sum())
}

/// t-SVT: the proximal operator of `tau · ‖·‖_TNN`, computing every slice.
pub fn t_svt(z: &Tensor, tau: f64) -> Result<Tensor> {
    t_svt_with(z, tau, SliceStrategy::All)
}

/// t-SVT with an explicit slice strategy.
pub fn t_svt_with(z: &Tensor, tau: f64, strategy: SliceStrategy) -> Result<Tensor> {
    if !(tau >= 0.0) {
        return Err(Error::InvalidArgument(format!("t-SVT threshold must be ≥ 0, got {tau}")));
    }
    let [n1, n2, n3] = three_way_shape(z)?;
    let zb = dft_tubes(z)?;
    let shrunk = computed_slices(n3, strategy)
        .into_par_iter()
        .map(|k| {
            let real = strategy == SliceStrategy::ConjugateSymmetric && is_self_conjugate(k, n3);
            let (u, sigma, vt) = slice_svd(zb.slice(k), real, k)?;
            let keep = sigma.iter().take_while(|&&s| s > tau).count();
            if keep == 0 {
                return Ok(DMatrix::zeros(n1, n2));
            }
            let mut left = u.columns(0, keep).into_owned();
            for (c, &s) in sigma.iter().take(keep).enumerate() {
                left.column_mut(c).scale_mut(s - tau);
            }
            Ok(left * vt.rows(0, keep))
        })
        .collect::<Result<Vec<_>>>()?;
    idft_tubes(&ComplexTensor::from_slices(n1, n2, fill_mirrored(n3, shrunk)))
}
