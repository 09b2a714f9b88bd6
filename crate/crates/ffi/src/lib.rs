//! C ABI over `ntubal`.
//!
//! Tensors cross the boundary as opaque `NtTensor` handles created by the
//! `nt_tensor_*` constructors and released with [`nt_tensor_free`]. Every
//! fallible call returns an [`NtStatus`]; on failure a description is
//! available from [`nt_last_error`] on the same thread. Panics are caught
//! and reported as `NT_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use ntubal::nrank::{estimate_n_tubal_rank, wstnn, WeightVector};
use ntubal::solvers::{
    default_lambda, lrtc_solve, trpca_solve, LrtcConfig, Mask, SolveReport, TrpcaConfig, DEFAULT_BETA_MAX,
    DEFAULT_MAX_ITER, DEFAULT_REL_TOL, DEFAULT_RHO_MAX, LRTC_GAMMA, TRPCA_GAMMA,
};
use ntubal::synth::{gen_cp_tensor, CpSpec, FactorDistribution};
use ntubal::tensor::pair_count;
use ntubal::{io, tsvd, Error, Tensor};

/// Opaque tensor handle.
pub struct NtTensor(Tensor);

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NtStatus {
    Ok = 0,
    NullPointer = 1,
    ShapeMismatch = 2,
    InvalidArgument = 3,
    NumericFailure = 4,
    Format = 5,
    Io = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

/// Solver schedule. Obtain defaults from [`nt_lrtc_default_params`] or
/// [`nt_trpca_default_params`].
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NtSolverParams {
    pub gamma: f64,
    pub beta_max: f64,
    /// Robust PCA only; `<= 0` means `1 / mean(tau)`.
    pub rho: f64,
    /// Robust PCA only.
    pub rho_max: f64,
    pub max_iter: usize,
    pub rel_tol: f64,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct NtSolveInfo {
    pub iterations: usize,
    /// 1 when RelCha fell below the tolerance.
    pub converged: i32,
    pub final_relcha: f64,
    pub constraint_residual: f64,
    pub elapsed_seconds: f64,
}

impl From<&SolveReport> for NtSolveInfo {
    fn from(r: &SolveReport) -> Self {
        NtSolveInfo {
            iterations: r.iterations,
            converged: r.converged as i32,
            final_relcha: r.final_relcha,
            constraint_residual: r.constraint_residual,
            elapsed_seconds: r.elapsed.as_secs_f64(),
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(NtStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::ShapeMismatch(_) => NtStatus::ShapeMismatch,
            Error::InvalidMode { .. } | Error::InvalidPair { .. } | Error::InvalidArgument(_) => {
                NtStatus::InvalidArgument
            }
            Error::NumericFailure(_) => NtStatus::NumericFailure,
            Error::Format(_) => NtStatus::Format,
            Error::Io(_) => NtStatus::Io,
        };
        Failure(status, e.to_string())
    }
}

type FfiResult = Result<(), Failure>;

fn null(what: &str) -> Failure {
    Failure(NtStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> FfiResult) -> NtStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => NtStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_last_error(format!("panic: {msg}"));
            NtStatus::Panic
        }
    }
}

unsafe fn tensor_ref<'a>(t: *const NtTensor, what: &str) -> Result<&'a Tensor, Failure> {
    t.as_ref().map(|h| &h.0).ok_or_else(|| null(what))
}

unsafe fn slice_ref<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn put_tensor(out: *mut *mut NtTensor, t: Tensor) -> FfiResult {
    if out.is_null() {
        return Err(null("output handle"));
    }
    *out = Box::into_raw(Box::new(NtTensor(t)));
    Ok(())
}

unsafe fn path_arg(p: *const c_char) -> Result<String, Failure> {
    if p.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(str::to_owned)
        .map_err(|_| Failure(NtStatus::InvalidArgument, "path is not valid UTF-8".into()))
}

/// Message of the last failed call on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn nt_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Creates a tensor of the given shape. `data` holds `prod(shape)` values in
/// column-major order, or is NULL for a zero tensor.
///
/// # Safety
/// `shape` must point to `order` values; `data`, if not NULL, to
/// `prod(shape)` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nt_tensor_new(
    shape: *const usize,
    order: usize,
    data: *const f64,
    out: *mut *mut NtTensor,
) -> NtStatus {
    guard(|| {
        let shape = slice_ref(shape, order, "shape")?.to_vec();
        let t = if data.is_null() {
            Tensor::zeros(&shape)?
        } else {
            let n = shape.iter().try_fold(1usize, |a, &b| a.checked_mul(b)).ok_or_else(|| {
                Failure(NtStatus::InvalidArgument, format!("shape {shape:?} overflows"))
            })?;
            Tensor::new(shape, slice_ref(data, n, "data")?.to_vec())?
        };
        put_tensor(out, t)
    })
}

/// Deep copy.
///
/// # Safety
/// `t` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nt_tensor_clone(t: *const NtTensor, out: *mut *mut NtTensor) -> NtStatus {
    guard(|| put_tensor(out, tensor_ref(t, "tensor")?.clone()))
}

/// Releases a handle. NULL is ignored.
///
/// # Safety
/// `t` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn nt_tensor_free(t: *mut NtTensor) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}

/// Number of modes, or 0 for NULL.
///
/// # Safety
/// `t` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn nt_tensor_order(t: *const NtTensor) -> usize {
    t.as_ref().map_or(0, |h| h.0.order())
}

/// Number of entries, or 0 for NULL.
///
/// # Safety
/// `t` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn nt_tensor_numel(t: *const NtTensor) -> usize {
    t.as_ref().map_or(0, |h| h.0.numel())
}

/// Copies the extents into `out`, which holds `cap` values.
///
/// # Safety
/// `t` must be a live handle; `out` must hold `cap` writable values.
#[no_mangle]
pub unsafe extern "C" fn nt_tensor_shape(t: *const NtTensor, out: *mut usize, cap: usize) -> NtStatus {
    guard(|| copy_out(tensor_ref(t, "tensor")?.shape(), out, cap))
}

/// Copies the column-major entries into `out`, which holds `cap` values.
///
/// # Safety
/// `t` must be a live handle; `out` must hold `cap` writable values.
#[no_mangle]
pub unsafe extern "C" fn nt_tensor_copy_data(t: *const NtTensor, out: *mut f64, cap: usize) -> NtStatus {
    guard(|| copy_out(tensor_ref(t, "tensor")?.data(), out, cap))
}

/// Borrowed pointer to the column-major entries, valid while `t` lives and
/// is not mutated. NULL for a NULL handle.
///
/// # Safety
/// `t` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn nt_tensor_data(t: *const NtTensor) -> *const f64 {
    t.as_ref().map_or(ptr::null(), |h| h.0.data().as_ptr())
}

unsafe fn copy_out<T: Copy>(src: &[T], out: *mut T, cap: usize) -> FfiResult {
    if cap < src.len() {
        return Err(Failure(NtStatus::BufferTooSmall, format!("need {} values, buffer holds {cap}", src.len())));
    }
    if src.is_empty() {
        return Ok(());
    }
    if out.is_null() {
        return Err(null("output buffer"));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), out, src.len());
    Ok(())
}

/// Reads a tensor file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nt_tensor_read(path: *const c_char, out: *mut *mut NtTensor) -> NtStatus {
    guard(|| put_tensor(out, io::read_tensor(path_arg(path)?)?))
}

/// Writes a tensor file.
///
/// # Safety
/// `t` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn nt_tensor_write(t: *const NtTensor, path: *const c_char) -> NtStatus {
    guard(|| {
        io::write_tensor(path_arg(path)?, tensor_ref(t, "tensor")?)?;
        Ok(())
    })
}

/// Writes the `N(N-1)/2` tubal ranks of the mode-pair unfoldings into `out`.
///
/// # Safety
/// `t` must be a live handle; `out` must hold `cap` writable values.
#[no_mangle]
pub unsafe extern "C" fn nt_n_tubal_rank(
    t: *const NtTensor,
    rel_threshold: f64,
    out: *mut usize,
    cap: usize,
) -> NtStatus {
    guard(|| {
        let r = estimate_n_tubal_rank(tensor_ref(t, "tensor")?, rel_threshold)?;
        copy_out(&r.0, out, cap)
    })
}

/// Weighted sum of the TNNs of the mode-pair unfoldings.
///
/// # Safety
/// `t` must be a live handle; `alpha` must hold `n_pairs` values; `out`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn nt_wstnn(t: *const NtTensor, alpha: *const f64, n_pairs: usize, out: *mut f64) -> NtStatus {
    guard(|| {
        let x = tensor_ref(t, "tensor")?;
        let alpha = WeightVector::new(slice_ref(alpha, n_pairs, "alpha")?.to_vec())?;
        let v = wstnn(x, &alpha)?;
        *out.as_mut().ok_or_else(|| null("output"))? = v;
        Ok(())
    })
}

/// t-SVD `x = U * S * V^T` of a three-way tensor.
///
/// # Safety
/// `x` must be a live handle; the three outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn nt_t_svd(
    x: *const NtTensor,
    out_u: *mut *mut NtTensor,
    out_s: *mut *mut NtTensor,
    out_v: *mut *mut NtTensor,
) -> NtStatus {
    guard(|| {
        if out_u.is_null() || out_s.is_null() || out_v.is_null() {
            return Err(null("output handle"));
        }
        let f = tsvd::t_svd(tensor_ref(x, "tensor")?)?;
        put_tensor(out_u, f.u)?;
        put_tensor(out_s, f.s)?;
        put_tensor(out_v, f.v)
    })
}

/// Synthetic CP-rank-`rank` tensor. `gaussian != 0` draws standard normal
/// factors, otherwise uniform on `[0, 1)`.
///
/// # Safety
/// `shape` must point to `order` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nt_gen_cp(
    shape: *const usize,
    order: usize,
    rank: usize,
    seed: u64,
    gaussian: i32,
    out: *mut *mut NtTensor,
) -> NtStatus {
    guard(|| {
        let shape = slice_ref(shape, order, "shape")?.to_vec();
        let dist = if gaussian != 0 { FactorDistribution::Gaussian } else { FactorDistribution::Uniform };
        put_tensor(out, gen_cp_tensor(&CpSpec::new(shape, rank, seed).with_distribution(dist))?)
    })
}

#[no_mangle]
pub extern "C" fn nt_lrtc_default_params() -> NtSolverParams {
    NtSolverParams {
        gamma: LRTC_GAMMA,
        beta_max: DEFAULT_BETA_MAX,
        rho: 0.0,
        rho_max: DEFAULT_RHO_MAX,
        max_iter: DEFAULT_MAX_ITER,
        rel_tol: DEFAULT_REL_TOL,
    }
}

#[no_mangle]
pub extern "C" fn nt_trpca_default_params() -> NtSolverParams {
    NtSolverParams { gamma: TRPCA_GAMMA, ..nt_lrtc_default_params() }
}

unsafe fn weights_and_tau(
    order: usize,
    alpha: *const f64,
    tau: *const f64,
    n_pairs: usize,
) -> Result<(WeightVector, Vec<f64>), Failure> {
    if n_pairs != pair_count(order) {
        return Err(Failure(
            NtStatus::InvalidArgument,
            format!("{n_pairs} pair parameters for a {order}-way tensor"),
        ));
    }
    let alpha = WeightVector::new(slice_ref(alpha, n_pairs, "alpha")?.to_vec())?;
    let tau = slice_ref(tau, n_pairs, "tau")?.to_vec();
    Ok((alpha, tau))
}

unsafe fn put_info(info: *mut NtSolveInfo, report: &SolveReport) {
    if let Some(i) = info.as_mut() {
        *i = report.into();
    }
}

/// Tensor completion. Entries where `mask` is nonzero are observed.
/// `params` and `info` may be NULL.
///
/// # Safety
/// `f` and `mask` must be live handles; `alpha` and `tau` must hold
/// `n_pairs` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nt_lrtc_solve(
    f: *const NtTensor,
    mask: *const NtTensor,
    alpha: *const f64,
    tau: *const f64,
    n_pairs: usize,
    params: *const NtSolverParams,
    out: *mut *mut NtTensor,
    info: *mut NtSolveInfo,
) -> NtStatus {
    guard(|| {
        let f = tensor_ref(f, "data tensor")?;
        let mask = Mask::from_tensor(tensor_ref(mask, "mask")?);
        let (alpha, tau) = weights_and_tau(f.order(), alpha, tau, n_pairs)?;
        let p = params.as_ref().copied().unwrap_or_else(|| nt_lrtc_default_params());
        let mut cfg = LrtcConfig::new(alpha, tau);
        cfg.gamma = p.gamma;
        cfg.beta_max = p.beta_max;
        cfg.max_iter = p.max_iter;
        cfg.rel_tol = p.rel_tol;
        let (x, report) = lrtc_solve(f, &mask, &cfg)?;
        put_tensor(out, x)?;
        put_info(info, &report);
        Ok(())
    })
}

/// Robust PCA `x = L + E`. `lambda <= 0` selects the default weight of the
/// sparse term. `out_sparse`, `params` and `info` may be NULL.
///
/// # Safety
/// `x` must be a live handle; `alpha` and `tau` must hold `n_pairs` values;
/// `out_low` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nt_trpca_solve(
    x: *const NtTensor,
    alpha: *const f64,
    tau: *const f64,
    n_pairs: usize,
    lambda: f64,
    params: *const NtSolverParams,
    out_low: *mut *mut NtTensor,
    out_sparse: *mut *mut NtTensor,
    info: *mut NtSolveInfo,
) -> NtStatus {
    guard(|| {
        let x = tensor_ref(x, "tensor")?;
        if out_low.is_null() {
            return Err(null("low-rank output handle"));
        }
        let (alpha, tau) = weights_and_tau(x.order(), alpha, tau, n_pairs)?;
        let lambda = if lambda > 0.0 { lambda } else { default_lambda(x.shape(), &alpha)? };
        let p = params.as_ref().copied().unwrap_or_else(|| nt_trpca_default_params());
        let mut cfg = TrpcaConfig::new(alpha, tau, lambda);
        cfg.gamma = p.gamma;
        cfg.beta_max = p.beta_max;
        cfg.rho_max = p.rho_max;
        if p.rho > 0.0 {
            cfg.rho = p.rho;
        }
        cfg.max_iter = p.max_iter;
        cfg.rel_tol = p.rel_tol;
        let (low, sparse, report) = trpca_solve(x, &cfg)?;
        put_tensor(out_low, low)?;
        if !out_sparse.is_null() {
            put_tensor(out_sparse, sparse)?;
        }
        put_info(info, &report);
        Ok(())
    })
}
