//! ADMM solvers for WSTNN-regularized tensor completion (LRTC) and tensor
//! robust PCA (TRPCA).
//!
//! Both solvers split the WSTNN into one auxiliary tensor per mode pair.
//! Each auxiliary update is a t-SVT of the corresponding mode-k1k2
//! unfolding with threshold `α/β`; penalties start at `β = α ./ τ` and grow
//! geometrically by `γ` up to a cap. Pairs with `α = 0` are dropped.
//! Iteration stops when the relative change of the primal iterate falls
//! below `rel_tol`, or after `max_iter` sweeps.

use std::io::Write;
use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::nrank::WeightVector;
use crate::tensor::{pair_count, ModePair, Tensor};
use crate::tsvd::{t_svt_with, SliceStrategy};

pub const DEFAULT_BETA_MAX: f64 = 1e10;
pub const DEFAULT_RHO_MAX: f64 = 1e10;
pub const DEFAULT_MAX_ITER: usize = 500;
pub const DEFAULT_REL_TOL: f64 = 1e-4;
pub const LRTC_GAMMA: f64 = 1.1;
pub const TRPCA_GAMMA: f64 = 1.2;

/// Observed-entry indicator, congruent with the data tensor.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    shape: Vec<usize>,
    observed: Vec<bool>,
}

impl Mask {
    pub fn new(shape: Vec<usize>, observed: Vec<bool>) -> Result<Self> {
        // validates the shape itself
        let probe = Tensor::zeros(&shape)?;
        if observed.len() != probe.numel() {
            return Err(Error::ShapeMismatch(format!(
                "mask of {} entries for shape {shape:?}",
                observed.len()
            )));
        }
        Ok(Mask { shape, observed })
    }

    pub fn full(shape: &[usize]) -> Result<Self> {
        let n = Tensor::zeros(shape)?.numel();
        Ok(Mask { shape: shape.to_vec(), observed: vec![true; n] })
    }

    /// Nonzero entries are observed.
    pub fn from_tensor(t: &Tensor) -> Self {
        Mask { shape: t.shape().to_vec(), observed: t.data().iter().map(|&v| v != 0.0).collect() }
    }

    pub fn to_tensor(&self) -> Tensor {
        let data = self.observed.iter().map(|&o| if o { 1.0 } else { 0.0 }).collect();
        Tensor::new(self.shape.clone(), data).expect("mask shape is valid")
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn observed(&self) -> &[bool] {
        &self.observed
    }

    pub fn count(&self) -> usize {
        self.observed.iter().filter(|&&o| o).count()
    }

    /// `P_Ω(x)`: keeps observed entries, zeroes the rest.
    pub fn project(&self, x: &Tensor) -> Result<Tensor> {
        self.check(x)?;
        let data = x.data().iter().zip(&self.observed).map(|(&v, &o)| if o { v } else { 0.0 }).collect();
        Tensor::new(self.shape.clone(), data)
    }

    fn check(&self, x: &Tensor) -> Result<()> {
        if x.shape() == self.shape.as_slice() {
            Ok(())
        } else {
            Err(Error::ShapeMismatch(format!("mask {:?} vs tensor {:?}", self.shape, x.shape())))
        }
    }
}

/// Convergence record of one solver run.
#[derive(Clone, Debug, Default)]
pub struct SolveReport {
    pub iterations: usize,
    pub converged: bool,
    pub final_relcha: f64,
    /// RelCha after each sweep; `len() == iterations`.
    pub relcha_trace: Vec<f64>,
    /// `‖P_Ω(X - F)‖_F` for completion, `‖X - L - E‖_F` for robust PCA.
    pub constraint_residual: f64,
    pub elapsed: Duration,
}

impl SolveReport {
    /// Writes the RelCha trace as `iteration,relcha` CSV.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "iteration,relcha")?;
        for (i, r) in self.relcha_trace.iter().enumerate() {
            writeln!(w, "{},{}", i + 1, r)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Parameters of [`lrtc_solve`].
#[derive(Clone, Debug, PartialEq)]
pub struct LrtcConfig {
    pub alpha: WeightVector,
    /// Per-pair thresholds `τ = α ./ β`.
    pub tau: Vec<f64>,
    pub gamma: f64,
    pub beta_max: f64,
    pub max_iter: usize,
    pub rel_tol: f64,
    pub slices: SliceStrategy,
}

impl LrtcConfig {
    pub fn new(alpha: WeightVector, tau: Vec<f64>) -> Self {
        LrtcConfig {
            alpha,
            tau,
            gamma: LRTC_GAMMA,
            beta_max: DEFAULT_BETA_MAX,
            max_iter: DEFAULT_MAX_ITER,
            rel_tol: DEFAULT_REL_TOL,
            slices: SliceStrategy::ConjugateSymmetric,
        }
    }

    /// `τ = ω · ones`.
    pub fn with_omega(alpha: WeightVector, omega: f64) -> Self {
        let tau = vec![omega; alpha.len()];
        Self::new(alpha, tau)
    }

    pub fn validate(&self, order: usize) -> Result<()> {
        validate_common(&self.alpha, &self.tau, self.gamma, self.beta_max, self.max_iter, self.rel_tol, order)
    }
}

/// Parameters of [`trpca_solve`].
#[derive(Clone, Debug, PartialEq)]
pub struct TrpcaConfig {
    pub alpha: WeightVector,
    pub tau: Vec<f64>,
    pub gamma: f64,
    pub beta_max: f64,
    pub rho_max: f64,
    /// Weight of the `ℓ1` term.
    pub lambda: f64,
    pub rho: f64,
    pub max_iter: usize,
    pub rel_tol: f64,
    pub slices: SliceStrategy,
}

impl TrpcaConfig {
    /// Defaults with `ρ = 1 / mean(τ)`.
    pub fn new(alpha: WeightVector, tau: Vec<f64>, lambda: f64) -> Self {
        let mean = tau.iter().sum::<f64>() / tau.len().max(1) as f64;
        TrpcaConfig {
            alpha,
            tau,
            gamma: TRPCA_GAMMA,
            beta_max: DEFAULT_BETA_MAX,
            rho_max: DEFAULT_RHO_MAX,
            lambda,
            rho: 1.0 / mean,
            max_iter: DEFAULT_MAX_ITER,
            rel_tol: DEFAULT_REL_TOL,
            slices: SliceStrategy::ConjugateSymmetric,
        }
    }

    pub fn with_omega(alpha: WeightVector, omega: f64, lambda: f64) -> Self {
        let tau = vec![omega; alpha.len()];
        Self::new(alpha, tau, lambda)
    }

    pub fn validate(&self, order: usize) -> Result<()> {
        validate_common(&self.alpha, &self.tau, self.gamma, self.beta_max, self.max_iter, self.rel_tol, order)?;
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(Error::InvalidArgument(format!("lambda must be positive, got {}", self.lambda)));
        }
        if !(self.rho > 0.0) || !self.rho.is_finite() {
            return Err(Error::InvalidArgument(format!("rho must be positive, got {}", self.rho)));
        }
        if !(self.rho_max > 0.0) {
            return Err(Error::InvalidArgument(format!("rho_max must be positive, got {}", self.rho_max)));
        }
        Ok(())
    }
}

fn validate_common(
    alpha: &WeightVector,
    tau: &[f64],
    gamma: f64,
    beta_max: f64,
    max_iter: usize,
    rel_tol: f64,
    order: usize,
) -> Result<()> {
    if order < 3 {
        return Err(Error::InvalidArgument(format!("solvers need N ≥ 3, got {order}")));
    }
    alpha.check_order(order)?;
    if tau.len() != pair_count(order) {
        return Err(Error::InvalidArgument(format!(
            "{} thresholds for {} mode pairs",
            tau.len(),
            pair_count(order)
        )));
    }
    if tau.iter().any(|t| !(*t > 0.0) || !t.is_finite()) {
        return Err(Error::InvalidArgument(format!("thresholds must be positive: {tau:?}")));
    }
    if !(gamma > 1.0) || !gamma.is_finite() {
        return Err(Error::InvalidArgument(format!("gamma must exceed 1, got {gamma}")));
    }
    if !(beta_max > 0.0) {
        return Err(Error::InvalidArgument(format!("beta_max must be positive, got {beta_max}")));
    }
    if max_iter == 0 {
        return Err(Error::InvalidArgument("max_iter must be at least 1".into()));
    }
    if !(rel_tol > 0.0) {
        return Err(Error::InvalidArgument(format!("rel_tol must be positive, got {rel_tol}")));
    }
    Ok(())
}

/// Elementwise soft thresholding `sgn(x) · max(|x| - ξ, 0)`.
pub fn soft_threshold(x: &Tensor, xi: f64) -> Result<Tensor> {
    if !(xi >= 0.0) {
        return Err(Error::InvalidArgument(format!("soft-threshold level must be ≥ 0, got {xi}")));
    }
    Ok(x.map(|v| v.signum() * (v.abs() - xi).max(0.0)))
}

/// `λ = Σ α_{k1k2} / sqrt(max(n_k1, n_k2) · d_{k1k2})`, `d = ∏_{s≠k1,k2} n_s`.
pub fn default_lambda(shape: &[usize], alpha: &WeightVector) -> Result<f64> {
    if shape.len() < 3 {
        return Err(Error::InvalidArgument(format!("default lambda needs N ≥ 3, got {}", shape.len())));
    }
    alpha.check_order(shape.len())?;
    let total: f64 = shape.iter().map(|&n| n as f64).product();
    Ok(ModePair::all(shape.len())
        .iter()
        .zip(alpha.as_slice())
        .map(|(p, &a)| {
            let (n1, n2) = (shape[p.k1()] as f64, shape[p.k2()] as f64);
            let d = total / (n1 * n2);
            a / (n1.max(n2) * d).sqrt()
        })
        .sum())
}

/// One pair term of the splitting: its mode pair, weight and penalty.
struct PairTerm {
    pair: ModePair,
    alpha: f64,
    beta: f64,
}

fn active_terms(alpha: &WeightVector, tau: &[f64], order: usize) -> Vec<PairTerm> {
    ModePair::all(order)
        .into_iter()
        .zip(alpha.as_slice().iter().zip(tau))
        .filter(|(_, (&a, _))| a > 0.0)
        .map(|(pair, (&a, &t))| PairTerm { pair, alpha: a, beta: a / t })
        .collect()
}

/// `fold(t_svt(unfold(x + m/β), α/β))` for one pair.
fn pair_prox(x: &Tensor, m: &Tensor, term: &PairTerm, slices: SliceStrategy) -> Result<Tensor> {
    let inv_beta = 1.0 / term.beta;
    let shifted = x.zip_with(m, |a, b| a + b * inv_beta)?;
    let unfolded = shifted.mode_k1k2_unfold(term.pair)?;
    let shrunk = t_svt_with(&unfolded, term.alpha * inv_beta, slices)?;
    Tensor::mode_k1k2_fold(&shrunk, term.pair, x.shape())
}

fn relative_change(new: &Tensor, old: &Tensor) -> f64 {
    let diff: f64 = new.data().iter().zip(old.data()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let base = old.frobenius_norm();
    if base == 0.0 {
        new.frobenius_norm()
    } else {
        diff / base
    }
}

/// WSTNN-regularized tensor completion.
///
/// Minimizes `Σ α_{k1k2} ‖X_(k1k2)‖_TNN` subject to `P_Ω(X - F) = 0`.
/// Observed entries of the returned tensor equal `F` exactly.
pub fn lrtc_solve(f: &Tensor, omega: &Mask, cfg: &LrtcConfig) -> Result<(Tensor, SolveReport)> {
    cfg.validate(f.order())?;
    omega.check(f)?;
    if f.data().iter().zip(omega.observed()).any(|(v, &o)| o && !v.is_finite()) {
        return Err(Error::InvalidArgument("observed entries must be finite".into()));
    }
    let start = Instant::now();
    let observed = omega.observed();
    let mut terms = active_terms(&cfg.alpha, &cfg.tau, f.order());

    let mut x = omega.project(f)?;
    let mut multipliers: Vec<Tensor> = terms.iter().map(|_| Tensor::zeros(f.shape())).collect::<Result<_>>()?;
    let mut report = SolveReport::default();

    while report.iterations < cfg.max_iter {
        let ys = terms
            .par_iter()
            .zip(&multipliers)
            .map(|(term, m)| pair_prox(&x, m, term, cfg.slices))
            .collect::<Result<Vec<_>>>()?;

        // β-weighted average of (Y - M/β) on the unobserved entries
        let beta_sum: f64 = terms.iter().map(|t| t.beta).sum();
        let mut x_new = Tensor::zeros(f.shape())?;
        {
            let out = x_new.data_mut();
            for ((term, y), m) in terms.iter().zip(&ys).zip(&multipliers) {
                for ((o, &yv), &mv) in out.iter_mut().zip(y.data()).zip(m.data()) {
                    *o += term.beta * yv - mv;
                }
            }
            for ((o, &obs), &fv) in out.iter_mut().zip(observed).zip(f.data()) {
                *o = if obs { fv } else { *o / beta_sum };
            }
        }

        for ((term, y), m) in terms.iter().zip(&ys).zip(multipliers.iter_mut()) {
            for ((mv, &xv), &yv) in m.data_mut().iter_mut().zip(x_new.data()).zip(y.data()) {
                *mv += term.beta * (xv - yv);
            }
        }
        for term in &mut terms {
            term.beta = (cfg.gamma * term.beta).min(cfg.beta_max);
        }

        let relcha = relative_change(&x_new, &x);
        x = x_new;
        report.iterations += 1;
        report.relcha_trace.push(relcha);
        report.final_relcha = relcha;
        if !relcha.is_finite() {
            return Err(Error::NumericFailure(format!("RelCha became {relcha} at iteration {}", report.iterations)));
        }
        if relcha < cfg.rel_tol {
            report.converged = true;
            break;
        }
    }

    report.constraint_residual = omega.project(&x.sub(f)?)?.frobenius_norm();
    report.elapsed = start.elapsed();
    Ok((x, report))
}

/// WSTNN-regularized tensor robust PCA.
///
/// Splits `x` into a low-rank part `L` and a sparse part `E` by minimizing
/// `Σ α_{k1k2} ‖L_(k1k2)‖_TNN + λ ‖E‖_1` subject to `x = L + E`.
pub fn trpca_solve(x: &Tensor, cfg: &TrpcaConfig) -> Result<(Tensor, Tensor, SolveReport)> {
    cfg.validate(x.order())?;
    if !x.is_finite() {
        return Err(Error::InvalidArgument("observation must be finite".into()));
    }
    let start = Instant::now();
    let mut terms = active_terms(&cfg.alpha, &cfg.tau, x.order());
    let mut rho = cfg.rho;

    let mut low = Tensor::zeros(x.shape())?;
    let mut sparse = Tensor::zeros(x.shape())?;
    let mut m = Tensor::zeros(x.shape())?;
    let mut ps: Vec<Tensor> = terms.iter().map(|_| Tensor::zeros(x.shape())).collect::<Result<_>>()?;
    let mut report = SolveReport::default();

    while report.iterations < cfg.max_iter {
        let zs = terms
            .par_iter()
            .zip(&ps)
            .map(|(term, p)| pair_prox(&low, p, term, cfg.slices))
            .collect::<Result<Vec<_>>>()?;

        // L = (ρ(X - E + M/ρ) + Σ β(Z - P/β)) / (ρ + Σ β)
        let beta_sum: f64 = terms.iter().map(|t| t.beta).sum();
        let mut low_new = Tensor::zeros(x.shape())?;
        {
            let out = low_new.data_mut();
            for (((o, &xv), &ev), &mv) in out.iter_mut().zip(x.data()).zip(sparse.data()).zip(m.data()) {
                *o = rho * (xv - ev) + mv;
            }
            for ((term, z), p) in terms.iter().zip(&zs).zip(&ps) {
                for ((o, &zv), &pv) in out.iter_mut().zip(z.data()).zip(p.data()) {
                    *o += term.beta * zv - pv;
                }
            }
            let denom = rho + beta_sum;
            out.iter_mut().for_each(|o| *o /= denom);
        }

        // E = S_{λ/ρ}(X - L + M/ρ)
        let xi = cfg.lambda / rho;
        for (((e, &xv), &lv), &mv) in sparse.data_mut().iter_mut().zip(x.data()).zip(low_new.data()).zip(m.data()) {
            let v = xv - lv + mv / rho;
            *e = v.signum() * (v.abs() - xi).max(0.0);
        }

        for ((term, z), p) in terms.iter().zip(&zs).zip(ps.iter_mut()) {
            for ((pv, &lv), &zv) in p.data_mut().iter_mut().zip(low_new.data()).zip(z.data()) {
                *pv += term.beta * (lv - zv);
            }
        }
        for (((mv, &xv), &lv), &ev) in m.data_mut().iter_mut().zip(x.data()).zip(low_new.data()).zip(sparse.data()) {
            *mv += rho * (xv - lv - ev);
        }
        for term in &mut terms {
            term.beta = (cfg.gamma * term.beta).min(cfg.beta_max);
        }
        rho = (cfg.gamma * rho).min(cfg.rho_max);

        let relcha = relative_change(&low_new, &low);
        low = low_new;
        report.iterations += 1;
        report.relcha_trace.push(relcha);
        report.final_relcha = relcha;
        if !relcha.is_finite() {
            return Err(Error::NumericFailure(format!("RelCha became {relcha} at iteration {}", report.iterations)));
        }
        if relcha < cfg.rel_tol {
            report.converged = true;
            break;
        }
    }

    report.constraint_residual = x.sub(&low)?.sub(&sparse)?.frobenius_norm();
    report.elapsed = start.elapsed();
    Ok((low, sparse, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nrank::weights_uniform;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn low_rank(shape: &[usize], seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vecs: Vec<Vec<f64>> = shape.iter().map(|&n| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        Tensor::from_fn(shape, |i| i.iter().zip(&vecs).map(|(&k, v)| v[k]).product()).unwrap()
    }

    #[test]
    fn soft_threshold_values() {
        let x = Tensor::new(vec![3], vec![-3.0, 0.5, 2.0]).unwrap();
        assert_eq!(soft_threshold(&x, 1.0).unwrap().data(), &[-2.0, 0.0, 1.0]);
        assert_eq!(soft_threshold(&x, 0.0).unwrap(), x);
        assert_eq!(soft_threshold(&x, 3.0).unwrap().max_abs(), 0.0);
        assert!(soft_threshold(&x, -0.1).is_err());
    }

    #[test]
    fn default_lambda_values() {
        let w = weights_uniform(3).unwrap();
        assert_abs_diff_eq!(default_lambda(&[30, 30, 30], &w).unwrap(), 1.0 / 30.0, epsilon = 1e-15);
        assert_abs_diff_eq!(default_lambda(&[7, 7, 7], &w).unwrap(), 1.0 / 7.0, epsilon = 1e-15);
        let hot = WeightVector::one_hot(4, 0).unwrap();
        let want = 1.0 / (5.0f64 * 12.0).sqrt();
        assert_abs_diff_eq!(default_lambda(&[4, 5, 3, 4], &hot).unwrap(), want, epsilon = 1e-15);
    }

    #[test]
    fn config_validation() {
        let w = weights_uniform(3).unwrap();
        assert!(LrtcConfig::with_omega(w.clone(), 10.0).validate(3).is_ok());
        assert!(LrtcConfig::with_omega(w.clone(), 10.0).validate(4).is_err());
        assert!(LrtcConfig::with_omega(w.clone(), -1.0).validate(3).is_err());
        let mut cfg = LrtcConfig::with_omega(w.clone(), 10.0);
        cfg.gamma = 1.0;
        assert!(cfg.validate(3).is_err());
        let mut cfg = LrtcConfig::with_omega(w.clone(), 10.0);
        cfg.max_iter = 0;
        assert!(cfg.validate(3).is_err());

        let rp = TrpcaConfig::new(w.clone(), vec![10.0, 20.0, 30.0], 0.1);
        assert_abs_diff_eq!(rp.rho, 1.0 / 20.0, epsilon = 1e-15);
        assert!(rp.validate(3).is_ok());
        assert!(TrpcaConfig::with_omega(w, 10.0, 0.0).validate(3).is_err());
    }

    #[test]
    fn fully_observed_completion_returns_input() {
        let f = low_rank(&[5, 6, 4], 1);
        let cfg = LrtcConfig::with_omega(weights_uniform(3).unwrap(), 10.0);
        let (x, report) = lrtc_solve(&f, &Mask::full(f.shape()).unwrap(), &cfg).unwrap();
        assert_eq!(x, f);
        assert_eq!(report.iterations, 1);
        assert_eq!(report.final_relcha, 0.0);
        assert!(report.converged);
    }

    #[test]
    fn completion_keeps_observed_entries_and_recovers_rank_one() {
        let f = low_rank(&[10, 10, 10], 2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mask = Mask::new(vec![10, 10, 10], (0..1000).map(|_| rng.random_bool(0.6)).collect()).unwrap();
        let cfg = LrtcConfig::with_omega(weights_uniform(3).unwrap(), 1.0);
        let (x, report) = lrtc_solve(&f, &mask, &cfg).unwrap();
        assert_eq!(report.constraint_residual, 0.0);
        for ((&xv, &fv), &o) in x.data().iter().zip(f.data()).zip(mask.observed()) {
            if o {
                assert_eq!(xv, fv);
            }
        }
        assert_eq!(report.relcha_trace.len(), report.iterations);
        assert!(report.converged);
        assert!(crate::metrics::rse(&x, &f).unwrap() < 1e-3);
    }

    #[test]
    fn completion_rejects_mismatched_mask() {
        let f = low_rank(&[3, 4, 5], 4);
        let cfg = LrtcConfig::with_omega(weights_uniform(3).unwrap(), 1.0);
        assert!(lrtc_solve(&f, &Mask::full(&[3, 5, 4]).unwrap(), &cfg).is_err());
    }

    #[test]
    fn robust_pca_of_zero() {
        let x = Tensor::zeros(&[4, 4, 4]).unwrap();
        let cfg = TrpcaConfig::with_omega(weights_uniform(3).unwrap(), 10.0, 0.25);
        let (l, e, report) = trpca_solve(&x, &cfg).unwrap();
        assert_eq!(l.max_abs(), 0.0);
        assert_eq!(e.max_abs(), 0.0);
        assert_eq!(report.iterations, 1);
    }

    #[test]
    fn robust_pca_sends_sparse_input_to_sparse_part() {
        let mut x = Tensor::zeros(&[8, 8, 8]).unwrap();
        for (i, v) in [(3usize, 5.0), (77, -4.0), (200, 6.0), (411, -5.5)] {
            x.data_mut()[i] = v;
        }
        let mut cfg = TrpcaConfig::with_omega(weights_uniform(3).unwrap(), 10.0, 0.05);
        cfg.max_iter = 300;
        let (l, e, report) = trpca_solve(&x, &cfg).unwrap();
        assert!(l.frobenius_norm() < 1e-3 * x.frobenius_norm(), "{} {:?}", l.frobenius_norm(), (report.iterations, report.final_relcha));
        assert!(e.sub(&x).unwrap().frobenius_norm() < 1e-3 * x.frobenius_norm());
        assert!(report.constraint_residual < 1e-6 * x.frobenius_norm());
    }

    #[test]
    fn report_csv() {
        let report = SolveReport { iterations: 2, relcha_trace: vec![0.5, 0.25], ..Default::default() };
        let mut buf = Vec::new();
        report.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "iteration,relcha\n1,0.5\n2,0.25\n");
    }
}
