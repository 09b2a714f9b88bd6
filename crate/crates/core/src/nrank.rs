//! N-tubal rank, the weighted sum of tensor nuclear norms (WSTNN), and the
//! weight-selection strategies.
//!
//! Every per-pair vector in this module uses the lexicographic pair order
//! of [`ModePair::all`].

use log::warn;

use crate::error::{Error, Result};
use crate::tensor::{pair_count, ModePair, Tensor};
use crate::tsvd::{self, RankTolerance};

/// Default relative singular-value threshold for rank estimation.
pub const DEFAULT_RANK_THRESHOLD: f64 = 0.01;

/// Default balance parameter for [`weights_rank_aware`].
pub const DEFAULT_ETA: f64 = 1.0;

/// Nonnegative weights over all mode pairs, summing to one.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    /// Validates nonnegativity and unit sum (within `1e-12`).
    pub fn new(alpha: Vec<f64>) -> Result<Self> {
        if alpha.is_empty() {
            return Err(Error::InvalidArgument("empty weight vector".into()));
        }
        if alpha.iter().any(|a| !a.is_finite() || *a < 0.0) {
            return Err(Error::InvalidArgument(format!("weights must be finite and ≥ 0: {alpha:?}")));
        }
        let sum: f64 = alpha.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!("weights sum to {sum}, not 1")));
        }
        Ok(WeightVector(alpha))
    }

    /// Rescales nonnegative weights so they sum to one.
    pub fn normalized(raw: Vec<f64>) -> Result<Self> {
        let sum: f64 = raw.iter().sum();
        if !(sum > 0.0) {
            return Err(Error::InvalidArgument(format!("cannot normalize weights {raw:?}")));
        }
        WeightVector::new(raw.iter().map(|a| a / sum).collect())
    }

    /// One-hot weight on pair `index` (plain TNN of that unfolding).
    pub fn one_hot(order: usize, index: usize) -> Result<Self> {
        let len = pair_count(order);
        if index >= len {
            return Err(Error::InvalidArgument(format!("pair index {index} out of {len}")));
        }
        let mut alpha = vec![0.0; len];
        alpha[index] = 1.0;
        Ok(WeightVector(alpha))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn check_order(&self, order: usize) -> Result<()> {
        if self.len() == pair_count(order) {
            Ok(())
        } else {
            Err(Error::ShapeMismatch(format!(
                "{} weights for a {order}-way tensor (needs {})",
                self.len(),
                pair_count(order)
            )))
        }
    }
}

/// Tubal ranks of all mode-k1k2 unfoldings.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NTubalRank(pub Vec<usize>);

impl std::fmt::Display for NTubalRank {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|r| r.to_string()).collect();
        f.write_str(&parts.join(" "))
    }
}

fn require_order_at_least_3(x: &Tensor) -> Result<()> {
    if x.order() >= 3 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("needs an N-way tensor with N ≥ 3, got order {}", x.order())))
    }
}

/// Estimates the N-tubal rank: for each pair, the number of Fourier-slice
/// singular values of the unfolding larger than `rel_threshold` times the
/// largest one of that unfolding.
pub fn estimate_n_tubal_rank(x: &Tensor, rel_threshold: f64) -> Result<NTubalRank> {
    require_order_at_least_3(x)?;
    if !(rel_threshold > 0.0 && rel_threshold < 1.0) {
        return Err(Error::InvalidArgument(format!("threshold must lie in (0,1), got {rel_threshold}")));
    }
    let ranks = ModePair::all(x.order())
        .into_iter()
        .map(|p| tsvd::tubal_rank(&x.mode_k1k2_unfold(p)?, RankTolerance::Relative(rel_threshold)))
        .collect::<Result<Vec<_>>>()?;
    Ok(NTubalRank(ranks))
}

/// Ranks of the mode-k matricizations under the same relative threshold,
/// for comparison with the N-tubal rank.
pub fn estimate_mode_k_ranks(x: &Tensor, rel_threshold: f64) -> Result<Vec<usize>> {
    (0..x.order())
        .map(|k| {
            let m = x.mode_k_unfold(k)?;
            // the Gram matrix keeps the SVD small for wide unfoldings
            let gram = &m * m.transpose();
            let ev = gram
                .try_svd(false, false, tsvd::SVD_EPS, tsvd::SVD_MAX_ITER)
                .ok_or_else(|| Error::NumericFailure(format!("SVD of mode-{} unfolding", k + 1)))?
                .singular_values;
            let sv: Vec<f64> = ev.iter().map(|v| v.max(0.0).sqrt()).collect();
            let smax = sv.iter().copied().fold(0.0, f64::max);
            Ok(sv.iter().filter(|&&s| s > rel_threshold * smax).count())
        })
        .collect()
}

/// `Σ α_{k1k2} · ‖X_(k1k2)‖_TNN`. Pairs with zero weight are skipped.
pub fn wstnn(x: &Tensor, alpha: &WeightVector) -> Result<f64> {
    alpha.check_order(x.order())?;
    ModePair::all(x.order())
        .into_iter()
        .zip(alpha.as_slice())
        .filter(|(_, &a)| a > 0.0)
        .map(|(p, &a)| Ok(a * tsvd::tnn(&x.mode_k1k2_unfold(p)?)?))
        .sum()
}

/// Equal weights `2 / (N(N-1))`.
pub fn weights_uniform(order: usize) -> Result<WeightVector> {
    if order < 3 {
        return Err(Error::InvalidArgument(format!("uniform weights need N ≥ 3, got {order}")));
    }
    let len = pair_count(order);
    Ok(WeightVector(vec![1.0 / len as f64; len]))
}

/// Softmax weights favouring pairs whose unfolding has low relative rank:
/// `α ∝ exp(η r̂ / R)` with `r̂ = (m - r)/m`, `m = min(n_k1, n_k2)`,
/// `R = Σ r̂`. Falls back to uniform weights when every pair is full rank.
pub fn weights_rank_aware(shape: &[usize], rank: &NTubalRank, eta: f64) -> Result<WeightVector> {
    let order = shape.len();
    if order < 3 {
        return Err(Error::InvalidArgument(format!("rank-aware weights need N ≥ 3, got {order}")));
    }
    if rank.0.len() != pair_count(order) {
        return Err(Error::ShapeMismatch(format!(
            "{} ranks for a {order}-way shape",
            rank.0.len()
        )));
    }
    if !eta.is_finite() {
        return Err(Error::InvalidArgument(format!("eta must be finite, got {eta}")));
    }
    let r_hat: Vec<f64> = ModePair::all(order)
        .iter()
        .zip(&rank.0)
        .map(|(p, &r)| {
            let m = shape[p.k1()].min(shape[p.k2()]) as f64;
            ((m - r as f64) / m).max(0.0)
        })
        .collect();
    let total: f64 = r_hat.iter().sum();
    if total <= 0.0 {
        warn!("every unfolding is full rank; using uniform weights");
        return weights_uniform(order);
    }
    let logits: Vec<f64> = r_hat.iter().map(|r| eta * r / total).collect();
    let top = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - top).exp()).collect();
    WeightVector::normalized(exps)
}

/// Three-way weights `(θ, 1, 1) / (2 + θ)`, stressing the last two pairs.
pub fn weights_spectral(order: usize, theta: f64) -> Result<WeightVector> {
    if order != 3 {
        return Err(Error::InvalidArgument(format!("spectral weights are defined for N = 3, got {order}")));
    }
    if !(theta >= 0.0) || !theta.is_finite() {
        return Err(Error::InvalidArgument(format!("theta must be finite and ≥ 0, got {theta}")));
    }
    let s = 2.0 + theta;
    // built directly so (0.001,1,1)/2.001 keeps its exact quotients
    let alpha = vec![theta / s, 1.0 / s, 1.0 / s];
    WeightVector::new(alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0)).unwrap()
    }

    #[test]
    fn uniform_weights() {
        let w = weights_uniform(3).unwrap();
        assert_eq!(w.as_slice(), &[1.0 / 3.0; 3]);
        let w = weights_uniform(4).unwrap();
        assert_eq!(w.as_slice(), &[1.0 / 6.0; 6]);
        assert_abs_diff_eq!(w.as_slice().iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        assert!(weights_uniform(2).is_err());
    }

    #[test]
    fn spectral_weights() {
        let w = weights_spectral(3, 0.001).unwrap();
        assert_eq!(w.as_slice(), &[0.001 / 2.001, 1.0 / 2.001, 1.0 / 2.001]);
        let w = weights_spectral(3, 1.0).unwrap();
        for a in w.as_slice() {
            assert_abs_diff_eq!(*a, 1.0 / 3.0, epsilon = 1e-15);
        }
        for theta in [0.0, 0.3, 7.0, 1e6] {
            let w = weights_spectral(3, theta).unwrap();
            assert_abs_diff_eq!(w.as_slice().iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        }
        assert!(weights_spectral(4, 1.0).is_err());
        assert!(weights_spectral(3, -1.0).is_err());
    }

    #[test]
    fn rank_aware_weights() {
        let shape = [30, 30, 30];
        let rank = NTubalRank(vec![2, 10, 20]);
        for a in weights_rank_aware(&shape, &rank, 0.0).unwrap().as_slice() {
            assert_abs_diff_eq!(*a, 1.0 / 3.0, epsilon = 1e-15);
        }
        let equal = NTubalRank(vec![7, 7, 7]);
        for a in weights_rank_aware(&shape, &equal, 3.0).unwrap().as_slice() {
            assert_abs_diff_eq!(*a, 1.0 / 3.0, epsilon = 1e-15);
        }

        // direct evaluation: r̂ = (28, 20, 10)/30, R = 58/30
        let w = weights_rank_aware(&shape, &rank, 1.0).unwrap();
        let e: Vec<f64> = [28.0 / 58.0, 20.0 / 58.0, 10.0 / 58.0].iter().map(|v: &f64| v.exp()).collect();
        let z: f64 = e.iter().sum();
        for (got, want) in w.as_slice().iter().zip(e.iter().map(|v| v / z)) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-14);
        }
        let a = w.as_slice();
        assert!(a[0] > a[1] && a[1] > a[2]);
    }

    #[test]
    fn rank_aware_degenerate_ranks() {
        let full = NTubalRank(vec![4, 4, 9]);
        let w = weights_rank_aware(&[4, 4, 4], &full, 1.0).unwrap();
        assert_eq!(w, weights_uniform(3).unwrap());
        assert!(weights_rank_aware(&[4, 4, 4], &NTubalRank(vec![1, 2]), 1.0).is_err());
    }

    #[test]
    fn weight_vector_validation() {
        assert!(WeightVector::new(vec![0.5, 0.6]).is_err());
        assert!(WeightVector::new(vec![-0.5, 1.5]).is_err());
        assert!(WeightVector::new(vec![0.25, 0.75]).is_ok());
        assert_eq!(WeightVector::one_hot(4, 2).unwrap().as_slice(), &[0.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn estimate_on_degenerate_inputs() {
        let zero = Tensor::zeros(&[3, 4, 5]).unwrap();
        assert_eq!(estimate_n_tubal_rank(&zero, 0.01).unwrap(), NTubalRank(vec![0, 0, 0]));
        assert!(estimate_n_tubal_rank(&Tensor::zeros(&[3, 4]).unwrap(), 0.01).is_err());
        assert!(estimate_n_tubal_rank(&zero, 1.5).is_err());
    }

    #[test]
    fn first_entry_is_tubal_rank_for_three_way() {
        let x = random(&[4, 6, 5], 3);
        let est = estimate_n_tubal_rank(&x, 0.01).unwrap();
        assert_eq!(est.0[0], tsvd::tubal_rank(&x, RankTolerance::Relative(0.01)).unwrap());
    }

    #[test]
    fn wstnn_reduces_to_tnn_and_is_a_norm() {
        let x = random(&[3, 4, 5], 4);
        let y = random(&[3, 4, 5], 5);
        let hot = WeightVector::one_hot(3, 0).unwrap();
        assert_abs_diff_eq!(wstnn(&x, &hot).unwrap(), tsvd::tnn(&x).unwrap(), epsilon = 1e-12);

        let w = weights_uniform(3).unwrap();
        let nx = wstnn(&x, &w).unwrap();
        assert!(nx > 0.0);
        assert_abs_diff_eq!(wstnn(&x.scale(-2.5), &w).unwrap(), 2.5 * nx, epsilon = 1e-9);
        let sum = wstnn(&x.add(&y).unwrap(), &w).unwrap();
        assert!(sum <= nx + wstnn(&y, &w).unwrap() + 1e-9);
        assert_eq!(wstnn(&Tensor::zeros(&[3, 4, 5]).unwrap(), &w).unwrap(), 0.0);
        assert!(wstnn(&x, &weights_uniform(4).unwrap()).is_err());
    }

    #[test]
    fn mode_k_ranks_of_rank_one() {
        let x = Tensor::from_fn(&[3, 4, 5], |i| (i[0] + 1) as f64 * (i[1] as f64 - 1.5) * (i[2] + 2) as f64).unwrap();
        assert_eq!(estimate_mode_k_ranks(&x, 0.01).unwrap(), vec![1, 1, 1]);
    }
}
