//! Synthetic data: CP-rank-r tensors with a known N-tubal rank, random
//! sampling masks, salt-pepper corruption and the phase-transition sweep.

use std::io::Write;

use log::{debug, warn};
use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::solvers::{lrtc_solve, trpca_solve, LrtcConfig, Mask, TrpcaConfig};
use crate::tensor::{ModePair, Tensor};
use crate::tsvd::{SVD_EPS, SVD_MAX_ITER};

pub use crate::metrics::rse;

pub const DEFAULT_SUCCESS_THRESHOLD: f64 = 1e-3;
pub const MAX_REGENERATIONS: usize = 100;
const DFT_FLOOR: f64 = 1e-10;
const INDEPENDENCE_RTOL: f64 = 1e-10;

/// Law of the entries of the CP factor vectors.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum FactorDistribution {
    /// Standard normal.
    Gaussian,
    /// Uniform on `[0, 1)`.
    #[default]
    Uniform,
}

impl FactorDistribution {
    fn draw<R: Rng>(self, rng: &mut R) -> f64 {
        match self {
            FactorDistribution::Gaussian => rng.sample(StandardNormal),
            FactorDistribution::Uniform => rng.random::<f64>(),
        }
    }
}

/// A sum of `rank` random rank-one terms of the given shape.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CpSpec {
    pub shape: Vec<usize>,
    pub rank: usize,
    pub seed: u64,
    pub distribution: FactorDistribution,
}

impl CpSpec {
    pub fn new(shape: Vec<usize>, rank: usize, seed: u64) -> Self {
        CpSpec { shape, rank, seed, distribution: FactorDistribution::default() }
    }

    pub fn with_distribution(mut self, distribution: FactorDistribution) -> Self {
        self.distribution = distribution;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.shape.len() < 3 {
            return Err(Error::InvalidArgument(format!("CP generator needs N ≥ 3, got {}", self.shape.len())));
        }
        Tensor::zeros(&self.shape)?;
        let min = *self.shape.iter().min().expect("nonempty shape");
        if self.rank == 0 || self.rank > min {
            return Err(Error::InvalidArgument(format!("CP rank must lie in 1..={min}, got {}", self.rank)));
        }
        Ok(())
    }
}

/// Generates `Σ_i a_i^1 ∘ … ∘ a_i^N` with i.i.d. random factor entries.
///
/// Each draw is checked for linearly independent factor sets in every mode
/// and, for every mode pair, nonzero DFT coefficients of the vectorized
/// outer product of the remaining factors. Failing draws are discarded and
/// redrawn from the same stream, so the result depends only on the spec.
pub fn gen_cp_tensor(spec: &CpSpec) -> Result<Tensor> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    for attempt in 0..MAX_REGENERATIONS {
        let factors: Vec<DMatrix<f64>> = spec
            .shape
            .iter()
            .map(|&n| DMatrix::from_fn(n, spec.rank, |_, _| spec.distribution.draw(&mut rng)))
            .collect();
        if factors_admissible(&factors)? {
            return Ok(assemble_cp(&spec.shape, &factors));
        }
        debug!("CP draw {attempt} for seed {} rejected", spec.seed);
    }
    Err(Error::NumericFailure(format!(
        "no admissible CP factors after {MAX_REGENERATIONS} draws (seed {})",
        spec.seed
    )))
}

fn assemble_cp(shape: &[usize], factors: &[DMatrix<f64>]) -> Tensor {
    let r = factors[0].ncols();
    Tensor::from_fn(shape, |idx| {
        (0..r).map(|i| idx.iter().zip(factors).map(|(&k, a)| a[(k, i)]).product::<f64>()).sum()
    })
    .expect("shape validated")
}

fn factors_admissible(factors: &[DMatrix<f64>]) -> Result<bool> {
    for a in factors {
        let sv = a
            .clone()
            .try_svd(false, false, SVD_EPS, SVD_MAX_ITER)
            .ok_or_else(|| Error::NumericFailure("SVD of a factor matrix".into()))?
            .singular_values;
        let smax = sv.max();
        if sv.min() <= INDEPENDENCE_RTOL * smax {
            return Ok(false);
        }
    }
    let order = factors.len();
    let r = factors[0].ncols();
    let mut planner = FftPlanner::<f64>::new();
    for pair in ModePair::all(order) {
        let rest: Vec<&DMatrix<f64>> =
            (0..order).filter(|&s| s != pair.k1() && s != pair.k2()).map(|s| &factors[s]).collect();
        let len: usize = rest.iter().map(|a| a.nrows()).product();
        let fft = planner.plan_fft_forward(len);
        for i in 0..r {
            // column-major vec of the outer product: first remaining mode fastest
            let mut c = vec![Complex64::new(1.0, 0.0); 1];
            for a in &rest {
                c = a.column(i).iter().flat_map(|&v| c.iter().map(move |&z| z * v)).collect();
            }
            fft.process(&mut c);
            if c.iter().any(|z| z.norm() <= DFT_FLOOR) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Observes exactly `round(sr · numel)` entries chosen uniformly without
/// replacement.
pub fn sample_mask(shape: &[usize], sr: f64, seed: u64) -> Result<Mask> {
    if !(sr > 0.0 && sr <= 1.0) {
        return Err(Error::InvalidArgument(format!("sampling rate must lie in (0,1], got {sr}")));
    }
    let numel = Tensor::zeros(shape)?.numel();
    let m = (sr * numel as f64).round() as usize;
    let mut observed = vec![false; numel];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in sample(&mut rng, numel, m) {
        observed[i] = true;
    }
    Mask::new(shape.to_vec(), observed)
}

/// Replaces `round(nl · numel)` uniformly chosen entries by the minimum or
/// the maximum of `x`, each with probability ½.
pub fn add_salt_pepper(x: &Tensor, nl: f64, seed: u64) -> Result<Tensor> {
    if !(0.0..1.0).contains(&nl) {
        return Err(Error::InvalidArgument(format!("noise level must lie in [0,1), got {nl}")));
    }
    let numel = x.numel();
    let m = (nl * numel as f64).round() as usize;
    let (lo, hi) = x.min_max();
    let mut out = x.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked = sample(&mut rng, numel, m);
    let data = out.data_mut();
    for i in picked {
        data[i] = if rng.random_bool(0.5) { hi } else { lo };
    }
    Ok(out)
}

/// Grid of a phase-transition experiment. `levels` are sampling rates for
/// completion and noise levels for robust PCA.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseGrid {
    pub ranks: Vec<usize>,
    pub levels: Vec<f64>,
    pub trials: usize,
    pub threshold: f64,
    pub distribution: FactorDistribution,
}

impl PhaseGrid {
    pub fn new(ranks: Vec<usize>, levels: Vec<f64>, trials: usize) -> Self {
        PhaseGrid { ranks, levels, trials, threshold: DEFAULT_SUCCESS_THRESHOLD, distribution: FactorDistribution::default() }
    }

    /// Ranks {1,2,5,10,20} × SR {0.05,0.2,0.5,0.8}, 10 trials per cell.
    pub fn desk_default() -> Self {
        Self::new(vec![1, 2, 5, 10, 20], vec![0.05, 0.2, 0.5, 0.8], 10)
    }

    pub fn validate(&self) -> Result<()> {
        if self.ranks.is_empty() || self.levels.is_empty() {
            return Err(Error::InvalidArgument("phase grid needs at least one rank and one level".into()));
        }
        if self.trials == 0 {
            return Err(Error::InvalidArgument("phase grid needs at least one trial per cell".into()));
        }
        if !(self.threshold > 0.0) {
            return Err(Error::InvalidArgument(format!("success threshold must be positive, got {}", self.threshold)));
        }
        Ok(())
    }
}

/// The experiment run in every cell, with its solver settings.
#[derive(Clone, Debug, PartialEq)]
pub enum SweepTask {
    Completion(LrtcConfig),
    Rpca(TrpcaConfig),
}

impl SweepTask {
    fn check_level(&self, level: f64) -> Result<()> {
        let ok = match self {
            SweepTask::Completion(_) => level > 0.0 && level <= 1.0,
            SweepTask::Rpca(_) => (0.0..1.0).contains(&level),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("level {level} is out of range for this task")))
        }
    }
}

/// Outcome of one generate-corrupt-solve-score run.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialResult {
    pub rank: usize,
    pub level: f64,
    pub trial: usize,
    pub seed: u64,
    /// `None` when the trial errored.
    pub rse: Option<f64>,
    pub iterations: usize,
    /// Constraint residual relative to the data norm.
    pub residual: f64,
    pub success: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellResult {
    pub rank: usize,
    pub level: f64,
    pub trials: usize,
    pub successes: usize,
    pub rate: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepResult {
    pub cells: Vec<CellResult>,
    pub trials: Vec<TrialResult>,
}

impl SweepResult {
    /// `rank,level,trials,successes,rate`, one row per cell in grid order.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "rank,level,trials,successes,rate")?;
        for c in &self.cells {
            writeln!(w, "{},{},{},{},{}", c.rank, c.level, c.trials, c.successes, c.rate)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Per-trial detail: `rank,level,trial,seed,rse,iterations,residual,success`.
    pub fn write_trials_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "rank,level,trial,seed,rse,iterations,residual,success")?;
        for t in &self.trials {
            let rse = t.rse.map(|v| format!("{v:e}")).unwrap_or_default();
            writeln!(
                w,
                "{},{},{},{},{},{},{:e},{}",
                t.rank, t.level, t.trial, t.seed, rse, t.iterations, t.residual, t.success as u8
            )?;
        }
        w.flush()?;
        Ok(())
    }
}

/// splitmix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of one trial. Independent of the task, so completion and robust PCA
/// arms, or two weightings, see the same data.
pub fn trial_seed(base: u64, rank: usize, level: f64, trial: usize) -> u64 {
    [rank as u64, level.to_bits(), trial as u64].iter().fold(mix(base), |acc, &v| mix(acc ^ v))
}

/// Ground truth and observation of one trial.
#[derive(Clone, Debug)]
pub enum TrialInstance {
    Completion { truth: Tensor, mask: Mask, observed: Tensor },
    Rpca { truth: Tensor, observed: Tensor },
}

/// Builds the data of one trial from its seed, exactly as [`phase_sweep`]
/// does.
pub fn trial_instance(
    shape: &[usize],
    rank: usize,
    level: f64,
    seed: u64,
    distribution: FactorDistribution,
    task: &SweepTask,
) -> Result<TrialInstance> {
    let truth = gen_cp_tensor(&CpSpec::new(shape.to_vec(), rank, mix(seed ^ 1)).with_distribution(distribution))?;
    Ok(match task {
        SweepTask::Completion(_) => {
            let mask = sample_mask(shape, level, mix(seed ^ 2))?;
            let observed = mask.project(&truth)?;
            TrialInstance::Completion { truth, mask, observed }
        }
        SweepTask::Rpca(_) => {
            let observed = add_salt_pepper(&truth, level, mix(seed ^ 3))?;
            TrialInstance::Rpca { truth, observed }
        }
    })
}

/// Runs one trial; returns RSE, iterations and the constraint residual
/// relative to the norm of the observation.
pub fn run_trial(
    shape: &[usize],
    rank: usize,
    level: f64,
    seed: u64,
    distribution: FactorDistribution,
    task: &SweepTask,
) -> Result<(f64, usize, f64)> {
    let instance = trial_instance(shape, rank, level, seed, distribution, task)?;
    let (estimate, truth, report, norm) = match (instance, task) {
        (TrialInstance::Completion { truth, mask, observed }, SweepTask::Completion(cfg)) => {
            let (x, report) = lrtc_solve(&observed, &mask, cfg)?;
            (x, truth, report, observed.frobenius_norm())
        }
        (TrialInstance::Rpca { truth, observed }, SweepTask::Rpca(cfg)) => {
            let (low, _, report) = trpca_solve(&observed, cfg)?;
            (low, truth, report, observed.frobenius_norm())
        }
        _ => unreachable!("instance built for this task"),
    };
    let residual = if norm > 0.0 { report.constraint_residual / norm } else { report.constraint_residual };
    Ok((rse(&estimate, &truth)?, report.iterations, residual))
}

/// Success rates over every `(rank, level)` cell of the grid.
///
/// Trials run in parallel; their seeds depend only on `(seed, rank, level,
/// trial)`, so the table does not depend on the thread count. A trial that
/// errors counts as a failure.
pub fn phase_sweep(grid: &PhaseGrid, shape: &[usize], task: &SweepTask, seed: u64) -> Result<SweepResult> {
    grid.validate()?;
    for &r in &grid.ranks {
        CpSpec::new(shape.to_vec(), r, 0).validate()?;
    }
    for &level in &grid.levels {
        task.check_level(level)?;
    }
    match task {
        SweepTask::Completion(cfg) => cfg.validate(shape.len())?,
        SweepTask::Rpca(cfg) => cfg.validate(shape.len())?,
    }

    let jobs: Vec<(usize, f64, usize)> = grid
        .ranks
        .iter()
        .flat_map(|&r| grid.levels.iter().flat_map(move |&l| (0..grid.trials).map(move |t| (r, l, t))))
        .collect();
    let trials: Vec<TrialResult> = jobs
        .par_iter()
        .map(|&(rank, level, trial)| {
            let seed = trial_seed(seed, rank, level, trial);
            match run_trial(shape, rank, level, seed, grid.distribution, task) {
                Ok((e, iterations, residual)) => TrialResult {
                    rank,
                    level,
                    trial,
                    seed,
                    rse: Some(e),
                    iterations,
                    residual,
                    success: e < grid.threshold,
                },
                Err(err) => {
                    warn!("trial r={rank} level={level} #{trial} failed: {err}");
                    TrialResult {
                        rank,
                        level,
                        trial,
                        seed,
                        rse: None,
                        iterations: 0,
                        residual: f64::NAN,
                        success: false,
                    }
                }
            }
        })
        .collect();

    let cells = trials
        .chunks(grid.trials)
        .map(|chunk| {
            let successes = chunk.iter().filter(|t| t.success).count();
            CellResult {
                rank: chunk[0].rank,
                level: chunk[0].level,
                trials: chunk.len(),
                successes,
                rate: successes as f64 / chunk.len() as f64,
            }
        })
        .collect();
    Ok(SweepResult { cells, trials })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nrank::{estimate_n_tubal_rank, weights_uniform};

    #[test]
    fn cp_spec_validation() {
        assert!(CpSpec::new(vec![4, 5, 6], 4, 0).validate().is_ok());
        assert!(CpSpec::new(vec![4, 5, 6], 5, 0).validate().is_err());
        assert!(CpSpec::new(vec![4, 5, 6], 0, 0).validate().is_err());
        assert!(CpSpec::new(vec![4, 5], 1, 0).validate().is_err());
        assert!(gen_cp_tensor(&CpSpec::new(vec![3, 3, 3], 4, 0)).is_err());
    }

    #[test]
    fn cp_tensor_is_reproducible() {
        let spec = CpSpec::new(vec![6, 5, 4], 3, 17);
        assert_eq!(gen_cp_tensor(&spec).unwrap(), gen_cp_tensor(&spec).unwrap());
        assert_ne!(gen_cp_tensor(&spec).unwrap(), gen_cp_tensor(&CpSpec::new(vec![6, 5, 4], 3, 18)).unwrap());
    }

    #[test]
    fn rank_one_draw_has_unit_n_tubal_rank() {
        let x = gen_cp_tensor(&CpSpec::new(vec![5, 6, 7, 3], 1, 5)).unwrap();
        assert_eq!(estimate_n_tubal_rank(&x, 0.01).unwrap().0, vec![1; 6]);
    }

    #[test]
    fn mask_counts() {
        assert_eq!(sample_mask(&[30, 30, 30], 0.5, 1).unwrap().count(), 13_500);
        assert_eq!(sample_mask(&[4, 4, 4], 1.0, 1).unwrap().count(), 64);
        assert_eq!(sample_mask(&[3, 3, 3], 0.1, 1).unwrap().count(), 3);
        assert_eq!(sample_mask(&[5, 6, 7], 0.3, 9).unwrap(), sample_mask(&[5, 6, 7], 0.3, 9).unwrap());
        assert!(sample_mask(&[3, 3, 3], 0.0, 1).is_err());
        assert!(sample_mask(&[3, 3, 3], 1.5, 1).is_err());
    }

    #[test]
    fn salt_pepper_counts() {
        let x = gen_cp_tensor(&CpSpec::new(vec![10, 10, 10], 2, 3)).unwrap();
        assert_eq!(add_salt_pepper(&x, 0.0, 4).unwrap(), x);
        let y = add_salt_pepper(&x, 0.1, 4).unwrap();
        let (lo, hi) = x.min_max();
        let changed: Vec<f64> =
            y.data().iter().zip(x.data()).filter(|(a, b)| a != b).map(|(&a, _)| a).collect();
        // the extremal entries themselves may be picked without changing
        assert!((98..=100).contains(&changed.len()), "{}", changed.len());
        assert!(changed.iter().all(|&v| v == lo || v == hi));
        assert!(changed.contains(&lo) && changed.contains(&hi));
        assert!(add_salt_pepper(&x, 1.0, 4).is_err());
    }

    #[test]
    fn trial_seeds_differ_across_cells() {
        let a = trial_seed(7, 2, 0.5, 0);
        assert_eq!(a, trial_seed(7, 2, 0.5, 0));
        assert_ne!(a, trial_seed(7, 2, 0.5, 1));
        assert_ne!(a, trial_seed(7, 3, 0.5, 0));
        assert_ne!(a, trial_seed(7, 2, 0.8, 0));
        assert_ne!(a, trial_seed(8, 2, 0.5, 0));
    }

    #[test]
    fn small_sweep() {
        let cfg = LrtcConfig::with_omega(weights_uniform(3).unwrap(), 10.0);
        let grid = PhaseGrid::new(vec![1], vec![0.95], 2);
        let res = phase_sweep(&grid, &[10, 10, 10], &SweepTask::Completion(cfg), 1).unwrap();
        assert_eq!(res.cells.len(), 1);
        assert_eq!(res.trials.len(), 2);
        assert_eq!(res.cells[0].rate, 1.0);
        let mut buf = Vec::new();
        res.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "rank,level,trials,successes,rate\n1,0.95,2,2,1\n");
    }

    #[test]
    fn sweep_rejects_bad_grid() {
        let cfg = LrtcConfig::with_omega(weights_uniform(3).unwrap(), 10.0);
        let task = SweepTask::Completion(cfg);
        assert!(phase_sweep(&PhaseGrid::new(vec![], vec![0.5], 1), &[5, 5, 5], &task, 0).is_err());
        assert!(phase_sweep(&PhaseGrid::new(vec![1], vec![0.5], 0), &[5, 5, 5], &task, 0).is_err());
        assert!(phase_sweep(&PhaseGrid::new(vec![6], vec![0.5], 1), &[5, 5, 5], &task, 0).is_err());
        assert!(phase_sweep(&PhaseGrid::new(vec![1], vec![0.0], 1), &[5, 5, 5], &task, 0).is_err());
    }
}
