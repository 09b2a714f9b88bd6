//! Command-line driver: completion, robust PCA, rank estimation, t-SVD,
//! synthetic data and phase-transition sweeps on `.ntub` tensor files.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use ntubal::io::{read_tensor, write_tensor};
use ntubal::metrics::{psnr, rse};
use ntubal::nrank::{
    estimate_mode_k_ranks, estimate_n_tubal_rank, weights_rank_aware, weights_spectral, weights_uniform,
    WeightVector, DEFAULT_ETA, DEFAULT_RANK_THRESHOLD,
};
use ntubal::solvers::{
    default_lambda, lrtc_solve, trpca_solve, LrtcConfig, Mask, SolveReport, TrpcaConfig, DEFAULT_MAX_ITER,
    DEFAULT_REL_TOL,
};
use ntubal::synth::{
    add_salt_pepper, gen_cp_tensor, phase_sweep, sample_mask, CpSpec, FactorDistribution, PhaseGrid, SweepTask,
};
use ntubal::tensor::pair_count;
use ntubal::tsvd::{t_svd, SliceStrategy};
use ntubal::{Error, Result, Tensor};

const THREADS_ENV: &str = "NTUBAL_THREADS";

#[derive(Parser, Debug)]
#[command(name = "ntubal", version, about = "Low-rank recovery of N-way tensors with the N-tubal rank")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fill in missing entries of a partially observed tensor.
    Complete(CompleteArgs),
    /// Split a tensor into low-rank and sparse parts.
    Rpca(RpcaArgs),
    /// Print the N-tubal rank and the mode-k ranks.
    Rank(RankArgs),
    /// Success-rate table over a (rank, level) grid of synthetic trials.
    Sweep(SweepArgs),
    /// Write the t-SVD factors of a three-way tensor.
    Tsvd(TsvdArgs),
    /// Write a synthetic CP-rank-r tensor, optionally with a mask or noise.
    Gen(GenArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum WeightKind {
    Uniform,
    RankAware,
    Spectral,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Factors {
    Uniform,
    Gaussian,
}

impl From<Factors> for FactorDistribution {
    fn from(f: Factors) -> Self {
        match f {
            Factors::Uniform => FactorDistribution::Uniform,
            Factors::Gaussian => FactorDistribution::Gaussian,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Slices {
    All,
    ConjugateSymmetric,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Task {
    Complete,
    Rpca,
}

#[derive(Args, Debug)]
struct WeightArgs {
    /// Weight strategy over the mode pairs.
    #[arg(long, value_enum, default_value = "uniform")]
    weights: WeightKind,
    /// Explicit weights, one per mode pair in lexicographic order; normalized.
    #[arg(long, value_delimiter = ',', conflicts_with = "weights")]
    alpha: Option<Vec<f64>>,
    /// Softmax sharpness of rank-aware weights.
    #[arg(long, default_value_t = DEFAULT_ETA)]
    eta: f64,
    /// First-pair weight of spectral weights, (θ,1,1)/(2+θ).
    #[arg(long, default_value_t = 0.001)]
    theta: f64,
    /// Rank threshold used by rank-aware weights.
    #[arg(long, default_value_t = DEFAULT_RANK_THRESHOLD)]
    rank_threshold: f64,
}

#[derive(Args, Debug)]
struct SolverArgs {
    /// Per-pair thresholds τ = α./β; a single value ω is broadcast.
    #[arg(long, value_delimiter = ',', default_value = "10")]
    tau: Vec<f64>,
    /// Penalty growth factor (default 1.1 for completion, 1.2 for robust PCA).
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_MAX_ITER)]
    max_iter: usize,
    #[arg(long, default_value_t = DEFAULT_REL_TOL)]
    rel_tol: f64,
    /// Fourier slices handled by each t-SVT.
    #[arg(long, value_enum, default_value = "conjugate-symmetric")]
    slices: Slices,
}

#[derive(Args, Debug)]
struct CompleteArgs {
    #[arg(long)]
    input: PathBuf,
    /// Mask tensor; nonzero entries are observed. Without --mask or --sr the
    /// nonzero entries of the input are taken as observed.
    #[arg(long, conflicts_with = "sr")]
    mask: Option<PathBuf>,
    /// Sample this fraction of entries of the input instead of reading a mask.
    #[arg(long)]
    sr: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    weights: WeightArgs,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long)]
    out: PathBuf,
    /// RelCha trace as CSV.
    #[arg(long)]
    report: Option<PathBuf>,
    #[command(flatten)]
    quality: QualityArgs,
}

#[derive(Args, Debug)]
struct RpcaArgs {
    #[arg(long)]
    input: PathBuf,
    /// `auto` or a positive value.
    #[arg(long, default_value = "auto")]
    lambda: String,
    /// Initial ρ (default 1/mean(τ)).
    #[arg(long)]
    rho: Option<f64>,
    #[command(flatten)]
    weights: WeightArgs,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long)]
    out_low: PathBuf,
    #[arg(long)]
    out_sparse: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
    #[command(flatten)]
    quality: QualityArgs,
}

#[derive(Args, Debug)]
struct QualityArgs {
    /// Ground truth; prints RSE and PSNR of the result against it.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// PSNR peak. PSNR = 10·log10(peak²·numel / ‖X̂ − X‖²), peak defaults to max|X| of the truth.
    #[arg(long, requires = "truth")]
    peak: Option<f64>,
}

#[derive(Args, Debug)]
struct RankArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = DEFAULT_RANK_THRESHOLD)]
    threshold: f64,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(long, value_enum)]
    task: Task,
    #[arg(long, value_delimiter = ',', default_value = "30,30,30")]
    shape: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "1,2,5,10,20")]
    ranks: Vec<usize>,
    /// Sampling rates (complete) or noise levels (rpca).
    #[arg(long, value_delimiter = ',', default_value = "0.05,0.2,0.5,0.8")]
    levels: Vec<f64>,
    #[arg(long, default_value_t = 10)]
    trials: usize,
    #[arg(long, default_value_t = 1e-3)]
    threshold: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "uniform")]
    factors: Factors,
    #[command(flatten)]
    weights: WeightArgs,
    #[command(flatten)]
    solver: SolverArgs,
    /// `auto` or a positive value (rpca only).
    #[arg(long, default_value = "auto")]
    lambda: String,
    #[arg(long)]
    out: PathBuf,
    /// Per-trial detail CSV.
    #[arg(long)]
    trials_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TsvdArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out_u: PathBuf,
    #[arg(long)]
    out_s: PathBuf,
    #[arg(long)]
    out_v: PathBuf,
}

#[derive(Args, Debug)]
struct GenArgs {
    #[arg(long, value_delimiter = ',')]
    shape: Vec<usize>,
    #[arg(long)]
    rank: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "uniform")]
    factors: Factors,
    #[arg(long)]
    out: PathBuf,
    /// Also write a random mask with this sampling rate.
    #[arg(long, requires = "mask_out")]
    sr: Option<f64>,
    #[arg(long, requires = "sr")]
    mask_out: Option<PathBuf>,
    /// Also write a salt-pepper corrupted copy with this noise level.
    #[arg(long, requires = "noisy_out")]
    nl: Option<f64>,
    #[arg(long, requires = "nl")]
    noisy_out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(e) = configure_threads().and_then(|_| run(cli.command)) {
        eprintln!("error: {e}");
        return ExitCode::FAILURE;
    }
    ExitCode::SUCCESS
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| Error::InvalidArgument(format!("{THREADS_ENV} must be a positive integer, got {raw:?}")))?;
    if n == 0 {
        return Err(Error::InvalidArgument(format!("{THREADS_ENV} must be positive")));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Complete(a) => complete(a),
        Command::Rpca(a) => rpca(a),
        Command::Rank(a) => rank(a),
        Command::Sweep(a) => sweep(a),
        Command::Tsvd(a) => tsvd(a),
        Command::Gen(a) => gen(a),
    }
}

/// Resolved settings, echoed to stderr before any heavy work.
struct Echo(Vec<(&'static str, String)>);

impl Echo {
    fn new(task: &str) -> Self {
        Echo(vec![("task", task.to_string())])
    }

    fn set(&mut self, key: &'static str, value: impl ToString) -> &mut Self {
        self.0.push((key, value.to_string()));
        self
    }

    fn print(&self) {
        for (k, v) in &self.0 {
            eprintln!("# {k} = {v}");
        }
    }
}

fn list<T: std::fmt::Display>(xs: &[T]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn resolve_weights(args: &WeightArgs, x: Option<&Tensor>, shape: &[usize]) -> Result<WeightVector> {
    if let Some(alpha) = &args.alpha {
        return WeightVector::normalized(alpha.clone());
    }
    match args.weights {
        WeightKind::Uniform => weights_uniform(shape.len()),
        WeightKind::Spectral => weights_spectral(shape.len(), args.theta),
        WeightKind::RankAware => {
            let x = x.ok_or_else(|| {
                Error::InvalidArgument("rank-aware weights need a data tensor and are not available here".into())
            })?;
            let r = estimate_n_tubal_rank(x, args.rank_threshold)?;
            info!("estimated N-tubal rank for weights: {r}");
            weights_rank_aware(shape, &r, args.eta)
        }
    }
}

fn resolve_tau(tau: &[f64], order: usize) -> Result<Vec<f64>> {
    let pairs = pair_count(order);
    match tau.len() {
        1 => Ok(vec![tau[0]; pairs]),
        n if n == pairs => Ok(tau.to_vec()),
        n => Err(Error::InvalidArgument(format!("--tau takes 1 or {pairs} values, got {n}"))),
    }
}

fn slices(s: Slices) -> SliceStrategy {
    match s {
        Slices::All => SliceStrategy::All,
        Slices::ConjugateSymmetric => SliceStrategy::ConjugateSymmetric,
    }
}

fn lrtc_config(alpha: WeightVector, s: &SolverArgs, order: usize) -> Result<LrtcConfig> {
    let mut cfg = LrtcConfig::new(alpha, resolve_tau(&s.tau, order)?);
    if let Some(g) = s.gamma {
        cfg.gamma = g;
    }
    cfg.max_iter = s.max_iter;
    cfg.rel_tol = s.rel_tol;
    cfg.slices = slices(s.slices);
    cfg.validate(order)?;
    Ok(cfg)
}

fn parse_lambda(raw: &str, shape: &[usize], alpha: &WeightVector) -> Result<f64> {
    if raw.eq_ignore_ascii_case("auto") {
        default_lambda(shape, alpha)
    } else {
        raw.parse()
            .map_err(|_| Error::InvalidArgument(format!("--lambda must be `auto` or a number, got {raw:?}")))
    }
}

fn trpca_config(alpha: WeightVector, s: &SolverArgs, lambda: &str, rho: Option<f64>, shape: &[usize]) -> Result<TrpcaConfig> {
    let lambda = parse_lambda(lambda, shape, &alpha)?;
    let mut cfg = TrpcaConfig::new(alpha, resolve_tau(&s.tau, shape.len())?, lambda);
    if let Some(g) = s.gamma {
        cfg.gamma = g;
    }
    if let Some(r) = rho {
        cfg.rho = r;
    }
    cfg.max_iter = s.max_iter;
    cfg.rel_tol = s.rel_tol;
    cfg.slices = slices(s.slices);
    cfg.validate(shape.len())?;
    Ok(cfg)
}

fn echo_solver(echo: &mut Echo, alpha: &WeightVector, tau: &[f64], gamma: f64, max_iter: usize, rel_tol: f64, s: SliceStrategy) {
    echo.set("alpha", list(alpha.as_slice()))
        .set("tau", list(tau))
        .set("gamma", gamma)
        .set("max_iter", max_iter)
        .set("rel_tol", rel_tol)
        .set("slices", format!("{s:?}"));
}

fn write_report(path: &Option<PathBuf>, report: &SolveReport) -> Result<()> {
    if let Some(p) = path {
        report.write_csv(BufWriter::new(File::create(p)?))?;
    }
    Ok(())
}

fn print_summary(report: &SolveReport) {
    println!(
        "iterations {} converged {} relcha {:.3e} residual {:.3e} time {:.3}s",
        report.iterations,
        report.converged,
        report.final_relcha,
        report.constraint_residual,
        report.elapsed.as_secs_f64()
    );
}

fn print_quality(q: &QualityArgs, xhat: &Tensor) -> Result<()> {
    if let Some(p) = &q.truth {
        let x = read_tensor(p)?;
        println!("rse {:.6e} psnr {:.4}", rse(xhat, &x)?, psnr(xhat, &x, q.peak)?);
    }
    Ok(())
}

fn complete(a: CompleteArgs) -> Result<()> {
    let input = read_tensor(&a.input)?;
    let mask = match (&a.mask, a.sr) {
        (Some(p), None) => Mask::from_tensor(&read_tensor(p)?),
        (None, Some(sr)) => sample_mask(input.shape(), sr, a.seed)?,
        (None, None) => Mask::from_tensor(&input),
        (Some(_), Some(_)) => unreachable!("clap rejects --mask with --sr"),
    };
    let f = mask.project(&input)?;
    let alpha = resolve_weights(&a.weights, Some(&f), input.shape())?;
    let cfg = lrtc_config(alpha, &a.solver, input.order())?;

    let mut echo = Echo::new("complete");
    echo.set("input", a.input.display())
        .set("shape", list(input.shape()))
        .set("mask", a.mask.as_ref().map_or("sampled".to_string(), |p| p.display().to_string()))
        .set("observed", mask.count());
    if let Some(sr) = a.sr {
        echo.set("sr", sr).set("seed", a.seed);
    }
    echo_solver(&mut echo, &cfg.alpha, &cfg.tau, cfg.gamma, cfg.max_iter, cfg.rel_tol, cfg.slices);
    echo.set("beta_max", cfg.beta_max).set("out", a.out.display());
    echo.print();

    let (x, report) = lrtc_solve(&f, &mask, &cfg)?;
    write_tensor(&a.out, &x)?;
    write_report(&a.report, &report)?;
    print_summary(&report);
    print_quality(&a.quality, &x)
}

fn rpca(a: RpcaArgs) -> Result<()> {
    let x = read_tensor(&a.input)?;
    let alpha = resolve_weights(&a.weights, Some(&x), x.shape())?;
    let cfg = trpca_config(alpha, &a.solver, &a.lambda, a.rho, x.shape())?;

    let mut echo = Echo::new("rpca");
    echo.set("input", a.input.display()).set("shape", list(x.shape()));
    echo_solver(&mut echo, &cfg.alpha, &cfg.tau, cfg.gamma, cfg.max_iter, cfg.rel_tol, cfg.slices);
    echo.set("lambda", cfg.lambda)
        .set("rho", cfg.rho)
        .set("beta_max", cfg.beta_max)
        .set("rho_max", cfg.rho_max)
        .set("out_low", a.out_low.display());
    echo.print();

    let (low, sparse, report) = trpca_solve(&x, &cfg)?;
    write_tensor(&a.out_low, &low)?;
    if let Some(p) = &a.out_sparse {
        write_tensor(p, &sparse)?;
    }
    write_report(&a.report, &report)?;
    print_summary(&report);
    print_quality(&a.quality, &low)
}

fn rank(a: RankArgs) -> Result<()> {
    let x = read_tensor(&a.input)?;
    let mut echo = Echo::new("rank");
    echo.set("input", a.input.display()).set("shape", list(x.shape())).set("threshold", a.threshold);
    echo.print();
    let n_tubal = estimate_n_tubal_rank(&x, a.threshold)?;
    let mode_k = estimate_mode_k_ranks(&x, a.threshold)?;
    println!("{n_tubal}");
    println!("{}", mode_k.iter().map(|r| r.to_string()).collect::<Vec<_>>().join(" "));
    Ok(())
}

fn sweep(a: SweepArgs) -> Result<()> {
    let alpha = resolve_weights(&a.weights, None, &a.shape)?;
    let task = match a.task {
        Task::Complete => SweepTask::Completion(lrtc_config(alpha.clone(), &a.solver, a.shape.len())?),
        Task::Rpca => SweepTask::Rpca(trpca_config(alpha.clone(), &a.solver, &a.lambda, None, &a.shape)?),
    };
    let mut grid = PhaseGrid::new(a.ranks.clone(), a.levels.clone(), a.trials);
    grid.threshold = a.threshold;
    grid.distribution = a.factors.into();
    grid.validate()?;

    let mut echo = Echo::new("sweep");
    echo.set("sweep_task", format!("{:?}", a.task).to_lowercase())
        .set("shape", list(&a.shape))
        .set("ranks", list(&grid.ranks))
        .set("levels", list(&grid.levels))
        .set("trials", grid.trials)
        .set("threshold", grid.threshold)
        .set("factors", format!("{:?}", grid.distribution))
        .set("seed", a.seed);
    match &task {
        SweepTask::Completion(c) => echo_solver(&mut echo, &c.alpha, &c.tau, c.gamma, c.max_iter, c.rel_tol, c.slices),
        SweepTask::Rpca(c) => {
            echo_solver(&mut echo, &c.alpha, &c.tau, c.gamma, c.max_iter, c.rel_tol, c.slices);
            echo.set("lambda", c.lambda).set("rho", c.rho);
        }
    }
    echo.set("out", a.out.display());
    echo.print();

    let result = phase_sweep(&grid, &a.shape, &task, a.seed)?;
    result.write_csv(BufWriter::new(File::create(&a.out)?))?;
    if let Some(p) = &a.trials_out {
        result.write_trials_csv(BufWriter::new(File::create(p)?))?;
    }
    let mut out = std::io::stdout().lock();
    result.write_csv(&mut out)?;
    out.flush()?;
    Ok(())
}

fn tsvd(a: TsvdArgs) -> Result<()> {
    let x = read_tensor(&a.input)?;
    let mut echo = Echo::new("tsvd");
    echo.set("input", a.input.display()).set("shape", list(x.shape()));
    echo.print();
    let f = t_svd(&x)?;
    for (path, t) in [(&a.out_u, &f.u), (&a.out_s, &f.s), (&a.out_v, &f.v)] {
        write_tensor(path, t)?;
    }
    println!("u {} s {} v {}", list(f.u.shape()), list(f.s.shape()), list(f.v.shape()));
    Ok(())
}

fn gen(a: GenArgs) -> Result<()> {
    let spec = CpSpec::new(a.shape.clone(), a.rank, a.seed).with_distribution(a.factors.into());
    spec.validate()?;
    if a.sr.is_some_and(|sr| !(sr > 0.0 && sr <= 1.0)) {
        return Err(Error::InvalidArgument("--sr must lie in (0,1]".into()));
    }
    if a.nl.is_some_and(|nl| !(0.0..1.0).contains(&nl)) {
        return Err(Error::InvalidArgument("--nl must lie in [0,1)".into()));
    }
    let mut echo = Echo::new("gen");
    echo.set("shape", list(&a.shape))
        .set("rank", a.rank)
        .set("seed", a.seed)
        .set("factors", format!("{:?}", spec.distribution))
        .set("out", a.out.display());
    if let Some(sr) = a.sr {
        echo.set("sr", sr);
    }
    if let Some(nl) = a.nl {
        echo.set("nl", nl);
    }
    echo.print();

    let x = gen_cp_tensor(&spec)?;
    write_tensor(&a.out, &x)?;
    if let (Some(sr), Some(p)) = (a.sr, &a.mask_out) {
        write_tensor(p, &sample_mask(x.shape(), sr, a.seed.wrapping_add(1))?.to_tensor())?;
    }
    if let (Some(nl), Some(p)) = (a.nl, &a.noisy_out) {
        write_tensor(p, &add_salt_pepper(&x, nl, a.seed.wrapping_add(2))?)?;
    }
    Ok(())
}
