//! Experiment orchestration: problem construction, seed runs, aggregation,
//! certification, sweeps and artifact directories.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::DVector;
use rayon::prelude::*;

use super::config::{ExperimentConfig, ProblemConfig, ScheduleKindConfig};
use super::data::{load_split, DatasetPart, DatasetSplit, IdxPaths};
use super::solver::{evaluate_accuracy, reference_optimum};
use crate::algorithm::{default_stride, evals_per_iteration, run_with, Algorithm, RunConfig};
use crate::analysis::{
    mean_se, step_size_bound, tracking_deviation, weighted_average, weighted_norm_sq, PhiOptions,
    SampledSequences, Sequences, TheoryConstants, TheoryReport,
};
use crate::error::{Error, Result};
use crate::graph::{parse_graph_sequence, GraphSchedule};
use crate::objective::{
    estimate_oracle_variance, random_quadratic_ensemble, AgentEnsemble, NoiseModel,
};

/// Step-size used for logistic problems when none is configured.
pub const LOGISTIC_DEFAULT_ALPHA: f64 = 0.05;
/// Fraction of the certified bound used for quadratic problems when no
/// step-size is configured.
pub const BOUND_FRACTION: f64 = 0.9;
const DEFAULT_THEORY_HORIZON: usize = 1000;
const VARIANCE_DRAWS: usize = 200;

/// A built problem: the ensemble, its reference optimum and, for logistic
/// problems, the held-out split.
#[derive(Debug, Clone)]
pub struct Problem {
    pub ensemble: AgentEnsemble,
    pub x_star: DVector<f64>,
    pub test: Option<DatasetPart>,
    pub lambda: Option<f64>,
    /// Oracle noise level fed to the theory constants.
    pub sigma: f64,
    pub source: String,
}

pub fn build_problem(cfg: &ExperimentConfig) -> Result<Problem> {
    match &cfg.problem {
        ProblemConfig::Quadratic {
            n,
            dim,
            condition_number,
            seed,
        } => {
            let sigma = cfg.oracle.sigma.unwrap_or(0.0);
            let locals = random_quadratic_ensemble(*n, *dim, *condition_number, *seed)?;
            let ensemble = AgentEnsemble::new(locals, NoiseModel::AdditiveGaussian { sigma })?;
            let x_star = reference_optimum(&ensemble)?;
            Ok(Problem {
                ensemble,
                x_star,
                test: None,
                lambda: None,
                sigma,
                source: format!("random quadratic (seed {seed}, condition {condition_number})"),
            })
        }
        ProblemConfig::Logistic {
            n,
            lambda,
            ..
        } => {
            let split = load_config_split(cfg)?;
            if split.train.is_empty() || split.test.is_empty() {
                return Err(Error::EmptyDataset);
            }
            let lambda = lambda.unwrap_or(1.0 / split.train.len() as f64);
            let noise = match (cfg.oracle.sigma, cfg.oracle.minibatch) {
                (Some(sigma), _) => NoiseModel::AdditiveGaussian { sigma },
                (None, size) => NoiseModel::Minibatch {
                    size: size.unwrap_or(1),
                },
            };
            let locals = split.train.local_objectives(*n, lambda)?;
            let ensemble = AgentEnsemble::new(locals, noise)?;
            let x_star = reference_optimum(&ensemble)?;
            let sigma = match noise {
                NoiseModel::AdditiveGaussian { sigma } => sigma,
                NoiseModel::Minibatch { .. } => {
                    let points = [DVector::zeros(ensemble.dim()), x_star.clone()];
                    estimate_oracle_variance(&ensemble, &points, VARIANCE_DRAWS, 0)?.sqrt()
                }
            };
            Ok(Problem {
                ensemble,
                x_star,
                test: Some(split.test),
                lambda: Some(lambda),
                sigma,
                source: split.train.source.clone(),
            })
        }
    }
}

/// The train/test split a logistic config points at.
pub fn load_config_split(cfg: &ExperimentConfig) -> Result<DatasetSplit> {
    let ProblemConfig::Logistic {
        train_images,
        train_labels,
        test_images,
        test_labels,
        digit_pos,
        digit_neg,
        train_limit,
        test_limit,
        pooled,
        feature_scale,
        ..
    } = &cfg.problem
    else {
        return Err(Error::Config("dataset ingestion needs a logistic problem".into()));
    };
    let paths = IdxPaths {
        train_images: train_images.clone(),
        train_labels: train_labels.clone(),
        test_images: test_images.clone(),
        test_labels: test_labels.clone(),
    };
    load_split(
        &paths,
        (*digit_pos, *digit_neg),
        *train_limit,
        *test_limit,
        *pooled,
        *feature_scale,
    )
}

/// Writes the config's split as `train.csv` and `test.csv`, re-reads both
/// and fails unless the samples come back identical.
pub fn ingest(cfg: &ExperimentConfig, out: &Path) -> Result<DatasetSplit> {
    cfg.validate()?;
    check_replaceable(out)?;
    let split = load_config_split(cfg)?;
    write_atomically(out, |dir| {
        for (name, part) in [("train.csv", &split.train), ("test.csv", &split.test)] {
            let path = dir.join(name);
            let mut buf = Vec::new();
            part.write_csv(&mut buf)?;
            write_file(&path, &buf)?;
            let text = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
            let back = DatasetPart::read_csv(text.as_slice(), part.source.clone())?;
            if back != *part {
                return Err(Error::Format(format!("{name} did not round-trip exactly")));
            }
        }
        let mut base = cfg.clone();
        base.experiment.output_dir = None;
        write_file(&dir.join("config.resolved.toml"), base.to_toml()?.as_bytes())?;
        let mut m = manifest_header("ingest");
        let _ = writeln!(m, "train_samples={}", split.train.len());
        let _ = writeln!(m, "test_samples={}", split.test.len());
        let _ = writeln!(m, "features={}", split.train.dim());
        let _ = writeln!(m, "train_source={}", split.train.source);
        let _ = writeln!(m, "test_source={}", split.test.source);
        let _ = writeln!(m, "files=config.resolved.toml,train.csv,test.csv");
        write_file(&dir.join("manifest.txt"), m.as_bytes())
    })?;
    Ok(split)
}

pub fn build_schedule(cfg: &ExperimentConfig) -> Result<GraphSchedule> {
    let s = &cfg.schedule;
    let n = cfg.problem.n();
    match s.kind {
        ScheduleKindConfig::Static => GraphSchedule::fixed(n, s.extra_edges, s.seed),
        ScheduleKindConfig::Rotating => GraphSchedule::rotating(n, s.extra_edges, s.seed),
        ScheduleKindConfig::Replayed => {
            let path = s
                .file
                .as_ref()
                .ok_or_else(|| Error::Config("replayed schedules need schedule.file".into()))?;
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let sched = GraphSchedule::replayed(parse_graph_sequence(&text)?)?;
            if sched.n != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    actual: sched.n,
                });
            }
            Ok(sched)
        }
    }
}

/// Theory pipeline over `horizon` iterations at `alpha`, or at the
/// certified bound when `alpha` is `None`.
pub fn theory_report(
    problem: &Problem,
    schedule: &GraphSchedule,
    alpha: Option<f64>,
    horizon: usize,
    opts: PhiOptions,
) -> Result<TheoryReport> {
    if alpha.is_some_and(|a| !(a > 0.0)) {
        return Err(Error::Config(
            "alpha must be positive: at alpha = 0 the composite matrix has spectral radius 1".into(),
        ));
    }
    let seq = Sequences::build(schedule, horizon, opts)?;
    let ens = &problem.ensemble;
    let constants =
        TheoryConstants::from_sequences(&seq, ens.smoothness(), ens.convexity(), problem.sigma)?;
    let alpha = match alpha {
        Some(a) => a,
        None => step_size_bound(&constants.bounds)?,
    };
    TheoryReport::new(
        constants,
        alpha,
        seq.phi_horizon,
        seq.phi_spread,
        seq.max_phi_residual(),
    )
}

fn phi_options(cfg: &ExperimentConfig) -> PhiOptions {
    PhiOptions {
        horizon: cfg.experiment.phi_horizon,
        tolerance: cfg.experiment.phi_tolerance,
        ..PhiOptions::default()
    }
}

fn theory_horizon(cfg: &ExperimentConfig, iterations: usize) -> usize {
    cfg.experiment
        .theory_horizon
        .unwrap_or(iterations.clamp(1, DEFAULT_THEORY_HORIZON))
}

/// How the run's step-size was chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlphaSource {
    Configured,
    BoundFraction,
    LogisticDefault,
}

impl AlphaSource {
    pub fn name(&self) -> &'static str {
        match self {
            AlphaSource::Configured => "configured",
            AlphaSource::BoundFraction => "0.9_x_certified_bound",
            AlphaSource::LogisticDefault => "logistic_default",
        }
    }
}

fn resolve_iterations(cfg: &ExperimentConfig, algorithm: Algorithm, ens: &AgentEnsemble) -> usize {
    match (cfg.run.iterations, cfg.run.epochs) {
        (Some(k), _) => k,
        (None, Some(e)) => {
            let per_iter = evals_per_iteration(algorithm, ens) as f64;
            (e * ens.total_samples() as f64 / per_iter).ceil() as usize
        }
        (None, None) => 0,
    }
}

fn resolve_stride(cfg: &ExperimentConfig, algorithm: Algorithm, ens: &AgentEnsemble, k: usize) -> usize {
    if let Some(s) = cfg.run.record_every {
        return s.max(1);
    }
    if cfg.problem.is_logistic() {
        let per_epoch = ens.total_samples() as f64 / evals_per_iteration(algorithm, ens) as f64;
        return ((per_epoch / 10.0).floor() as usize).max(1);
    }
    default_stride(k)
}

/// One recorded iteration of one seed. The three error columns are the
/// components of the error vector: `|x_hat - x*|^2`,
/// `sum_i phi_i |x^i - x_hat|^2` and `S(y, pi)^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedRow {
    pub k: usize,
    pub epoch: f64,
    pub residual: f64,
    pub consensus_error: f64,
    pub tracking_deviation: Option<f64>,
    pub accuracy: Option<f64>,
    pub grad_evals: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub k: usize,
    pub epoch: f64,
    pub residual: (f64, f64),
    pub consensus_error: (f64, f64),
    pub tracking_deviation: Option<(f64, f64)>,
    pub accuracy: Option<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct SeedTrace {
    pub seed: u64,
    pub rows: Vec<SeedRow>,
}

/// Everything `execute` computes, before anything touches the disk.
#[derive(Debug, Clone)]
pub struct ExperimentResult {
    /// Config with step-size, iteration count and stride filled in.
    pub resolved: ExperimentConfig,
    pub algorithm: Algorithm,
    pub alpha: f64,
    pub alpha_source: AlphaSource,
    pub iterations: usize,
    pub record_every: usize,
    pub evals_per_iteration: u64,
    pub total_samples: usize,
    pub test_samples: usize,
    pub smoothness: f64,
    pub convexity: f64,
    pub sigma: f64,
    pub lambda: Option<f64>,
    pub x_star: DVector<f64>,
    pub source: String,
    pub phi_horizon: Option<usize>,
    pub seeds: Vec<SeedTrace>,
    pub aggregate: Vec<AggregateRow>,
    pub theory: Option<TheoryReport>,
}

impl ExperimentResult {
    pub fn final_row(&self) -> &AggregateRow {
        self.aggregate.last().expect("runs record at least iteration 0")
    }
}

fn run_seed(
    problem: &Problem,
    schedule: &GraphSchedule,
    cfg: &RunConfig,
    seqs: Option<&SampledSequences>,
) -> Result<Vec<SeedRow>> {
    let n_total = problem.ensemble.total_samples() as f64;
    let mut rows = Vec::new();
    run_with(&problem.ensemble, schedule, cfg, |view| {
        let (x_hat, consensus, tracking) = match seqs {
            Some(s) => {
                let j = s.index(view.k).ok_or(Error::MissingSnapshot(view.k))?;
                let x_hat = weighted_average(view.x, &s.phi[j])?;
                let consensus = weighted_norm_sq(view.x, &x_hat, &s.phi[j])?;
                let y = view.y.ok_or(Error::MissingSnapshot(view.k))?;
                (x_hat, consensus, Some(tracking_deviation(y, &s.pi[j])?.powi(2)))
            }
            None => (view.x.row(0).transpose(), 0.0, None),
        };
        let accuracy = match &problem.test {
            Some(t) => Some(evaluate_accuracy(&x_hat, t)?),
            None => None,
        };
        rows.push(SeedRow {
            k: view.k,
            epoch: view.grad_evals as f64 / n_total,
            residual: (&x_hat - &problem.x_star).norm_squared(),
            consensus_error: consensus,
            tracking_deviation: tracking,
            accuracy,
            grad_evals: view.grad_evals,
        });
        Ok(())
    })?;
    Ok(rows)
}

fn aggregate(seeds: &[SeedTrace]) -> Vec<AggregateRow> {
    let first = &seeds[0].rows;
    (0..first.len())
        .map(|j| {
            let col = |f: &dyn Fn(&SeedRow) -> Option<f64>| -> Option<(f64, f64)> {
                let vals: Option<Vec<f64>> = seeds.iter().map(|s| f(&s.rows[j])).collect();
                vals.map(|v| mean_se(&v))
            };
            AggregateRow {
                k: first[j].k,
                epoch: first[j].epoch,
                residual: col(&|r| Some(r.residual)).expect("always present"),
                consensus_error: col(&|r| Some(r.consensus_error)).expect("always present"),
                tracking_deviation: col(&|r| r.tracking_deviation),
                accuracy: col(&|r| r.accuracy),
            }
        })
        .collect()
}

/// Runs the configured algorithm over every seed (in parallel) without
/// writing anything.
pub fn execute(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let algorithm = cfg.algorithm()?;
    let problem = build_problem(cfg)?;
    let schedule = build_schedule(cfg)?;
    let ens = &problem.ensemble;
    let iterations = resolve_iterations(cfg, algorithm, ens);
    let opts = phi_options(cfg);

    let (alpha, alpha_source) = match cfg.run.alpha {
        Some(a) => (a, AlphaSource::Configured),
        None if cfg.problem.is_logistic() => (LOGISTIC_DEFAULT_ALPHA, AlphaSource::LogisticDefault),
        None => {
            let report = theory_report(&problem, &schedule, None, theory_horizon(cfg, iterations), opts)?;
            (BOUND_FRACTION * report.alpha_bound, AlphaSource::BoundFraction)
        }
    };
    let stride = resolve_stride(cfg, algorithm, ens, iterations);

    let seqs = if algorithm.is_distributed() {
        let last = iterations;
        Some(Sequences::sampled(
            &schedule,
            iterations,
            |k| k % stride == 0 || k == last,
            opts,
        )?)
    } else {
        None
    };

    let seeds: Vec<SeedTrace> = cfg
        .experiment
        .seeds
        .par_iter()
        .map(|&seed| {
            let mut rc = RunConfig::new(algorithm, alpha, iterations, seed);
            rc.record_every = Some(stride);
            run_seed(&problem, &schedule, &rc, seqs.as_ref()).map(|rows| SeedTrace { seed, rows })
        })
        .collect::<Result<_>>()?;
    let aggregate = aggregate(&seeds);

    let theory = if cfg.experiment.theory {
        Some(theory_report(
            &problem,
            &schedule,
            Some(alpha),
            theory_horizon(cfg, iterations),
            opts,
        )?)
    } else {
        None
    };

    let mut resolved = cfg.clone();
    resolved.run.alpha = Some(alpha);
    resolved.run.iterations = Some(iterations);
    resolved.run.epochs = None;
    resolved.run.record_every = Some(stride);
    resolved.experiment.output_dir = None;

    Ok(ExperimentResult {
        resolved,
        algorithm,
        alpha,
        alpha_source,
        iterations,
        record_every: stride,
        evals_per_iteration: evals_per_iteration(algorithm, ens),
        total_samples: ens.total_samples(),
        test_samples: problem.test.as_ref().map_or(0, DatasetPart::len),
        smoothness: ens.smoothness(),
        convexity: ens.convexity(),
        sigma: problem.sigma,
        lambda: problem.lambda,
        x_star: problem.x_star,
        source: problem.source,
        phi_horizon: seqs.as_ref().map(|s| s.phi_horizon),
        seeds,
        aggregate,
        theory,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub const SEED_COLUMNS: [&str; 8] = [
    "k",
    "epoch",
    "residual",
    "consensus_error",
    "tracking_deviation",
    "accuracy",
    "seed",
    "grad_evals",
];

pub const METRICS_COLUMNS: [&str; 11] = [
    "k",
    "epoch",
    "residual",
    "consensus_error",
    "tracking_deviation",
    "accuracy",
    "residual_se",
    "consensus_error_se",
    "tracking_deviation_se",
    "accuracy_se",
    "seeds",
];

pub fn write_seed_csv<W: std::io::Write>(trace: &SeedTrace, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SEED_COLUMNS)?;
    for r in &trace.rows {
        w.write_record([
            r.k.to_string(),
            r.epoch.to_string(),
            r.residual.to_string(),
            r.consensus_error.to_string(),
            opt(r.tracking_deviation),
            opt(r.accuracy),
            trace.seed.to_string(),
            r.grad_evals.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(Path::new("<csv>"), e))?;
    Ok(())
}

pub fn write_metrics_csv<W: std::io::Write>(rows: &[AggregateRow], seeds: usize, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(METRICS_COLUMNS)?;
    for r in rows {
        w.write_record([
            r.k.to_string(),
            r.epoch.to_string(),
            r.residual.0.to_string(),
            r.consensus_error.0.to_string(),
            opt(r.tracking_deviation.map(|v| v.0)),
            opt(r.accuracy.map(|v| v.0)),
            r.residual.1.to_string(),
            r.consensus_error.1.to_string(),
            opt(r.tracking_deviation.map(|v| v.1)),
            opt(r.accuracy.map(|v| v.1)),
            seeds.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(Path::new("<csv>"), e))?;
    Ok(())
}

fn manifest_header(command: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "tool={}", env!("CARGO_PKG_NAME"));
    let _ = writeln!(s, "version={}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(s, "command={command}");
    let _ = writeln!(s, "config=config.resolved.toml");
    s
}

/// Writes the run's artifacts into an existing directory.
pub fn write_artifacts(result: &ExperimentResult, dir: &Path) -> Result<()> {
    let mut files = vec!["config.resolved.toml".to_string(), "metrics.csv".to_string()];
    write_file(&dir.join("config.resolved.toml"), result.resolved.to_toml()?.as_bytes())?;
    let mut buf = Vec::new();
    write_metrics_csv(&result.aggregate, result.seeds.len(), &mut buf)?;
    write_file(&dir.join("metrics.csv"), &buf)?;
    for s in &result.seeds {
        let name = format!("seed_{}.csv", s.seed);
        let mut buf = Vec::new();
        write_seed_csv(s, &mut buf)?;
        write_file(&dir.join(&name), &buf)?;
        files.push(name);
    }
    if let Some(t) = &result.theory {
        write_theory(t, dir)?;
        files.push("theory_report.txt".into());
        files.push("constants.csv".into());
    }

    let mut m = manifest_header("run");
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(m, "{k}={v}");
    };
    kv("algorithm", result.algorithm.name().into());
    kv("alpha", result.alpha.to_string());
    kv("alpha_source", result.alpha_source.name().into());
    kv("iterations", result.iterations.to_string());
    kv("record_every", result.record_every.to_string());
    kv("evals_per_iteration", result.evals_per_iteration.to_string());
    kv("total_samples", result.total_samples.to_string());
    kv("test_samples", result.test_samples.to_string());
    kv("agents", result.resolved.problem.n().to_string());
    kv("dim", result.x_star.len().to_string());
    kv("smoothness", result.smoothness.to_string());
    kv("convexity", result.convexity.to_string());
    kv("sigma", result.sigma.to_string());
    kv("lambda", opt(result.lambda));
    kv("x_star_norm", result.x_star.norm().to_string());
    kv("source", result.source.clone());
    kv(
        "phi_horizon",
        result.phi_horizon.map(|h| h.to_string()).unwrap_or_default(),
    );
    kv(
        "seeds",
        result
            .seeds
            .iter()
            .map(|s| s.seed.to_string())
            .collect::<Vec<_>>()
            .join(","),
    );
    if let Some(last) = result.aggregate.last() {
        kv("final_residual", last.residual.0.to_string());
        kv("final_accuracy", opt(last.accuracy.map(|a| a.0)));
    }
    kv("files", files.join(","));
    write_file(&dir.join("manifest.txt"), m.as_bytes())
}

fn write_theory(report: &TheoryReport, dir: &Path) -> Result<()> {
    write_file(&dir.join("theory_report.txt"), report.to_key_value().as_bytes())?;
    let mut buf = Vec::new();
    report.constants.write_csv(&mut buf)?;
    write_file(&dir.join("constants.csv"), &buf)
}

fn partial_path(dir: &Path) -> PathBuf {
    let mut name = dir.file_name().map(|n| n.to_os_string()).unwrap_or_else(|| "out".into());
    name.push(".partial");
    dir.with_file_name(name)
}

fn check_replaceable(dir: &Path) -> Result<()> {
    if dir.exists() && !dir.join("manifest.txt").is_file() {
        return Err(Error::Config(format!(
            "refusing to replace {}: it exists and has no manifest.txt",
            dir.display()
        )));
    }
    Ok(())
}

/// Builds an artifact directory under `<dir>.partial` and renames it into
/// place; on failure the partial directory is removed. An existing `dir`
/// is replaced only if it holds a manifest.
pub fn write_atomically(dir: &Path, fill: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
    check_replaceable(dir)?;
    let partial = partial_path(dir);
    if partial.exists() {
        std::fs::remove_dir_all(&partial).map_err(|e| Error::io(&partial, e))?;
    }
    std::fs::create_dir_all(&partial).map_err(|e| Error::io(&partial, e))?;
    if let Err(e) = fill(&partial) {
        let _ = std::fs::remove_dir_all(&partial);
        return Err(e);
    }
    if dir.exists() {
        std::fs::remove_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::rename(&partial, dir).map_err(|e| Error::io(dir, e))
}

/// `execute` plus artifacts in `out`.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path) -> Result<ExperimentResult> {
    check_replaceable(out)?;
    let result = execute(cfg)?;
    write_atomically(out, |dir| write_artifacts(&result, dir))?;
    Ok(result)
}

/// Theory report at the configured step-size, or at the certified bound
/// when none is configured; written with a manifest to `out`.
pub fn certify(cfg: &ExperimentConfig, out: &Path) -> Result<TheoryReport> {
    cfg.validate()?;
    check_replaceable(out)?;
    let problem = build_problem(cfg)?;
    let schedule = build_schedule(cfg)?;
    let algorithm = cfg.algorithm()?;
    let iterations = resolve_iterations(cfg, algorithm, &problem.ensemble);
    let horizon = theory_horizon(cfg, iterations);
    let report = theory_report(&problem, &schedule, cfg.run.alpha, horizon, phi_options(cfg))?;
    let mut resolved = cfg.clone();
    resolved.run.alpha = Some(report.alpha);
    resolved.experiment.theory_horizon = Some(horizon);
    resolved.experiment.output_dir = None;
    write_atomically(out, |dir| {
        write_theory(&report, dir)?;
        write_file(&dir.join("config.resolved.toml"), resolved.to_toml()?.as_bytes())?;
        let mut m = manifest_header("certify");
        let _ = writeln!(m, "status={}", if report.passes() { "pass" } else { "fail" });
        let _ = writeln!(m, "alpha={}", report.alpha);
        let _ = writeln!(m, "alpha_bound={}", report.alpha_bound);
        let _ = writeln!(m, "rho={}", report.rho);
        let _ = writeln!(m, "horizon={horizon}");
        let _ = writeln!(m, "sigma={}", problem.sigma);
        let _ = writeln!(m, "files=config.resolved.toml,theory_report.txt,constants.csv");
        write_file(&dir.join("manifest.txt"), m.as_bytes())
    })?;
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParameter {
    Alpha,
    Sigma,
    N,
    ExtraEdges,
}

impl SweepParameter {
    pub fn name(&self) -> &'static str {
        match self {
            SweepParameter::Alpha => "alpha",
            SweepParameter::Sigma => "sigma",
            SweepParameter::N => "n",
            SweepParameter::ExtraEdges => "extra_edges",
        }
    }

    /// `cfg` with the parameter set to `value`.
    pub fn apply(&self, cfg: &ExperimentConfig, value: f64) -> Result<ExperimentConfig> {
        let mut c = cfg.clone();
        let count = || -> Result<usize> {
            if value >= 0.0 && value.fract() == 0.0 {
                Ok(value as usize)
            } else {
                Err(Error::Config(format!("{} needs a whole number, got {value}", self.name())))
            }
        };
        match self {
            SweepParameter::Alpha => c.run.alpha = Some(value),
            SweepParameter::Sigma => {
                c.oracle.sigma = Some(value);
                c.oracle.minibatch = None;
            }
            SweepParameter::N => c.problem.set_n(count()?),
            SweepParameter::ExtraEdges => c.schedule.extra_edges = count()?,
        }
        c.validate()?;
        Ok(c)
    }
}

impl FromStr for SweepParameter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "alpha" => Ok(SweepParameter::Alpha),
            "sigma" => Ok(SweepParameter::Sigma),
            "n" => Ok(SweepParameter::N),
            "extra_edges" | "extra_edge_count" => Ok(SweepParameter::ExtraEdges),
            other => Err(Error::Config(format!(
                "unknown sweep parameter {other:?} (expected alpha, sigma, n or extra_edges)"
            ))),
        }
    }
}

/// Mean and standard error across seeds of each seed's average over its
/// last 10% of recorded iterations.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub alpha: f64,
    pub iterations: usize,
    pub residual: (f64, f64),
    pub consensus_error: (f64, f64),
    pub tracking_deviation: Option<(f64, f64)>,
    pub accuracy: Option<(f64, f64)>,
}

fn tail_mean(rows: &[SeedRow], f: impl Fn(&SeedRow) -> Option<f64>) -> Option<f64> {
    let take = rows.len().div_ceil(10).max(1);
    let tail = &rows[rows.len() - take..];
    let vals: Option<Vec<f64>> = tail.iter().map(f).collect();
    vals.map(|v| v.iter().sum::<f64>() / v.len() as f64)
}

pub fn plateau(result: &ExperimentResult, value: f64) -> SweepRow {
    let col = |f: &dyn Fn(&SeedRow) -> Option<f64>| -> Option<(f64, f64)> {
        let vals: Option<Vec<f64>> = result.seeds.iter().map(|s| tail_mean(&s.rows, f)).collect();
        vals.map(|v| mean_se(&v))
    };
    SweepRow {
        value,
        alpha: result.alpha,
        iterations: result.iterations,
        residual: col(&|r| Some(r.residual)).expect("always present"),
        consensus_error: col(&|r| Some(r.consensus_error)).expect("always present"),
        tracking_deviation: col(&|r| r.tracking_deviation),
        accuracy: col(&|r| r.accuracy),
    }
}

/// Runs every value without writing, sorted by value.
pub fn sweep_results(
    cfg: &ExperimentConfig,
    parameter: SweepParameter,
    values: &[f64],
) -> Result<Vec<(f64, ExperimentResult)>> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Config("sweep values must be distinct".into()));
    }
    sorted
        .into_iter()
        .map(|v| execute(&parameter.apply(cfg, v)?).map(|r| (v, r)))
        .collect()
}

pub fn write_sweep_csv<W: std::io::Write>(parameter: SweepParameter, rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        parameter.name(),
        "alpha",
        "iterations",
        "residual_plateau",
        "residual_plateau_se",
        "consensus_error_plateau",
        "consensus_error_plateau_se",
        "tracking_deviation_plateau",
        "tracking_deviation_plateau_se",
        "accuracy_plateau",
        "accuracy_plateau_se",
    ])?;
    for r in rows {
        w.write_record([
            r.value.to_string(),
            r.alpha.to_string(),
            r.iterations.to_string(),
            r.residual.0.to_string(),
            r.residual.1.to_string(),
            r.consensus_error.0.to_string(),
            r.consensus_error.1.to_string(),
            opt(r.tracking_deviation.map(|v| v.0)),
            opt(r.tracking_deviation.map(|v| v.1)),
            opt(r.accuracy.map(|v| v.0)),
            opt(r.accuracy.map(|v| v.1)),
        ])?;
    }
    w.flush().map_err(|e| Error::io(Path::new("<csv>"), e))?;
    Ok(())
}

/// Sweep with artifacts: one run directory per value plus `sweep.csv`.
pub fn sweep(
    cfg: &ExperimentConfig,
    parameter: SweepParameter,
    values: &[f64],
    out: &Path,
) -> Result<Vec<SweepRow>> {
    check_replaceable(out)?;
    let results = sweep_results(cfg, parameter, values)?;
    let rows: Vec<SweepRow> = results.iter().map(|(v, r)| plateau(r, *v)).collect();
    write_atomically(out, |dir| {
        let mut names = Vec::new();
        for (v, r) in &results {
            let name = format!("{}_{}", parameter.name(), v);
            let sub = dir.join(&name);
            std::fs::create_dir(&sub).map_err(|e| Error::io(&sub, e))?;
            write_artifacts(r, &sub)?;
            names.push(name);
        }
        let mut buf = Vec::new();
        write_sweep_csv(parameter, &rows, &mut buf)?;
        write_file(&dir.join("sweep.csv"), &buf)?;
        let mut base = cfg.clone();
        base.experiment.output_dir = None;
        write_file(&dir.join("config.resolved.toml"), base.to_toml()?.as_bytes())?;
        let mut m = manifest_header("sweep");
        let _ = writeln!(m, "parameter={}", parameter.name());
        let _ = writeln!(
            m,
            "values={}",
            rows.iter().map(|r| r.value.to_string()).collect::<Vec<_>>().join(",")
        );
        let _ = writeln!(m, "runs={}", names.join(","));
        let _ = writeln!(m, "files=config.resolved.toml,sweep.csv");
        write_file(&dir.join("manifest.txt"), m.as_bytes())
    })?;
    Ok(rows)
}
