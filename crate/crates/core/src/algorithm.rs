//! Stochastic push-pull gradient tracking (S-AB-TV) and its baselines.
//!
//! The distributed update mixes decisions with a row-stochastic `A_k` and
//! trackers with a column-stochastic `B_k`:
//!
//! ```text
//! X_{k+1} = A_k X_k - alpha Y_k
//! Y_{k+1} = B_k Y_k + G(X_{k+1}) - G(X_k)
//! ```
//!
//! where row `i` of `G(X)` is agent `i`'s oracle draw at its own iterate.
//! The draw made at `X_k` is kept and reused in the next tracker update, so
//! the column sums of `Y` always equal those of the latest draws.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::graph::GraphSchedule;
use crate::objective::{AgentEnsemble, NoiseModel};
use crate::rng::{SeedStreams, StreamRng};
use crate::weights::WeightPair;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    /// Stochastic push-pull over the configured oracle.
    Sabtv,
    /// Deterministic push-pull: same iteration, exact local gradients.
    Abpp,
    /// Centralized gradient descent on the full objective.
    Cgd,
    /// Centralized stochastic gradient descent.
    Csgd,
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Sabtv => "sabtv",
            Algorithm::Abpp => "abpp",
            Algorithm::Cgd => "cgd",
            Algorithm::Csgd => "csgd",
        }
    }

    pub fn is_distributed(&self) -> bool {
        matches!(self, Algorithm::Sabtv | Algorithm::Abpp)
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sabtv" => Ok(Algorithm::Sabtv),
            "abpp" => Ok(Algorithm::Abpp),
            "cgd" => Ok(Algorithm::Cgd),
            "csgd" => Ok(Algorithm::Csgd),
            other => Err(Error::InvalidConfig(format!("unknown algorithm '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialPoint {
    /// Every agent starts from the same vector.
    Shared(DVector<f64>),
    /// Row `i` is agent `i`'s starting point.
    PerAgent(DMatrix<f64>),
}

impl InitialPoint {
    pub fn zeros(p: usize) -> Self {
        InitialPoint::Shared(DVector::zeros(p))
    }

    fn to_matrix(&self, n: usize, p: usize) -> Result<DMatrix<f64>> {
        match self {
            InitialPoint::Shared(v) if v.len() == p => {
                Ok(DMatrix::from_fn(n, p, |_, c| v[c]))
            }
            InitialPoint::Shared(v) => Err(Error::DimensionMismatch {
                expected: p,
                actual: v.len(),
            }),
            InitialPoint::PerAgent(m) if m.nrows() == n && m.ncols() == p => Ok(m.clone()),
            InitialPoint::PerAgent(m) => Err(Error::DimensionMismatch {
                expected: n * p,
                actual: m.nrows() * m.ncols(),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub alpha: f64,
    pub iterations: usize,
    pub seed: u64,
    /// Trace stride; `None` picks the default (every iteration up to 10^4
    /// iterations, otherwise about 10^4 records).
    pub record_every: Option<usize>,
    pub algorithm: Algorithm,
    pub x0: Option<InitialPoint>,
}

impl RunConfig {
    pub fn new(algorithm: Algorithm, alpha: f64, iterations: usize, seed: u64) -> Self {
        Self {
            alpha,
            iterations,
            seed,
            record_every: None,
            algorithm,
            x0: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "step-size must be positive, got {}",
                self.alpha
            )));
        }
        if self.record_every == Some(0) {
            return Err(Error::InvalidConfig("record_every must be >= 1".into()));
        }
        Ok(())
    }

    pub fn stride(&self) -> usize {
        self.record_every
            .unwrap_or_else(|| default_stride(self.iterations))
    }
}

pub fn default_stride(iterations: usize) -> usize {
    if iterations <= 10_000 {
        1
    } else {
        iterations.div_ceil(10_000)
    }
}

/// Stacked agent state: row `i` of each matrix belongs to agent `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct AlgState {
    pub k: usize,
    pub x: DMatrix<f64>,
    pub y: DMatrix<f64>,
    /// Oracle draws at the current iterates, `g_i(x_k^i, xi_k^i)`.
    pub g_prev: DMatrix<f64>,
}

impl AlgState {
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    /// Largest per-coordinate gap between the column sums of `Y` and of the
    /// latest draws, relative to `max(sum |G|, sum |Y|, 1)`.
    pub fn sum_tracking_error(&self) -> f64 {
        (0..self.dim())
            .map(|c| {
                let ys = self.y.column(c);
                let gs = self.g_prev.column(c);
                let scale = gs.abs().sum().max(ys.abs().sum()).max(1.0);
                (ys.sum() - gs.sum()).abs() / scale
            })
            .fold(0.0, f64::max)
    }
}

fn draw_all(
    ensemble: &AgentEnsemble,
    x: &DMatrix<f64>,
    streams: &SeedStreams,
    k: usize,
) -> Result<DMatrix<f64>> {
    let mut g = DMatrix::zeros(x.nrows(), x.ncols());
    for i in 0..x.nrows() {
        let xi: DVector<f64> = x.row(i).transpose();
        let mut rng = streams.agent(i, k);
        let gi = ensemble.oracle_gradient(i, &xi, &mut rng)?;
        g.row_mut(i).copy_from(&gi.transpose());
    }
    Ok(g)
}

/// Starting state: `Y_0 = G(X_0)` with draws from the iteration-0 streams.
pub fn init(
    ensemble: &AgentEnsemble,
    x0: &InitialPoint,
    streams: &SeedStreams,
) -> Result<AlgState> {
    let x = x0.to_matrix(ensemble.n(), ensemble.dim())?;
    let g = draw_all(ensemble, &x, streams, 0)?;
    Ok(AlgState {
        k: 0,
        x,
        y: g.clone(),
        g_prev: g,
    })
}

/// One push-pull iteration in place.
pub fn step(
    state: &mut AlgState,
    pair: &WeightPair,
    alpha: f64,
    ensemble: &AgentEnsemble,
    streams: &SeedStreams,
) -> Result<()> {
    if pair.n() != state.n() {
        return Err(Error::DimensionMismatch {
            expected: state.n(),
            actual: pair.n(),
        });
    }
    let mut x_next = pair.a.matrix() * &state.x;
    x_next -= &state.y * alpha;
    let g_next = draw_all(ensemble, &x_next, streams, state.k + 1)?;
    let mut y_next = pair.b.matrix() * &state.y;
    y_next += &g_next;
    y_next -= &state.g_prev;

    let k_next = state.k + 1;
    if x_next.iter().chain(y_next.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Divergence {
            iteration: k_next,
        });
    }
    state.x = x_next;
    state.y = y_next;
    state.g_prev = g_next;
    state.k = k_next;
    Ok(())
}

/// `x - alpha grad f(x)`.
pub fn cgd_step(x: &DVector<f64>, alpha: f64, ensemble: &AgentEnsemble) -> Result<DVector<f64>> {
    Ok(x - ensemble.global_gradient(x)? * alpha)
}

/// Centralized stochastic direction: for data-backed oracles, one agent is
/// picked uniformly and a minibatch is drawn from its batch; for additive
/// noise, the exact global gradient plus one noise draw.
pub fn csgd_direction(
    x: &DVector<f64>,
    ensemble: &AgentEnsemble,
    rng: &mut StreamRng,
) -> Result<DVector<f64>> {
    match ensemble.noise() {
        NoiseModel::Minibatch { .. } => {
            let n = ensemble.n();
            let agent = if n == 1 { 0 } else { rng.random_range(0..n) };
            ensemble.oracle_gradient(agent, x, rng)
        }
        NoiseModel::AdditiveGaussian { sigma } => {
            let mut g = ensemble.global_gradient(x)?;
            if sigma > 0.0 {
                let scale = sigma / (g.len() as f64).sqrt();
                for v in g.iter_mut() {
                    let w: f64 = StandardNormal.sample(rng);
                    *v += scale * w;
                }
            }
            Ok(g)
        }
    }
}

pub fn csgd_step(
    x: &DVector<f64>,
    alpha: f64,
    ensemble: &AgentEnsemble,
    rng: &mut StreamRng,
) -> Result<DVector<f64>> {
    Ok(x - csgd_direction(x, ensemble, rng)? * alpha)
}

/// Gradient evaluations per iteration, where one evaluation is one sample
/// (or one quadratic local) touched once.
pub fn evals_per_iteration(algorithm: Algorithm, ensemble: &AgentEnsemble) -> u64 {
    let total = ensemble.total_samples() as u64;
    match algorithm {
        Algorithm::Sabtv => (0..ensemble.n()).map(|i| ensemble.oracle_cost(i) as u64).sum(),
        Algorithm::Abpp | Algorithm::Cgd => total,
        Algorithm::Csgd => match ensemble.noise() {
            NoiseModel::Minibatch { size } => size as u64,
            NoiseModel::AdditiveGaussian { .. } => total,
        },
    }
}

/// Borrowed view of one recorded iteration.
#[derive(Debug, Clone, Copy)]
pub struct RecordView<'a> {
    pub k: usize,
    pub grad_evals: u64,
    /// `n x p` for distributed runs, `1 x p` for centralized ones.
    pub x: &'a DMatrix<f64>,
    pub y: Option<&'a DMatrix<f64>>,
    pub g: Option<&'a DMatrix<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub k: usize,
    pub grad_evals: u64,
    pub x: DMatrix<f64>,
    pub y: Option<DMatrix<f64>>,
    pub g: Option<DMatrix<f64>>,
    pub residual: Option<f64>,
    pub consensus_error: Option<f64>,
    pub tracking_deviation: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Trace {
    pub algorithm: Algorithm,
    pub records: Vec<TraceRecord>,
    pub evals_per_iteration: u64,
    pub duration: Duration,
}

impl Trace {
    pub fn record(&self, k: usize) -> Option<&TraceRecord> {
        self.records
            .binary_search_by_key(&k, |r| r.k)
            .ok()
            .map(|i| &self.records[i])
    }

    pub fn last(&self) -> &TraceRecord {
        self.records.last().expect("traces hold at least the initial record")
    }

    /// Row-wise mean of the final decision matrix.
    pub fn final_mean(&self) -> DVector<f64> {
        let x = &self.last().x;
        x.row_mean().transpose()
    }
}

fn is_recorded(k: usize, stride: usize, last: usize) -> bool {
    k.is_multiple_of(stride) || k == last
}

/// Runs `config.algorithm` and calls `observe` at every recorded iteration
/// (iteration 0, every `stride`-th iteration, and the last one). Recorded
/// evaluation counts are `k * evals_per_iteration`; the initial oracle draw
/// is not counted.
pub fn run_with<F>(
    ensemble: &AgentEnsemble,
    schedule: &GraphSchedule,
    config: &RunConfig,
    mut observe: F,
) -> Result<u64>
where
    F: FnMut(RecordView<'_>) -> Result<()>,
{
    config.validate()?;
    let stride = config.stride();
    let last = config.iterations;
    let streams = SeedStreams::new(config.seed);
    let p = ensemble.dim();
    let x0 = config
        .x0
        .clone()
        .unwrap_or_else(|| InitialPoint::zeros(p));

    match config.algorithm {
        Algorithm::Sabtv | Algorithm::Abpp => {
            if schedule.n != ensemble.n() {
                return Err(Error::DimensionMismatch {
                    expected: ensemble.n(),
                    actual: schedule.n,
                });
            }
            let exact;
            let ens = if config.algorithm == Algorithm::Abpp && !ensemble.noise().is_exact() {
                exact = ensemble.with_noise(NoiseModel::exact())?;
                &exact
            } else {
                ensemble
            };
            let per_iter = evals_per_iteration(config.algorithm, ensemble);
            let mut state = init(ens, &x0, &streams)?;
            let mut evals = 0;
            observe(RecordView {
                k: 0,
                grad_evals: evals,
                x: &state.x,
                y: Some(&state.y),
                g: Some(&state.g_prev),
            })?;
            let mut cached: Option<WeightPair> = None;
            for k in 0..config.iterations {
                if cached.is_none() || !schedule.is_static() {
                    cached = Some(WeightPair::uniform(schedule.generate(k)?));
                }
                let pair = cached.as_ref().expect("set above");
                step(&mut state, pair, config.alpha, ens, &streams)?;
                evals += per_iter;
                if is_recorded(state.k, stride, last) {
                    observe(RecordView {
                        k: state.k,
                        grad_evals: evals,
                        x: &state.x,
                        y: Some(&state.y),
                        g: Some(&state.g_prev),
                    })?;
                }
            }
            Ok(evals)
        }
        Algorithm::Cgd | Algorithm::Csgd => {
            let mut x = match &x0 {
                InitialPoint::Shared(v) if v.len() == p => v.clone(),
                InitialPoint::Shared(v) => {
                    return Err(Error::DimensionMismatch {
                        expected: p,
                        actual: v.len(),
                    })
                }
                InitialPoint::PerAgent(m) => m.row_mean().transpose(),
            };
            let per_iter = evals_per_iteration(config.algorithm, ensemble);
            let mut evals = 0;
            let as_row = |v: &DVector<f64>| DMatrix::from_row_slice(1, v.len(), v.as_slice());
            observe(RecordView {
                k: 0,
                grad_evals: 0,
                x: &as_row(&x),
                y: None,
                g: None,
            })?;
            for k in 0..config.iterations {
                x = match config.algorithm {
                    Algorithm::Cgd => cgd_step(&x, config.alpha, ensemble)?,
                    _ => csgd_step(&x, config.alpha, ensemble, &mut streams.agent(0, k))?,
                };
                if x.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Divergence { iteration: k + 1 });
                }
                evals += per_iter;
                if is_recorded(k + 1, stride, last) {
                    observe(RecordView {
                        k: k + 1,
                        grad_evals: evals,
                        x: &as_row(&x),
                        y: None,
                        g: None,
                    })?;
                }
            }
            Ok(evals)
        }
    }
}

/// Runs and stores full snapshots at every recorded iteration.
pub fn run(ensemble: &AgentEnsemble, schedule: &GraphSchedule, config: &RunConfig) -> Result<Trace> {
    let start = Instant::now();
    let mut records = Vec::new();
    run_with(ensemble, schedule, config, |view| {
        records.push(TraceRecord {
            k: view.k,
            grad_evals: view.grad_evals,
            x: view.x.clone(),
            y: view.y.cloned(),
            g: view.g.cloned(),
            residual: None,
            consensus_error: None,
            tracking_deviation: None,
        });
        Ok(())
    })?;
    Ok(Trace {
        algorithm: config.algorithm,
        records,
        evals_per_iteration: evals_per_iteration(config.algorithm, ensemble),
        duration: start.elapsed(),
    })
}

/// Deterministic push-pull: `run` with the exact-gradient oracle.
pub fn abpp_run(
    ensemble: &AgentEnsemble,
    schedule: &GraphSchedule,
    config: &RunConfig,
) -> Result<Trace> {
    let config = RunConfig {
        algorithm: Algorithm::Abpp,
        ..config.clone()
    };
    run(ensemble, schedule, &config)
}
