//! Local cost functions, the averaged objective, and stochastic oracles.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::{Domain, SeedStreams, StreamRng};

const SYMMETRY_TOL: f64 = 1e-12;

/// `f(x) = 1/2 x^T Q x + q^T x` with `Q` symmetric positive definite.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticLocal {
    hessian: DMatrix<f64>,
    linear: DVector<f64>,
}

impl QuadraticLocal {
    pub fn new(hessian: DMatrix<f64>, linear: DVector<f64>) -> Result<Self> {
        let p = linear.len();
        if hessian.nrows() != p || hessian.ncols() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                actual: hessian.nrows(),
            });
        }
        let asym = (&hessian - hessian.transpose()).amax();
        if asym > SYMMETRY_TOL {
            return Err(Error::InvalidObjective(format!(
                "Q is not symmetric (max asymmetry {asym:e})"
            )));
        }
        let min_eig = hessian.clone().symmetric_eigen().eigenvalues.min();
        if !(min_eig > 0.0) {
            return Err(Error::InvalidObjective(format!(
                "Q is not positive definite (min eigenvalue {min_eig:e})"
            )));
        }
        Ok(Self { hessian, linear })
    }

    pub fn hessian(&self) -> &DMatrix<f64> {
        &self.hessian
    }

    pub fn linear(&self) -> &DVector<f64> {
        &self.linear
    }
}

/// Regularized logistic loss over a local batch. Parameter layout is
/// `[intercept, weights...]`, so the dimension is `features + 1`, and the
/// L2 penalty covers the intercept too.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticLocal {
    /// One row per sample.
    features: DMatrix<f64>,
    labels: DVector<f64>,
    lambda: f64,
}

impl LogisticLocal {
    pub fn new(features: DMatrix<f64>, labels: Vec<f64>, lambda: f64) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::InvalidObjective("local batch is empty".into()));
        }
        if features.nrows() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: labels.len(),
                actual: features.nrows(),
            });
        }
        if let Some(bad) = labels.iter().find(|&&y| y != 1.0 && y != -1.0) {
            return Err(Error::InvalidObjective(format!("label {bad} is not +1/-1")));
        }
        if !(lambda > 0.0) {
            return Err(Error::InvalidObjective(format!(
                "lambda must be positive, got {lambda}"
            )));
        }
        Ok(Self {
            features,
            labels: DVector::from_vec(labels),
            lambda,
        })
    }

    pub fn batch_size(&self) -> usize {
        self.labels.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn labels(&self) -> &DVector<f64> {
        &self.labels
    }

    fn margins(&self, x: &DVector<f64>) -> DVector<f64> {
        let w = x.rows(1, self.feature_dim());
        let mut z = &self.features * w;
        z.add_scalar_mut(x[0]);
        z
    }

    /// Adds `coeff * (1, b_j)` into `grad` for sample `j`.
    fn add_sample_term(&self, j: usize, coeff: f64, grad: &mut DVector<f64>) {
        grad[0] += coeff;
        let row = self.features.row(j);
        for (g, &b) in grad.rows_mut(1, self.feature_dim()).iter_mut().zip(row.iter()) {
            *g += coeff * b;
        }
    }

    fn sample_coeff(&self, j: usize, x: &DVector<f64>) -> f64 {
        let w = x.rows(1, self.feature_dim());
        let z = self.features.row(j).transpose().dot(&w) + x[0];
        let y = self.labels[j];
        -y * sigmoid(-y * z)
    }

    /// Gradient of the single-sample loss `f_ij`.
    pub fn sample_gradient(&self, j: usize, x: &DVector<f64>) -> DVector<f64> {
        let mut grad = x * self.lambda;
        self.add_sample_term(j, self.sample_coeff(j, x), &mut grad);
        grad
    }
}

pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^t)` without overflow.
fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LocalObjective {
    Quadratic(QuadraticLocal),
    Logistic(LogisticLocal),
}

impl LocalObjective {
    pub fn dim(&self) -> usize {
        match self {
            LocalObjective::Quadratic(q) => q.linear.len(),
            LocalObjective::Logistic(l) => l.feature_dim() + 1,
        }
    }

    /// Number of data points behind this objective; a quadratic counts as one.
    pub fn sample_count(&self) -> usize {
        match self {
            LocalObjective::Quadratic(_) => 1,
            LocalObjective::Logistic(l) => l.batch_size(),
        }
    }

    fn check_dim(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() == self.dim() {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: x.len(),
            })
        }
    }

    pub fn value(&self, x: &DVector<f64>) -> Result<f64> {
        self.check_dim(x)?;
        Ok(match self {
            LocalObjective::Quadratic(q) => 0.5 * x.dot(&(&q.hessian * x)) + q.linear.dot(x),
            LocalObjective::Logistic(l) => {
                let z = l.margins(x);
                let loss: f64 = z
                    .iter()
                    .zip(l.labels.iter())
                    .map(|(&z, &y)| softplus(-y * z))
                    .sum();
                loss / l.batch_size() as f64 + 0.5 * l.lambda * x.norm_squared()
            }
        })
    }

    /// Exact local gradient.
    pub fn gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(x)?;
        Ok(match self {
            LocalObjective::Quadratic(q) => &q.hessian * x + &q.linear,
            LocalObjective::Logistic(l) => {
                let z = l.margins(x);
                let m = l.batch_size() as f64;
                let coeffs = DVector::from_iterator(
                    z.len(),
                    z.iter()
                        .zip(l.labels.iter())
                        .map(|(&z, &y)| -y * sigmoid(-y * z) / m),
                );
                let mut grad = x * l.lambda;
                grad[0] += coeffs.sum();
                let mut tail = grad.rows_mut(1, l.feature_dim());
                tail.gemv_tr(1.0, &l.features, &coeffs, 1.0);
                grad
            }
        })
    }

    /// One stochastic oracle draw at `x`.
    pub fn oracle_gradient(
        &self,
        noise: NoiseModel,
        x: &DVector<f64>,
        rng: &mut StreamRng,
    ) -> Result<DVector<f64>> {
        match (noise, self) {
            (NoiseModel::AdditiveGaussian { sigma }, _) => {
                let mut g = self.gradient(x)?;
                if sigma > 0.0 {
                    let scale = sigma / (g.len() as f64).sqrt();
                    for v in g.iter_mut() {
                        let w: f64 = StandardNormal.sample(rng);
                        *v += scale * w;
                    }
                }
                Ok(g)
            }
            (NoiseModel::Minibatch { size }, LocalObjective::Logistic(l)) => {
                self.check_dim(x)?;
                let m = l.batch_size();
                let mut g = x * l.lambda;
                let weight = 1.0 / size as f64;
                for _ in 0..size {
                    let j = rng.random_range(0..m);
                    l.add_sample_term(j, weight * l.sample_coeff(j, x), &mut g);
                }
                Ok(g)
            }
            (NoiseModel::Minibatch { .. }, LocalObjective::Quadratic(_)) => Err(
                Error::InvalidObjective("minibatch oracle needs a data-backed objective".into()),
            ),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseModel {
    /// Exact gradient plus `N(0, sigma^2 / p)` noise in every coordinate,
    /// so the expected squared noise norm is exactly `sigma^2`.
    AdditiveGaussian { sigma: f64 },
    /// Average of `size` per-sample gradients drawn uniformly with
    /// replacement from the local batch.
    Minibatch { size: usize },
}

impl NoiseModel {
    pub fn exact() -> Self {
        NoiseModel::AdditiveGaussian { sigma: 0.0 }
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, NoiseModel::AdditiveGaussian { sigma } if *sigma == 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleConfig {
    pub noise: NoiseModel,
    pub dim: usize,
}

/// The `n` local objectives of a problem plus the oracle they are queried
/// through, with the smoothness and strong-convexity constants cached.
#[derive(Debug, Clone)]
pub struct AgentEnsemble {
    locals: Vec<LocalObjective>,
    oracle: OracleConfig,
    smoothness: f64,
    convexity: f64,
}

impl AgentEnsemble {
    pub fn new(locals: Vec<LocalObjective>, noise: NoiseModel) -> Result<Self> {
        let first = locals
            .first()
            .ok_or_else(|| Error::InvalidObjective("ensemble has no agents".into()))?;
        let dim = first.dim();
        let same_kind = locals
            .iter()
            .all(|l| std::mem::discriminant(l) == std::mem::discriminant(first));
        if !same_kind {
            return Err(Error::InvalidObjective(
                "locals must be all quadratic or all logistic".into(),
            ));
        }
        if let Some(bad) = locals.iter().find(|l| l.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: bad.dim(),
            });
        }
        match noise {
            NoiseModel::AdditiveGaussian { sigma } if !(sigma >= 0.0) => {
                return Err(Error::InvalidObjective(format!("sigma must be >= 0, got {sigma}")))
            }
            NoiseModel::Minibatch { size: 0 } => {
                return Err(Error::InvalidObjective("minibatch size must be positive".into()))
            }
            NoiseModel::Minibatch { .. } if matches!(first, LocalObjective::Quadratic(_)) => {
                return Err(Error::InvalidObjective(
                    "minibatch oracle needs logistic objectives".into(),
                ))
            }
            _ => {}
        }
        let (smoothness, convexity) = smoothness_and_convexity(&locals);
        if !(smoothness >= convexity && convexity > 0.0) {
            return Err(Error::InvalidObjective(format!(
                "need L >= mu > 0, got L = {smoothness}, mu = {convexity}"
            )));
        }
        Ok(Self {
            locals,
            oracle: OracleConfig { noise, dim },
            smoothness,
            convexity,
        })
    }

    /// Same objectives behind a different oracle.
    pub fn with_noise(&self, noise: NoiseModel) -> Result<Self> {
        Self::new(self.locals.clone(), noise)
    }

    pub fn n(&self) -> usize {
        self.locals.len()
    }

    pub fn dim(&self) -> usize {
        self.oracle.dim
    }

    pub fn locals(&self) -> &[LocalObjective] {
        &self.locals
    }

    pub fn oracle(&self) -> OracleConfig {
        self.oracle
    }

    pub fn noise(&self) -> NoiseModel {
        self.oracle.noise
    }

    /// Lipschitz constant of every local gradient.
    pub fn smoothness(&self) -> f64 {
        self.smoothness
    }

    /// Strong-convexity modulus of the average objective.
    pub fn convexity(&self) -> f64 {
        self.convexity
    }

    pub fn is_quadratic(&self) -> bool {
        matches!(self.locals[0], LocalObjective::Quadratic(_))
    }

    /// Total number of data points across agents.
    pub fn total_samples(&self) -> usize {
        self.locals.iter().map(LocalObjective::sample_count).sum()
    }

    /// Gradient evaluations one oracle call at agent `i` costs.
    pub fn oracle_cost(&self, i: usize) -> usize {
        match self.oracle.noise {
            NoiseModel::Minibatch { size } => size,
            NoiseModel::AdditiveGaussian { .. } => self.locals[i].sample_count(),
        }
    }

    pub fn value(&self, x: &DVector<f64>) -> Result<f64> {
        let mut total = 0.0;
        for l in &self.locals {
            total += l.value(x)?;
        }
        Ok(total / self.n() as f64)
    }

    /// `(1/n) sum_i grad f_i(x)`.
    pub fn global_gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let mut total = DVector::zeros(self.dim());
        for l in &self.locals {
            total += l.gradient(x)?;
        }
        Ok(total / self.n() as f64)
    }

    pub fn local_gradient(&self, i: usize, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.locals[i].gradient(x)
    }

    pub fn oracle_gradient(
        &self,
        i: usize,
        x: &DVector<f64>,
        rng: &mut StreamRng,
    ) -> Result<DVector<f64>> {
        self.locals[i].oracle_gradient(self.oracle.noise, x, rng)
    }

    /// `x* = -(sum Q_i)^{-1} sum q_i` for quadratic ensembles.
    pub fn analytic_optimum(&self) -> Result<DVector<f64>> {
        let p = self.dim();
        let mut h = DMatrix::zeros(p, p);
        let mut q = DVector::zeros(p);
        for l in &self.locals {
            match l {
                LocalObjective::Quadratic(local) => {
                    h += &local.hessian;
                    q += &local.linear;
                }
                LocalObjective::Logistic(_) => {
                    return Err(Error::InvalidObjective(
                        "analytic optimum needs quadratic objectives".into(),
                    ))
                }
            }
        }
        let chol = h
            .cholesky()
            .ok_or_else(|| Error::Numerical("sum of Q_i is not positive definite".into()))?;
        Ok(-chol.solve(&q))
    }
}

/// `(L, mu)`: for quadratics `L = max_i lambda_max(Q_i)` and
/// `mu = lambda_min(mean Q_i)`; for logistic losses
/// `L = max_i [lambda + sum_j |(1, b_ij)|^2 / (4 m_i)]` and `mu = lambda`.
pub fn smoothness_and_convexity(locals: &[LocalObjective]) -> (f64, f64) {
    let n = locals.len() as f64;
    match &locals[0] {
        LocalObjective::Quadratic(first) => {
            let p = first.linear.len();
            let mut mean = DMatrix::zeros(p, p);
            let mut l_max = f64::NEG_INFINITY;
            for l in locals {
                if let LocalObjective::Quadratic(q) = l {
                    mean += &q.hessian;
                    l_max = l_max.max(q.hessian.clone().symmetric_eigen().eigenvalues.max());
                }
            }
            mean /= n;
            (l_max, mean.symmetric_eigen().eigenvalues.min())
        }
        LocalObjective::Logistic(first) => {
            let lambda = first.lambda;
            let l_max = locals
                .iter()
                .filter_map(|l| match l {
                    LocalObjective::Logistic(l) => {
                        let sq: f64 = l
                            .features
                            .row_iter()
                            .map(|r| 1.0 + r.norm_squared())
                            .sum();
                        Some(l.lambda + sq / (4.0 * l.batch_size() as f64))
                    }
                    LocalObjective::Quadratic(_) => None,
                })
                .fold(f64::NEG_INFINITY, f64::max);
            (l_max, lambda)
        }
    }
}

/// Random quadratic ensemble: every `Q_i` has eigenvalues in
/// `[1, condition_number]` (both endpoints attained) under a random rotation.
pub fn random_quadratic_ensemble(
    n: usize,
    p: usize,
    condition_number: f64,
    seed: u64,
) -> Result<Vec<LocalObjective>> {
    if n == 0 || p == 0 {
        return Err(Error::InvalidObjective("need n >= 1 and p >= 1".into()));
    }
    if !(condition_number >= 1.0) {
        return Err(Error::InvalidObjective(format!(
            "condition number must be >= 1, got {condition_number}"
        )));
    }
    let streams = SeedStreams::new(seed);
    (0..n)
        .map(|i| {
            let mut rng = streams.stream(Domain::Problem, i as u64, 0);
            let gauss: DMatrix<f64> = DMatrix::from_fn(p, p, |_, _| StandardNormal.sample(&mut rng));
            let rotation = gauss.qr().q();
            let eigs = DVector::from_fn(p, |j, _| match j {
                0 => 1.0,
                1 => condition_number,
                _ => rng.random_range(1.0..=condition_number),
            });
            let mut hessian: DMatrix<f64> = &rotation * DMatrix::from_diagonal(&eigs) * rotation.transpose();
            hessian = (&hessian + hessian.transpose()) * 0.5;
            let linear = DVector::from_fn(p, |_, _| {
                let v: f64 = StandardNormal.sample(&mut rng);
                v * condition_number
            });
            QuadraticLocal::new(hessian, linear).map(LocalObjective::Quadratic)
        })
        .collect()
}

/// Empirical oracle variance: the largest, over agents and the given points,
/// of the mean of `|g_i(x) - grad f_i(x)|^2` across `draws` draws.
pub fn estimate_oracle_variance(
    ensemble: &AgentEnsemble,
    points: &[DVector<f64>],
    draws: usize,
    seed: u64,
) -> Result<f64> {
    let streams = SeedStreams::new(seed);
    let mut worst: f64 = 0.0;
    for (pi, x) in points.iter().enumerate() {
        for i in 0..ensemble.n() {
            let exact = ensemble.local_gradient(i, x)?;
            let mut rng = streams.stream(Domain::Estimation, i as u64, pi as u64);
            let mut acc = 0.0;
            for _ in 0..draws {
                acc += (ensemble.oracle_gradient(i, x, &mut rng)? - &exact).norm_squared();
            }
            worst = worst.max(acc / draws as f64);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;

    fn rng(seed: u64) -> StreamRng {
        StreamRng::seed_from_u64(seed)
    }

    fn toy_logistic(m: usize, d: usize, lambda: f64, seed: u64) -> LogisticLocal {
        let mut r = rng(seed);
        let features = DMatrix::from_fn(m, d, |_, _| r.random_range(0.0..1.0));
        let labels = (0..m).map(|j| if j % 3 == 0 { -1.0 } else { 1.0 }).collect();
        LogisticLocal::new(features, labels, lambda).unwrap()
    }

    fn central_difference(f: &LocalObjective, x: &DVector<f64>, h: f64) -> DVector<f64> {
        DVector::from_fn(x.len(), |c, _| {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[c] += h;
            xm[c] -= h;
            (f.value(&xp).unwrap() - f.value(&xm).unwrap()) / (2.0 * h)
        })
    }

    #[test]
    fn quadratic_gradient_vanishes_at_stationary_point() {
        let locals = random_quadratic_ensemble(1, 4, 10.0, 3).unwrap();
        let LocalObjective::Quadratic(q) = &locals[0] else { unreachable!() };
        let x = -q.hessian().clone().lu().solve(q.linear()).unwrap();
        assert!(locals[0].gradient(&x).unwrap().norm() < 1e-9);
    }

    #[test]
    fn logistic_gradient_at_zero_single_sample() {
        let b = [0.3, -1.2, 2.0];
        let features = DMatrix::from_row_slice(1, 3, &b);
        for y in [1.0, -1.0] {
            let l = LocalObjective::Logistic(LogisticLocal::new(features.clone(), vec![y], 0.7).unwrap());
            let g = l.gradient(&DVector::zeros(4)).unwrap();
            let expected = DVector::from_vec(vec![-0.5 * y, -0.5 * y * b[0], -0.5 * y * b[1], -0.5 * y * b[2]]);
            assert_relative_eq!(g, expected, epsilon = 1e-15);
        }
    }

    #[test]
    fn gradients_match_central_differences() {
        let quad = random_quadratic_ensemble(1, 5, 20.0, 8).unwrap().remove(0);
        let logi = LocalObjective::Logistic(toy_logistic(30, 6, 0.05, 9));
        let mut r = rng(10);
        for f in [&quad, &logi] {
            for _ in 0..20 {
                let x = DVector::from_fn(f.dim(), |_, _| r.random_range(-2.0..2.0));
                let fd = central_difference(f, &x, 1e-6);
                let g = f.gradient(&x).unwrap();
                let rel = (&fd - &g).norm() / g.norm().max(1e-12);
                assert!(rel < 1e-5, "relative error {rel}");
            }
        }
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let quad = random_quadratic_ensemble(1, 3, 2.0, 1).unwrap().remove(0);
        assert!(matches!(
            quad.gradient(&DVector::zeros(2)),
            Err(Error::DimensionMismatch { expected: 3, actual: 2 })
        ));
    }

    #[test]
    fn zero_sigma_oracle_is_exact() {
        let quad = random_quadratic_ensemble(1, 3, 2.0, 1).unwrap().remove(0);
        let x = DVector::from_vec(vec![0.1, 0.2, 0.3]);
        let g = quad
            .oracle_gradient(NoiseModel::exact(), &x, &mut rng(1))
            .unwrap();
        assert_eq!(g, quad.gradient(&x).unwrap());
    }

    #[test]
    fn gaussian_oracle_mean_and_variance() {
        let quad = random_quadratic_ensemble(1, 4, 3.0, 2).unwrap().remove(0);
        let x = DVector::from_vec(vec![0.5, -0.5, 1.0, 0.0]);
        let exact = quad.gradient(&x).unwrap();
        let draws = 100_000;
        let mut r = rng(77);
        let mut mean = DVector::zeros(4);
        let mut sq = 0.0;
        for _ in 0..draws {
            let g = quad
                .oracle_gradient(NoiseModel::AdditiveGaussian { sigma: 1.0 }, &x, &mut r)
                .unwrap();
            sq += (&g - &exact).norm_squared();
            mean += g;
        }
        mean /= draws as f64;
        let var = sq / draws as f64;
        assert!((0.99..=1.01).contains(&var), "variance {var}");
        // per-coordinate standard deviation is sigma / sqrt(p) = 0.5
        let tol = 3.0 * 0.5 / (draws as f64).sqrt();
        for c in 0..4 {
            assert!((mean[c] - exact[c]).abs() <= tol);
        }
    }

    #[test]
    fn minibatch_oracle_is_unbiased() {
        let l = LocalObjective::Logistic(toy_logistic(12, 3, 0.1, 4));
        let x = DVector::from_vec(vec![0.2, -0.4, 0.3, 0.9]);
        let exact = l.gradient(&x).unwrap();
        let draws = 100_000;
        let mut r = rng(5);
        let samples: Vec<DVector<f64>> = (0..draws)
            .map(|_| l.oracle_gradient(NoiseModel::Minibatch { size: 1 }, &x, &mut r).unwrap())
            .collect();
        let mean = samples.iter().fold(DVector::zeros(4), |acc, g| acc + g) / draws as f64;
        for c in 0..4 {
            let var = samples.iter().map(|g| (g[c] - mean[c]).powi(2)).sum::<f64>() / (draws - 1) as f64;
            let se = (var / draws as f64).sqrt();
            assert!((mean[c] - exact[c]).abs() <= 3.0 * se + 1e-15, "coord {c}");
        }
    }

    #[test]
    fn global_gradient_matches_direct_assembly() {
        let locals = random_quadratic_ensemble(4, 3, 5.0, 12).unwrap();
        let ens = AgentEnsemble::new(locals.clone(), NoiseModel::exact()).unwrap();
        let x = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let mut h = DMatrix::zeros(3, 3);
        let mut q = DVector::zeros(3);
        for l in &locals {
            let LocalObjective::Quadratic(l) = l else { unreachable!() };
            h += l.hessian();
            q += l.linear();
        }
        let direct = (h * &x + q) / 4.0;
        assert_relative_eq!(ens.global_gradient(&x).unwrap(), direct, epsilon = 1e-12);

        let single = AgentEnsemble::new(vec![locals[0].clone()], NoiseModel::exact()).unwrap();
        assert_eq!(single.global_gradient(&x).unwrap(), locals[0].gradient(&x).unwrap());
        let same = AgentEnsemble::new(vec![locals[1].clone(); 3], NoiseModel::exact()).unwrap();
        assert_relative_eq!(
            same.global_gradient(&x).unwrap(),
            locals[1].gradient(&x).unwrap(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn analytic_optimum_examples() {
        let identity = |q: f64| {
            LocalObjective::Quadratic(
                QuadraticLocal::new(DMatrix::identity(2, 2), DVector::from_element(2, q)).unwrap(),
            )
        };
        let ens = AgentEnsemble::new(vec![identity(0.0); 3], NoiseModel::exact()).unwrap();
        assert_eq!(ens.analytic_optimum().unwrap(), DVector::zeros(2));

        let scalar = |a: f64, b: f64| {
            LocalObjective::Quadratic(
                QuadraticLocal::new(DMatrix::from_element(1, 1, a), DVector::from_element(1, b)).unwrap(),
            )
        };
        let ens = AgentEnsemble::new(vec![scalar(2.0, -2.0), scalar(4.0, -4.0)], NoiseModel::exact()).unwrap();
        assert_relative_eq!(ens.analytic_optimum().unwrap()[0], 1.0, epsilon = 1e-15);

        let ens = AgentEnsemble::new(random_quadratic_ensemble(6, 5, 50.0, 4).unwrap(), NoiseModel::exact()).unwrap();
        let x = ens.analytic_optimum().unwrap();
        assert!(ens.global_gradient(&x).unwrap().norm() < 1e-10);
    }

    #[test]
    fn smoothness_examples() {
        let two_i = LocalObjective::Quadratic(
            QuadraticLocal::new(DMatrix::identity(3, 3) * 2.0, DVector::zeros(3)).unwrap(),
        );
        let ens = AgentEnsemble::new(vec![two_i; 4], NoiseModel::exact()).unwrap();
        assert_eq!((ens.smoothness(), ens.convexity()), (2.0, 2.0));

        let zero_features = LogisticLocal::new(DMatrix::zeros(5, 3), vec![1.0; 5], 0.1).unwrap();
        let ens = AgentEnsemble::new(vec![LocalObjective::Logistic(zero_features)], NoiseModel::exact()).unwrap();
        assert_relative_eq!(ens.smoothness(), 0.1 + 0.25, epsilon = 1e-15);
        assert_eq!(ens.convexity(), 0.1);
    }

    fn power_iteration_max(m: &DMatrix<f64>) -> f64 {
        let mut v = DVector::from_element(m.nrows(), 1.0);
        let mut est = 0.0;
        for _ in 0..100_000 {
            let w = m * &v;
            let next = w.norm() / v.norm();
            v = w.normalize();
            if (next - est).abs() < 1e-14 * next {
                return next;
            }
            est = next;
        }
        est
    }

    #[test]
    fn eigen_routine_agrees_with_power_iteration() {
        let locals = random_quadratic_ensemble(5, 4, 30.0, 99).unwrap();
        let ens = AgentEnsemble::new(locals.clone(), NoiseModel::exact()).unwrap();
        let l = locals
            .iter()
            .map(|l| match l {
                LocalObjective::Quadratic(q) => power_iteration_max(q.hessian()),
                _ => unreachable!(),
            })
            .fold(0.0, f64::max);
        assert_relative_eq!(ens.smoothness(), l, max_relative = 1e-8);
        // mu via power iteration on (s I - mean Q)
        let mut mean = DMatrix::zeros(4, 4);
        for q in &locals {
            let LocalObjective::Quadratic(q) = q else { unreachable!() };
            mean += q.hessian();
        }
        mean /= 5.0;
        let shift = l + 1.0;
        let mu = shift - power_iteration_max(&(DMatrix::identity(4, 4) * shift - mean));
        assert_relative_eq!(ens.convexity(), mu, max_relative = 1e-8);
    }

    #[test]
    fn strong_convexity_witness() {
        let mut r = rng(31);
        let quad = AgentEnsemble::new(random_quadratic_ensemble(3, 4, 8.0, 2).unwrap(), NoiseModel::exact()).unwrap();
        let logi = AgentEnsemble::new(
            (0..3).map(|i| LocalObjective::Logistic(toy_logistic(20, 3, 0.2, i))).collect(),
            NoiseModel::exact(),
        )
        .unwrap();
        for ens in [&quad, &logi] {
            for _ in 0..100 {
                let x = DVector::from_fn(ens.dim(), |_, _| r.random_range(-3.0..3.0));
                let y = DVector::from_fn(ens.dim(), |_, _| r.random_range(-3.0..3.0));
                let lhs = (ens.global_gradient(&x).unwrap() - ens.global_gradient(&y).unwrap()).dot(&(&x - &y));
                assert!(lhs >= ens.convexity() * (&x - &y).norm_squared() * (1.0 - 1e-12));
            }
        }
    }

    #[test]
    fn ensemble_rejects_invalid_inputs() {
        assert!(AgentEnsemble::new(vec![], NoiseModel::exact()).is_err());
        let quad = random_quadratic_ensemble(1, 3, 2.0, 1).unwrap().remove(0);
        assert!(AgentEnsemble::new(vec![quad.clone()], NoiseModel::Minibatch { size: 1 }).is_err());
        let logi = LocalObjective::Logistic(toy_logistic(4, 2, 0.1, 1));
        assert!(AgentEnsemble::new(vec![quad, logi], NoiseModel::exact()).is_err());
        assert!(LogisticLocal::new(DMatrix::zeros(1, 2), vec![0.5], 0.1).is_err());
        assert!(LogisticLocal::new(DMatrix::zeros(1, 2), vec![1.0], 0.0).is_err());
    }

    #[test]
    fn minibatch_variance_estimate_is_finite() {
        let ens = AgentEnsemble::new(
            (0..2).map(|i| LocalObjective::Logistic(toy_logistic(10, 3, 0.1, i))).collect(),
            NoiseModel::Minibatch { size: 1 },
        )
        .unwrap();
        let v = estimate_oracle_variance(&ens, &[DVector::zeros(4)], 500, 1).unwrap();
        assert!(v.is_finite() && v > 0.0);
    }
}
