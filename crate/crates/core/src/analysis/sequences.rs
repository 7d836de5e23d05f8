//! The `pi_k` and `phi_k` stochastic-vector sequences.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::graph::GraphSchedule;
use crate::weights::{Stochasticity, WeightMatrix, WeightPair, STOCHASTIC_TOL};

pub const STOCH_TOL: f64 = 1e-10;

/// Nonnegative vector summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct StochVector(DVector<f64>);

impl StochVector {
    pub fn new(v: DVector<f64>) -> Result<Self> {
        if v.is_empty() {
            return Err(Error::NotStochasticVector("empty vector".into()));
        }
        if let Some(bad) = v.iter().find(|x| !(**x >= 0.0) || !x.is_finite()) {
            return Err(Error::NotStochasticVector(format!("entry {bad} is negative or not finite")));
        }
        let s = v.sum();
        if (s - 1.0).abs() > STOCH_TOL {
            return Err(Error::NotStochasticVector(format!("entries sum to {s}")));
        }
        Ok(Self(v))
    }

    pub fn uniform(n: usize) -> Self {
        Self(DVector::from_element(n, 1.0 / n as f64))
    }

    pub fn basis(n: usize, i: usize) -> Self {
        let mut v = DVector::zeros(n);
        v[i] = 1.0;
        Self(v)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn min(&self) -> f64 {
        self.0.min()
    }

    pub fn max(&self) -> f64 {
        self.0.max()
    }

    pub fn dot(&self, other: &StochVector) -> f64 {
        self.0.dot(&other.0)
    }

    pub fn is_positive(&self) -> bool {
        self.0.iter().all(|&x| x > 0.0)
    }
}

impl std::ops::Index<usize> for StochVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// `pi_{k+1} = B_k pi_k`.
pub fn pi_update(pi: &StochVector, b: &WeightMatrix) -> Result<StochVector> {
    if b.mode() != Stochasticity::Column || b.sum_deviation() > STOCHASTIC_TOL {
        return Err(Error::NotStochastic {
            expected: "column",
            deviation: b.sum_deviation(),
        });
    }
    if b.n() != pi.len() {
        return Err(Error::DimensionMismatch {
            expected: pi.len(),
            actual: b.n(),
        });
    }
    StochVector::new(b.matrix() * pi.as_vector())
}

/// Largest column range of `p`: `max_j (max_i p_ij - min_i p_ij)`.
pub fn row_spread(p: &DMatrix<f64>) -> f64 {
    p.column_iter()
        .map(|c| c.max() - c.min())
        .fold(0.0, f64::max)
}

/// Estimates `phi_k` from `A_k, ..., A_{k+H-1}` as row 0 of the backward
/// product `A_{k+H-1} ... A_k`. Returns the estimate and the row spread.
pub fn phi_approx(a_seq: &[&DMatrix<f64>], tolerance: f64) -> Result<(StochVector, f64)> {
    let first = a_seq
        .first()
        .ok_or_else(|| Error::InvalidConfig("phi horizon must be at least 1".into()))?;
    let mut p = (*first).clone();
    for a in &a_seq[1..] {
        p = *a * &p;
    }
    let spread = row_spread(&p);
    if !(spread <= tolerance) {
        return Err(Error::HorizonInsufficient {
            horizon: a_seq.len(),
            spread,
            tolerance,
        });
    }
    let row: DVector<f64> = p.row(0).transpose();
    let row = &row / row.sum();
    Ok((StochVector::new(row)?, spread))
}

/// `|| A_k^T phi_{k+1} - phi_k ||_inf`.
pub fn phi_consistency_residual(phi_k: &StochVector, phi_k1: &StochVector, a: &DMatrix<f64>) -> f64 {
    (a.tr_mul(phi_k1.as_vector()) - phi_k.as_vector()).amax()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhiOptions {
    /// Initial backward-product horizon; `None` means `20 n`.
    pub horizon: Option<usize>,
    pub tolerance: f64,
    /// Doubling cap on the horizon.
    pub max_horizon: usize,
}

impl Default for PhiOptions {
    fn default() -> Self {
        Self {
            horizon: None,
            tolerance: 1e-8,
            max_horizon: 1 << 20,
        }
    }
}

/// `pi_0..=pi_{K+1}`, `phi_0..=phi_{K+1}` and the weight pairs
/// `(A_k, B_k)` for `k = 0..=K`, where `K = horizon`.
#[derive(Debug, Clone)]
pub struct Sequences {
    pub pi: Vec<StochVector>,
    pub phi: Vec<StochVector>,
    pub pairs: Vec<WeightPair>,
    /// Backward-product horizon used for the terminal `phi` estimate.
    pub phi_horizon: usize,
    pub phi_spread: f64,
}

impl Sequences {
    pub fn build(schedule: &GraphSchedule, horizon: usize, opts: PhiOptions) -> Result<Self> {
        let n = schedule.n;
        let pair_at = |k: usize| -> Result<WeightPair> { Ok(WeightPair::uniform(schedule.generate(k)?)) };
        let pairs: Vec<WeightPair> = if schedule.is_static() {
            vec![pair_at(0)?; horizon + 1]
        } else {
            (0..=horizon).map(pair_at).collect::<Result<_>>()?
        };

        let mut pi = Vec::with_capacity(horizon + 2);
        pi.push(StochVector::uniform(n));
        for pair in &pairs {
            let next = pi_update(pi.last().expect("non-empty"), &pair.b)?;
            pi.push(next);
        }

        let (terminal, spread, h) = terminal_phi(schedule, horizon + 1, &pairs[0], opts)?;
        let mut phi = vec![terminal; horizon + 2];
        for k in (0..=horizon).rev() {
            let v = pairs[k].a.matrix().tr_mul(phi[k + 1].as_vector());
            let s = v.sum();
            phi[k] = StochVector::new(v / s)?;
        }
        Ok(Self {
            pi,
            phi,
            pairs,
            phi_horizon: h,
            phi_spread: spread,
        })
    }

    pub fn horizon(&self) -> usize {
        self.pairs.len() - 1
    }

    /// `pi_k` and `phi_k` only at the iterations `keep` selects in
    /// `0..=horizon`. Weight pairs are regenerated rather than stored.
    pub fn sampled(
        schedule: &GraphSchedule,
        horizon: usize,
        keep: impl Fn(usize) -> bool,
        opts: PhiOptions,
    ) -> Result<SampledSequences> {
        let n = schedule.n;
        let fixed = if schedule.is_static() {
            Some(WeightPair::uniform(schedule.generate(0)?))
        } else {
            None
        };
        let pair_at = |k: usize| -> Result<WeightPair> {
            match &fixed {
                Some(p) => Ok(p.clone()),
                None => Ok(WeightPair::uniform(schedule.generate(k)?)),
            }
        };
        let ks: Vec<usize> = (0..=horizon).filter(|&k| keep(k)).collect();

        let mut pi = Vec::with_capacity(ks.len());
        let mut cur = StochVector::uniform(n);
        for k in 0..=horizon {
            if keep(k) {
                pi.push(cur.clone());
            }
            if k < horizon {
                cur = pi_update(&cur, &pair_at(k)?.b)?;
            }
        }

        let (mut cur, spread, h) = terminal_phi(schedule, horizon + 1, &pair_at(0)?, opts)?;
        let mut phi = Vec::with_capacity(ks.len());
        for k in (0..=horizon).rev() {
            let v = pair_at(k)?.a.matrix().tr_mul(cur.as_vector());
            let s = v.sum();
            cur = StochVector::new(v / s)?;
            if keep(k) {
                phi.push(cur.clone());
            }
        }
        phi.reverse();
        Ok(SampledSequences {
            ks,
            pi,
            phi,
            phi_horizon: h,
            phi_spread: spread,
        })
    }

    /// Largest consistency residual over the horizon.
    pub fn max_phi_residual(&self) -> f64 {
        self.pairs
            .iter()
            .enumerate()
            .map(|(k, p)| phi_consistency_residual(&self.phi[k], &self.phi[k + 1], p.a.matrix()))
            .fold(0.0, f64::max)
    }
}

/// `phi_{start}` from a forward window of `A_start, A_{start+1}, ...`,
/// doubling the window until the product's rows agree.
fn terminal_phi(
    schedule: &GraphSchedule,
    start: usize,
    first: &WeightPair,
    opts: PhiOptions,
) -> Result<(StochVector, f64, usize)> {
    let mut h = opts.horizon.unwrap_or(20 * schedule.n).max(1);
    loop {
        let window: Vec<WeightPair> = if schedule.is_static() {
            vec![first.clone()]
        } else {
            (start..start + h)
                .map(|k| Ok(WeightPair::uniform(schedule.generate(k)?)))
                .collect::<Result<_>>()?
        };
        let mats: Vec<&DMatrix<f64>> = if schedule.is_static() {
            std::iter::repeat_n(window[0].a.matrix(), h).collect()
        } else {
            window.iter().map(|p| p.a.matrix()).collect()
        };
        match phi_approx(&mats, opts.tolerance) {
            Ok((phi, spread)) => return Ok((phi, spread, h)),
            Err(Error::HorizonInsufficient { .. }) if h < opts.max_horizon => {
                h = (2 * h).min(opts.max_horizon);
            }
            Err(e) => return Err(e),
        }
    }
}

/// `pi_k`, `phi_k` at selected iterations `ks`.
#[derive(Debug, Clone)]
pub struct SampledSequences {
    pub ks: Vec<usize>,
    pub pi: Vec<StochVector>,
    pub phi: Vec<StochVector>,
    pub phi_horizon: usize,
    pub phi_spread: f64,
}

impl SampledSequences {
    /// Position of iteration `k` in `ks`.
    pub fn index(&self, k: usize) -> Option<usize> {
        self.ks.binary_search(&k).ok()
    }
}
