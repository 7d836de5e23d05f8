//! Weighted averages, weighted norms and the tracking deviation.

use nalgebra::{DMatrix, DVector};

use super::sequences::StochVector;
use crate::algorithm::Trace;
use crate::error::{Error, Result};

/// `x_hat = sum_i phi_i x^i`.
pub fn weighted_average(x: &DMatrix<f64>, phi: &StochVector) -> Result<DVector<f64>> {
    if x.nrows() != phi.len() {
        return Err(Error::DimensionMismatch {
            expected: phi.len(),
            actual: x.nrows(),
        });
    }
    Ok(x.tr_mul(phi.as_vector()))
}

/// `sum_i a_i ||X_i - center||^2`.
pub fn weighted_norm_sq(x: &DMatrix<f64>, center: &DVector<f64>, a: &StochVector) -> Result<f64> {
    if x.nrows() != a.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: x.nrows(),
        });
    }
    if x.ncols() != center.len() {
        return Err(Error::DimensionMismatch {
            expected: x.ncols(),
            actual: center.len(),
        });
    }
    let mut total = 0.0;
    for i in 0..x.nrows() {
        if !(a[i] > 0.0) {
            return Err(Error::DegenerateWeights { index: i, value: a[i] });
        }
        let d: f64 = x
            .row(i)
            .iter()
            .zip(center.iter())
            .map(|(xi, ci)| (xi - ci).powi(2))
            .sum();
        total += a[i] * d;
    }
    Ok(total)
}

/// `S(y, pi) = sqrt(sum_i pi_i || y^i / pi_i - sum_j y^j ||^2)`.
pub fn tracking_deviation(y: &DMatrix<f64>, pi: &StochVector) -> Result<f64> {
    if y.nrows() != pi.len() {
        return Err(Error::DimensionMismatch {
            expected: pi.len(),
            actual: y.nrows(),
        });
    }
    let total: DVector<f64> = y.row_sum().transpose();
    let mut s = 0.0;
    for i in 0..y.nrows() {
        let w = pi[i];
        if !(w > 0.0) {
            return Err(Error::DegenerateWeights { index: i, value: w });
        }
        let d: f64 = y
            .row(i)
            .iter()
            .zip(total.iter())
            .map(|(yi, t)| (yi / w - t).powi(2))
            .sum();
        s += w * d;
    }
    Ok(s.sqrt())
}

/// `[||x_hat - x*||^2, ||X - x_hat||^2_phi, S^2(Y, pi)]` for one snapshot.
pub fn error_components(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    x_star: &DVector<f64>,
    phi: &StochVector,
    pi: &StochVector,
) -> Result<[f64; 3]> {
    let x_hat = weighted_average(x, phi)?;
    Ok([
        (&x_hat - x_star).norm_squared(),
        weighted_norm_sq(x, &x_hat, phi)?,
        tracking_deviation(y, pi)?.powi(2),
    ])
}

/// Monte Carlo estimate of the error vector `V_k` at one iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorEstimate {
    pub k: usize,
    pub mean: [f64; 3],
    /// Standard error of each mean; zero for a single seed.
    pub se: [f64; 3],
}

/// Sample mean and standard error of the mean.
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let m = values.len() as f64;
    let mean = values.iter().sum::<f64>() / m;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
    (mean, (var / m).sqrt())
}

/// Averages the error components over seed-indexed traces at every
/// iteration recorded in all of them.
pub fn error_vector(
    traces: &[Trace],
    x_star: &DVector<f64>,
    phi: &[StochVector],
    pi: &[StochVector],
) -> Result<Vec<ErrorEstimate>> {
    let first = traces
        .first()
        .ok_or_else(|| Error::InvalidConfig("error vector needs at least one trace".into()))?;
    let mut out = Vec::with_capacity(first.records.len());
    for rec in &first.records {
        let k = rec.k;
        if k >= phi.len() || k >= pi.len() {
            return Err(Error::MissingSnapshot(k));
        }
        let mut samples = [Vec::new(), Vec::new(), Vec::new()];
        for t in traces {
            let r = t.record(k).ok_or(Error::MissingSnapshot(k))?;
            let y = r.y.as_ref().ok_or(Error::MissingSnapshot(k))?;
            let v = error_components(&r.x, y, x_star, &phi[k], &pi[k])?;
            for c in 0..3 {
                samples[c].push(v[c]);
            }
        }
        let (m0, s0) = mean_se(&samples[0]);
        let (m1, s1) = mean_se(&samples[1]);
        let (m2, s2) = mean_se(&samples[2]);
        out.push(ErrorEstimate {
            k,
            mean: [m0, m1, m2],
            se: [s0, s1, s2],
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn sv(v: &[f64]) -> StochVector {
        StochVector::new(DVector::from_column_slice(v)).unwrap()
    }

    #[test]
    fn weighted_average_examples() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 1.0, 2.0, 1.0, 2.0]);
        assert_relative_eq!(
            weighted_average(&x, &sv(&[0.2, 0.3, 0.5])).unwrap(),
            DVector::from_vec(vec![1.0, 2.0]),
            epsilon = 1e-15
        );
        let x = DMatrix::from_row_slice(2, 2, &[3.0, 4.0, 5.0, 6.0]);
        assert_eq!(weighted_average(&x, &StochVector::basis(2, 0)).unwrap().as_slice(), &[3.0, 4.0]);
        let x = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 1.0]);
        assert_eq!(weighted_average(&x, &sv(&[0.25, 0.75])).unwrap().as_slice(), &[0.75, 1.0]);
        assert!(weighted_average(&x, &StochVector::uniform(3)).is_err());
    }

    #[test]
    fn weighted_norm_examples() {
        let c = DVector::from_vec(vec![1.0, -1.0]);
        let x = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, 1.0, -1.0]);
        assert_eq!(weighted_norm_sq(&x, &c, &StochVector::uniform(2)).unwrap(), 0.0);
        let x = DMatrix::from_row_slice(2, 2, &[2.0, -1.0, 1.0, 1.0]);
        assert_relative_eq!(weighted_norm_sq(&x, &c, &sv(&[0.5, 0.5])).unwrap(), 2.5);
        assert!(matches!(
            weighted_norm_sq(&x, &c, &sv(&[1.0, 0.0])),
            Err(Error::DegenerateWeights { index: 1, .. })
        ));
    }

    #[test]
    fn weighted_norm_with_unit_weights_is_frobenius() {
        // StochVector rejects the all-ones vector, so scale the Frobenius
        // deviation by n instead
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, -1.0, 0.5, 3.0, 3.0]);
        let c = DVector::from_vec(vec![0.5, 0.5]);
        let frob: f64 = (0..3)
            .map(|i| (x.row(i).transpose() - &c).norm_squared())
            .sum();
        assert_relative_eq!(weighted_norm_sq(&x, &c, &StochVector::uniform(3)).unwrap() * 3.0, frob, epsilon = 1e-14);
    }

    #[test]
    fn tracking_deviation_examples() {
        let y = DMatrix::from_row_slice(1, 3, &[4.0, -2.0, 9.0]);
        assert_eq!(tracking_deviation(&y, &StochVector::uniform(1)).unwrap(), 0.0);
        let y = DMatrix::from_row_slice(2, 1, &[1.0, 0.0]);
        assert_relative_eq!(tracking_deviation(&y, &sv(&[0.5, 0.5])).unwrap(), 1.0, epsilon = 1e-15);
        assert!(tracking_deviation(&y, &sv(&[1.0, 0.0])).is_err());
    }

    proptest! {
        #[test]
        fn tracking_deviation_vanishes_iff_proportional(
            w in proptest::collection::vec(0.05f64..1.0, 2..6),
            s in proptest::collection::vec(-5.0f64..5.0, 1..4),
            bump in 0.01f64..1.0,
        ) {
            let total: f64 = w.iter().sum();
            let pi = StochVector::new(DVector::from_iterator(w.len(), w.iter().map(|v| v / total))).unwrap();
            let n = w.len();
            let p = s.len();
            let mut y = DMatrix::from_fn(n, p, |i, c| pi[i] * s[c]);
            prop_assert!(tracking_deviation(&y, &pi).unwrap() <= 1e-12);
            y[(0, 0)] += bump;
            prop_assert!(tracking_deviation(&y, &pi).unwrap() > 1e-6);
        }
    }

    #[test]
    fn mean_se_matches_textbook() {
        let (m, se) = mean_se(&[1.0, 2.0, 3.0, 4.0]);
        assert_relative_eq!(m, 2.5);
        assert_relative_eq!(se, (5.0f64 / 3.0 / 4.0).sqrt());
        assert_eq!(mean_se(&[7.0]), (7.0, 0.0));
    }
}
