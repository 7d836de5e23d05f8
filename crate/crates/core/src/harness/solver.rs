//! Reference optimum and test accuracy.

use nalgebra::{DMatrix, DVector};

use super::data::DatasetPart;
use crate::error::{Error, Result};
use crate::objective::{sigmoid, AgentEnsemble, LocalObjective};

/// Gradient-norm target of the reference solve.
pub const OPTIMUM_TOL: f64 = 1e-10;

/// Minimizer of `f = (1/n) sum f_i`: closed form for quadratics, damped
/// Newton with a Cholesky solve for logistic losses.
pub fn reference_optimum(ensemble: &AgentEnsemble) -> Result<DVector<f64>> {
    if ensemble.is_quadratic() {
        return ensemble.analytic_optimum();
    }
    let p = ensemble.dim();
    let mut x = DVector::zeros(p);
    let mut value = ensemble.value(&x)?;
    for _ in 0..100 {
        let grad = ensemble.global_gradient(&x)?;
        let gnorm = grad.norm();
        if gnorm <= OPTIMUM_TOL {
            return Ok(x);
        }
        let hess = logistic_hessian(ensemble, &x)?;
        let chol = hess
            .cholesky()
            .ok_or_else(|| Error::Numerical("logistic Hessian is not positive definite".into()))?;
        let dir = -chol.solve(&grad);
        let slope = grad.dot(&dir);
        let mut t = 1.0;
        loop {
            let cand = &x + &dir * t;
            let v = ensemble.value(&cand)?;
            if v <= value + 1e-4 * t * slope || t < 1e-12 {
                x = cand;
                value = v;
                break;
            }
            t *= 0.5;
        }
        if t * dir.norm() <= f64::EPSILON * x.norm().max(1.0) {
            let g = ensemble.global_gradient(&x)?.norm();
            return if g <= 1e2 * OPTIMUM_TOL {
                Ok(x)
            } else {
                Err(Error::Numerical(format!("Newton stalled at gradient norm {g:e}")))
            };
        }
    }
    Err(Error::Numerical("Newton did not converge in 100 iterations".into()))
}

/// `(1/n) sum_i [(1/m_i) sum_j s_ij (1-s_ij) a_ij a_ij^T + lambda I]` with
/// `a_ij = (1, b_ij)`.
fn logistic_hessian(ensemble: &AgentEnsemble, x: &DVector<f64>) -> Result<DMatrix<f64>> {
    let p = ensemble.dim();
    let n = ensemble.n() as f64;
    let mut hess = DMatrix::zeros(p, p);
    for local in ensemble.locals() {
        let LocalObjective::Logistic(l) = local else {
            return Err(Error::InvalidObjective("expected logistic objectives".into()));
        };
        let m = l.batch_size();
        let b = l.features();
        let w = x.rows(1, l.feature_dim());
        let z = b * w;
        let mut scaled = DMatrix::zeros(m, p);
        for j in 0..m {
            let s = sigmoid(z[j] + x[0]);
            let c = (s * (1.0 - s) / (m as f64 * n)).sqrt();
            scaled[(j, 0)] = c;
            for (dst, &src) in scaled.row_mut(j).iter_mut().skip(1).zip(b.row(j).iter()) {
                *dst = c * src;
            }
        }
        hess += scaled.tr_mul(&scaled);
        for d in 0..p {
            hess[(d, d)] += l.lambda() / n;
        }
    }
    Ok(hess)
}

/// Fraction of samples with `sign(x_0 + x_{1:}^T b) = y`; a zero margin
/// counts as wrong.
pub fn evaluate_accuracy(x: &DVector<f64>, test: &DatasetPart) -> Result<f64> {
    if x.len() != test.dim() + 1 {
        return Err(Error::DimensionMismatch {
            expected: test.dim() + 1,
            actual: x.len(),
        });
    }
    if test.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let w = &x.as_slice()[1..];
    let correct = (0..test.len())
        .filter(|&j| {
            let z: f64 = x[0] + test.sample(j).iter().zip(w).map(|(b, w)| b * w).sum::<f64>();
            z * test.labels()[j] > 0.0
        })
        .count();
    Ok(correct as f64 / test.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::{LogisticLocal, NoiseModel};

    fn toy_part() -> DatasetPart {
        DatasetPart::new(
            2,
            vec![1.0, 2.0, 2.0, 1.0, -1.0, -1.5, -2.0, -0.5],
            vec![1.0, 1.0, -1.0, -1.0],
            "toy".into(),
        )
        .unwrap()
    }

    #[test]
    fn accuracy_examples() {
        let part = toy_part();
        assert_eq!(evaluate_accuracy(&DVector::zeros(3), &part).unwrap(), 0.0);
        let sep = DVector::from_vec(vec![0.0, 1.0, 1.0]);
        assert_eq!(evaluate_accuracy(&sep, &part).unwrap(), 1.0);
        assert_eq!(evaluate_accuracy(&(-sep), &part).unwrap(), 0.0);
        let half = DVector::from_vec(vec![0.0, 1.0, 0.0]);
        assert_eq!(evaluate_accuracy(&half, &part).unwrap(), 1.0);
        assert!(matches!(
            evaluate_accuracy(&DVector::zeros(2), &part),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn newton_optimum_zeroes_the_gradient() {
        let part = toy_part();
        let locals = part.local_objectives(2, 0.1).unwrap();
        let ens = AgentEnsemble::new(locals, NoiseModel::exact()).unwrap();
        let x = reference_optimum(&ens).unwrap();
        assert!(ens.global_gradient(&x).unwrap().norm() <= OPTIMUM_TOL);
        // finite-difference check of the Hessian at a generic point
        let x0 = DVector::from_vec(vec![0.3, -0.2, 0.5]);
        let h = logistic_hessian(&ens, &x0).unwrap();
        let eps = 1e-6;
        for d in 0..3 {
            let mut xp = x0.clone();
            xp[d] += eps;
            let mut xm = x0.clone();
            xm[d] -= eps;
            let col = (ens.global_gradient(&xp).unwrap() - ens.global_gradient(&xm).unwrap()) / (2.0 * eps);
            for r in 0..3 {
                assert!((col[r] - h[(r, d)]).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn unequal_batches_use_the_agent_mean() {
        let part = toy_part().slice(0..3);
        let a = LogisticLocal::new(part.matrix(0..2), part.labels()[0..2].to_vec(), 0.5).unwrap();
        let b = LogisticLocal::new(part.matrix(2..3), part.labels()[2..3].to_vec(), 0.5).unwrap();
        let ens = AgentEnsemble::new(
            vec![LocalObjective::Logistic(a), LocalObjective::Logistic(b)],
            NoiseModel::exact(),
        )
        .unwrap();
        let x = reference_optimum(&ens).unwrap();
        assert!(ens.global_gradient(&x).unwrap().norm() <= OPTIMUM_TOL);
    }

    #[test]
    fn quadratic_optimum_is_analytic() {
        let locals = crate::objective::random_quadratic_ensemble(3, 2, 4.0, 1).unwrap();
        let ens = AgentEnsemble::new(locals, NoiseModel::exact()).unwrap();
        assert_eq!(reference_optimum(&ens).unwrap(), ens.analytic_optimum().unwrap());
    }
}
