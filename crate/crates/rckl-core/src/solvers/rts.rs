//! Fixed-interval RTS smoother for the lifted LTV system.
//!
//! Used for unconstrained localization with all landmarks known: the
//! bilinear measurement model collapses to a linear one by contracting the
//! known lifted landmark into the operator, and each timestep's measurements
//! stack into one linear observation. Missing measurements simply shrink (or
//! remove) a timestep's stacked block. The result is algebraically
//! equivalent to the batch Cholesky solution of the same problem.
//!
//! The anchor `x_0` is exact (zero covariance), so timestep-0 measurements
//! carry no information here and are not accepted.

use nalgebra::{DMatrix, DVector};

use crate::linalg::symmetrize;
use crate::problem::LtvCoefficients;
use crate::{Error, Result};

/// Stacked linear observation of one timestep: `y ≈ H x_k` with noise
/// covariance `R`.
#[derive(Debug, Clone)]
pub struct StackedObservation {
    pub h: DMatrix<f64>,
    pub y: DVector<f64>,
    pub r: DMatrix<f64>,
}

/// Forward Kalman filter and backward RTS pass on the LTV chain
/// `x_k = A_{k-1} x_{k-1} + v_k + w_k`, `w ~ N(0, Q)`, with `x_0` known
/// exactly. Returns means and covariances for k = 0..=K.
///
/// `observations[k-1]` belongs to timestep k; `None` means no measurement
/// (prediction only).
pub fn rts_smooth(
    x0: &DVector<f64>,
    ltv: &LtvCoefficients,
    q: &DMatrix<f64>,
    observations: &[Option<StackedObservation>],
) -> Result<Vec<(DVector<f64>, DMatrix<f64>)>> {
    let steps = ltv.a.len();
    if observations.len() != steps {
        return Err(Error::Dimension(format!(
            "expected {} observation slots, got {}",
            steps,
            observations.len()
        )));
    }
    let n = x0.len();

    let mut pred_mean = Vec::with_capacity(steps);
    let mut pred_cov = Vec::with_capacity(steps);
    let mut filt_mean = vec![x0.clone()];
    let mut filt_cov = vec![DMatrix::zeros(n, n)];

    for k in 1..=steps {
        let a = &ltv.a[k - 1];
        let x_pred = a * &filt_mean[k - 1] + &ltv.v[k - 1];
        let mut p_pred = a * &filt_cov[k - 1] * a.transpose() + q;
        symmetrize(&mut p_pred);

        let (x_upd, p_upd) = match &observations[k - 1] {
            None => (x_pred.clone(), p_pred.clone()),
            Some(obs) => {
                let s = &obs.h * &p_pred * obs.h.transpose() + &obs.r;
                let s_chol = nalgebra::Cholesky::new(s).ok_or_else(|| {
                    Error::Numerical(format!("innovation covariance not PD at step {k}"))
                })?;
                // K = P Hᵀ S⁻¹ via solving Sᵀ Kᵀ = H Pᵀ.
                let gain = s_chol.solve(&(&obs.h * &p_pred)).transpose();
                let innov = &obs.y - &obs.h * &x_pred;
                let x = &x_pred + &gain * innov;
                // Joseph form keeps the update symmetric PSD.
                let ikh = DMatrix::identity(n, n) - &gain * &obs.h;
                let mut p = &ikh * &p_pred * ikh.transpose() + &gain * &obs.r * gain.transpose();
                symmetrize(&mut p);
                (x, p)
            }
        };
        pred_mean.push(x_pred);
        pred_cov.push(p_pred);
        filt_mean.push(x_upd);
        filt_cov.push(p_upd);
    }

    // Backward pass.
    let mut means = filt_mean.clone();
    let mut covs = filt_cov.clone();
    for k in (0..steps).rev() {
        // Smooth x_k from x_{k+1}. pred_* index k holds the prediction of
        // step k+1.
        let p_pred = &pred_cov[k];
        let chol = nalgebra::Cholesky::new(p_pred.clone()).ok_or_else(|| {
            Error::Numerical(format!("non-PD predicted covariance at step {}", k + 1))
        })?;
        let a = &ltv.a[k];
        // C = P̂_k Aᵀ P̌_{k+1}⁻¹, via P̌ᵀ Cᵀ = A P̂ᵀ.
        let gain = chol.solve(&(a * &filt_cov[k])).transpose();
        means[k] = &filt_mean[k] + &gain * (&means[k + 1] - &pred_mean[k]);
        let mut p = &filt_cov[k] + &gain * (&covs[k + 1] - p_pred) * gain.transpose();
        symmetrize(&mut p);
        covs[k] = p;
    }

    Ok(means.into_iter().zip(covs).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn no_measurements_is_dead_reckoning() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
        let ltv = LtvCoefficients {
            a: vec![a.clone(); 5],
            v: vec![DVector::from_vec(vec![0.01, 0.0]); 5],
        };
        let q = DMatrix::identity(2, 2) * 0.01;
        let x0 = DVector::from_vec(vec![1.0, -0.5]);
        let out = rts_smooth(&x0, &ltv, &q, &vec![None; 5]).unwrap();
        let mut x = x0.clone();
        assert_relative_eq!(out[0].0, x, epsilon = 1e-14);
        for k in 1..=5 {
            x = &a * x + &ltv.v[k - 1];
            assert_relative_eq!(out[k].0, x, epsilon = 1e-12);
        }
        // Anchor is exact.
        assert_relative_eq!(out[0].1.amax(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn tiny_process_noise_pins_to_dynamics() {
        let a = DMatrix::from_row_slice(1, 1, &[0.9]);
        let ltv = LtvCoefficients { a: vec![a; 4], v: vec![DVector::from_vec(vec![0.1]); 4] };
        let q = DMatrix::from_row_slice(1, 1, &[1e-12]);
        // Wild measurements cannot pull the trajectory off the dynamics.
        let obs: Vec<Option<StackedObservation>> = (0..4)
            .map(|_| {
                Some(StackedObservation {
                    h: DMatrix::identity(1, 1),
                    y: DVector::from_vec(vec![10.0]),
                    r: DMatrix::from_row_slice(1, 1, &[1.0]),
                })
            })
            .collect();
        let out = rts_smooth(&DVector::from_vec(vec![1.0]), &ltv, &q, &obs).unwrap();
        let mut x = 1.0;
        for k in 1..=4 {
            x = 0.9 * x + 0.1;
            assert_relative_eq!(out[k].0[0], x, epsilon = 1e-6);
        }
    }
}
