//! The attacker's centralized Kalman filter over the stacked observations of
//! every node, producing the exact MMSE estimate of the plant state under no
//! attack together with its error covariance.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{spd_pseudo_inverse, symmetrize};
use crate::process::{ProcessModel, SensorModel};

/// Posterior of the centralized filter: mean estimate and error covariance.
#[derive(Debug, Clone)]
pub struct AttackerFilterState {
    pub xhat: DVector<f64>,
    pub rcov: DMatrix<f64>,
}

impl AttackerFilterState {
    /// Prior at t = 0: mean and covariance of the initial state.
    pub fn new(xhat0: DVector<f64>, cov0: DMatrix<f64>) -> Self {
        Self {
            xhat: xhat0,
            rcov: cov0,
        }
    }

    /// Conditional mean of the deviation of the plant from the target.
    pub fn phi_mean(&self, x_star: &DVector<f64>) -> DVector<f64> {
        &self.xhat - x_star
    }
}

/// One predict-update cycle with a detailed record of the innovation.
#[derive(Debug, Clone)]
pub struct FilterStep {
    pub state: AttackerFilterState,
    pub innovation: DVector<f64>,
    pub innovation_cov: DMatrix<f64>,
}

/// Advances the centralized filter with the un-attacked observations of all
/// nodes stacked into a single measurement.
pub fn kalman_predict_update(
    state: &AttackerFilterState,
    y_all: &[DVector<f64>],
    process: &ProcessModel,
    sensors: &[SensorModel],
) -> Result<AttackerFilterState> {
    Ok(kalman_step_detailed(state, y_all, process, sensors)?.state)
}

pub fn kalman_step_detailed(
    state: &AttackerFilterState,
    y_all: &[DVector<f64>],
    process: &ProcessModel,
    sensors: &[SensorModel],
) -> Result<FilterStep> {
    if y_all.len() != sensors.len() {
        return Err(Error::Config(format!(
            "{} observations for {} sensors",
            y_all.len(),
            sensors.len()
        )));
    }
    let q = process.dim();
    let total_p: usize = sensors.iter().map(|s| s.obs_dim()).sum();

    // Predict.
    let a = process.a();
    let x_pred = a * &state.xhat;
    let mut p_pred = a * &state.rcov * a.transpose() + process.q_cov();
    symmetrize(&mut p_pred);

    // Stack observations.
    let mut h = DMatrix::zeros(total_p, q);
    let mut r = DMatrix::zeros(total_p, total_p);
    let mut y = DVector::zeros(total_p);
    let mut row = 0;
    for (s, yk) in sensors.iter().zip(y_all) {
        let p = s.obs_dim();
        if yk.len() != p {
            return Err(Error::Config(format!(
                "observation has dimension {}, sensor expects {p}",
                yk.len()
            )));
        }
        h.view_mut((row, 0), (p, q)).copy_from(s.h());
        r.view_mut((row, row), (p, p)).copy_from(s.r());
        y.rows_mut(row, p).copy_from(yk);
        row += p;
    }

    // Update. The innovation covariance can be exactly singular for
    // degenerate noiseless systems; the pseudo-inverse returns the MMSE
    // gain there, and genuinely inconsistent matrices surface as errors
    // carrying the condition number.
    let innovation = &y - &h * &x_pred;
    let mut s_mat = &h * &p_pred * h.transpose() + &r;
    symmetrize(&mut s_mat);
    let (s_inv, _cond) = spd_pseudo_inverse(&s_mat, "innovation covariance")?;
    let gain = &p_pred * h.transpose() * &s_inv;

    let xhat = &x_pred + &gain * &innovation;
    // Joseph form keeps the covariance PSD under roundoff.
    let i_kh = DMatrix::identity(q, q) - &gain * &h;
    let mut rcov = &i_kh * &p_pred * i_kh.transpose() + &gain * &r * gain.transpose();
    symmetrize(&mut rcov);

    Ok(FilterStep {
        state: AttackerFilterState { xhat, rcov },
        innovation,
        innovation_cov: s_mat,
    })
}
