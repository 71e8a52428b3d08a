//! Latent linear-Gaussian plant and per-node sensor models.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::CovFactor;
use crate::rng::RngStream;

/// Linear plant `x(t+1) = A x(t) + w(t)`, `w ~ N(0, Q)`.
#[derive(Debug, Clone)]
pub struct ProcessModel {
    a: DMatrix<f64>,
    q_cov: DMatrix<f64>,
    noise: CovFactor,
}

impl ProcessModel {
    pub fn new(a: DMatrix<f64>, q_cov: DMatrix<f64>) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::Config(format!(
                "state transition must be square, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if q_cov.nrows() != a.nrows() || q_cov.ncols() != a.nrows() {
            return Err(Error::Config(
                "process noise covariance must match state dimension".into(),
            ));
        }
        let noise = CovFactor::from_covariance(&q_cov)?;
        Ok(Self { a, q_cov, noise })
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn q_cov(&self) -> &DMatrix<f64> {
        &self.q_cov
    }

    pub fn noise(&self) -> &CovFactor {
        &self.noise
    }
}

/// Sensor `y_k(t) = H_k x(t) + v_k(t)`, `v_k ~ N(0, R_k)`.
#[derive(Debug, Clone)]
pub struct SensorModel {
    h: DMatrix<f64>,
    r: DMatrix<f64>,
    noise: CovFactor,
}

impl SensorModel {
    pub fn new(h: DMatrix<f64>, r: DMatrix<f64>) -> Result<Self> {
        if r.nrows() != h.nrows() || r.ncols() != h.nrows() {
            return Err(Error::Config(format!(
                "observation noise covariance {}x{} does not match {} observation rows",
                r.nrows(),
                r.ncols(),
                h.nrows()
            )));
        }
        let noise = CovFactor::from_covariance(&r)?;
        Ok(Self { h, r, noise })
    }

    /// Observation dimension `p_k`.
    pub fn obs_dim(&self) -> usize {
        self.h.nrows()
    }

    pub fn state_dim(&self) -> usize {
        self.h.ncols()
    }

    pub fn h(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }

    pub fn noise(&self) -> &CovFactor {
        &self.noise
    }
}

/// Advances the plant one step: `A x + w`.
pub fn process_step(x: &DVector<f64>, model: &ProcessModel, rng: &mut RngStream) -> Result<DVector<f64>> {
    if x.len() != model.dim() {
        return Err(Error::Config(format!(
            "state has dimension {}, model expects {}",
            x.len(),
            model.dim()
        )));
    }
    Ok(model.a() * x + model.noise.sample_centered(rng))
}

/// Produces one observation: `H x + v`.
pub fn observe(x: &DVector<f64>, sensor: &SensorModel, rng: &mut RngStream) -> Result<DVector<f64>> {
    if x.len() != sensor.state_dim() {
        return Err(Error::Config(format!(
            "state has dimension {}, sensor expects {}",
            x.len(),
            sensor.state_dim()
        )));
    }
    Ok(sensor.h() * x + sensor.noise.sample_centered(rng))
}
