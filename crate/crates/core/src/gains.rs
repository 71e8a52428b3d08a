//! Kalman and consensus gain synthesis for the node estimators.
//!
//! Each node gets the steady-state Kalman gain of its local observation pair,
//! obtained from the discrete algebraic Riccati equation, and a consensus
//! gain proportional to the local prior covariance. The consensus weight is
//! scaled down until the no-attack closed loop is stable.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{observability_rank, spd_pseudo_inverse, spectral_radius, symmetrize};
use crate::process::{ProcessModel, SensorModel};
use crate::stability::build_closed_loop_matrix;
use crate::topology::Topology;

/// Per-node Kalman gains `G_k` (q x p_k) and consensus gains `C_k` (q x q).
#[derive(Debug, Clone, PartialEq)]
pub struct KcfGains {
    pub g: Vec<DMatrix<f64>>,
    pub c: Vec<DMatrix<f64>>,
}

impl KcfGains {
    pub fn validate(&self, process: &ProcessModel, sensors: &[SensorModel]) -> Result<()> {
        if self.g.len() != sensors.len() || self.c.len() != sensors.len() {
            return Err(Error::Config("one gain pair required per node".into()));
        }
        let q = process.dim();
        for (k, (g, c)) in self.g.iter().zip(&self.c).enumerate() {
            if g.nrows() != q || g.ncols() != sensors[k].obs_dim() {
                return Err(Error::Config(format!(
                    "gain G_{k} is {}x{}, expected {q}x{}",
                    g.nrows(),
                    g.ncols(),
                    sensors[k].obs_dim()
                )));
            }
            if c.nrows() != q || c.ncols() != q {
                return Err(Error::Config(format!("gain C_{k} must be {q}x{q}")));
            }
        }
        Ok(())
    }
}

/// Steady-state prior covariance of the local pair `(A, H, Q, R)` from the
/// discrete algebraic Riccati recursion.
pub fn dare_steady_prior(
    a: &DMatrix<f64>,
    h: &DMatrix<f64>,
    q_cov: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let mut p = q_cov.clone() + DMatrix::identity(a.nrows(), a.nrows());
    for _ in 0..200_000 {
        let s = h * &p * h.transpose() + r;
        let (s_inv, _) = spd_pseudo_inverse(&s, "Riccati innovation covariance")?;
        let mut next = a * (&p - &p * h.transpose() * &s_inv * h * &p) * a.transpose() + q_cov;
        symmetrize(&mut next);
        let delta = (&next - &p).amax();
        p = next;
        if delta < 1e-13 * p.amax().max(1.0) {
            return Ok(p);
        }
    }
    Err(Error::NonConvergence(
        "Riccati recursion did not reach a fixed point".into(),
    ))
}

/// Synthesizes `(G_k, C_k)` for every node and verifies the no-attack closed
/// loop is stable. Fails if no consensus scaling renders it stable.
pub fn compute_kcf_gains(
    process: &ProcessModel,
    sensors: &[SensorModel],
    topology: &Topology,
    consensus_weight: f64,
) -> Result<KcfGains> {
    if consensus_weight < 0.0 {
        return Err(Error::Config("consensus weight must be non-negative".into()));
    }
    for (k, s) in sensors.iter().enumerate() {
        if observability_rank(process.a(), s.h()) < process.dim() {
            return Err(Error::Config(format!(
                "local pair (A, H_{k}) is not observable"
            )));
        }
    }

    let mut g = Vec::with_capacity(sensors.len());
    let mut c_base = Vec::with_capacity(sensors.len());
    for s in sensors {
        let p_bar = dare_steady_prior(process.a(), s.h(), process.q_cov(), s.r())?;
        let s_mat = s.h() * &p_bar * s.h().transpose() + s.r();
        let (s_inv, _) = spd_pseudo_inverse(&s_mat, "steady innovation covariance")?;
        let gain = &p_bar * s.h().transpose() * &s_inv;
        let gamma = consensus_weight / (1.0 + p_bar.norm());
        g.push(gain);
        c_base.push(gamma * p_bar);
    }

    let mut scale = 1.0;
    for _ in 0..60 {
        let c: Vec<DMatrix<f64>> = c_base.iter().map(|m| m * scale).collect();
        let gains = KcfGains { g: g.clone(), c };
        let m = build_closed_loop_matrix(process, sensors, topology, &gains, None);
        if spectral_radius(&m) < 1.0 {
            return Ok(gains);
        }
        scale *= 0.5;
    }
    Err(Error::GainSynthesis(
        "closed loop unstable at every consensus scaling tried; use a smaller consensus_weight"
            .into(),
    ))
}
