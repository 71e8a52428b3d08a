//! Per-node sliding-window chi-squared detection on innovation sequences.
//!
//! Node k scores each innovation as `z' Sigma_k^{-1} z` and alarms when the
//! sum of scores over the last J slots reaches the threshold. Before J
//! samples exist the window sums whatever is available, so the global alarm
//! indicator is defined for every t.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::spd_pseudo_inverse;
use crate::network::NoAttackRecord;

#[derive(Debug, Clone)]
pub struct DetectorConfig {
    pub eta: f64,
    pub window: usize,
    pub alpha: f64,
    sigma: Vec<DMatrix<f64>>,
    sigma_inv: Vec<DMatrix<f64>>,
}

impl DetectorConfig {
    pub fn new(eta: f64, window: usize, alpha: f64, sigma: Vec<DMatrix<f64>>) -> Result<Self> {
        if eta <= 0.0 {
            return Err(Error::Config("threshold eta must be positive".into()));
        }
        if window == 0 {
            return Err(Error::Config("window length must be at least 1".into()));
        }
        if !(0.0 < alpha && alpha < 1.0) {
            return Err(Error::Config("alpha must lie in (0, 1)".into()));
        }
        let mut sigma_inv = Vec::with_capacity(sigma.len());
        for (k, s) in sigma.iter().enumerate() {
            let min_eig = crate::linalg::min_eigenvalue(s);
            if min_eig <= 0.0 {
                return Err(Error::Config(format!(
                    "Sigma_{k} is not positive definite (min eigenvalue {min_eig:.3e})"
                )));
            }
            let (inv, _) = spd_pseudo_inverse(s, "detector covariance")?;
            sigma_inv.push(inv);
        }
        Ok(Self {
            eta,
            window,
            alpha,
            sigma,
            sigma_inv,
        })
    }

    pub fn node_count(&self) -> usize {
        self.sigma.len()
    }

    pub fn sigma(&self) -> &[DMatrix<f64>] {
        &self.sigma
    }

    pub fn sigma_inv(&self) -> &[DMatrix<f64>] {
        &self.sigma_inv
    }

    /// Quadratic score of one innovation at node k.
    pub fn score(&self, k: usize, z: &DVector<f64>) -> f64 {
        (z.transpose() * &self.sigma_inv[k] * z)[(0, 0)]
    }

    /// Constraint level `alpha * eta / J` used by the attack design.
    pub fn constraint_rhs(&self) -> f64 {
        self.alpha * self.eta / self.window as f64
    }
}

/// Ring buffers of recent scores plus running window sums, one per node.
#[derive(Debug, Clone)]
pub struct DetectorState {
    buffers: Vec<VecDeque<f64>>,
    sums: Vec<f64>,
}

impl DetectorState {
    pub fn new(node_count: usize) -> Self {
        Self {
            buffers: vec![VecDeque::new(); node_count],
            sums: vec![0.0; node_count],
        }
    }

    pub fn window_stat(&self, k: usize) -> f64 {
        self.sums[k]
    }

    /// Recomputes the window statistic from the buffer contents.
    pub fn window_stat_recomputed(&self, k: usize) -> f64 {
        self.buffers[k].iter().sum()
    }
}

/// Output of one detector step.
#[derive(Debug, Clone)]
pub struct DetectorOutput {
    pub scores: Vec<f64>,
    pub window_stats: Vec<f64>,
    pub alarms: Vec<bool>,
    /// True when at least one node alarms at this step.
    pub any_alarm: bool,
}

/// Scores the innovations received at each node and updates the sliding
/// windows.
pub fn detector_step(
    state: &mut DetectorState,
    innovations: &[DVector<f64>],
    config: &DetectorConfig,
) -> DetectorOutput {
    let n = innovations.len();
    let mut scores = Vec::with_capacity(n);
    let mut window_stats = Vec::with_capacity(n);
    let mut alarms = Vec::with_capacity(n);
    let mut any = false;
    for k in 0..n {
        let s = config.score(k, &innovations[k]);
        let buf = &mut state.buffers[k];
        buf.push_back(s);
        state.sums[k] += s;
        if buf.len() > config.window {
            state.sums[k] -= buf.pop_front().unwrap();
        }
        let stat = state.sums[k];
        let alarm = stat >= config.eta;
        any |= alarm;
        scores.push(s);
        window_stats.push(stat);
        alarms.push(alarm);
    }
    DetectorOutput {
        scores,
        window_stats,
        alarms,
        any_alarm: any,
    }
}

/// Sample covariance of post-burn-in innovations, one matrix per node,
/// jittered if necessary to stay invertible.
pub fn calibrate_sigma(record: &NoAttackRecord, burn_in: usize) -> Result<Vec<DMatrix<f64>>> {
    if record.len() < burn_in + 1_000 {
        return Err(Error::Calibration(format!(
            "trajectory of {} steps is too short for burn-in {burn_in} (need {} more)",
            record.len(),
            burn_in + 1_000 - record.len()
        )));
    }
    let n_nodes = record.innovations[0].len();
    let count = record.len() - burn_in;
    let mut out = Vec::with_capacity(n_nodes);
    for k in 0..n_nodes {
        let p = record.innovations[0][k].len();
        let mut mean = DVector::zeros(p);
        for t in burn_in..record.len() {
            mean += &record.innovations[t][k];
        }
        mean /= count as f64;
        let mut cov = DMatrix::zeros(p, p);
        for t in burn_in..record.len() {
            let d = &record.innovations[t][k] - &mean;
            cov += &d * d.transpose();
        }
        cov /= count as f64;
        if crate::linalg::min_eigenvalue(&cov) <= 0.0 {
            cov += DMatrix::identity(p, p) * 1e-9;
        }
        if crate::linalg::min_eigenvalue(&cov) <= 0.0 {
            return Err(Error::Calibration(format!(
                "sample covariance at node {k} is singular even after jitter"
            )));
        }
        out.push(cov);
    }
    Ok(out)
}

/// Time-average of the global alarm indicator after a burn-in.
pub fn detection_probability(alarm_series: &[bool], burn_in: usize) -> f64 {
    if alarm_series.len() <= burn_in {
        return 0.0;
    }
    let tail = &alarm_series[burn_in..];
    tail.iter().filter(|&&a| a).count() as f64 / tail.len() as f64
}

/// Markov/union upper bound on the detection probability per unit slot:
/// `(J / eta) * sum_k expected_scores[k]`.
pub fn markov_bound(expected_scores: &[f64], config: &DetectorConfig) -> f64 {
    let total: f64 = expected_scores.iter().sum();
    config.window as f64 / config.eta * total
}
