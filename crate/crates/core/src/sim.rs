//! Shared simulation engine for attack runs.
//!
//! A `SimPath` owns one realization of the plant, the agent network, the
//! attacker's central filter and the detector, together with its private
//! random streams. Both online attack algorithms advance a path one step at
//! a time with whatever parameters their policies produce; shadow replays
//! are simply additional paths with their own streams.

use nalgebra::{DMatrix, DVector};

use crate::attack::{apply_attack, AttackParams};
use crate::detector::{detector_step, DetectorConfig, DetectorOutput, DetectorState};
use crate::error::{Error, Result};
use crate::filter::{kalman_predict_update, AttackerFilterState};
use crate::linalg::CovFactor;
use crate::moments::MomentContext;
use crate::network::{kcf_step, predict_all, NodeState};
use crate::process::{observe, process_step};
use crate::rng::RngStream;
use crate::system::SystemModel;

/// Deviation norm beyond which a run is aborted as unstable.
pub const ABORT_NORM: f64 = 1e9;

/// Private random streams of one simulation path.
#[derive(Debug, Clone)]
pub struct SimStreams {
    pub process: RngStream,
    pub obs: RngStream,
    pub attack: RngStream,
}

impl SimStreams {
    /// Conventional stream layout: consecutive stream ids starting at `base`.
    pub fn from_base(seed: u64, base: u64) -> Self {
        Self {
            process: RngStream::new(seed, base),
            obs: RngStream::new(seed, base + 1),
            attack: RngStream::new(seed, base + 2),
        }
    }
}

/// One live simulation trajectory.
#[derive(Debug, Clone)]
pub struct SimPath {
    pub t: usize,
    pub x: DVector<f64>,
    pub nodes: Vec<NodeState>,
    pub attacker: AttackerFilterState,
    pub detector: DetectorState,
    streams: SimStreams,
}

/// Everything observable from one simulation step.
#[derive(Debug, Clone)]
pub struct SimStepOutput {
    /// Realized statistic `sum_k ztilde_k' Sigma_k^{-1} ztilde_k`.
    pub z_quad_stat: f64,
    pub detector: DetectorOutput,
    /// Squared deviation `||theta_k(t)||^2` of each node after the update.
    pub node_dev: Vec<f64>,
}

impl SimPath {
    /// Starts a path at t = 0 with `x(0) ~ N(x0_mean, x0_cov)` and every
    /// node estimate at `xhat0`. The attacker's filter starts from the same
    /// prior the plant is drawn from.
    pub fn init(
        system: &SystemModel,
        x0_mean: &DVector<f64>,
        x0_cov: &DMatrix<f64>,
        xhat0: &DVector<f64>,
        mut streams: SimStreams,
    ) -> Result<Self> {
        let n = system.node_count();
        let factor = CovFactor::from_covariance(x0_cov)?;
        let x = factor.sample(x0_mean, &mut streams.process);
        Ok(Self {
            t: 0,
            x,
            nodes: vec![NodeState::new(xhat0.clone()); n],
            attacker: AttackerFilterState::new(x0_mean.clone(), x0_cov.clone()),
            detector: DetectorState::new(n),
            streams,
        })
    }

    /// Per-node deviations from the target at the current time.
    pub fn thetas(&self, x_star: &DVector<f64>) -> Vec<DVector<f64>> {
        self.nodes.iter().map(|s| s.theta(x_star)).collect()
    }

    /// Advances the path one step under the given attack parameters.
    ///
    /// Order within the step: the plant moves, sensors observe, the attacker
    /// forges each attacked node's innovation, detectors score the received
    /// innovations, the nodes update, and the attacker's own filter absorbs
    /// the true observations.
    pub fn step(
        &mut self,
        system: &SystemModel,
        det_cfg: &DetectorConfig,
        params: &AttackParams,
    ) -> Result<SimStepOutput> {
        let n = system.node_count();
        self.x = process_step(&self.x, &system.process, &mut self.streams.process)?;
        predict_all(&mut self.nodes, &system.process);

        let ys: Vec<DVector<f64>> = system
            .sensors
            .iter()
            .map(|s| observe(&self.x, s, &mut self.streams.obs))
            .collect::<Result<_>>()?;

        let mut received = Vec::with_capacity(n);
        let mut z_tildes = Vec::with_capacity(n);
        for k in 0..n {
            let predicted = system.sensors[k].h() * &self.nodes[k].xbar;
            let z = &ys[k] - &predicted;
            if params.attacked[k] {
                let theta_prev = self.nodes[k].theta(&params.x_star);
                let (zt, yt) = apply_attack(
                    &z,
                    &theta_prev,
                    &predicted,
                    &params.nodes[k],
                    &mut self.streams.attack,
                )?;
                z_tildes.push(zt);
                received.push(yt);
            } else {
                z_tildes.push(z);
                received.push(ys[k].clone());
            }
        }

        let detector = detector_step(&mut self.detector, &z_tildes, det_cfg);
        let z_quad_stat = detector.scores.iter().sum();

        self.nodes = kcf_step(&self.nodes, &received, &system.sensors, &system.topology, &system.gains);
        self.attacker = kalman_predict_update(&self.attacker, &ys, &system.process, &system.sensors)?;
        self.t += 1;

        let node_dev: Vec<f64> = self
            .nodes
            .iter()
            .map(|s| s.theta(&params.x_star).norm_squared())
            .collect();
        let max_norm = node_dev.iter().copied().fold(0.0, f64::max).sqrt();
        if max_norm > ABORT_NORM {
            return Err(Error::Instability {
                t: self.t,
                norm: max_norm,
            });
        }

        Ok(SimStepOutput {
            z_quad_stat,
            detector,
            node_dev,
        })
    }
}

/// Borrow-friendly construction of the moment context for the current step.
pub fn moment_context<'a>(
    system: &'a SystemModel,
    det_cfg: &'a DetectorConfig,
    thetas: &'a [DVector<f64>],
    attacker: &'a AttackerFilterState,
    x_star: &'a DVector<f64>,
) -> MomentContext<'a> {
    MomentContext {
        system,
        sigma_inv: det_cfg.sigma_inv(),
        thetas,
        xhat_central: &attacker.xhat,
        rcov_central: &attacker.rcov,
        x_star,
    }
}
