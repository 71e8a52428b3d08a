//! Closed-form conditional moments of the attacked network, one step ahead.
//!
//! Given everything known at time t-1 (node deviations, the attacker's
//! central estimate and covariance) and the attack parameters applied at
//! time t, these functions evaluate the exact conditional expectations of
//! the squared deviation of each node's next estimate from the target, and
//! of the normalized quadratic form of each forged innovation. The composite
//! objective combines both with a multiplier and a Frobenius regularizer.

use nalgebra::{DMatrix, DVector};

use crate::attack::NodeAttackParams;
use crate::system::SystemModel;

/// Inputs fixed at time t-1, shared by per-node moment evaluations.
#[derive(Debug, Clone, Copy)]
pub struct MomentContext<'a> {
    pub system: &'a SystemModel,
    pub sigma_inv: &'a [DMatrix<f64>],
    /// Per-node deviations `theta_k(t-1) = xhat_k(t-1) - x*`.
    pub thetas: &'a [DVector<f64>],
    /// Central MMSE estimate `xhat(t-1)`.
    pub xhat_central: &'a DVector<f64>,
    /// Central error covariance `R(t-1)`.
    pub rcov_central: &'a DMatrix<f64>,
    pub x_star: &'a DVector<f64>,
}

impl<'a> MomentContext<'a> {
    /// Deterministic drift of node k's deviation recursion, including the
    /// bias mean injected through the Kalman gain.
    pub fn drift(&self, k: usize, params_k: &NodeAttackParams) -> DVector<f64> {
        let sys = self.system;
        let a = sys.process.a();
        let g = &sys.gains.g[k];
        let c = &sys.gains.c[k];
        let degree = sys.topology.degree(k) as f64;
        let tha = &params_k.t_mat * sys.sensors[k].h() * a;
        let q = sys.state_dim();

        let mut neighbor_sum = DVector::zeros(q);
        for &j in sys.topology.neighbors(k) {
            neighbor_sum += &self.thetas[j];
        }
        (a - g * &tha - degree * (c * a)) * &self.thetas[k]
            + (c * a) * neighbor_sum
            - (DMatrix::identity(q, q) - a) * self.x_star
            + g * params_k.bias_mean(&self.thetas[k])
    }
}

/// Conditional expectation of `||theta_k(t)||^2` given time-(t-1) data.
pub fn expected_theta_sq(k: usize, ctx: &MomentContext, params_k: &NodeAttackParams) -> f64 {
    let sys = ctx.system;
    let a = sys.process.a();
    let g = &sys.gains.g[k];
    let h = sys.sensors[k].h();
    let t = &params_k.t_mat;
    let gt = g * t;
    let gth = &gt * h;
    let gtha = &gth * a;

    let drift = ctx.drift(k, params_k);
    let phi_mean = ctx.xhat_central - ctx.x_star;

    // noise traces: process noise, bias noise, observation noise
    let s_cov = params_k.s_cov();
    let noise_tr = (&gth * sys.process.q_cov() * gth.transpose()).trace()
        + (g * s_cov * g.transpose()).trace()
        + (&gt * sys.sensors[k].r() * gt.transpose()).trace();

    // cross term with the conditional mean of the plant deviation
    let cross = 2.0 * drift.dot(&(&gtha * &phi_mean));

    // second moment of the plant deviation passed through G T H A
    let second = ctx.rcov_central + &phi_mean * phi_mean.transpose();
    let tail = (&gtha * second * gtha.transpose()).trace();

    drift.norm_squared() + noise_tr + cross + tail
}

/// Conditional expectation of `ztilde_k' Sigma_k^{-1} ztilde_k` given
/// time-(t-1) data. Always non-negative.
pub fn expected_z_quad(k: usize, ctx: &MomentContext, params_k: &NodeAttackParams) -> f64 {
    let sys = ctx.system;
    let a = sys.process.a();
    let h = sys.sensors[k].h();
    let t = &params_k.t_mat;
    let th = t * h;
    let tha = &th * a;

    // conditional covariance of the forged innovation
    let cov = &th * sys.process.q_cov() * th.transpose()
        + t * sys.sensors[k].r() * t.transpose()
        + params_k.s_cov()
        + &tha * ctx.rcov_central * tha.transpose();

    // conditional mean: central-vs-node prediction gap plus the bias mean
    let gap = ctx.xhat_central - ctx.x_star - &ctx.thetas[k];
    let mean = &tha * gap + params_k.bias_mean(&ctx.thetas[k]);

    let sigma_inv = &ctx.sigma_inv[k];
    (sigma_inv * cov).trace() + (mean.transpose() * sigma_inv * &mean)[(0, 0)]
}

/// Per-node conditional moments plus the composite objective.
#[derive(Debug, Clone)]
pub struct MomentReport {
    pub theta_sq: Vec<f64>,
    pub z_quad: Vec<f64>,
    /// `sum_k (theta_sq + lambda * z_quad)`.
    pub f_t: f64,
    /// `f_t + xi * sum_k ||M_k||_F^2`.
    pub f_regularized: f64,
}

/// Evaluates the composite objective at the given parameters.
pub fn composite_f(
    ctx: &MomentContext,
    params: &[NodeAttackParams],
    lambda: f64,
    xi: f64,
) -> MomentReport {
    let n = params.len();
    let mut theta_sq = Vec::with_capacity(n);
    let mut z_quad = Vec::with_capacity(n);
    let mut f_t = 0.0;
    let mut reg = 0.0;
    for k in 0..n {
        let ts = expected_theta_sq(k, ctx, &params[k]);
        let zq = expected_z_quad(k, ctx, &params[k]);
        f_t += ts + lambda * zq;
        reg += xi * params[k].m_mat.norm_squared();
        theta_sq.push(ts);
        z_quad.push(zq);
    }
    MomentReport {
        theta_sq,
        z_quad,
        f_t,
        f_regularized: f_t + reg,
    }
}
