//! Brute-force Monte Carlo reference for the closed-form conditional
//! moments. The deviation and forged-innovation recursions are propagated
//! one step with fresh noise draws and averaged; nothing here shares code
//! with the closed-form path, so agreement is evidence of correctness for
//! both.

use nalgebra::DVector;

use crate::attack::NodeAttackParams;
use crate::error::Result;
use crate::linalg::CovFactor;
use crate::moments::MomentContext;
use crate::rng::RngStream;

/// One-step Monte Carlo estimate of `E(||theta_k(t)||^2 | F_{t-1})`.
///
/// Draws the plant deviation from its conditional law, the process,
/// observation and bias noises from their models, pushes them through the
/// deviation recursion, and averages the squared norm.
pub fn mc_expected_theta_sq(
    k: usize,
    ctx: &MomentContext,
    params_k: &NodeAttackParams,
    samples: usize,
    rng: &mut RngStream,
) -> Result<f64> {
    let sys = ctx.system;
    let a = sys.process.a();
    let g = &sys.gains.g[k];
    let c = &sys.gains.c[k];
    let h = sys.sensors[k].h();
    let degree = sys.topology.degree(k) as f64;
    let q = sys.state_dim();

    let gt = g * &params_k.t_mat;
    let gth = &gt * h;
    let gtha = &gth * a;

    let mut neighbor_sum = DVector::zeros(q);
    for &j in sys.topology.neighbors(k) {
        neighbor_sum += &ctx.thetas[j];
    }
    let base = (a - &gtha - degree * (c * a)) * &ctx.thetas[k] + (c * a) * neighbor_sum
        - (nalgebra::DMatrix::identity(q, q) - a) * ctx.x_star;

    let phi_mean = ctx.xhat_central - ctx.x_star;
    let phi_factor = CovFactor::from_covariance(ctx.rcov_central)?;
    let w_factor = sys.process.noise().clone();
    let v_factor = sys.sensors[k].noise().clone();
    let b_factor = CovFactor::from_covariance(&params_k.s_cov())?;
    let b_mean = params_k.bias_mean(&ctx.thetas[k]);

    let mut acc = 0.0;
    for _ in 0..samples {
        let phi = phi_factor.sample(&phi_mean, rng);
        let w = w_factor.sample_centered(rng);
        let v = v_factor.sample_centered(rng);
        let b = b_factor.sample(&b_mean, rng);
        let theta_next = &base + &gtha * phi + &gth * w + g * b + &gt * v;
        acc += theta_next.norm_squared();
    }
    Ok(acc / samples as f64)
}

/// One-step Monte Carlo estimate of
/// `E(ztilde_k' Sigma_k^{-1} ztilde_k | F_{t-1})`.
pub fn mc_expected_z_quad(
    k: usize,
    ctx: &MomentContext,
    params_k: &NodeAttackParams,
    samples: usize,
    rng: &mut RngStream,
) -> Result<f64> {
    let sys = ctx.system;
    let a = sys.process.a();
    let h = sys.sensors[k].h();
    let t = &params_k.t_mat;
    let th = t * h;
    let tha = &th * a;

    let phi_mean = ctx.xhat_central - ctx.x_star;
    let phi_factor = CovFactor::from_covariance(ctx.rcov_central)?;
    let w_factor = sys.process.noise().clone();
    let v_factor = sys.sensors[k].noise().clone();
    let b_factor = CovFactor::from_covariance(&params_k.s_cov())?;
    let b_mean = params_k.bias_mean(&ctx.thetas[k]);
    let sigma_inv = &ctx.sigma_inv[k];

    let mut acc = 0.0;
    for _ in 0..samples {
        let phi = phi_factor.sample(&phi_mean, rng);
        let w = w_factor.sample_centered(rng);
        let v = v_factor.sample_centered(rng);
        let b = b_factor.sample(&b_mean, rng);
        // ztilde = T H A (x(t-1) - xhat_k(t-1)) + T H w + T v + b, with
        // x(t-1) - xhat_k(t-1) = phi - theta_k
        let gap = &phi - &ctx.thetas[k];
        let z_tilde = &tha * gap + &th * w + t * v + b;
        acc += (z_tilde.transpose() * sigma_inv * &z_tilde)[(0, 0)];
    }
    Ok(acc / samples as f64)
}
