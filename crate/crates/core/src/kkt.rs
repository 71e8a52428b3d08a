//! Per-step attack synthesis from first-order stationarity of the composite
//! objective, and its online variants that adapt the Lagrange multiplier.
//!
//! The composite objective depends on the bias parameters `(M_k, d_k)` only
//! through the combination `M_k theta_k + d_k`. With the Frobenius
//! regularizer on `M_k`, joint stationarity therefore forces `M_k* = 0`,
//! leaving a small positive (semi-)definite linear system for `d_k*`; the
//! bias-noise factor satisfies `(G'G + lambda Sigma^{-1}) U = 0`, so
//! `U_k* = 0` as well. For fixed mixing matrices the problem is convex and
//! the stationary point is the global minimizer.

use nalgebra::{DMatrix, DVector};

use crate::attack::{AttackParams, NodeAttackParams};
use crate::detector::DetectorConfig;
use crate::error::{Error, Result};
use crate::linalg::lstsq;
use crate::moments::MomentContext;
use crate::optimizer::OptimizerState;
use crate::sim::{moment_context, SimPath, SimStepOutput, SimStreams};
use crate::system::SystemModel;

/// Stationary attack parameters at one multiplier value.
#[derive(Debug, Clone)]
pub struct KktSolution {
    /// Per-node parameters; the `U` and `M` components are identically zero.
    pub params: Vec<NodeAttackParams>,
    pub lambda_used: f64,
    /// Norm of the analytic gradient of the regularized objective at the
    /// solution, over the free parameters.
    pub residual_norm: f64,
    /// True when any per-node system was rank-deficient and solved in the
    /// least-squares sense.
    pub least_squares_fallback: bool,
}

/// Shared per-node quantities entering gradients and stationarity systems.
struct NodeContext {
    gtg: DMatrix<f64>,
    sigma_inv: DMatrix<f64>,
    s_vec: DVector<f64>,
    phi_c: DVector<f64>,
    gz: DVector<f64>,
    u0: DVector<f64>,
    w1: DMatrix<f64>,
    w2: DMatrix<f64>,
}

fn node_context(k: usize, ctx: &MomentContext) -> NodeContext {
    let sys = ctx.system;
    let a = sys.process.a();
    let g = &sys.gains.g[k];
    let c_gain = &sys.gains.c[k];
    let h = sys.sensors[k].h();
    let q = sys.state_dim();
    let degree = sys.topology.degree(k) as f64;

    let phi = h * a;
    let c_vec = ctx.xhat_central - ctx.x_star;
    let s_vec = &phi * &ctx.thetas[k];
    let phi_c = &phi * &c_vec;
    let gz = &phi_c - &s_vec; // Phi * (xhat - xhat_k)

    let mut neighbor_sum = DVector::zeros(q);
    for &j in sys.topology.neighbors(k) {
        neighbor_sum += &ctx.thetas[j];
    }
    let u0 = (a - degree * (c_gain * a)) * &ctx.thetas[k] + (c_gain * a) * neighbor_sum
        - (DMatrix::identity(q, q) - a) * ctx.x_star;

    let hqh = h * sys.process.q_cov() * h.transpose();
    let p_tilde = ctx.rcov_central + &c_vec * c_vec.transpose();
    let w1 = &hqh + sys.sensors[k].r() + &phi * p_tilde * phi.transpose();
    let w2 = &hqh + sys.sensors[k].r() + &phi * ctx.rcov_central * phi.transpose();

    NodeContext {
        gtg: g.transpose() * g,
        sigma_inv: ctx.sigma_inv[k].clone(),
        s_vec,
        phi_c,
        gz,
        u0,
        w1,
        w2,
    }
}

/// Analytic gradient of the regularized composite objective with respect to
/// one node's `(T_k, M_k, d_k)`, holding everything else fixed.
pub fn param_gradient(
    k: usize,
    ctx: &MomentContext,
    params_k: &NodeAttackParams,
    lambda: f64,
    xi: f64,
) -> (DMatrix<f64>, DMatrix<f64>, DVector<f64>) {
    let nc = node_context(k, ctx);
    let sys = ctx.system;
    let g = &sys.gains.g[k];
    let t = &params_k.t_mat;
    let theta = &ctx.thetas[k];

    let beta = params_k.bias_mean(theta);
    let drift = ctx.drift(k, params_k);
    let m_vec = t * &nc.gz + &beta;

    // gradient in d: the objective sees (M, d) only through beta
    let grad_d = 2.0
        * (g.transpose() * &drift
            + &nc.gtg * t * &nc.phi_c
            + lambda * &nc.sigma_inv * &m_vec);

    // gradient in M follows by the chain rule through beta
    let grad_m = &grad_d * theta.transpose() + 2.0 * xi * &params_k.m_mat;

    // gradient in T
    let u_full = &nc.u0 + g * &beta;
    let k1 = &nc.s_vec * nc.s_vec.transpose() + &nc.w1
        - &nc.phi_c * nc.s_vec.transpose()
        - &nc.s_vec * nc.phi_c.transpose();
    let grad_t = 2.0
        * (g.transpose() * (-(&drift) * nc.s_vec.transpose() + &u_full * nc.phi_c.transpose())
            + &nc.gtg * t * k1
            + lambda * &nc.sigma_inv * (t * (&nc.w2 + &nc.gz * nc.gz.transpose()) + &m_vec * nc.gz.transpose()));

    (grad_t, grad_m, grad_d)
}

fn identity_params(k: usize, system: &SystemModel) -> NodeAttackParams {
    NodeAttackParams::identity(system.sensors[k].obs_dim(), system.state_dim())
}

/// Solves the stationarity system with every `T_k` held fixed. Convex in
/// the remaining parameters, so the result is the global minimizer of the
/// regularized relaxation.
pub fn solve_kkt_fixed_t(
    ctx: &MomentContext,
    t_mats: &[DMatrix<f64>],
    attacked: &[bool],
    lambda: f64,
    xi: f64,
) -> Result<KktSolution> {
    let n = ctx.system.node_count();
    let mut params = Vec::with_capacity(n);
    let mut fallback = false;
    for k in 0..n {
        if !attacked[k] {
            params.push(identity_params(k, ctx.system));
            continue;
        }
        let nc = node_context(k, ctx);
        let t = &t_mats[k];
        let b_mat = &nc.gtg + lambda * &nc.sigma_inv;
        let rhs = -(ctx.system.gains.g[k].transpose() * &nc.u0
            + &nc.gtg * t * (&nc.phi_c - &nc.s_vec)
            + lambda * &nc.sigma_inv * t * &nc.gz);
        let (d_star, deficient) = lstsq(&b_mat, &rhs).map_err(|e| Error::Solver {
            node: k,
            msg: e.to_string(),
        })?;
        fallback |= deficient;
        let p = ctx.system.sensors[k].obs_dim();
        let q = ctx.system.state_dim();
        params.push(NodeAttackParams {
            t_mat: t.clone(),
            u_mat: DMatrix::zeros(p, p),
            m_mat: DMatrix::zeros(p, q),
            d_vec: d_star,
        });
    }

    let residual = stationarity_residual(ctx, &params, attacked, lambda, xi, false);
    if residual > 1e-8 && !fallback {
        return Err(Error::Solver {
            node: usize::MAX,
            msg: format!("stationarity residual {residual:.3e} above tolerance"),
        });
    }
    Ok(KktSolution {
        params,
        lambda_used: lambda,
        residual_norm: residual,
        least_squares_fallback: fallback,
    })
}

/// Solves the joint stationarity system in `(T_k, d_k)` per node. The
/// problem is a quadratically-coupled program that need not be convex in
/// `T`, so the result is a stationary point, not necessarily the global
/// minimizer; rank-deficient systems fall back to a least-squares solve and
/// are flagged.
pub fn solve_kkt_general_t(
    ctx: &MomentContext,
    attacked: &[bool],
    lambda: f64,
    xi: f64,
) -> Result<KktSolution> {
    let n = ctx.system.node_count();
    let mut params = Vec::with_capacity(n);
    let mut fallback = false;
    for k in 0..n {
        if !attacked[k] {
            params.push(identity_params(k, ctx.system));
            continue;
        }
        let nc = node_context(k, ctx);
        let p = ctx.system.sensors[k].obs_dim();
        let q = ctx.system.state_dim();
        let g = &ctx.system.gains.g[k];
        let dim = p * p + p;

        let k1 = &nc.s_vec * nc.s_vec.transpose() + &nc.w1
            - &nc.phi_c * nc.s_vec.transpose()
            - &nc.s_vec * nc.phi_c.transpose();
        let k2 = &nc.w2 + &nc.gz * nc.gz.transpose();
        let diff = &nc.phi_c - &nc.s_vec;
        let g_u0 = g.transpose() * &nc.u0;

        let mut sys_mat = DMatrix::zeros(dim, dim);
        let mut rhs = DVector::zeros(dim);

        // T-stationarity rows (vec T is column-major)
        let tt_block = k1.kronecker(&nc.gtg) + lambda * k2.kronecker(&nc.sigma_inv);
        sys_mat.view_mut((0, 0), (p * p, p * p)).copy_from(&tt_block);
        let td_block = diff.kronecker(&nc.gtg) + lambda * nc.gz.kronecker(&nc.sigma_inv);
        sys_mat.view_mut((0, p * p), (p * p, p)).copy_from(&td_block);
        let t_rhs = -diff.kronecker(&g_u0);
        rhs.rows_mut(0, p * p).copy_from(&t_rhs);

        // d-stationarity rows
        let dt_block =
            diff.transpose().kronecker(&nc.gtg) + lambda * nc.gz.transpose().kronecker(&nc.sigma_inv);
        sys_mat.view_mut((p * p, 0), (p, p * p)).copy_from(&dt_block);
        let dd_block = &nc.gtg + lambda * &nc.sigma_inv;
        sys_mat.view_mut((p * p, p * p), (p, p)).copy_from(&dd_block);
        rhs.rows_mut(p * p, p).copy_from(&(-&g_u0));

        let (sol, deficient) = lstsq(&sys_mat, &rhs).map_err(|e| Error::Solver {
            node: k,
            msg: e.to_string(),
        })?;
        fallback |= deficient;

        let t_star = DMatrix::from_column_slice(p, p, &sol.as_slice()[..p * p]);
        let d_star = DVector::from_column_slice(&sol.as_slice()[p * p..]);
        params.push(NodeAttackParams {
            t_mat: t_star,
            u_mat: DMatrix::zeros(p, p),
            m_mat: DMatrix::zeros(p, q),
            d_vec: d_star,
        });
    }

    let residual = stationarity_residual(ctx, &params, attacked, lambda, xi, true);
    Ok(KktSolution {
        params,
        lambda_used: lambda,
        residual_norm: residual,
        least_squares_fallback: fallback,
    })
}

/// Norm of the analytic gradient over the free parameters of attacked nodes.
fn stationarity_residual(
    ctx: &MomentContext,
    params: &[NodeAttackParams],
    attacked: &[bool],
    lambda: f64,
    xi: f64,
    include_t: bool,
) -> f64 {
    let mut acc = 0.0;
    for (k, p) in params.iter().enumerate() {
        if !attacked[k] {
            continue;
        }
        let (gt, gm, gd) = param_gradient(k, ctx, p, lambda, xi);
        acc += gm.norm_squared() + gd.norm_squared();
        if include_t {
            acc += gt.norm_squared();
        }
    }
    acc.sqrt()
}

/// Finds the multiplier at which the total expected forged-innovation
/// statistic meets `constraint_rhs`, by bisection over `[0, a0]`.
///
/// If the constraint already holds at `lambda = 0`, the unconstrained
/// minimizer is returned with `lambda* = 0` (complementary slackness).
pub fn find_lambda_star(
    constraint_rhs: f64,
    ctx: &MomentContext,
    t_mats: &[DMatrix<f64>],
    attacked: &[bool],
    xi: f64,
    a0: f64,
) -> Result<(f64, KktSolution)> {
    let eval = |lambda: f64| -> Result<(f64, KktSolution)> {
        let sol = solve_kkt_fixed_t(ctx, t_mats, attacked, lambda, xi)?;
        let total: f64 = (0..sol.params.len())
            .map(|k| crate::moments::expected_z_quad(k, ctx, &sol.params[k]))
            .sum();
        Ok((total, sol))
    };

    let (v0, sol0) = eval(0.0)?;
    if v0 <= constraint_rhs {
        return Ok((0.0, sol0));
    }
    let (v_hi, _) = eval(a0)?;
    if v_hi > constraint_rhs {
        return Err(Error::NonConvergence(format!(
            "constraint value {v_hi:.6e} at lambda = {a0} still above target {constraint_rhs:.6e}; increase the multiplier bound"
        )));
    }

    let tol = 1e-6 * constraint_rhs;
    let mut lo = 0.0;
    let mut hi = a0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let (v, sol) = eval(mid)?;
        if (v - constraint_rhs).abs() < tol {
            return Ok((mid, sol));
        }
        if v > constraint_rhs {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // interval has collapsed; return the midpoint solution
    let mid = 0.5 * (lo + hi);
    let (_, sol) = eval(mid)?;
    Ok((mid, sol))
}

/// Online multiplier-adaptation variants. The low-complexity forms reuse the
/// main-path statistic; the others read it off an independent shadow replay.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KktVariant {
    Statistic,
    Alarm,
    StatisticLc,
    AlarmLc,
}

impl KktVariant {
    pub fn uses_shadow(self) -> bool {
        matches!(self, KktVariant::Statistic | KktVariant::Alarm)
    }
}

/// Log of one online KKT step.
#[derive(Debug, Clone)]
pub struct KktStepLog {
    pub t: usize,
    pub lambda: f64,
    pub main: SimStepOutput,
    /// Conditional expectations at the applied parameters (for reporting and
    /// the detection-probability bound).
    pub expected_z_quad: Vec<f64>,
    pub residual_norm: f64,
    pub lambda_updated: bool,
}

/// Configuration of the online KKT runner.
#[derive(Debug, Clone)]
pub struct KktRunner {
    pub variant: KktVariant,
    pub xi: f64,
    /// Fixed per-node mixing matrices; `None` solves for `T_k` jointly.
    pub t_mats: Option<Vec<DMatrix<f64>>>,
    pub attacked: Vec<bool>,
    pub x_star: DVector<f64>,
    /// Replace the rolling shadow path by a full re-simulation from t = 0 at
    /// every multiplier update. Faithful to the analysis but O(t) per
    /// update; only sensible for short runs.
    pub strict_replay: bool,
    /// Seed for strict-replay streams.
    pub replay_seed: u64,
}

impl KktRunner {
    fn solve(&self, ctx: &MomentContext, lambda: f64) -> Result<KktSolution> {
        match &self.t_mats {
            Some(ts) => solve_kkt_fixed_t(ctx, ts, &self.attacked, lambda, self.xi),
            None => solve_kkt_general_t(ctx, &self.attacked, lambda, self.xi),
        }
    }

    fn policy_params(&self, sol: KktSolution) -> AttackParams {
        AttackParams {
            nodes: sol.params,
            x_star: self.x_star.clone(),
            attacked: self.attacked.clone(),
        }
    }
}

/// One iteration of the online KKT attack: solve at the current multiplier,
/// attack the main path, produce the variant's feedback signal (shadow or
/// main path), and let the optimizer take its slow-timescale step.
pub fn olaade_kkt_step(
    main: &mut SimPath,
    shadow: Option<&mut SimPath>,
    system: &SystemModel,
    det_cfg: &DetectorConfig,
    opt: &mut OptimizerState,
    runner: &KktRunner,
) -> Result<KktStepLog> {
    let lambda = opt.lambda();

    let thetas = main.thetas(&runner.x_star);
    let ctx = moment_context(system, det_cfg, &thetas, &main.attacker, &runner.x_star);
    let sol = runner.solve(&ctx, lambda)?;
    let residual_norm = sol.residual_norm;
    let params = runner.policy_params(sol);
    let expected_z_quad: Vec<f64> = (0..system.node_count())
        .map(|k| crate::moments::expected_z_quad(k, &ctx, &params.nodes[k]))
        .collect();

    let main_out = main.step(system, det_cfg, &params)?;

    let signal = match runner.variant {
        KktVariant::StatisticLc => main_out.z_quad_stat - opt.hyper_c * det_cfg.constraint_rhs(),
        KktVariant::AlarmLc => (main_out.detector.any_alarm as u8 as f64) - det_cfg.alpha,
        KktVariant::Statistic | KktVariant::Alarm => {
            let (stat, alarm) = if runner.strict_replay {
                strict_replay_signal(system, det_cfg, opt, runner, main.t)?
            } else {
                let shadow = shadow.ok_or_else(|| {
                    Error::Config("shadow path required for non-LC variants".into())
                })?;
                let sh_thetas = shadow.thetas(&runner.x_star);
                let sh_ctx =
                    moment_context(system, det_cfg, &sh_thetas, &shadow.attacker, &runner.x_star);
                let sh_sol = runner.solve(&sh_ctx, lambda)?;
                let sh_params = runner.policy_params(sh_sol);
                let out = shadow.step(system, det_cfg, &sh_params)?;
                (out.z_quad_stat, out.detector.any_alarm)
            };
            match runner.variant {
                KktVariant::Statistic => stat - opt.hyper_c * det_cfg.constraint_rhs(),
                _ => (alarm as u8 as f64) - det_cfg.alpha,
            }
        }
    };

    let lambda_updated = opt.observe(signal);

    Ok(KktStepLog {
        t: main.t,
        lambda: opt.lambda(),
        main: main_out,
        expected_z_quad,
        residual_norm,
        lambda_updated,
    })
}

/// Full re-simulation of an independent sequence under the frozen current
/// multiplier, returning the final-step statistic and alarm indicator.
fn strict_replay_signal(
    system: &SystemModel,
    det_cfg: &DetectorConfig,
    opt: &OptimizerState,
    runner: &KktRunner,
    horizon: usize,
) -> Result<(f64, bool)> {
    let q = system.state_dim();
    let base = 1_000 + 8 * opt.updates() as u64;
    let streams = SimStreams::from_base(runner.replay_seed, base);
    let mut path = SimPath::init(
        system,
        &DVector::zeros(q),
        &DMatrix::identity(q, q),
        &DVector::zeros(q),
        streams,
    )?;
    let mut last = (0.0, false);
    for _ in 0..horizon.max(1) {
        let thetas = path.thetas(&runner.x_star);
        let ctx = moment_context(system, det_cfg, &thetas, &path.attacker, &runner.x_star);
        let sol = runner.solve(&ctx, opt.lambda())?;
        let params = runner.policy_params(sol);
        let out = path.step(system, det_cfg, &params)?;
        last = (out.z_quad_stat, out.detector.any_alarm);
    }
    Ok(last)
}
