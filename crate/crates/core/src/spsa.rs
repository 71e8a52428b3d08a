//! Online attack-parameter learning by simultaneous-perturbation stochastic
//! gradient descent on the fast timescale, with the multiplier adapted on
//! the slow timescale.
//!
//! Each iteration perturbs every entry of every node's `(T, M, d)` by a
//! common scale times independent signs, evaluates the regularized composite
//! objective at both perturbed points through the closed-form moments, and
//! moves each entry against the difference quotient. Iterates are clamped
//! entrywise; the applied bias is deterministic (`b_k = M_k theta_k + d_k`).

use nalgebra::{DMatrix, DVector};

use crate::attack::{AttackParams, NodeAttackParams};
use crate::detector::DetectorConfig;
use crate::error::{Error, Result};
use crate::moments::{composite_f, MomentContext};
use crate::optimizer::{OptimizerState, PowerLawSchedule};
use crate::rng::RngStream;
use crate::sim::{moment_context, SimPath, SimStepOutput};
use crate::system::SystemModel;

/// The three step-size families of the two-timescale iteration.
#[derive(Debug, Clone, Copy)]
pub struct SpsaSchedules {
    /// Fast-timescale gradient step.
    pub a: PowerLawSchedule,
    /// Slow-timescale multiplier step.
    pub b: PowerLawSchedule,
    /// Perturbation magnitude.
    pub c: PowerLawSchedule,
}

impl SpsaSchedules {
    pub fn new(a: PowerLawSchedule, b: PowerLawSchedule, c: PowerLawSchedule) -> Result<Self> {
        let s = Self { a, b, c };
        s.validate()?;
        Ok(s)
    }

    /// Defaults: `a(t) = 0.01/(1+t)^0.602`, `b(t) = 0.05/(1+t)^0.9`,
    /// `c(t) = 0.1/(1+t)^0.101`.
    pub fn standard() -> Self {
        Self {
            a: PowerLawSchedule::new(0.01, 0.602),
            b: PowerLawSchedule::new(0.05, 0.9),
            c: PowerLawSchedule::new(0.1, 0.101),
        }
    }

    /// Checks the five step-size conditions for the power-law family:
    /// divergent sums of `a` and `b`, square-summability of both, timescale
    /// separation `b/a -> 0`, vanishing perturbations, and summable
    /// `a^2/c^2`.
    pub fn validate(&self) -> Result<()> {
        if self.a.scale <= 0.0 || self.b.scale <= 0.0 || self.c.scale <= 0.0 {
            return Err(Error::Config("step scales must be positive".into()));
        }
        if !self.a.sum_diverges() || !self.b.sum_diverges() {
            return Err(Error::Config(
                "gradient and multiplier steps must sum to infinity (exponents <= 1)".into(),
            ));
        }
        if !self.a.sum_of_squares_converges() || !self.b.sum_of_squares_converges() {
            return Err(Error::Config(
                "gradient and multiplier steps must be square-summable (exponents > 1/2)".into(),
            ));
        }
        if self.b.exponent <= self.a.exponent {
            return Err(Error::Config(
                "multiplier steps must decay faster than gradient steps".into(),
            ));
        }
        if self.c.exponent <= 0.0 {
            return Err(Error::Config("perturbation magnitude must decay to zero".into()));
        }
        if 2.0 * (self.a.exponent - self.c.exponent) <= 1.0 {
            return Err(Error::Config(
                "a(t)^2 / c(t)^2 must be summable: need a-exponent - c-exponent > 1/2".into(),
            ));
        }
        Ok(())
    }
}

/// Sign perturbations for one node, shaped like its parameters.
#[derive(Debug, Clone)]
pub struct NodePerturbation {
    pub delta_t: DMatrix<f64>,
    pub delta_m: DMatrix<f64>,
    pub delta_d: DVector<f64>,
}

/// Draws independent entrywise signs shaped like each node's `(T, M, d)`.
pub fn rademacher_perturbations(
    shapes: &[(usize, usize)],
    rng: &mut RngStream,
) -> Vec<NodePerturbation> {
    shapes
        .iter()
        .map(|&(p, q)| NodePerturbation {
            delta_t: DMatrix::from_fn(p, p, |_, _| rng.rademacher()),
            delta_m: DMatrix::from_fn(p, q, |_, _| rng.rademacher()),
            delta_d: DVector::from_fn(p, |_, _| rng.rademacher()),
        })
        .collect()
}

/// The learned attack-parameter iterate.
#[derive(Debug, Clone)]
pub struct SpsaIterate {
    pub params: Vec<NodeAttackParams>,
    /// Entrywise clamp bound for every parameter entry.
    pub bound: f64,
    /// When false, the mixing matrices stay at their initial values and the
    /// corresponding update is skipped.
    pub update_t: bool,
}

impl SpsaIterate {
    /// Starts from the identity attack.
    pub fn identity(obs_dims: &[usize], q: usize, bound: f64, update_t: bool) -> Self {
        Self {
            params: obs_dims
                .iter()
                .map(|&p| NodeAttackParams::identity(p, q))
                .collect(),
            bound,
            update_t,
        }
    }

    fn shapes(&self, q: usize) -> Vec<(usize, usize)> {
        self.params.iter().map(|p| (p.obs_dim(), q)).collect()
    }

    fn perturbed(&self, perts: &[NodePerturbation], scale: f64) -> Vec<NodeAttackParams> {
        self.params
            .iter()
            .zip(perts)
            .map(|(p, d)| NodeAttackParams {
                t_mat: if self.update_t {
                    &p.t_mat + scale * &d.delta_t
                } else {
                    p.t_mat.clone()
                },
                u_mat: p.u_mat.clone(),
                m_mat: &p.m_mat + scale * &d.delta_m,
                d_vec: &p.d_vec + scale * &d.delta_d,
            })
            .collect()
    }
}

/// Steps 1-4 of the fast-timescale iteration: perturb, evaluate the
/// regularized objective both ways, update every entry by the difference
/// quotient, clamp. Returns `(kappa_plus, kappa_minus)`.
pub fn spsa_gradient_step(
    iterate: &mut SpsaIterate,
    schedules: &SpsaSchedules,
    ctx: &MomentContext,
    lambda: f64,
    xi: f64,
    t: usize,
    rng: &mut RngStream,
) -> (f64, f64) {
    let q = ctx.system.state_dim();
    let c_t = schedules.c.value(t);
    let a_t = schedules.a.value(t);
    let perts = rademacher_perturbations(&iterate.shapes(q), rng);

    let plus = iterate.perturbed(&perts, c_t);
    let minus = iterate.perturbed(&perts, -c_t);
    let kappa_plus = composite_f(ctx, &plus, lambda, xi).f_regularized;
    let kappa_minus = composite_f(ctx, &minus, lambda, xi).f_regularized;
    let diff = kappa_plus - kappa_minus;
    let bound = iterate.bound;

    for (p, d) in iterate.params.iter_mut().zip(&perts) {
        if iterate.update_t {
            for (entry, pert) in p.t_mat.iter_mut().zip(d.delta_t.iter()) {
                *entry = (*entry - a_t * diff / (2.0 * c_t * pert)).clamp(-bound, bound);
            }
        }
        for (entry, pert) in p.m_mat.iter_mut().zip(d.delta_m.iter()) {
            *entry = (*entry - a_t * diff / (2.0 * c_t * pert)).clamp(-bound, bound);
        }
        for (entry, pert) in p.d_vec.iter_mut().zip(d.delta_d.iter()) {
            *entry = (*entry - a_t * diff / (2.0 * c_t * pert)).clamp(-bound, bound);
        }
    }
    (kappa_plus, kappa_minus)
}

/// Feedback source for the slow-timescale update.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpsaVariant {
    /// Threshold known: statistic feedback.
    Statistic,
    /// Threshold unknown but alarms observable: indicator feedback.
    Alarm,
}

/// Log of one full iteration.
#[derive(Debug, Clone)]
pub struct SpsaStepLog {
    pub t: usize,
    pub lambda: f64,
    pub main: SimStepOutput,
    pub kappa_plus: f64,
    pub kappa_minus: f64,
    pub expected_z_quad: Vec<f64>,
    pub lambda_updated: bool,
}

/// One full iteration: fast-timescale parameter update, attack applied to
/// the main path with the deterministic bias, slow-timescale multiplier
/// update from the realized statistic or alarm indicator.
#[allow(clippy::too_many_arguments)]
pub fn olaade_spsa_step(
    main: &mut SimPath,
    system: &SystemModel,
    det_cfg: &DetectorConfig,
    iterate: &mut SpsaIterate,
    schedules: &SpsaSchedules,
    opt: &mut OptimizerState,
    variant: SpsaVariant,
    xi: f64,
    x_star: &DVector<f64>,
    attacked: &[bool],
    rng_perturb: &mut RngStream,
) -> Result<SpsaStepLog> {
    let lambda = opt.lambda();
    let t = main.t + 1;

    let thetas = main.thetas(x_star);
    let ctx = moment_context(system, det_cfg, &thetas, &main.attacker, x_star);
    let (kappa_plus, kappa_minus) =
        spsa_gradient_step(iterate, schedules, &ctx, lambda, xi, t, rng_perturb);

    let params = AttackParams {
        nodes: iterate.params.clone(),
        x_star: x_star.clone(),
        attacked: attacked.to_vec(),
    };
    let expected_z_quad: Vec<f64> = (0..system.node_count())
        .map(|k| crate::moments::expected_z_quad(k, &ctx, &params.nodes[k]))
        .collect();

    let main_out = main.step(system, det_cfg, &params)?;

    let signal = match variant {
        SpsaVariant::Statistic => main_out.z_quad_stat - opt.hyper_c * det_cfg.constraint_rhs(),
        SpsaVariant::Alarm => (main_out.detector.any_alarm as u8 as f64) - det_cfg.alpha,
    };
    let lambda_updated = opt.observe(signal);

    Ok(SpsaStepLog {
        t: main.t,
        lambda: opt.lambda(),
        main: main_out,
        kappa_plus,
        kappa_minus,
        expected_z_quad,
        lambda_updated,
    })
}
