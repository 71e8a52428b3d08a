//! The linear innovation attack: node k's innovation is replaced by
//! `ztilde = T z + b` with `b ~ N(M theta + d, U'U)`, and the observation the
//! node receives is reconstructed so that its innovation equals `ztilde`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::CovFactor;
use crate::rng::RngStream;

/// Attack parameters for one node.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeAttackParams {
    /// Innovation mixing matrix `T_k` (p_k x p_k).
    pub t_mat: DMatrix<f64>,
    /// Square-root parameterization of the bias covariance, `S_k = U_k' U_k`.
    pub u_mat: DMatrix<f64>,
    /// State-feedback part of the bias mean (p_k x q).
    pub m_mat: DMatrix<f64>,
    /// Constant part of the bias mean.
    pub d_vec: DVector<f64>,
}

impl NodeAttackParams {
    /// The do-nothing attack: `T = I`, everything else zero.
    pub fn identity(p: usize, q: usize) -> Self {
        Self {
            t_mat: DMatrix::identity(p, p),
            u_mat: DMatrix::zeros(p, p),
            m_mat: DMatrix::zeros(p, q),
            d_vec: DVector::zeros(p),
        }
    }

    /// Bias covariance `S = U'U`.
    pub fn s_cov(&self) -> DMatrix<f64> {
        self.u_mat.transpose() * &self.u_mat
    }

    /// Conditional mean of the bias given the node's deviation.
    pub fn bias_mean(&self, theta_prev: &DVector<f64>) -> DVector<f64> {
        &self.m_mat * theta_prev + &self.d_vec
    }

    pub fn obs_dim(&self) -> usize {
        self.t_mat.nrows()
    }
}

/// Network-wide attack configuration: per-node parameters, target, and the
/// static set of attacked nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackParams {
    pub nodes: Vec<NodeAttackParams>,
    pub x_star: DVector<f64>,
    /// `attacked[k]` marks node k as belonging to the attack set.
    pub attacked: Vec<bool>,
}

impl AttackParams {
    /// Identity attack on all nodes (used for the no-attack arm).
    pub fn identity(obs_dims: &[usize], q: usize, x_star: DVector<f64>) -> Self {
        Self {
            nodes: obs_dims
                .iter()
                .map(|&p| NodeAttackParams::identity(p, q))
                .collect(),
            x_star,
            attacked: vec![true; obs_dims.len()],
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }
}

/// Applies the attack at one node. Returns the forged innovation and the
/// corresponding forged observation `ytilde = ztilde + H A xhat_k(t-1)`,
/// where `predicted_obs` is `H A xhat_k(t-1)`.
///
/// With `U = 0` the bias draw is deterministic and the RNG is untouched.
pub fn apply_attack(
    z: &DVector<f64>,
    theta_prev: &DVector<f64>,
    predicted_obs: &DVector<f64>,
    params: &NodeAttackParams,
    rng: &mut RngStream,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let mean = params.bias_mean(theta_prev);
    let b = if params.u_mat.amax() == 0.0 {
        mean
    } else {
        // b = mean + U' eps gives covariance U'U
        let eps = rng.normal_vector(params.u_mat.nrows());
        mean + params.u_mat.transpose() * eps
    };
    if b.len() != z.len() {
        return Err(Error::Config(format!(
            "bias dimension {} does not match innovation dimension {}",
            b.len(),
            z.len()
        )));
    }
    let z_tilde = &params.t_mat * z + b;
    let y_tilde = &z_tilde + predicted_obs;
    Ok((z_tilde, y_tilde))
}

/// Covariance factor for sampling the bias with a nonzero `U`; exposed for
/// callers that sample many draws with fixed parameters.
pub fn bias_cov_factor(params: &NodeAttackParams) -> Result<CovFactor> {
    CovFactor::from_covariance(&params.s_cov())
}
