//! Closed-loop error dynamics of the attacked network. Stacking the per-node
//! deviations from the target into one vector, the deterministic part of the
//! recursion is a block matrix whose spectral radius decides stability.

use nalgebra::DMatrix;

use crate::attack::AttackParams;
use crate::gains::KcfGains;
use crate::process::{ProcessModel, SensorModel};
pub use crate::linalg::{spectral_radius, spectral_radius_power};
use crate::system::SystemModel;
use crate::topology::Topology;

/// Builds the Nq x Nq block matrix of the deviation recursion.
///
/// Block (k,k) is `A - G_k T_k H_k A - N_k C_k A`, block (k,j) is `C_k A`
/// for neighbors j of k, and zero otherwise. `t_maps = None` uses `T_k = I`.
pub fn build_closed_loop_matrix(
    process: &ProcessModel,
    sensors: &[SensorModel],
    topology: &Topology,
    gains: &KcfGains,
    t_maps: Option<&[DMatrix<f64>]>,
) -> DMatrix<f64> {
    let n = topology.node_count();
    let q = process.dim();
    let a = process.a();
    let mut m = DMatrix::zeros(n * q, n * q);
    for k in 0..n {
        let degree = topology.degree(k) as f64;
        let ca = &gains.c[k] * a;
        let tha = match t_maps {
            Some(ts) => &ts[k] * sensors[k].h() * a,
            None => sensors[k].h() * a,
        };
        let diag = a - &gains.g[k] * tha - degree * &ca;
        m.view_mut((k * q, k * q), (q, q)).copy_from(&diag);
        for &j in topology.neighbors(k) {
            m.view_mut((k * q, j * q), (q, q)).copy_from(&ca);
        }
    }
    m
}

/// Same block matrix, with `T_k` taken from attack parameters.
pub fn build_stability_matrix(params: &AttackParams, system: &SystemModel) -> DMatrix<f64> {
    let t_maps: Vec<DMatrix<f64>> = params.nodes.iter().map(|p| p.t_mat.clone()).collect();
    build_closed_loop_matrix(
        &system.process,
        &system.sensors,
        &system.topology,
        &system.gains,
        Some(&t_maps),
    )
}
