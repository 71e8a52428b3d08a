//! Shared fixtures for integration tests: seeded random instances at the
//! experiment dimensions and randomized attack/state configurations.

use kcfsim_core::gains::compute_kcf_gains;
use kcfsim_core::linalg::spectral_radius;
use kcfsim_core::process::{ProcessModel, SensorModel};
use kcfsim_core::topology::{build_topology, TopologyKind};
use kcfsim_core::{NodeAttackParams, RngStream, SystemModel};
use nalgebra::{DMatrix, DVector};

pub const Q: usize = 2;
pub const P: usize = 3;

/// Random stable plant, observable sensors, synthesized gains.
pub fn random_system(seed: u64, n: usize, kind: TopologyKind) -> SystemModel {
    let mut rng = RngStream::new(seed, 0);
    loop {
        let raw = DMatrix::from_fn(Q, Q, |_, _| rng.standard_normal());
        let rho = spectral_radius(&raw);
        if rho < 1e-6 {
            continue;
        }
        let target = rng.uniform(0.5, 0.95);
        let a = raw * (target / rho);
        let l = DMatrix::from_fn(Q, Q, |_, _| rng.standard_normal() * 0.1);
        let q_cov = &l * l.transpose();
        let process = match ProcessModel::new(a, q_cov) {
            Ok(p) => p,
            Err(_) => continue,
        };
        let sensors: Vec<SensorModel> = (0..n)
            .map(|_| {
                let h = DMatrix::from_fn(P, Q, |_, _| rng.standard_normal());
                let z = DMatrix::from_fn(P, P, |_, _| rng.standard_normal());
                let r = DMatrix::from_diagonal(&DVector::from_fn(P, |_, _| {
                    0.3 + 0.4 * rng.uniform(0.0, 1.0)
                })) + 0.01 * (&z * z.transpose());
                SensorModel::new(h, r).unwrap()
            })
            .collect();
        let topo = build_topology(&kind, n).unwrap();
        let Ok(gains) = compute_kcf_gains(&process, &sensors, &topo, 1.0) else {
            continue;
        };
        return SystemModel::new(process, sensors, topo, gains).unwrap();
    }
}

/// Random attack parameters, states and central-filter posture for moment
/// and gradient checks. Scales stay O(1) so Monte Carlo noise is controlled.
pub struct RandomState {
    pub thetas: Vec<DVector<f64>>,
    pub xhat: DVector<f64>,
    pub rcov: DMatrix<f64>,
    pub x_star: DVector<f64>,
    pub sigma: Vec<DMatrix<f64>>,
    pub params: Vec<NodeAttackParams>,
}

pub fn random_state(system: &SystemModel, rng: &mut RngStream, with_u: bool) -> RandomState {
    let n = system.node_count();
    let thetas = (0..n).map(|_| rng.normal_vector(Q) * 0.7).collect();
    let xhat = rng.normal_vector(Q);
    let l = DMatrix::from_fn(Q, Q, |_, _| rng.standard_normal() * 0.3);
    let rcov = &l * l.transpose() + DMatrix::identity(Q, Q) * 0.05;
    let x_star = DVector::from_row_slice(&[2.0, 2.0]);
    let sigma: Vec<DMatrix<f64>> = (0..n)
        .map(|_| {
            let z = DMatrix::from_fn(P, P, |_, _| rng.standard_normal() * 0.2);
            &z * z.transpose() + DMatrix::identity(P, P)
        })
        .collect();
    let params = (0..n)
        .map(|_| NodeAttackParams {
            t_mat: DMatrix::from_fn(P, P, |i, j| {
                if i == j { 1.0 } else { 0.0 } + 0.3 * rng.standard_normal()
            }),
            u_mat: if with_u {
                DMatrix::from_fn(P, P, |_, _| rng.standard_normal() * 0.2)
            } else {
                DMatrix::zeros(P, P)
            },
            m_mat: DMatrix::from_fn(P, Q, |_, _| rng.standard_normal() * 0.3),
            d_vec: rng.normal_vector(P) * 0.5,
        })
        .collect();
    RandomState {
        thetas,
        xhat,
        rcov,
        x_star,
        sigma,
        params,
    }
}

pub fn sigma_inverses(sigma: &[DMatrix<f64>]) -> Vec<DMatrix<f64>> {
    sigma
        .iter()
        .map(|s| s.clone().try_inverse().unwrap())
        .collect()
}
