//! Per-node Kalman-consensus estimators and the no-attack baseline run.
//!
//! The network protocol per step: every node predicts `xbar = A xhat(t-1)`,
//! broadcasts the prediction, then fuses its own innovation with the
//! neighbors' predictions. The step is synchronous: time-t updates read only
//! time-(t-1) estimates.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::gains::KcfGains;
use crate::process::{observe, process_step, ProcessModel, SensorModel};
use crate::rng::RngStream;
use crate::topology::Topology;

/// Estimator state of one node.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeState {
    /// Posterior estimate of the plant state.
    pub xhat: DVector<f64>,
    /// Intermediate prediction `A xhat(t-1)` broadcast to neighbors.
    pub xbar: DVector<f64>,
}

impl NodeState {
    pub fn new(xhat: DVector<f64>) -> Self {
        let xbar = xhat.clone();
        Self { xhat, xbar }
    }

    /// Deviation of this node's estimate from the attack target.
    pub fn theta(&self, x_star: &DVector<f64>) -> DVector<f64> {
        &self.xhat - x_star
    }

    pub(crate) fn predict(&mut self, a: &DMatrix<f64>) {
        self.xbar = a * &self.xhat;
    }
}

/// One synchronous network update given the received observations
/// (true `y_k(t)` or attacked `ytilde_k(t)`).
///
/// Callers must have refreshed every node's `xbar` for time t; the update
/// uses only those predictions, never time-t posteriors.
pub fn kcf_step(
    nodes: &[NodeState],
    received: &[DVector<f64>],
    sensors: &[SensorModel],
    topology: &Topology,
    gains: &KcfGains,
) -> Vec<NodeState> {
    let n = nodes.len();
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let innovation = &received[k] - sensors[k].h() * &nodes[k].xbar;
        let mut disagreement = DVector::zeros(nodes[k].xbar.len());
        for &j in topology.neighbors(k) {
            disagreement += &nodes[j].xbar - &nodes[k].xbar;
        }
        let xhat = &nodes[k].xbar + &gains.g[k] * innovation + &gains.c[k] * disagreement;
        out.push(NodeState {
            xhat,
            xbar: nodes[k].xbar.clone(),
        });
    }
    out
}

/// Advances all node predictions to time t.
pub fn predict_all(nodes: &mut [NodeState], process: &ProcessModel) {
    for node in nodes.iter_mut() {
        node.predict(process.a());
    }
}

/// Record of a no-attack run: true states, per-node estimates, and per-node
/// innovations for each step.
#[derive(Debug, Clone)]
pub struct NoAttackRecord {
    pub states: Vec<DVector<f64>>,
    pub estimates: Vec<Vec<DVector<f64>>>,
    pub innovations: Vec<Vec<DVector<f64>>>,
}

impl NoAttackRecord {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

pub const DIVERGENCE_LIMIT: f64 = 1e9;

/// Simulates the network under no attack for `steps` steps.
pub fn simulate_no_attack(
    process: &ProcessModel,
    sensors: &[SensorModel],
    topology: &Topology,
    gains: &KcfGains,
    x0: DVector<f64>,
    xhat0: &[DVector<f64>],
    steps: usize,
    rng_process: &mut RngStream,
    rng_obs: &mut RngStream,
) -> Result<NoAttackRecord> {
    let n = topology.node_count();
    let mut x = x0;
    let mut nodes: Vec<NodeState> = xhat0.iter().cloned().map(NodeState::new).collect();
    let mut record = NoAttackRecord {
        states: Vec::with_capacity(steps),
        estimates: Vec::with_capacity(steps),
        innovations: Vec::with_capacity(steps),
    };
    for t in 1..=steps {
        x = process_step(&x, process, rng_process)?;
        predict_all(&mut nodes, process);
        let ys: Vec<DVector<f64>> = sensors
            .iter()
            .map(|s| observe(&x, s, rng_obs))
            .collect::<Result<_>>()?;
        let innovations: Vec<DVector<f64>> = (0..n)
            .map(|k| &ys[k] - sensors[k].h() * &nodes[k].xbar)
            .collect();
        nodes = kcf_step(&nodes, &ys, sensors, topology, gains);
        let max_norm = nodes.iter().map(|s| s.xhat.norm()).fold(0.0, f64::max);
        if max_norm > DIVERGENCE_LIMIT {
            return Err(Error::Instability { t, norm: max_norm });
        }
        record.states.push(x.clone());
        record.estimates.push(nodes.iter().map(|s| s.xhat.clone()).collect());
        record.innovations.push(innovations);
    }
    Ok(record)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gains::compute_kcf_gains;
    use crate::topology::{build_topology, TopologyKind};

    fn stable_instance(seed: u64) -> (ProcessModel, Vec<SensorModel>, Topology, KcfGains) {
        let mut rng = RngStream::new(seed, 0);
        let raw = DMatrix::from_fn(2, 2, |_, _| rng.standard_normal());
        let rho = crate::linalg::spectral_radius(&raw);
        let a = raw * (0.8 / rho);
        let l = DMatrix::from_fn(2, 2, |_, _| rng.standard_normal() * 0.1);
        let process = ProcessModel::new(a, &l * l.transpose()).unwrap();
        let sensors: Vec<SensorModel> = (0..6)
            .map(|_| {
                let h = DMatrix::from_fn(3, 2, |_, _| rng.standard_normal());
                let r = DMatrix::from_diagonal(&DVector::from_fn(3, |_, _| 0.3 + 0.3 * rng.uniform(0.0, 1.0)));
                SensorModel::new(h, r).unwrap()
            })
            .collect();
        let topo = build_topology(&TopologyKind::Line, 6).unwrap();
        let gains = compute_kcf_gains(&process, &sensors, &topo, 1.0).unwrap();
        (process, sensors, topo, gains)
    }

    #[test]
    fn zero_innovation_zero_disagreement_keeps_prediction() {
        let (process, sensors, topo, gains) = stable_instance(21);
        let mut nodes: Vec<NodeState> = (0..6)
            .map(|_| NodeState::new(DVector::from_row_slice(&[0.4, -0.2])))
            .collect();
        predict_all(&mut nodes, &process);
        // all predictions agree; feed exactly the predicted observations
        let ys: Vec<DVector<f64>> = (0..6).map(|k| sensors[k].h() * &nodes[k].xbar).collect();
        let next = kcf_step(&nodes, &ys, &sensors, &topo, &gains);
        for (k, s) in next.iter().enumerate() {
            assert!((s.xhat.clone() - &nodes[k].xbar).amax() < 1e-14);
        }
    }

    #[test]
    fn perfect_tracking_under_zero_noise() {
        let mut rng = RngStream::new(4, 0);
        let a = DMatrix::from_row_slice(2, 2, &[0.9, 0.05, 0.0, 0.85]);
        let process = ProcessModel::new(a, DMatrix::zeros(2, 2)).unwrap();
        let h = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let sensors: Vec<SensorModel> = (0..3)
            .map(|_| SensorModel::new(h.clone(), DMatrix::zeros(3, 3)).unwrap())
            .collect();
        let topo = build_topology(&TopologyKind::Line, 3).unwrap();
        let g = DMatrix::from_fn(2, 3, |i, j| if i == j { 0.4 } else { 0.0 });
        let gains = KcfGains {
            g: vec![g.clone(), g.clone(), g.clone()],
            c: vec![DMatrix::zeros(2, 2); 3],
        };
        let x0 = DVector::from_row_slice(&[1.0, -0.5]);
        let xhat0 = vec![x0.clone(); 3];
        let record = simulate_no_attack(
            &process, &sensors, &topo, &gains, x0, &xhat0, 50, &mut rng.clone(), &mut rng,
        )
        .unwrap();
        for step in &record.innovations {
            for z in step {
                assert!(z.amax() < 1e-12);
            }
        }
    }

    #[test]
    fn innovation_mean_is_zero() {
        let (process, sensors, topo, gains) = stable_instance(91);
        let mut rp = RngStream::new(91, 1);
        let mut ro = RngStream::new(91, 2);
        let steps = 100_000;
        let x0 = DVector::zeros(2);
        let xhat0 = vec![DVector::zeros(2); 6];
        let record =
            simulate_no_attack(&process, &sensors, &topo, &gains, x0, &xhat0, steps, &mut rp, &mut ro)
                .unwrap();
        assert_eq!(record.len(), steps);
        let burn = 1000;
        for k in 0..6 {
            let mut mean = DVector::zeros(3);
            let mut var = DVector::zeros(3);
            for t in burn..steps {
                mean += &record.innovations[t][k];
            }
            mean /= (steps - burn) as f64;
            for t in burn..steps {
                let d = &record.innovations[t][k] - &mean;
                var += d.component_mul(&d);
            }
            var /= (steps - burn) as f64;
            for i in 0..3 {
                let sigma = var[i].sqrt();
                assert!(
                    mean[i].abs() < 4.0 * sigma / ((steps - burn) as f64).sqrt() * 3.0,
                    "node {k} component {i}: mean {} vs sigma {}",
                    mean[i],
                    sigma
                );
            }
        }
    }

    #[test]
    fn time_average_mse_consistent_across_seeds() {
        let (process, sensors, topo, gains) = stable_instance(140);
        let steps = 10_000;
        let burn = 500;
        let mse = |seed: u64| -> f64 {
            let mut rp = RngStream::new(seed, 1);
            let mut ro = RngStream::new(seed, 2);
            let record = simulate_no_attack(
                &process,
                &sensors,
                &topo,
                &gains,
                DVector::zeros(2),
                &vec![DVector::zeros(2); 6],
                steps,
                &mut rp,
                &mut ro,
            )
            .unwrap();
            let mut acc = 0.0;
            for t in burn..steps {
                for k in 0..6 {
                    acc += (&record.estimates[t][k] - &record.states[t]).norm_squared();
                }
            }
            acc / (steps - burn) as f64
        };
        let m1 = mse(7);
        let m2 = mse(8);
        assert!(m1.is_finite() && m2.is_finite());
        assert!((m1 - m2).abs() / m1.max(m2) < 0.05, "m1 {m1} m2 {m2}");
    }

    #[test]
    fn reproducibility_bitwise() {
        let (process, sensors, topo, gains) = stable_instance(33);
        let run = || {
            let mut rp = RngStream::new(5, 1);
            let mut ro = RngStream::new(5, 2);
            simulate_no_attack(
                &process,
                &sensors,
                &topo,
                &gains,
                DVector::zeros(2),
                &vec![DVector::zeros(2); 6],
                500,
                &mut rp,
                &mut ro,
            )
            .unwrap()
        };
        let a = run();
        let b = run();
        for (sa, sb) in a.states.iter().zip(&b.states) {
            assert_eq!(sa.as_slice(), sb.as_slice());
        }
        for (ea, eb) in a.estimates.iter().zip(&b.estimates) {
            for (va, vb) in ea.iter().zip(eb) {
                assert_eq!(va.as_slice(), vb.as_slice());
            }
        }
    }
}
