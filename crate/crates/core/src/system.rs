//! Bundle of the plant, per-node sensors, topology and estimator gains that
//! together define one network instance.

use crate::error::{Error, Result};
use crate::gains::KcfGains;
use crate::process::{ProcessModel, SensorModel};
use crate::topology::Topology;

#[derive(Debug, Clone)]
pub struct SystemModel {
    pub process: ProcessModel,
    pub sensors: Vec<SensorModel>,
    pub topology: Topology,
    pub gains: KcfGains,
}

impl SystemModel {
    pub fn new(
        process: ProcessModel,
        sensors: Vec<SensorModel>,
        topology: Topology,
        gains: KcfGains,
    ) -> Result<Self> {
        let n = topology.node_count();
        if sensors.len() != n {
            return Err(Error::Config(format!(
                "{} sensors for {} nodes",
                sensors.len(),
                n
            )));
        }
        let q = process.dim();
        for (k, s) in sensors.iter().enumerate() {
            if s.state_dim() != q {
                return Err(Error::Config(format!(
                    "sensor {k} observes a {}-dimensional state, plant is {q}-dimensional",
                    s.state_dim()
                )));
            }
        }
        gains.validate(&process, &sensors)?;
        Ok(Self {
            process,
            sensors,
            topology,
            gains,
        })
    }

    pub fn node_count(&self) -> usize {
        self.topology.node_count()
    }

    pub fn state_dim(&self) -> usize {
        self.process.dim()
    }

    pub fn obs_dims(&self) -> Vec<usize> {
        self.sensors.iter().map(|s| s.obs_dim()).collect()
    }
}
