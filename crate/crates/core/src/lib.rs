//! Distributed Kalman-consensus state estimation under linear innovation attacks.
//!
//! The crate simulates a linear-Gaussian plant observed by a network of agent
//! nodes running Kalman-consensus filters (KCF), a per-node sliding-window
//! chi-squared residual detector, and an attacker that intercepts sensor
//! observations and replaces each node's innovation with a linear
//! transformation plus a state-dependent bias. Attack parameters are chosen
//! online, either by solving per-step stationarity systems at a Lagrange
//! multiplier adapted on a slow timescale, or by simultaneous-perturbation
//! stochastic gradient descent.

pub mod attack;
pub mod detector;
pub mod error;
pub mod filter;
pub mod gains;
pub mod kkt;
pub mod linalg;
pub mod moments;
pub mod network;
pub mod optimizer;
pub mod oracle;
pub mod process;
pub mod rng;
pub mod serdes;
pub mod sim;
pub mod spsa;
pub mod stability;
pub mod system;
pub mod topology;

pub use attack::{AttackParams, NodeAttackParams};
pub use detector::{DetectorConfig, DetectorState};
pub use error::{Error, Result};
pub use filter::AttackerFilterState;
pub use gains::KcfGains;
pub use moments::{MomentContext, MomentReport};
pub use network::NodeState;
pub use process::{ProcessModel, SensorModel};
pub use rng::RngStream;
pub use system::SystemModel;
pub use topology::{Topology, TopologyKind};
