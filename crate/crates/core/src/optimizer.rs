//! Slow-timescale adaptation of the Lagrange multiplier.
//!
//! The multiplier moves by a decaying step times a feedback signal (either a
//! forged-innovation statistic minus its target, or an alarm indicator minus
//! the permitted rate), projected back onto [0, A0]. One multiplier update
//! runs per `timescale_ratio` simulation steps, and the raw step can be
//! rescaled adaptively from running first/second moments of the signal.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Decaying step family `scale / (1 + t)^exponent`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawSchedule {
    pub scale: f64,
    pub exponent: f64,
}

impl PowerLawSchedule {
    pub fn new(scale: f64, exponent: f64) -> Self {
        Self { scale, exponent }
    }

    pub fn value(&self, t: usize) -> f64 {
        self.scale / (1.0 + t as f64).powf(self.exponent)
    }

    /// Whether the power-law series sums to infinity.
    pub fn sum_diverges(&self) -> bool {
        self.scale > 0.0 && self.exponent <= 1.0
    }

    /// Whether the squared series converges.
    pub fn sum_of_squares_converges(&self) -> bool {
        self.exponent > 0.5
    }
}

/// Adaptive moment accumulators for the multiplier step.
#[derive(Debug, Clone, Default)]
pub struct AdamState {
    m: f64,
    v: f64,
    count: u64,
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

impl AdamState {
    /// Rescales a raw signal by the bias-corrected moment estimates.
    fn scaled(&mut self, signal: f64) -> f64 {
        self.count += 1;
        self.m = ADAM_BETA1 * self.m + (1.0 - ADAM_BETA1) * signal;
        self.v = ADAM_BETA2 * self.v + (1.0 - ADAM_BETA2) * signal * signal;
        let m_hat = self.m / (1.0 - ADAM_BETA1.powi(self.count as i32));
        let v_hat = self.v / (1.0 - ADAM_BETA2.powi(self.count as i32));
        m_hat / (v_hat.sqrt() + ADAM_EPS)
    }
}

/// Multiplier iterate plus everything governing its updates.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    lambda: f64,
    pub a0: f64,
    pub schedule: PowerLawSchedule,
    /// Multiplier on the statistic target in variant-1 updates.
    pub hyper_c: f64,
    pub adaptive: bool,
    adam: AdamState,
    /// Simulation steps per multiplier update.
    pub timescale_ratio: usize,
    step_count: usize,
    update_count: usize,
}

impl OptimizerState {
    pub fn new(
        lambda0: f64,
        a0: f64,
        schedule: PowerLawSchedule,
        hyper_c: f64,
        adaptive: bool,
        timescale_ratio: usize,
    ) -> Result<Self> {
        if !(0.0..=a0).contains(&lambda0) {
            return Err(Error::Config(format!(
                "lambda(0) = {lambda0} outside [0, {a0}]"
            )));
        }
        if !schedule.sum_diverges() || !schedule.sum_of_squares_converges() {
            return Err(Error::Config(
                "multiplier step schedule must sum to infinity with square-summable terms".into(),
            ));
        }
        if timescale_ratio == 0 {
            return Err(Error::Config("timescale ratio must be at least 1".into()));
        }
        Ok(Self {
            lambda: lambda0,
            a0,
            schedule,
            hyper_c,
            adaptive,
            adam: AdamState::default(),
            timescale_ratio,
            step_count: 0,
            update_count: 0,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn updates(&self) -> usize {
        self.update_count
    }

    /// Overwrites the multiplier (used when freezing a trained value for
    /// evaluation runs). The projection bound still applies.
    pub fn set_lambda(&mut self, lambda: f64) {
        self.lambda = lambda.clamp(0.0, self.a0);
    }

    /// Registers one simulation step; on every `timescale_ratio`-th call the
    /// multiplier moves by the (possibly rescaled) signal and is projected
    /// onto [0, A0]. Returns true when an update happened.
    pub fn observe(&mut self, signal: f64) -> bool {
        self.step_count += 1;
        if self.step_count % self.timescale_ratio != 0 {
            return false;
        }
        let step = self.schedule.value(self.update_count);
        let movement = if self.adaptive {
            self.adam.scaled(signal)
        } else {
            signal
        };
        self.lambda = (self.lambda + step * movement).clamp(0.0, self.a0);
        self.update_count += 1;
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opt(adaptive: bool, ratio: usize) -> OptimizerState {
        OptimizerState::new(
            4.0,
            1000.0,
            PowerLawSchedule::new(0.05, 0.7),
            1.0,
            adaptive,
            ratio,
        )
        .unwrap()
    }

    #[test]
    fn zero_signal_leaves_lambda_unchanged() {
        let mut o = opt(true, 1);
        assert!(o.observe(0.0));
        assert_eq!(o.lambda(), 4.0);
        let mut o = opt(false, 1);
        o.observe(0.0);
        assert_eq!(o.lambda(), 4.0);
    }

    #[test]
    fn updates_respect_timescale_ratio() {
        let mut o = opt(false, 10);
        let mut updates = 0;
        for _ in 0..100 {
            if o.observe(1.0) {
                updates += 1;
            }
        }
        assert_eq!(updates, 10);
        assert_eq!(o.updates(), 10);
    }

    #[test]
    fn lambda_stays_projected() {
        let mut o = OptimizerState::new(4.0, 10.0, PowerLawSchedule::new(5.0, 0.7), 1.0, false, 1).unwrap();
        for _ in 0..100 {
            o.observe(100.0);
            assert!(o.lambda() <= 10.0);
        }
        for _ in 0..200 {
            o.observe(-100.0);
            assert!(o.lambda() >= 0.0);
        }
    }

    #[test]
    fn invalid_schedules_rejected() {
        // exponent > 1: steps not summing to infinity
        assert!(OptimizerState::new(1.0, 10.0, PowerLawSchedule::new(0.1, 1.5), 1.0, false, 1).is_err());
        // exponent <= 0.5: squares not summable
        assert!(OptimizerState::new(1.0, 10.0, PowerLawSchedule::new(0.1, 0.5), 1.0, false, 1).is_err());
    }

    #[test]
    fn projection_is_idempotent() {
        let clamp = |x: f64| x.clamp(0.0, 7.0);
        for x in [-3.0, 0.0, 2.5, 7.0, 11.0] {
            assert_eq!(clamp(clamp(x)), clamp(x));
        }
    }
}
