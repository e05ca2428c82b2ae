//! Node battery with periodic drain-rate sampling and exponential averaging.
//!
//! The average drain rate (AEDR) only changes at sampling instants. Residual
//! lifetime is `residual / AEDR`, with a floor on the rate so that a node that
//! has not been sampled yet reports [`LIFETIME_CAP`].

use crate::des::SimTime;
use crate::error::{contract, Result};

/// Lifetime reported when the drain rate is (near) zero; also the "infinite"
/// bottleneck sentinel carried by fresh route requests.
pub const LIFETIME_CAP: f64 = 1e9;
/// Drain rates below this are treated as this value when computing lifetime.
pub const AEDR_FLOOR: f64 = 1e-9;
/// Seconds of survival at current AEDR required to admit a session of unknown length.
pub const THRESHOLD1_SECS: f64 = 5.0;
/// Seconds of survival at current AEDR below which a node raises its drain alarm.
pub const THRESHOLD2_SECS: f64 = 1.0;

/// Sampling and averaging parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DrainEstimator {
    pub alpha: f64,
    pub sample_interval_s: f64,
}

impl DrainEstimator {
    /// 1 s sampling, alpha 0.5.
    pub const SQAODV: DrainEstimator = DrainEstimator { alpha: 0.5, sample_interval_s: 1.0 };
    /// 6 s sampling, alpha 0.3.
    pub const MDR: DrainEstimator = DrainEstimator { alpha: 0.3, sample_interval_s: 6.0 };
}

#[derive(Debug, Clone, PartialEq)]
pub struct Battery {
    initial_j: f64,
    residual_j: f64,
    aedr_w: f64,
    alpha: f64,
    sample_interval_s: f64,
    last_sample_energy_j: f64,
    last_sample_time: SimTime,
}

impl Battery {
    pub fn new(initial_j: f64, estimator: DrainEstimator) -> Result<Battery> {
        if !(initial_j > 0.0) || !initial_j.is_finite() {
            return contract(format!("initial energy must be positive, got {initial_j}"));
        }
        if !(estimator.alpha > 0.0 && estimator.alpha <= 1.0) {
            return contract(format!("alpha must lie in (0, 1], got {}", estimator.alpha));
        }
        if !(estimator.sample_interval_s > 0.0) {
            return contract("sample interval must be positive");
        }
        Ok(Battery {
            initial_j,
            residual_j: initial_j,
            aedr_w: 0.0,
            alpha: estimator.alpha,
            sample_interval_s: estimator.sample_interval_s,
            last_sample_energy_j: initial_j,
            last_sample_time: SimTime::ZERO,
        })
    }

    pub fn initial_j(&self) -> f64 {
        self.initial_j
    }

    pub fn residual_j(&self) -> f64 {
        self.residual_j
    }

    pub fn aedr_w(&self) -> f64 {
        self.aedr_w
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn sample_interval_s(&self) -> f64 {
        self.sample_interval_s
    }

    pub fn is_depleted(&self) -> bool {
        self.residual_j <= 0.0
    }

    /// Removes `joules`, clamping at zero. Returns the amount actually removed
    /// and whether the node is still alive afterwards.
    pub fn debit(&mut self, joules: f64) -> Result<(f64, bool)> {
        if !(joules >= 0.0) {
            return contract(format!("negative debit {joules}"));
        }
        if joules >= self.residual_j && joules > 0.0 {
            let applied = self.residual_j;
            self.residual_j = 0.0;
            return Ok((applied, false));
        }
        self.residual_j -= joules;
        Ok((joules, self.residual_j > 0.0))
    }

    /// Energy drain rate over the interval since the previous sample; advances the sampling state.
    pub fn sample_edr(&mut self, now: SimTime) -> Result<f64> {
        let dt = now.as_secs() - self.last_sample_time.as_secs();
        if !(dt > 0.0) {
            return contract(format!("drain-rate sample with non-positive interval {dt}"));
        }
        let edr = (self.last_sample_energy_j - self.residual_j) / dt;
        self.last_sample_energy_j = self.residual_j;
        self.last_sample_time = now;
        Ok(edr)
    }

    pub fn update_aedr(&mut self, edr_w: f64) -> Result<f64> {
        if !(edr_w >= 0.0) {
            return contract(format!("negative drain rate {edr_w}"));
        }
        self.aedr_w = self.alpha * edr_w + (1.0 - self.alpha) * self.aedr_w;
        Ok(self.aedr_w)
    }

    /// Sample and fold into the average in one step.
    pub fn sample(&mut self, now: SimTime) -> Result<f64> {
        let edr = self.sample_edr(now)?;
        self.update_aedr(edr)
    }

    /// Predicted seconds until depletion at the current average drain rate.
    pub fn lifetime(&self) -> f64 {
        (self.residual_j / self.aedr_w.max(AEDR_FLOOR)).min(LIFETIME_CAP)
    }

    /// Energy needed to last [`THRESHOLD1_SECS`] at current AEDR.
    pub fn threshold1(&self) -> f64 {
        THRESHOLD1_SECS * self.aedr_w
    }

    /// Energy needed to last [`THRESHOLD2_SECS`] at current AEDR.
    pub fn threshold2(&self) -> f64 {
        THRESHOLD2_SECS * self.aedr_w
    }

    /// A battery part-way through a run, with a given residual and drain estimate.
    pub fn with_state(residual_j: f64, aedr_w: f64, estimator: DrainEstimator) -> Battery {
        let mut b = Battery::new(residual_j.max(1e-12), estimator).unwrap();
        b.residual_j = residual_j;
        b.aedr_w = aedr_w;
        b
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel_eq(a: f64, b: f64) -> bool {
        if b == 0.0 {
            a.abs() < 1e-15
        } else {
            ((a - b) / b).abs() <= 1e-12
        }
    }

    #[test]
    fn debit_cases() {
        let mut b = Battery::new(1.0, DrainEstimator::SQAODV).unwrap();
        assert_eq!(b.debit(0.4).unwrap(), (0.4, true));
        assert!(rel_eq(b.residual_j(), 0.6));
        assert!(b.debit(0.0).unwrap().1);

        let mut b = Battery::with_state(0.1, 0.0, DrainEstimator::SQAODV);
        let (applied, alive) = b.debit(0.2).unwrap();
        assert!(!alive);
        assert_eq!(b.residual_j(), 0.0);
        assert!(rel_eq(applied, 0.1));
        assert!(b.debit(-1.0).is_err());
    }

    #[test]
    fn edr_samples() {
        let mut b = Battery::new(50.0, DrainEstimator::SQAODV).unwrap();
        b.debit(0.6).unwrap();
        assert!(rel_eq(b.sample_edr(SimTime::secs(2.0)).unwrap(), 0.3));

        let mut b = Battery::new(80.0, DrainEstimator::SQAODV).unwrap();
        assert_eq!(b.sample_edr(SimTime::secs(2.0)).unwrap(), 0.0);

        let mut b = Battery::new(100.0, DrainEstimator::MDR).unwrap();
        b.debit(0.6).unwrap();
        assert!(rel_eq(b.sample_edr(SimTime::secs(6.0)).unwrap(), 0.1));
        assert!(b.sample_edr(SimTime::secs(6.0)).is_err());
    }

    #[test]
    fn aedr_updates() {
        let mut b = Battery::with_state(10.0, 0.2, DrainEstimator::SQAODV);
        assert!(rel_eq(b.update_aedr(0.4).unwrap(), 0.3));
        let mut b = Battery::with_state(10.0, 0.2, DrainEstimator::MDR);
        assert!(rel_eq(b.update_aedr(0.4).unwrap(), 0.26));
        let mut b = Battery::with_state(10.0, 0.0, DrainEstimator::SQAODV);
        assert_eq!(b.update_aedr(0.0).unwrap(), 0.0);
    }

    #[test]
    fn lifetime_and_thresholds() {
        let b = Battery::with_state(30.0, 0.5, DrainEstimator::SQAODV);
        assert!(rel_eq(b.lifetime(), 60.0));
        let b = Battery::with_state(30.0, 0.0, DrainEstimator::SQAODV);
        assert_eq!(b.lifetime(), LIFETIME_CAP);
        let b = Battery::with_state(0.0, 0.5, DrainEstimator::SQAODV);
        assert_eq!(b.lifetime(), 0.0);

        for (aedr, t1, t2) in [(0.3, 1.5, 0.3), (0.0, 0.0, 0.0), (1.0, 5.0, 1.0), (2.5, 12.5, 2.5)] {
            let b = Battery::with_state(10.0, aedr, DrainEstimator::SQAODV);
            assert!(rel_eq(b.threshold1(), t1));
            assert!(rel_eq(b.threshold2(), t2));
        }
    }
}
