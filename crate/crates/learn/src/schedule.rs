//! Temperature schedules: constant, or exponential decay alpha_k = alpha0 * sigma^k.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScheduleKind {
    Constant,
    ExponentialDecay,
}

#[derive(Debug, Clone)]
pub struct TemperatureSchedule {
    kind: ScheduleKind,
    alpha0: f64,
    sigma: f64,
    step: u64,
}

impl TemperatureSchedule {
    pub fn constant(alpha0: f64) -> Result<Self> {
        Self::new(ScheduleKind::Constant, alpha0, 1.0)
    }

    pub fn exponential(alpha0: f64, sigma: f64) -> Result<Self> {
        Self::new(ScheduleKind::ExponentialDecay, alpha0, sigma)
    }

    pub fn new(kind: ScheduleKind, alpha0: f64, sigma: f64) -> Result<Self> {
        if alpha0 < 0.0 || !alpha0.is_finite() {
            return Err(Error::Config(format!("alpha0 must be >= 0, got {alpha0}")));
        }
        if !(0.0 < sigma && sigma <= 1.0) {
            return Err(Error::Config(format!("sigma must be in (0, 1], got {sigma}")));
        }
        Ok(Self {
            kind,
            alpha0,
            sigma,
            step: 0,
        })
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    /// Temperature at counter k without advancing.
    pub fn peek(&self) -> f64 {
        match self.kind {
            ScheduleKind::Constant => self.alpha0,
            ScheduleKind::ExponentialDecay => self.alpha0 * self.sigma.powf(self.step as f64),
        }
    }

    /// Returns the current temperature, then advances the counter.
    pub fn step(&mut self) -> f64 {
        let alpha = self.peek();
        self.step += 1;
        alpha
    }

    /// Same schedule with the decay spread over `window` sub-steps, so that
    /// `window` calls compound to one original decay. Lets a per-step loop
    /// match a per-iteration loop's decay horizon.
    pub fn divided(&self, window: u64) -> Result<Self> {
        if window == 0 {
            return Err(Error::Config("window must be >= 1".into()));
        }
        Self::new(self.kind, self.alpha0, self.sigma.powf(1.0 / window as f64))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_never_moves() {
        let mut s = TemperatureSchedule::constant(0.1).unwrap();
        for _ in 0..1000 {
            assert_eq!(s.step(), 0.1);
        }
    }

    #[test]
    fn exponential_ratio_is_exact() {
        let mut s = TemperatureSchedule::exponential(1.0, 0.99).unwrap();
        let mut prev = s.step();
        for _ in 0..200 {
            let cur = s.step();
            assert!((cur / prev - 0.99).abs() < 1e-15);
            prev = cur;
        }
    }

    #[test]
    fn hundred_steps_of_decay() {
        let mut s = TemperatureSchedule::exponential(1.0, 0.99).unwrap();
        for _ in 0..100 {
            s.step();
        }
        assert!((s.peek() - 0.99f64.powi(100)).abs() < 1e-12);
        assert!((s.peek() - 0.3660).abs() < 1e-4);
    }

    #[test]
    fn sigma_one_is_constant() {
        let mut s = TemperatureSchedule::exponential(0.5, 1.0).unwrap();
        for _ in 0..50 {
            assert_eq!(s.step(), 0.5);
        }
    }

    #[test]
    fn decay_eventually_satisfies_any_value_gap_target() {
        // gamma/(1-gamma) * alpha_k * ln A < eps for large enough k.
        let s = TemperatureSchedule::exponential(1.0, 0.99).unwrap();
        let gamma: f64 = 0.99;
        let eps = 1e-3;
        let scale = gamma / (1.0 - gamma) * 4.0f64.ln();
        let k = ((eps / scale).ln() / 0.99f64.ln()).ceil() as u64;
        let mut s2 = s.clone();
        for _ in 0..k {
            s2.step();
        }
        assert!(scale * s2.peek() < eps);
    }

    #[test]
    fn divided_schedule_compounds_to_the_original() {
        let base = TemperatureSchedule::exponential(0.8, 0.9).unwrap();
        let mut fine = base.divided(16).unwrap();
        for _ in 0..16 {
            fine.step();
        }
        let mut coarse = base.clone();
        coarse.step();
        assert!((fine.peek() - coarse.peek()).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(TemperatureSchedule::constant(-0.1).is_err());
        assert!(TemperatureSchedule::exponential(1.0, 0.0).is_err());
        assert!(TemperatureSchedule::exponential(1.0, 1.1).is_err());
        assert!(TemperatureSchedule::constant(0.1).unwrap().divided(0).is_err());
    }
}
