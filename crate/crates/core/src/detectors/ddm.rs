use serde::{Deserialize, Serialize};

use super::{DetectorError, DetectorStatus, DriftDetector, Observation};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DdmConfig {
    pub warm_up: usize,
    pub warning_level: f64,
    pub drift_level: f64,
}

impl Default for DdmConfig {
    fn default() -> Self {
        Self {
            warm_up: 30,
            warning_level: 2.0,
            drift_level: 3.0,
        }
    }
}

/// Drift detection from the running error rate of a classifier.
#[derive(Debug, Clone)]
pub struct Ddm {
    cfg: DdmConfig,
    n: u64,
    errors: u64,
    p_min: f64,
    s_min: f64,
}

impl Ddm {
    pub fn new(cfg: DdmConfig) -> Self {
        let mut d = Self {
            cfg,
            n: 0,
            errors: 0,
            p_min: 0.0,
            s_min: 0.0,
        };
        d.reset();
        d
    }

    fn reset(&mut self) {
        self.n = 0;
        self.errors = 0;
        self.p_min = f64::INFINITY;
        self.s_min = f64::INFINITY;
    }

    pub fn error_rate(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.errors as f64 / self.n as f64
        }
    }

    /// Feeds one error indicator observed at time `at`.
    pub fn push(&mut self, error: bool, at: f64) -> DetectorStatus {
        self.n += 1;
        self.errors += u64::from(error);
        let p = self.error_rate();
        let s = (p * (1.0 - p) / self.n as f64).sqrt();
        if self.n < self.cfg.warm_up as u64 {
            return DetectorStatus::Stable;
        }
        if p + s <= self.p_min + self.s_min {
            self.p_min = p;
            self.s_min = s;
        }
        if p + s > self.p_min + self.cfg.drift_level * self.s_min {
            self.reset();
            DetectorStatus::Drift { at }
        } else if p + s > self.p_min + self.cfg.warning_level * self.s_min {
            DetectorStatus::Warning
        } else {
            DetectorStatus::Stable
        }
    }
}

impl DriftDetector for Ddm {
    fn name(&self) -> &'static str {
        "ddm"
    }

    fn needs_error_signal(&self) -> bool {
        true
    }

    fn update(&mut self, obs: Observation<'_>) -> Result<DetectorStatus, DetectorError> {
        let err = obs.error.ok_or(DetectorError::MissingErrorSignal("ddm"))?;
        Ok(self.push(err, obs.sample.timestamp))
    }
}
