use serde::{Deserialize, Serialize};

use super::{mix_seed, observed_features, DetectorError, DetectorStatus, DriftDetector, Observation};
use crate::matrix::SampleMatrix;
use crate::stats::{mmd2_test, StatsError, DEFAULT_PERMUTATIONS, MIN_PERMUTATIONS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct K2stConfig {
    pub batch: usize,
    pub alpha: f64,
    pub permutations: usize,
    /// Most recent reference samples kept; older ones are forgotten.
    pub max_reference: usize,
    pub use_label: bool,
}

impl Default for K2stConfig {
    fn default() -> Self {
        Self {
            batch: 50,
            alpha: 0.01,
            permutations: DEFAULT_PERMUTATIONS,
            max_reference: 150,
            use_label: true,
        }
    }
}

/// Batch-wise kernel two-sample drift detection: each batch is tested
/// against the reference with an MMD permutation test.
#[derive(Debug, Clone)]
pub struct K2st {
    cfg: K2stConfig,
    seed: u64,
    tests: u64,
    reference: Vec<Vec<f64>>,
    current: Vec<Vec<f64>>,
    dim: Option<usize>,
    last_p: Option<f64>,
}

impl K2st {
    pub fn new(cfg: K2stConfig, seed: u64) -> Result<Self, DetectorError> {
        if cfg.batch < 4 || !(cfg.alpha > 0.0 && cfg.alpha < 1.0) || cfg.permutations < MIN_PERMUTATIONS || cfg.max_reference < cfg.batch {
            return Err(DetectorError::Config {
                detector: "k2st",
                message: format!(
                    "need batch >= 4, alpha in (0,1), permutations >= {MIN_PERMUTATIONS}, max_reference >= batch; got {cfg:?}"
                ),
            });
        }
        Ok(Self {
            cfg,
            seed,
            tests: 0,
            reference: Vec::new(),
            current: Vec::new(),
            dim: None,
            last_p: None,
        })
    }

    /// p-value of the most recent batch test.
    pub fn last_p_value(&self) -> Option<f64> {
        self.last_p
    }

    fn close_batch(&mut self) -> Result<bool, DetectorError> {
        let batch = std::mem::take(&mut self.current);
        if self.reference.is_empty() {
            self.reference = batch;
            return Ok(false);
        }
        let x = SampleMatrix::from_rows(&self.reference).map_err(StatsError::from)?;
        let y = SampleMatrix::from_rows(&batch).map_err(StatsError::from)?;
        let res = mmd2_test(&x, &y, self.cfg.permutations, mix_seed(self.seed, self.tests))?;
        self.tests += 1;
        self.last_p = Some(res.p_value);
        let drift = res.p_value < self.cfg.alpha;
        if drift {
            self.reference = batch;
        } else {
            self.reference.extend(batch);
            let excess = self.reference.len().saturating_sub(self.cfg.max_reference);
            self.reference.drain(..excess);
        }
        Ok(drift)
    }
}

impl DriftDetector for K2st {
    fn name(&self) -> &'static str {
        "k2st"
    }

    fn update(&mut self, obs: Observation<'_>) -> Result<DetectorStatus, DetectorError> {
        let x = observed_features(obs.sample, self.cfg.use_label);
        match self.dim {
            Some(expected) if expected != x.len() => {
                return Err(DetectorError::DimensionMismatch { expected, got: x.len() })
            }
            None => self.dim = Some(x.len()),
            _ => {}
        }
        self.current.push(x);
        if self.current.len() < self.cfg.batch {
            return Ok(DetectorStatus::Stable);
        }
        Ok(if self.close_batch()? {
            DetectorStatus::Drift { at: obs.sample.timestamp }
        } else {
            DetectorStatus::Stable
        })
    }
}
