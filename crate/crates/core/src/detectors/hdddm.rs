use serde::{Deserialize, Serialize};

use super::{observed_features, DetectorError, DetectorStatus, DriftDetector, Observation};
use crate::stats::{hellinger, histogram};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HdddmConfig {
    pub batch: usize,
    pub gamma: f64,
    pub use_label: bool,
}

impl Default for HdddmConfig {
    fn default() -> Self {
        Self {
            batch: 50,
            gamma: 1.0,
            use_label: true,
        }
    }
}

/// Batch-wise Hellinger distance drift detection.
///
/// Each batch is compared to a reference built from all batches since the
/// last drift via the mean per-feature Hellinger distance. A drift is
/// flagged when the distance jumps by more than `mean + gamma * std` of the
/// magnitudes of earlier jumps.
#[derive(Debug, Clone)]
pub struct Hdddm {
    cfg: HdddmConfig,
    reference: Vec<Vec<f64>>,
    current: Vec<Vec<f64>>,
    current_end: f64,
    last_distance: Option<f64>,
    increments: Vec<f64>,
    dim: Option<usize>,
}

impl Hdddm {
    pub fn new(cfg: HdddmConfig) -> Result<Self, DetectorError> {
        if cfg.batch < 2 || !(cfg.gamma >= 0.0) {
            return Err(DetectorError::Config {
                detector: "hdddm",
                message: format!("need batch >= 2 and gamma >= 0; got {cfg:?}"),
            });
        }
        Ok(Self {
            cfg,
            reference: Vec::new(),
            current: Vec::new(),
            current_end: 0.0,
            last_distance: None,
            increments: Vec::new(),
            dim: None,
        })
    }

    pub fn bins(&self) -> usize {
        (self.cfg.batch as f64).sqrt().ceil() as usize
    }

    fn distance(&self) -> f64 {
        let d = self.dim.unwrap_or(0);
        if d == 0 {
            return 0.0;
        }
        let bins = self.bins();
        let mut total = 0.0;
        for j in 0..d {
            let r: Vec<f64> = self.reference.iter().map(|x| x[j]).collect();
            let c: Vec<f64> = self.current.iter().map(|x| x[j]).collect();
            let (lo, hi) = r
                .iter()
                .chain(&c)
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
            let hr = histogram(&r, bins, lo, hi);
            let hc = histogram(&c, bins, lo, hi);
            total += hellinger(&hr, &hc).expect("equal bin counts");
        }
        total / d as f64
    }

    fn close_batch(&mut self) -> bool {
        let batch = std::mem::take(&mut self.current);
        if self.reference.is_empty() {
            self.reference = batch;
            return false;
        }
        self.current = batch;
        let dist = self.distance();
        let batch = std::mem::take(&mut self.current);
        let mut drift = false;
        if let Some(prev) = self.last_distance {
            let eps = dist - prev;
            if self.increments.len() >= 2 {
                let k = self.increments.len() as f64;
                let mean = self.increments.iter().sum::<f64>() / k;
                let var = self.increments.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (k - 1.0);
                drift = eps > mean + self.cfg.gamma * var.sqrt();
            }
            if !drift {
                self.increments.push(eps.abs());
            }
        }
        if drift {
            self.reference = batch;
            self.last_distance = None;
        } else {
            self.reference.extend(batch);
            self.last_distance = Some(dist);
        }
        drift
    }
}

impl DriftDetector for Hdddm {
    fn name(&self) -> &'static str {
        "hdddm"
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
        self.current_end = obs.sample.timestamp;
        if self.current.len() < self.cfg.batch {
            return Ok(DetectorStatus::Stable);
        }
        Ok(if self.close_batch() {
            DetectorStatus::Drift { at: self.current_end }
        } else {
            DetectorStatus::Stable
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sample::TimedSample;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn run(det: &mut Hdddm, seed: u64, n: usize, change: usize, shift: f64) -> Vec<usize> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .filter(|&i| {
                let z: f64 = StandardNormal.sample(&mut rng);
                let w: f64 = StandardNormal.sample(&mut rng);
                let m = if i >= change { shift } else { 0.0 };
                let s = TimedSample::new(vec![z + m, w + m], i as f64);
                det.update(Observation { sample: &s, error: None }).unwrap().is_drift()
            })
            .collect()
    }

    #[test]
    fn stationary_batches_rarely_drift() {
        let mut det = Hdddm::new(HdddmConfig::default()).unwrap();
        let fired = run(&mut det, 1, 50 * 400, usize::MAX, 0.0);
        assert!(fired.len() <= 40, "{} drifts over 400 batches", fired.len());
    }

    #[test]
    fn marginal_shift_is_caught_on_first_batch() {
        let mut hits = 0;
        for seed in 0..30 {
            let mut det = Hdddm::new(HdddmConfig::default()).unwrap();
            let fired = run(&mut det, seed, 1500, 1000, 3.0);
            if fired.contains(&1049) {
                hits += 1;
            }
        }
        assert!(hits >= 27, "{hits}/30");
    }
}
