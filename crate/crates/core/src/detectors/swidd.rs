use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{mix_seed, observed_features, DetectorError, DetectorStatus, DriftDetector, Observation};
use crate::matrix::SampleMatrix;
use crate::stats::{
    hsic_gram_test_rejects, median_heuristic, rbf_gram, standardize_columns, StatsError, DEFAULT_PERMUTATIONS,
    MIN_HSIC_TEST_SAMPLES, MIN_PERMUTATIONS,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ShrinkMode {
    /// Drop one tail element, retest.
    #[default]
    Literal,
    /// Drop half of the droppable tail, retest.
    Halving,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SwiddConfig {
    pub p: f64,
    pub n_min: usize,
    pub stride: usize,
    pub permutations: usize,
    /// Oldest samples are evicted silently beyond this length.
    pub max_window: usize,
    pub shrink: ShrinkMode,
    /// z-score each coordinate within the window before applying the kernel.
    pub standardize: bool,
    /// Data kernel bandwidth as a multiple of the median pairwise distance.
    pub bandwidth_scale: f64,
    /// Treat the class label as one more data coordinate.
    pub use_label: bool,
}

impl Default for SwiddConfig {
    fn default() -> Self {
        Self {
            p: 0.01,
            n_min: 20,
            stride: 10,
            permutations: DEFAULT_PERMUTATIONS,
            max_window: 200,
            shrink: ShrinkMode::Literal,
            standardize: true,
            bandwidth_scale: 0.25,
            use_label: true,
        }
    }
}

impl SwiddConfig {
    pub fn validate(&self) -> Result<(), DetectorError> {
        let fail = |message: String| Err(DetectorError::Config { detector: "swidd", message });
        if !(self.p > 0.0 && self.p < 1.0) {
            return fail(format!("p must lie in (0, 1), got {}", self.p));
        }
        if self.n_min < MIN_HSIC_TEST_SAMPLES {
            return fail(format!("n_min must be at least {MIN_HSIC_TEST_SAMPLES}, got {}", self.n_min));
        }
        if self.stride == 0 {
            return fail("stride must be at least 1".into());
        }
        if self.permutations < MIN_PERMUTATIONS {
            return fail(format!("permutations must be at least {MIN_PERMUTATIONS}"));
        }
        if !(self.bandwidth_scale > 0.0 && self.bandwidth_scale.is_finite()) {
            return fail(format!("bandwidth_scale must be positive, got {}", self.bandwidth_scale));
        }
        if self.max_window < self.n_min {
            return fail(format!("max_window {} is below n_min {}", self.max_window, self.n_min));
        }
        Ok(())
    }
}

/// Single-window independence drift detector.
///
/// Keeps one window of recent samples. Every `stride` arrivals it tests the
/// window for dependence between data and timestamps; while the test
/// rejects, the oldest samples are dropped and the test repeated.
#[derive(Debug, Clone)]
pub struct Swidd {
    cfg: SwiddConfig,
    seed: u64,
    window: VecDeque<(Vec<f64>, f64)>,
    dim: Option<usize>,
    arrivals: u64,
    tests: u64,
}

impl Swidd {
    pub fn new(cfg: SwiddConfig, seed: u64) -> Result<Self, DetectorError> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            seed,
            window: VecDeque::new(),
            dim: None,
            arrivals: 0,
            tests: 0,
        })
    }

    pub fn config(&self) -> &SwiddConfig {
        &self.cfg
    }

    pub fn window_len(&self) -> usize {
        self.window.len()
    }

    /// Number of independence tests run so far, shrink retests included.
    pub fn tests_run(&self) -> u64 {
        self.tests
    }

    fn window_rejects(&mut self) -> Result<bool, DetectorError> {
        let d = self.dim.unwrap_or(0);
        let n = self.window.len();
        let mut data = Vec::with_capacity(n * d);
        let mut times = Vec::with_capacity(n);
        for (x, t) in &self.window {
            data.extend_from_slice(x);
            times.push(*t);
        }
        let mut x = SampleMatrix::from_vec(n, d, data).map_err(StatsError::from)?;
        if self.cfg.standardize {
            x = standardize_columns(&x);
        }
        let k = rbf_gram(&x, self.cfg.bandwidth_scale * median_heuristic(&x))?;
        let seed = mix_seed(self.seed, self.tests);
        self.tests += 1;
        Ok(hsic_gram_test_rejects(&k, &times, self.cfg.permutations, self.cfg.p, seed)?)
    }

    pub fn push(&mut self, features: Vec<f64>, timestamp: f64) -> Result<DetectorStatus, DetectorError> {
        if let Some(&(_, last)) = self.window.back() {
            if timestamp < last {
                return Err(DetectorError::OutOfOrderTimestamp { last, got: timestamp });
            }
        }
        match self.dim {
            Some(expected) if expected != features.len() => {
                return Err(DetectorError::DimensionMismatch {
                    expected,
                    got: features.len(),
                })
            }
            None => self.dim = Some(features.len()),
            _ => {}
        }
        self.window.push_back((features, timestamp));
        if self.window.len() > self.cfg.max_window {
            self.window.pop_front();
        }
        self.arrivals += 1;
        if self.arrivals % self.cfg.stride as u64 != 0 || self.window.len() < self.cfg.n_min {
            return Ok(DetectorStatus::Stable);
        }
        let mut dropped = false;
        while self.window.len() >= self.cfg.n_min && self.window_rejects()? {
            let k = match self.cfg.shrink {
                ShrinkMode::Literal => 1,
                ShrinkMode::Halving => ((self.window.len() + 2 - self.cfg.n_min) / 2).max(1),
            };
            self.window.drain(..k);
            dropped = true;
        }
        Ok(if dropped {
            DetectorStatus::Drift { at: timestamp }
        } else {
            DetectorStatus::Stable
        })
    }
}

impl DriftDetector for Swidd {
    fn name(&self) -> &'static str {
        "swidd"
    }

    fn update(&mut self, obs: Observation<'_>) -> Result<DetectorStatus, DetectorError> {
        self.push(observed_features(obs.sample, self.cfg.use_label), obs.sample.timestamp)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn shift_stream(seed: u64, n: usize, change: usize, shift: f64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z + if i >= change { shift } else { 0.0 }
            })
            .collect()
    }

    #[test]
    fn constant_stream_never_drifts() {
        let mut det = Swidd::new(SwiddConfig::default(), 1).unwrap();
        for i in 0..600 {
            assert!(!det.push(vec![0.0], i as f64).unwrap().is_drift());
        }
    }

    #[test]
    fn rejects_out_of_order_timestamps() {
        let mut det = Swidd::new(SwiddConfig::default(), 1).unwrap();
        det.push(vec![0.0], 2.0).unwrap();
        assert_eq!(
            det.push(vec![0.0], 1.0),
            Err(DetectorError::OutOfOrderTimestamp { last: 2.0, got: 1.0 })
        );
        assert!(matches!(
            det.push(vec![0.0, 1.0], 3.0),
            Err(DetectorError::DimensionMismatch { expected: 1, got: 2 })
        ));
    }

    #[test]
    fn invalid_configs_are_refused() {
        for cfg in [
            SwiddConfig { p: 0.0, ..Default::default() },
            SwiddConfig { n_min: 4, ..Default::default() },
            SwiddConfig { stride: 0, ..Default::default() },
            SwiddConfig { permutations: 10, ..Default::default() },
            SwiddConfig { max_window: 10, ..Default::default() },
            SwiddConfig { bandwidth_scale: 0.0, ..Default::default() },
        ] {
            assert!(Swidd::new(cfg, 0).is_err());
        }
    }

    #[test]
    fn detects_abrupt_shift_quickly() {
        let mut hits = 0;
        for seed in 0..50 {
            let xs = shift_stream(seed, 600, 500, 5.0);
            let mut det = Swidd::new(SwiddConfig::default(), seed).unwrap();
            let mut first = None;
            for (i, &x) in xs.iter().enumerate() {
                if det.push(vec![x], i as f64).unwrap().is_drift() && i >= 500 && first.is_none() {
                    first = Some(i);
                }
            }
            if first.is_some_and(|i| i < 550) {
                hits += 1;
            }
        }
        assert!(hits >= 48, "{hits}/50");
    }

    #[test]
    fn shrink_stops_at_n_min_and_keeps_newest() {
        let cfg = SwiddConfig {
            stride: 1,
            ..Default::default()
        };
        let n_min = cfg.n_min;
        let mut det = Swidd::new(cfg, 3).unwrap();
        // Strictly increasing data: every window is time-dependent.
        for i in 0..150 {
            det.push(vec![i as f64], i as f64).unwrap();
            assert!(det.window_len() >= (n_min - 1).min(i + 1));
            assert_eq!(det.window.back().unwrap().1, i as f64);
        }
    }

    #[test]
    fn periodic_mean_is_flagged() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut det = Swidd::new(SwiddConfig::default(), 9).unwrap();
        let mut fired = false;
        for i in 0..2000 {
            let t = i as f64 * 0.1;
            let z: f64 = StandardNormal.sample(&mut rng);
            fired |= det.push(vec![t.sin() + 0.1 * z], t).unwrap().is_drift();
        }
        assert!(fired);
    }

    #[test]
    fn halving_mode_also_detects() {
        let xs = shift_stream(4, 700, 500, 5.0);
        let cfg = SwiddConfig {
            shrink: ShrinkMode::Halving,
            ..Default::default()
        };
        let mut det = Swidd::new(cfg, 4).unwrap();
        let fired: Vec<usize> = xs
            .iter()
            .enumerate()
            .filter_map(|(i, &x)| det.push(vec![x], i as f64).unwrap().is_drift().then_some(i))
            .collect();
        assert!(fired.iter().any(|&i| (500..560).contains(&i)), "{fired:?}");
    }

    #[test]
    fn identical_runs_are_identical() {
        let xs = shift_stream(5, 800, 400, 2.0);
        let run = || {
            let mut det = Swidd::new(SwiddConfig::default(), 5).unwrap();
            xs.iter()
                .enumerate()
                .filter_map(|(i, &x)| det.push(vec![x], i as f64).unwrap().is_drift().then_some(i))
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }
}
