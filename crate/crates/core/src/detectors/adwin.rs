use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{DetectorError, DetectorStatus, DriftDetector, Observation};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdwinConfig {
    pub delta: f64,
    /// Buckets of each size kept before the two oldest are merged.
    pub max_buckets: usize,
    /// Smallest sub-window on either side of a candidate cut.
    pub min_side: usize,
}

impl Default for AdwinConfig {
    fn default() -> Self {
        Self {
            delta: 0.002,
            max_buckets: 5,
            min_side: 5,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Bucket {
    n: u64,
    sum: f64,
    /// Sum of squared deviations from the bucket mean.
    m2: f64,
}

impl Bucket {
    fn merge(a: Bucket, b: Bucket) -> Bucket {
        let n = a.n + b.n;
        let diff = a.sum / a.n as f64 - b.sum / b.n as f64;
        Bucket {
            n,
            sum: a.sum + b.sum,
            m2: a.m2 + b.m2 + diff * diff * (a.n * b.n) as f64 / n as f64,
        }
    }
}

/// Adaptive windowing over a real-valued signal, stored as an exponential
/// histogram. A cut is made wherever the means of the two sides differ by
/// more than the confidence bound allows, and the older side is discarded.
#[derive(Debug, Clone)]
pub struct Adwin {
    cfg: AdwinConfig,
    // Oldest first; bucket sizes are non-increasing along the deque.
    buckets: VecDeque<Bucket>,
    total: Bucket,
}

impl Adwin {
    pub fn new(cfg: AdwinConfig) -> Result<Self, DetectorError> {
        if !(cfg.delta > 0.0 && cfg.delta < 1.0) || cfg.max_buckets < 2 || cfg.min_side == 0 {
            return Err(DetectorError::Config {
                detector: "adwin",
                message: format!("need delta in (0,1), max_buckets >= 2, min_side >= 1; got {cfg:?}"),
            });
        }
        Ok(Self {
            cfg,
            buckets: VecDeque::new(),
            total: Bucket { n: 0, sum: 0.0, m2: 0.0 },
        })
    }

    pub fn width(&self) -> u64 {
        self.total.n
    }

    pub fn mean(&self) -> f64 {
        if self.total.n == 0 {
            0.0
        } else {
            self.total.sum / self.total.n as f64
        }
    }

    fn insert(&mut self, value: f64) {
        let b = Bucket { n: 1, sum: value, m2: 0.0 };
        self.total = if self.total.n == 0 { b } else { Bucket::merge(self.total, b) };
        self.buckets.push_back(b);
        let mut size = 1;
        loop {
            let same: Vec<usize> = (0..self.buckets.len()).filter(|&i| self.buckets[i].n == size).collect();
            if same.len() <= self.cfg.max_buckets {
                break;
            }
            let (i, j) = (same[0], same[1]);
            self.buckets[i] = Bucket::merge(self.buckets[i], self.buckets[j]);
            self.buckets.remove(j);
            size *= 2;
        }
    }

    /// Finds the newest cut that the bound rejects, as a count of buckets to drop.
    fn find_cut(&self) -> Option<usize> {
        let n = self.total.n as f64;
        if self.total.n < 2 * self.cfg.min_side as u64 {
            return None;
        }
        let variance = self.total.m2 / n;
        let dd = (2.0 * n.ln() / self.cfg.delta).ln();
        let min_side = self.cfg.min_side as f64;
        let (mut n0, mut s0) = (0.0, 0.0);
        let mut cut = None;
        for (k, b) in self.buckets.iter().enumerate().take(self.buckets.len() - 1) {
            n0 += b.n as f64;
            s0 += b.sum;
            let n1 = n - n0;
            if n0 < min_side || n1 < min_side {
                continue;
            }
            let m = 1.0 / (n0 - min_side + 1.0) + 1.0 / (n1 - min_side + 1.0);
            let eps = (2.0 * m * variance * dd).sqrt() + 2.0 / 3.0 * dd * m;
            if (s0 / n0 - (self.total.sum - s0) / n1).abs() > eps {
                cut = Some(k + 1);
            }
        }
        cut
    }

    /// Feeds one value; `true` when the window was cut.
    pub fn push(&mut self, value: f64) -> bool {
        self.insert(value);
        let mut cut_any = false;
        while let Some(k) = self.find_cut() {
            self.buckets.drain(..k);
            self.total = self.buckets.iter().copied().reduce(Bucket::merge).expect("cut keeps a bucket");
            cut_any = true;
        }
        cut_any
    }
}

impl DriftDetector for Adwin {
    fn name(&self) -> &'static str {
        "adwin"
    }

    fn needs_error_signal(&self) -> bool {
        true
    }

    fn update(&mut self, obs: Observation<'_>) -> Result<DetectorStatus, DetectorError> {
        let err = obs.error.ok_or(DetectorError::MissingErrorSignal("adwin"))?;
        Ok(if self.push(f64::from(u8::from(err))) {
            DetectorStatus::Drift { at: obs.sample.timestamp }
        } else {
            DetectorStatus::Stable
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_stream_never_cuts() {
        let mut a = Adwin::new(AdwinConfig::default()).unwrap();
        for _ in 0..5000 {
            assert!(!a.push(0.0));
        }
        assert_eq!(a.width(), 5000);
    }

    #[test]
    fn bucket_sizes_stay_logarithmic() {
        let mut a = Adwin::new(AdwinConfig::default()).unwrap();
        for i in 0..10_000 {
            a.push((i % 2) as f64);
        }
        assert!(a.buckets.len() < 6 * 15, "{}", a.buckets.len());
        assert!(a.buckets.iter().zip(a.buckets.iter().skip(1)).all(|(x, y)| x.n >= y.n));
        assert!((a.mean() - 0.5).abs() < 1e-3);
    }

    #[test]
    fn detects_bernoulli_jump() {
        let mut hits = 0;
        for seed in 0..40 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut a = Adwin::new(AdwinConfig::default()).unwrap();
            let mut first = None;
            for i in 0..1000 {
                let p = if i < 500 { 0.1 } else { 0.9 };
                let cut = a.push(f64::from(u8::from(rng.random::<f64>() < p)));
                if cut && i >= 500 && first.is_none() {
                    first = Some(i);
                    // Only post-cut values remain.
                    assert!(a.width() <= (i - 500 + 1) as u64 + 32, "width {}", a.width());
                }
            }
            if first.is_some_and(|i| i < 600) {
                hits += 1;
            }
        }
        assert!(hits >= 38, "{hits}/40");
    }
}
