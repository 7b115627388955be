//! Streaming drift detectors behind one update interface.
//!
//! [`Swidd`] tests a single sliding window for dependence between samples
//! and their arrival times. The baselines follow their usual constructions:
//! [`Adwin`] and [`Ddm`] watch the error signal of a fixed classifier,
//! [`Hdddm`] and [`K2st`] compare batches of raw samples.

mod adwin;
mod ddm;
mod hdddm;
mod k2st;
mod swidd;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sample::TimedSample;
use crate::stats::StatsError;

pub use adwin::{Adwin, AdwinConfig};
pub use ddm::{Ddm, DdmConfig};
pub use hdddm::{Hdddm, HdddmConfig};
pub use k2st::{K2st, K2stConfig};
pub use swidd::{ShrinkMode, Swidd, SwiddConfig};

#[derive(Debug, Error, PartialEq)]
pub enum DetectorError {
    #[error("timestamp {got} arrived after {last}")]
    OutOfOrderTimestamp { last: f64, got: f64 },
    #[error("{0} needs a supervised error signal (a label column and a trained classifier)")]
    MissingErrorSignal(&'static str),
    #[error("sample has {got} features, detector was started with {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid {detector} configuration: {message}")]
    Config {
        detector: &'static str,
        message: String,
    },
    #[error(transparent)]
    Stats(#[from] StatsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum DetectorStatus {
    Stable,
    Warning,
    Drift { at: f64 },
}

impl DetectorStatus {
    pub fn is_drift(&self) -> bool {
        matches!(self, DetectorStatus::Drift { .. })
    }
}

/// One step of input: the raw sample plus, for supervised detectors, whether
/// the reference classifier got it wrong.
#[derive(Debug, Clone, Copy)]
pub struct Observation<'a> {
    pub sample: &'a TimedSample,
    pub error: Option<bool>,
}

pub trait DriftDetector: Send {
    fn name(&self) -> &'static str;

    fn update(&mut self, obs: Observation<'_>) -> Result<DetectorStatus, DetectorError>;

    /// Whether [`DriftDetector::update`] needs `obs.error`.
    fn needs_error_signal(&self) -> bool {
        false
    }
}

/// Per-detector configuration, tagged by detector name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "detector", rename_all = "snake_case")]
pub enum DetectorConfig {
    Swidd(SwiddConfig),
    Adwin(AdwinConfig),
    Ddm(DdmConfig),
    Hdddm(HdddmConfig),
    K2st(K2stConfig),
}

impl DetectorConfig {
    pub const NAMES: [&'static str; 5] = ["swidd", "adwin", "ddm", "hdddm", "k2st"];

    pub fn default_for(name: &str) -> Option<Self> {
        Some(match name {
            "swidd" => Self::Swidd(SwiddConfig::default()),
            "adwin" => Self::Adwin(AdwinConfig::default()),
            "ddm" => Self::Ddm(DdmConfig::default()),
            "hdddm" => Self::Hdddm(HdddmConfig::default()),
            "k2st" => Self::K2st(K2stConfig::default()),
            _ => return None,
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Swidd(_) => "swidd",
            Self::Adwin(_) => "adwin",
            Self::Ddm(_) => "ddm",
            Self::Hdddm(_) => "hdddm",
            Self::K2st(_) => "k2st",
        }
    }

    pub fn supervised(&self) -> bool {
        matches!(self, Self::Adwin(_) | Self::Ddm(_))
    }

    /// Builds a detector; `seed` drives any internal permutation tests.
    pub fn build(&self, seed: u64) -> Result<Box<dyn DriftDetector>, DetectorError> {
        Ok(match self {
            Self::Swidd(c) => Box::new(Swidd::new(c.clone(), seed)?),
            Self::Adwin(c) => Box::new(Adwin::new(c.clone())?),
            Self::Ddm(c) => Box::new(Ddm::new(c.clone())),
            Self::Hdddm(c) => Box::new(Hdddm::new(c.clone())?),
            Self::K2st(c) => Box::new(K2st::new(c.clone(), seed)?),
        })
    }
}

/// Features a distributional detector sees: the label, when present and
/// requested, is appended as an extra coordinate.
pub(crate) fn observed_features(sample: &TimedSample, with_label: bool) -> Vec<f64> {
    if with_label {
        sample.joint_features()
    } else {
        sample.features.clone()
    }
}

/// SplitMix64 step, used to derive per-test seeds.
pub(crate) fn mix_seed(seed: u64, counter: u64) -> u64 {
    let mut z = seed.wrapping_add(counter.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
