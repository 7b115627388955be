use serde::{Deserialize, Serialize};

use crate::matrix::{SampleMatrix, ShapeError};

/// One observation of a stream: features, arrival time and an optional class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedSample {
    pub features: Vec<f64>,
    pub timestamp: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<u32>,
}

impl TimedSample {
    pub fn new(features: Vec<f64>, timestamp: f64) -> Self {
        Self {
            features,
            timestamp,
            label: None,
        }
    }

    pub fn labeled(features: Vec<f64>, timestamp: f64, label: u32) -> Self {
        Self {
            features,
            timestamp,
            label: Some(label),
        }
    }

    /// Features with the label appended as a trailing coordinate, when present.
    pub fn joint_features(&self) -> Vec<f64> {
        let mut v = self.features.clone();
        if let Some(y) = self.label {
            v.push(f64::from(y));
        }
        v
    }
}

/// Stacks the features of `samples` into a matrix.
pub fn feature_matrix(samples: &[TimedSample]) -> Result<SampleMatrix, ShapeError> {
    let rows: Vec<&[f64]> = samples.iter().map(|s| s.features.as_slice()).collect();
    SampleMatrix::from_rows(&rows)
}

pub fn timestamps(samples: &[TimedSample]) -> Vec<f64> {
    samples.iter().map(|s| s.timestamp).collect()
}
