//! Nearest-centroid linear classifier used to turn labeled streams into the 0/1 error
//! signal that supervised drift detectors consume.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sample::TimedSample;

#[derive(Debug, Error, PartialEq)]
pub enum ClassifierError {
    #[error("training data has no labels")]
    Unlabeled,
    #[error("training data must contain both classes 0 and 1")]
    SingleClass,
}

/// Two-class linear rule: the perpendicular bisector of the class means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearClassifier {
    weights: Vec<f64>,
    bias: f64,
}

impl LinearClassifier {
    /// Fits on samples labeled 0 or 1 (any other label counts as 1).
    pub fn fit(samples: &[TimedSample]) -> Result<Self, ClassifierError> {
        let d = samples.first().map_or(0, |s| s.features.len());
        let mut sums = [DVector::zeros(d), DVector::zeros(d)];
        let mut counts = [0usize; 2];
        for s in samples {
            let c = usize::from(s.label.ok_or(ClassifierError::Unlabeled)? != 0);
            sums[c] += DVector::from_column_slice(&s.features);
            counts[c] += 1;
        }
        if counts.contains(&0) {
            return Err(ClassifierError::SingleClass);
        }
        let means = [&sums[0] / counts[0] as f64, &sums[1] / counts[1] as f64];
        let w = &means[1] - &means[0];
        let midpoint = (&means[0] + &means[1]) * 0.5;
        let bias = -w.dot(&midpoint);
        Ok(Self {
            weights: w.iter().copied().collect(),
            bias,
        })
    }

    pub fn predict(&self, features: &[f64]) -> u32 {
        let score: f64 = self.weights.iter().zip(features).map(|(w, x)| w * x).sum::<f64>() + self.bias;
        u32::from(score > 0.0)
    }

    /// `true` when the prediction disagrees with the sample's label.
    pub fn is_error(&self, sample: &TimedSample) -> Option<bool> {
        sample.label.map(|y| self.predict(&sample.features) != u32::from(y != 0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separates_two_clusters() {
        let mut samples = Vec::new();
        for i in 0..40 {
            let jitter = (i as f64 * 0.37).sin() * 0.3;
            samples.push(TimedSample::labeled(vec![-2.0 + jitter, jitter], i as f64, 0));
            samples.push(TimedSample::labeled(vec![2.0 - jitter, -jitter], i as f64, 1));
        }
        let clf = LinearClassifier::fit(&samples).unwrap();
        assert_eq!(clf.predict(&[-1.5, 0.0]), 0);
        assert_eq!(clf.predict(&[1.5, 0.0]), 1);
        assert!(samples.iter().all(|s| clf.is_error(s) == Some(false)));
    }

    #[test]
    fn needs_both_classes() {
        let one = vec![TimedSample::labeled(vec![0.0], 0.0, 1); 3];
        assert_eq!(LinearClassifier::fit(&one), Err(ClassifierError::SingleClass));
        let unlabeled = vec![TimedSample::new(vec![0.0], 0.0)];
        assert_eq!(LinearClassifier::fit(&unlabeled), Err(ClassifierError::Unlabeled));
    }
}
