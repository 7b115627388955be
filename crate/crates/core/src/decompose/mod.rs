//! Drifting-feature decomposition: split a stream `X` into a part `X_D` that
//! carries all dependence on time and a remainder that does not.
//!
//! Two models are provided. The linear one unmixes `(X, T)` with FastICA and
//! keeps only the sources that share information with time. The k-curve one
//! clusters samples around `k` time-dependent mean curves.

mod ica;
mod kcurve;

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::{SampleMatrix, ShapeError};
use crate::sample::{feature_matrix, timestamps, TimedSample};
use crate::stats::{mutual_information, StatsError};

pub use ica::{fastica_fit, IcaModel, ICA_MAX_ITER, ICA_TOLERANCE};
pub use kcurve::{kcurve_fit, kcurve_transform, CurveModel, KcurveConfig, RbfCurve, KCURVE_MAX_ROUNDS, RIDGE};

#[derive(Debug, Error)]
pub enum DecomposeError {
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("input has {got} columns, model expects {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("covariance is numerically singular: {0}")]
    Rank(String),
    #[error("FastICA did not converge within {iterations} iterations")]
    Convergence { iterations: usize },
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("decomposition identity violated by {0:e}")]
    Identity(f64),
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("csv output failed: {0}")]
    Csv(#[from] csv::Error),
}

/// `X = X_D + residual`; `x_i` is the non-drifting part `X + E[X] − X_D`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub x_d: SampleMatrix,
    pub x_i: SampleMatrix,
    pub residual: SampleMatrix,
}

impl Decomposition {
    /// Builds the decomposition of `x` given its drifting part.
    pub fn from_drift(x: &SampleMatrix, x_d: SampleMatrix) -> Result<Self, DecomposeError> {
        let residual = x.sub(&x_d)?;
        let means = x.column_means();
        let d = x.n_cols();
        let data = residual
            .as_slice()
            .iter()
            .enumerate()
            .map(|(k, r)| r + means[k % d])
            .collect();
        let x_i = SampleMatrix::from_vec(x.n_rows(), d, data)?;
        Ok(Self { x_d, x_i, residual })
    }

    /// Largest entry of `|X_D + X_I − X − E[X]|`.
    pub fn identity_gap(&self, x: &SampleMatrix) -> f64 {
        let means = x.column_means();
        let d = x.n_cols();
        (0..x.n_rows())
            .flat_map(|i| (0..d).map(move |j| (i, j)))
            .map(|(i, j)| (self.x_d.get(i, j) + self.x_i.get(i, j) - x.get(i, j) - means[j]).abs())
            .fold(0.0, f64::max)
    }
}

/// Threshold on per-source mutual information with time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MiThreshold {
    /// Mean of the per-source values.
    Auto,
    Value(f64),
}

impl fmt::Display for MiThreshold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MiThreshold::Auto => f.write_str("auto"),
            MiThreshold::Value(v) => write!(f, "{v}"),
        }
    }
}

impl FromStr for MiThreshold {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(MiThreshold::Auto);
        }
        match s.parse::<f64>() {
            Ok(v) if v.is_finite() && v >= 0.0 => Ok(MiThreshold::Value(v)),
            _ => Err(format!("expected `auto` or a non-negative number, got `{s}`")),
        }
    }
}

/// Fitted linear decomposition model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub ica: IcaModel,
    /// Mutual information of each source with time, in nats.
    pub mutual_information: Vec<f64>,
    pub threshold: f64,
    pub drifting: Vec<bool>,
}

impl LinearModel {
    /// Decomposes new samples with the fitted unmixing.
    pub fn transform(&self, samples: &[TimedSample]) -> Result<Decomposition, DecomposeError> {
        let x = feature_matrix(samples)?;
        let xt = x.with_column(&timestamps(samples))?;
        let s = self.ica.unmix(&xt)?;
        self.decompose(&x, &s)
    }

    fn decompose(&self, x: &SampleMatrix, s: &SampleMatrix) -> Result<Decomposition, DecomposeError> {
        let d = x.n_cols();
        let k = s.n_cols();
        let means = s.column_means();
        let data: Vec<f64> = s
            .rows()
            .flat_map(|row| (0..k).map(move |j| (row, j)))
            .map(|(row, j)| if self.drifting[j] { row[j] } else { means[j] })
            .collect();
        let s_d = SampleMatrix::from_vec(s.n_rows(), k, data)?;
        let full = self.ica.mix(&s_d)?;
        // Drop the appended time coordinate.
        let x_d: Vec<f64> = full.rows().flat_map(|r| r[..d].to_vec()).collect();
        let x_d = SampleMatrix::from_vec(x.n_rows(), d, x_d)?;
        Decomposition::from_drift(x, x_d)
    }
}

/// Linear decomposition of a stream.
///
/// FastICA runs on `(X, T)`; sources whose mutual information with `T`
/// reaches `i_min` form `S_D`, the others are frozen at their mean, and
/// `X_D` is the remixed `S_D` without its time coordinate.
pub fn linear_drifda(
    samples: &[TimedSample],
    n_sources: usize,
    i_min: MiThreshold,
    seed: u64,
) -> Result<(LinearModel, Decomposition), DecomposeError> {
    if samples.len() < 20 * n_sources {
        return Err(DecomposeError::TooFewSamples {
            needed: 20 * n_sources,
            got: samples.len(),
        });
    }
    let x = feature_matrix(samples)?;
    let t = timestamps(samples);
    let xt = x.with_column(&t)?;
    let ica = fastica_fit(&xt, n_sources, seed)?;
    let mi = (0..n_sources)
        .map(|j| mutual_information(&ica.sources.col_values(j), &t))
        .collect::<Result<Vec<_>, _>>()?;
    let threshold = match i_min {
        MiThreshold::Auto => mi.iter().sum::<f64>() / mi.len() as f64,
        MiThreshold::Value(v) => v,
    };
    // With every source below the threshold nothing drifts; with all values
    // equal the mean threshold would keep pure noise, so require I > 0.
    let drifting = mi.iter().map(|&v| v >= threshold && v > 0.0).collect();
    let model = LinearModel {
        ica,
        mutual_information: mi,
        threshold,
        drifting,
    };
    let dec = model.decompose(&x, &model.ica.sources)?;
    Ok((model, dec))
}

/// Splits `A (s_d + s_i)` into its drifting and non-drifting parts.
///
/// `a` is `m × k`; `s_d` and `s_i` are `n × k` with the components of the
/// other part set to zero. Returns `x_d = A s_d + A E[s_i]` and
/// `x_i = A s_i + A E[s_d]`, after checking `x_d + x_i = x + E[x]`.
pub fn linear_identities(
    a: &SampleMatrix,
    s_d: &SampleMatrix,
    s_i: &SampleMatrix,
) -> Result<(SampleMatrix, SampleMatrix), DecomposeError> {
    s_d.check_same_shape(s_i)?;
    if a.n_cols() != s_d.n_cols() {
        return Err(ShapeError::Mismatch(format!(
            "mixing has {} columns, sources have {}",
            a.n_cols(),
            s_d.n_cols()
        ))
        .into());
    }
    let am = a.to_dmatrix();
    let n = s_d.n_rows();
    let sd = s_d.to_dmatrix().transpose();
    let si = s_i.to_dmatrix().transpose();
    let mean_d = &am * DVector::from_column_slice(&s_d.column_means());
    let mean_i = &am * DVector::from_column_slice(&s_i.column_means());
    let mut x_d = &am * &sd;
    let mut x_i = &am * &si;
    for j in 0..n {
        let mut col = x_d.column_mut(j);
        col += &mean_i;
        let mut col = x_i.column_mut(j);
        col += &mean_d;
    }
    let x = &am * (sd + si);
    let x_mean = x.column_mean();
    let mut gap: f64 = 0.0;
    let mut scale: f64 = 1.0;
    for j in 0..n {
        for r in 0..am.nrows() {
            let lhs = x_d[(r, j)] + x_i[(r, j)];
            let rhs = x[(r, j)] + x_mean[r];
            gap = gap.max((lhs - rhs).abs());
            scale = scale.max(rhs.abs());
        }
    }
    if gap > 1e-10 * scale {
        return Err(DecomposeError::Identity(gap));
    }
    Ok((
        SampleMatrix::from_dmatrix(&x_d.transpose())?,
        SampleMatrix::from_dmatrix(&x_i.transpose())?,
    ))
}

/// Writes `t, x_*, xd_*, resid_*` rows.
pub fn write_decomposition_csv<W: Write>(
    out: W,
    times: &[f64],
    x: &SampleMatrix,
    dec: &Decomposition,
) -> Result<(), DecomposeError> {
    x.check_same_shape(&dec.x_d)?;
    if times.len() != x.n_rows() {
        return Err(ShapeError::Mismatch(format!("{} times for {} rows", times.len(), x.n_rows())).into());
    }
    let d = x.n_cols();
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    for prefix in ["x", "xd", "resid"] {
        header.extend((0..d).map(|j| format!("{prefix}_{j}")));
    }
    w.write_record(&header)?;
    for (i, t) in times.iter().enumerate() {
        let mut rec = vec![t.to_string()];
        for m in [x, &dec.x_d, &dec.residual] {
            rec.extend(m.row(i).iter().map(f64::to_string));
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{hsic_test, time_dependency_score, DEFAULT_KNN};
    use crate::streams::{generate, Dataset, StreamSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    
    fn matrix(rows: &[Vec<f64>]) -> SampleMatrix {
        SampleMatrix::from_rows(rows).unwrap()
    }

    /// Feature 0 follows time, feature 1 is noise. Uniform noise keeps
    /// every source non-Gaussian, so the unmixing is identifiable.
    fn drift_plus_noise(seed: u64, n: usize) -> Vec<TimedSample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let t = i as f64 / n as f64;
                let a: f64 = rng.random::<f64>() - 0.5;
                let b: f64 = rng.random::<f64>() - 0.5;
                TimedSample::new(vec![t + 0.2 * a, b], t)
            })
            .collect()
    }

    #[test]
    fn identities_with_identity_mixing() {
        let a = matrix(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        let s_d = matrix(&[vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.0, 0.0]]);
        let s_i = matrix(&[vec![0.0, 2.0], vec![0.0, -1.0], vec![0.0, -1.0]]);
        let (x_d, x_i) = linear_identities(&a, &s_d, &s_i).unwrap();
        assert_eq!(x_d, s_d);
        assert_eq!(x_i, s_i);
    }

    #[test]
    fn identities_hold_for_random_mixing() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut r = || rng.random::<f64>() * 4.0 - 1.0;
        let a = matrix(&(0..3).map(|_| vec![r(), r(), r()]).collect::<Vec<_>>());
        let s_d = matrix(&(0..50).map(|_| vec![r() + 3.0, 0.0, 0.0]).collect::<Vec<_>>());
        let s_i = matrix(&(0..50).map(|_| vec![0.0, r() - 2.0, r()]).collect::<Vec<_>>());
        let (x_d, x_i) = linear_identities(&a, &s_d, &s_i).unwrap();
        let sum: Vec<Vec<f64>> = (0..50)
            .map(|i| (0..3).map(|j| s_d.get(i, j) + s_i.get(i, j)).collect())
            .collect();
        let am = a.to_dmatrix();
        let x = SampleMatrix::from_dmatrix(&(am * matrix(&sum).to_dmatrix().transpose()).transpose()).unwrap();
        let mean = x.column_means();
        for i in 0..50 {
            for j in 0..3 {
                assert!((x_d.get(i, j) + x_i.get(i, j) - x.get(i, j) - mean[j]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn constant_non_drifting_part() {
        let a = matrix(&[vec![2.0, 1.0], vec![0.0, 1.0]]);
        let s_d = matrix(&[vec![1.0, 0.0], vec![3.0, 0.0], vec![-2.0, 0.0]]);
        let s_i = matrix(&[vec![0.0, 5.0], vec![0.0, 5.0], vec![0.0, 5.0]]);
        let (x_d, x_i) = linear_identities(&a, &s_d, &s_i).unwrap();
        assert!(x_i.rows().all(|r| r == x_i.row(0)));
        for i in 0..3 {
            // x_d = A s_d + A (0, 5) = x exactly, since s_i is its own mean.
            assert!((x_d.get(i, 0) - (2.0 * s_d.get(i, 0) + 5.0)).abs() < 1e-12);
            assert!((x_d.get(i, 1) - 5.0).abs() < 1e-12);
        }
        let bad = matrix(&[vec![1.0], vec![2.0]]);
        assert!(matches!(linear_identities(&a, &bad, &bad), Err(DecomposeError::Shape(_))));
    }

    #[test]
    fn square_residual_loses_time_dependence() {
        let stream = generate(&StreamSpec::new(Dataset::Square, 1000, 1)).unwrap();
        let (model, dec) = linear_drifda(&stream.samples, 3, MiThreshold::Auto, 1).unwrap();
        let x = feature_matrix(&stream.samples).unwrap();
        let t = timestamps(&stream.samples);
        assert!(dec.identity_gap(&x) < 1e-8);
        let raw = time_dependency_score(&x, &t, DEFAULT_KNN).unwrap();
        let resid = time_dependency_score(&dec.residual, &t, DEFAULT_KNN).unwrap();
        assert!(resid <= 0.1 && resid < raw, "{resid} vs {raw}, mi {:?}", model.mutual_information);
    }

    #[test]
    fn iid_stream_has_constant_drift_part() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let samples: Vec<TimedSample> = (0..600)
            .map(|i| TimedSample::new(vec![rng.random(), rng.random()], i as f64))
            .collect();
        let (model, dec) = linear_drifda(&samples, 3, MiThreshold::Value(10.0), 0).unwrap();
        assert!(model.drifting.iter().all(|d| !d));
        let x = feature_matrix(&samples).unwrap();
        let mean = x.column_means();
        for i in 0..x.n_rows() {
            for j in 0..2 {
                assert!((dec.x_d.get(i, j) - mean[j]).abs() < 1e-9);
                assert!((dec.residual.get(i, j) - (x.get(i, j) - mean[j])).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn drifting_feature_is_isolated() {
        let samples = drift_plus_noise(6, 800);
        let (_, dec) = linear_drifda(&samples, 3, MiThreshold::Auto, 6).unwrap();
        let x = feature_matrix(&samples).unwrap();
        let t = timestamps(&samples);
        let spread = |j: usize| {
            let v = dec.x_d.col_values(j);
            let m = v.iter().sum::<f64>() / v.len() as f64;
            v.iter().map(|a| (a - m).powi(2)).sum::<f64>() / v.len() as f64
        };
        assert!(spread(0) > 20.0 * spread(1), "{} vs {}", spread(0), spread(1));
        let raw = time_dependency_score(&x, &t, DEFAULT_KNN).unwrap();
        let resid = time_dependency_score(&dec.residual, &t, DEFAULT_KNN).unwrap();
        assert!(resid < raw);
    }

    #[test]
    fn held_out_non_drifting_part_is_independent_of_time() {
        let mut accepted = 0;
        for seed in 0..20 {
            let samples = drift_plus_noise(100 + seed, 800);
            // Fit on even positions, test on odd ones.
            let fit: Vec<_> = samples.iter().step_by(2).cloned().collect();
            let held: Vec<_> = samples.iter().skip(1).step_by(2).cloned().collect();
            let (model, _) = linear_drifda(&fit, 3, MiThreshold::Auto, seed).unwrap();
            let dec = model.transform(&held).unwrap();
            let p = hsic_test(&dec.x_i, &timestamps(&held), 200, seed).unwrap().p_value;
            if p >= 0.01 {
                accepted += 1;
            }
        }
        assert!(accepted >= 19, "{accepted}/20");
    }

    #[test]
    fn threshold_parsing() {
        assert_eq!("auto".parse::<MiThreshold>().unwrap(), MiThreshold::Auto);
        assert_eq!("0.2".parse::<MiThreshold>().unwrap(), MiThreshold::Value(0.2));
        assert!("-1".parse::<MiThreshold>().is_err());
        assert!("x".parse::<MiThreshold>().is_err());
    }

    #[test]
    fn csv_has_expected_columns() {
        let x = matrix(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        let dec = Decomposition::from_drift(&x, matrix(&[vec![0.5, 2.0], vec![3.0, 3.0]])).unwrap();
        let mut buf = Vec::new();
        write_decomposition_csv(&mut buf, &[0.0, 1.0], &x, &dec).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,x_0,x_1,xd_0,xd_1,resid_0,resid_1");
        assert_eq!(lines.next().unwrap(), "0,1,2,0.5,2,0.5,0");
    }
}
