//! Evaluation harness: detector runs over generated streams, detection
//! scoring, decomposition scoring and report rendering.

use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{ClassifierError, LinearClassifier};
use crate::decompose::{
    kcurve_fit, kcurve_transform, linear_drifda, DecomposeError, KcurveConfig, MiThreshold,
};
use crate::detectors::{DetectorConfig, DetectorError, DetectorStatus, Observation, SwiddConfig};
use crate::matrix::{SampleMatrix, ShapeError};
use crate::sample::{feature_matrix, timestamps};
use crate::stats::{time_dependency_score, StatsError};
use crate::streams::{generate, Dataset, LabeledStream, StreamError, StreamSpec};

pub const DEFAULT_TOLERANCE: usize = 100;
/// Samples used to train the classifier behind supervised detectors.
pub const DEFAULT_TRAIN_SIZE: usize = 100;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Detector(#[from] DetectorError),
    #[error(transparent)]
    Stream(#[from] StreamError),
    #[error("cannot train the reference classifier: {0}")]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error(transparent)]
    Decompose(#[from] DecomposeError),
    #[error("tolerance window must be at least 1")]
    Tolerance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchingConfig {
    pub tolerance: usize,
}

impl Default for MatchingConfig {
    fn default() -> Self {
        Self {
            tolerance: DEFAULT_TOLERANCE,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    /// Mean samples from change to matched detection; `None` without matches.
    pub mean_delay: Option<f64>,
    pub true_positives: usize,
    pub detections: usize,
    pub changes: usize,
}

/// Greedy one-to-one matching of sorted detection indices to sorted change
/// indices: each detection takes the earliest unmatched change `c` with
/// `c <= d <= c + tolerance`.
pub fn score_detections(truth: &[usize], detections: &[usize], cfg: MatchingConfig) -> Score {
    let mut matched = vec![false; truth.len()];
    let mut delays = Vec::new();
    for &d in detections {
        if let Some(j) = (0..truth.len()).find(|&j| !matched[j] && truth[j] <= d && d - truth[j] <= cfg.tolerance) {
            matched[j] = true;
            delays.push((d - truth[j]) as f64);
        }
    }
    let tp = delays.len();
    let precision = if detections.is_empty() { 1.0 } else { tp as f64 / detections.len() as f64 };
    let recall = if truth.is_empty() { 1.0 } else { tp as f64 / truth.len() as f64 };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Score {
        f1,
        precision,
        recall,
        mean_delay: (tp > 0).then(|| delays.iter().sum::<f64>() / tp as f64),
        true_positives: tp,
        detections: detections.len(),
        changes: truth.len(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub index: usize,
    pub timestamp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorRun {
    pub detector: String,
    pub detections: Vec<Detection>,
    pub warnings: usize,
    /// Seconds spent in the update loop.
    pub runtime: f64,
}

impl DetectorRun {
    pub fn indices(&self) -> Vec<usize> {
        self.detections.iter().map(|d| d.index).collect()
    }
}

/// 0/1 error signal of a linear classifier trained on the first
/// `train_size` samples; `None` for unlabeled streams.
pub fn error_signal(stream: &LabeledStream, train_size: usize) -> Result<Option<Vec<bool>>, BenchError> {
    if !stream.has_labels() {
        return Ok(None);
    }
    let train = &stream.samples[..train_size.min(stream.len())];
    let clf = LinearClassifier::fit(train)?;
    Ok(Some(
        stream.samples.iter().map(|s| clf.is_error(s).unwrap_or(false)).collect(),
    ))
}

/// Streams every sample through a fresh detector.
pub fn run_detector(
    stream: &LabeledStream,
    config: &DetectorConfig,
    seed: u64,
    train_size: usize,
) -> Result<DetectorRun, BenchError> {
    let mut det = config.build(seed)?;
    let errors = if det.needs_error_signal() {
        Some(error_signal(stream, train_size)?.ok_or(DetectorError::MissingErrorSignal(config.name()))?)
    } else {
        None
    };
    let mut detections = Vec::new();
    let mut warnings = 0;
    let start = Instant::now();
    for (i, s) in stream.samples.iter().enumerate() {
        let obs = Observation {
            sample: s,
            error: errors.as_ref().map(|e| e[i]),
        };
        match det.update(obs)? {
            DetectorStatus::Drift { at } => detections.push(Detection { index: i, timestamp: at }),
            DetectorStatus::Warning => warnings += 1,
            DetectorStatus::Stable => {}
        }
    }
    Ok(DetectorRun {
        detector: config.name().to_string(),
        detections,
        warnings,
        runtime: start.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchCase {
    /// Stream template; its seed is replaced by each benchmark seed.
    pub spec: StreamSpec,
    pub detectors: Vec<DetectorConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub tolerances: Vec<usize>,
    pub train_size: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            tolerances: vec![DEFAULT_TOLERANCE],
            train_size: DEFAULT_TRAIN_SIZE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub detector: String,
    pub dataset: String,
    pub seed: u64,
    pub n: usize,
    pub change_indices: Vec<usize>,
    pub detections: Vec<Detection>,
    /// One score per configured tolerance, in the same order.
    pub scores: Vec<(usize, Score)>,
    pub runtime: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub detector: String,
    pub dataset: String,
    pub tolerance: usize,
    pub runs: usize,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub mean_delay: Option<f64>,
    pub runtime: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub runs: Vec<RunRecord>,
    pub summary: Vec<SummaryRow>,
}

/// Runs every (case, detector, seed) cell in parallel and averages over seeds.
pub fn run_benchmark(suite: &[BenchCase], seeds: &[u64], cfg: &BenchConfig) -> Result<BenchReport, BenchError> {
    if cfg.tolerances.contains(&0) {
        return Err(BenchError::Tolerance);
    }
    let streams: Vec<Vec<LabeledStream>> = suite
        .iter()
        .map(|case| {
            seeds
                .iter()
                .map(|&seed| {
                    let mut spec = case.spec.clone();
                    spec.seed = seed;
                    generate(&spec)
                })
                .collect::<Result<_, _>>()
        })
        .collect::<Result<_, _>>()?;
    let cells: Vec<(usize, usize, usize)> = suite
        .iter()
        .enumerate()
        .flat_map(|(c, case)| (0..case.detectors.len()).flat_map(move |d| (0..seeds.len()).map(move |s| (c, d, s))))
        .collect();
    let runs: Vec<RunRecord> = cells
        .par_iter()
        .map(|&(c, d, s)| {
            let stream = &streams[c][s];
            let config = &suite[c].detectors[d];
            let run = run_detector(stream, config, seeds[s], cfg.train_size)?;
            let truth = stream.change_point_indices();
            let found = run.indices();
            Ok(RunRecord {
                detector: run.detector,
                dataset: suite[c].spec.dataset.name().to_string(),
                seed: seeds[s],
                n: stream.len(),
                scores: cfg
                    .tolerances
                    .iter()
                    .map(|&tolerance| (tolerance, score_detections(&truth, &found, MatchingConfig { tolerance })))
                    .collect(),
                change_indices: truth,
                detections: run.detections,
                runtime: run.runtime,
            })
        })
        .collect::<Result<_, BenchError>>()?;
    let summary = summarize(&runs, &cfg.tolerances);
    Ok(BenchReport { runs, summary })
}

fn summarize(runs: &[RunRecord], tolerances: &[usize]) -> Vec<SummaryRow> {
    let mut keys: Vec<(String, String)> = Vec::new();
    for r in runs {
        let key = (r.dataset.clone(), r.detector.clone());
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    let mut rows = Vec::new();
    for (dataset, detector) in keys {
        let group: Vec<&RunRecord> = runs
            .iter()
            .filter(|r| r.dataset == dataset && r.detector == detector)
            .collect();
        let k = group.len() as f64;
        for (ti, &tolerance) in tolerances.iter().enumerate() {
            let mean = |f: &dyn Fn(&Score) -> f64| group.iter().map(|r| f(&r.scores[ti].1)).sum::<f64>() / k;
            let delays: Vec<f64> = group.iter().filter_map(|r| r.scores[ti].1.mean_delay).collect();
            rows.push(SummaryRow {
                detector: detector.clone(),
                dataset: dataset.clone(),
                tolerance,
                runs: group.len(),
                f1: mean(&|s| s.f1),
                precision: mean(&|s| s.precision),
                recall: mean(&|s| s.recall),
                mean_delay: (!delays.is_empty()).then(|| delays.iter().sum::<f64>() / delays.len() as f64),
                runtime: group.iter().map(|r| r.runtime).sum::<f64>() / k,
            });
        }
    }
    rows
}

impl BenchReport {
    pub fn row(&self, dataset: &str, detector: &str, tolerance: usize) -> Option<&SummaryRow> {
        self.summary
            .iter()
            .find(|r| r.dataset == dataset && r.detector == detector && r.tolerance == tolerance)
    }

    /// Aligned plain-text table of the summary rows.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<10} {:<14} {:>5} {:>6} {:>9} {:>7} {:>9} {:>10}",
            "detector", "dataset", "tol", "f1", "precision", "recall", "delay", "runtime_s"
        );
        for r in &self.summary {
            let delay = r.mean_delay.map_or_else(|| "-".to_string(), |d| format!("{d:.1}"));
            let _ = writeln!(
                out,
                "{:<10} {:<14} {:>5} {:>6.3} {:>9.3} {:>7.3} {:>9} {:>10.3}",
                r.detector, r.dataset, r.tolerance, r.f1, r.precision, r.recall, delay, r.runtime
            );
        }
        out
    }

    /// One CSV row per (run, tolerance).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("detector,dataset,seed,tolerance,f1,precision,recall,mean_delay,detections,changes,runtime_s\n");
        for r in &self.runs {
            for (tol, s) in &r.scores {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{},{},{}",
                    r.detector,
                    r.dataset,
                    r.seed,
                    tol,
                    s.f1,
                    s.precision,
                    s.recall,
                    s.mean_delay.map_or_else(String::new, |d| d.to_string()),
                    s.detections,
                    s.changes,
                    r.runtime
                );
            }
        }
        out
    }
}

/// The SEA and rotating-hyperplane fixtures with all five detectors.
pub fn detection_suite() -> Vec<BenchCase> {
    let detectors: Vec<DetectorConfig> = DetectorConfig::NAMES
        .iter()
        .map(|&n| match n {
            "swidd" => DetectorConfig::Swidd(detection_swidd()),
            _ => DetectorConfig::default_for(n).expect("known detector"),
        })
        .collect();
    vec![
        BenchCase {
            spec: StreamSpec::new(Dataset::Rplane, 2500, 0),
            detectors: detectors.clone(),
        },
        BenchCase {
            spec: StreamSpec::new(Dataset::Sea, 2000, 0),
            detectors,
        },
    ]
}

/// SWIDD as run in the detection grid: sparser tests with a finer p-value
/// resolution than the streaming default.
pub fn detection_swidd() -> SwiddConfig {
    SwiddConfig {
        stride: 25,
        permutations: 1000,
        ..SwiddConfig::default()
    }
}

pub fn evaluate_decomposition(
    x: &SampleMatrix,
    x_d: &SampleMatrix,
    t: &[f64],
    k: usize,
) -> Result<(f64, f64), BenchError> {
    let residual = x.sub(x_d)?;
    Ok((time_dependency_score(x, t, k)?, time_dependency_score(&residual, t, k)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum DecompositionMethod {
    Linear {
        /// Defaults to one source per feature plus one for time.
        n_sources: Option<usize>,
        i_min: MiThreshold,
    },
    Kcurve(KcurveConfig),
}

impl DecompositionMethod {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Linear { .. } => "linear",
            Self::Kcurve(_) => "kcurve",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionCase {
    pub spec: StreamSpec,
    pub method: DecompositionMethod,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionRecord {
    pub dataset: String,
    pub method: String,
    pub seed: u64,
    pub score_x: f64,
    pub score_residual: f64,
    /// Largest violation of `X_D + X_I = X + E[X]`.
    pub identity_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionSummary {
    pub dataset: String,
    pub method: String,
    pub runs: usize,
    pub score_x: f64,
    pub score_x_sd: f64,
    pub score_residual: f64,
    pub score_residual_sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionReport {
    pub runs: Vec<DecompositionRecord>,
    pub summary: Vec<DecompositionSummary>,
}

impl DecompositionReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("dataset,method,seed,score_x,score_residual,identity_gap\n");
        for r in &self.runs {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.dataset, r.method, r.seed, r.score_x, r.score_residual, r.identity_gap
            );
        }
        out
    }

    pub fn row(&self, dataset: &str, method: &str) -> Option<&DecompositionSummary> {
        self.summary.iter().find(|r| r.dataset == dataset && r.method == method)
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<10} {:<8} {:>16} {:>16}", "dataset", "method", "score_x", "score_residual");
        for r in &self.summary {
            let _ = writeln!(
                out,
                "{:<10} {:<8} {:>9.3} ± {:<5.3} {:>9.3} ± {:<5.3}",
                r.dataset, r.method, r.score_x, r.score_x_sd, r.score_residual, r.score_residual_sd
            );
        }
        out
    }
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (m, var.sqrt())
}

/// Fits each case on fresh streams and scores raw and residual time
/// dependence with a `k`-NN regressor.
pub fn run_decomposition(
    suite: &[DecompositionCase],
    seeds: &[u64],
    k: usize,
) -> Result<DecompositionReport, BenchError> {
    let cells: Vec<(usize, u64)> = (0..suite.len())
        .flat_map(|c| seeds.iter().map(move |&s| (c, s)))
        .collect();
    let runs: Vec<DecompositionRecord> = cells
        .par_iter()
        .map(|&(c, seed)| {
            let case = &suite[c];
            let mut spec = case.spec.clone();
            spec.seed = seed;
            let stream = generate(&spec)?;
            let x = feature_matrix(&stream.samples)?;
            let t = timestamps(&stream.samples);
            let dec = match &case.method {
                DecompositionMethod::Linear { n_sources, i_min } => {
                    let n_sources = n_sources.unwrap_or(x.n_cols() + 1);
                    linear_drifda(&stream.samples, n_sources, *i_min, seed)?.1
                }
                DecompositionMethod::Kcurve(cfg) => {
                    let model = kcurve_fit(&stream.samples, cfg, seed)?;
                    kcurve_transform(&model, &stream.samples)?
                }
            };
            let (score_x, score_residual) = evaluate_decomposition(&x, &dec.x_d, &t, k)?;
            Ok(DecompositionRecord {
                dataset: spec.dataset.name().to_string(),
                method: case.method.name().to_string(),
                seed,
                score_x,
                score_residual,
                identity_gap: dec.identity_gap(&x),
            })
        })
        .collect::<Result<_, BenchError>>()?;
    let mut summary: Vec<DecompositionSummary> = Vec::new();
    for r in &runs {
        if summary.iter().any(|s| s.dataset == r.dataset && s.method == r.method) {
            continue;
        }
        let group: Vec<&DecompositionRecord> = runs
            .iter()
            .filter(|o| o.dataset == r.dataset && o.method == r.method)
            .collect();
        let (score_x, score_x_sd) = mean_sd(&group.iter().map(|g| g.score_x).collect::<Vec<_>>());
        let (score_residual, score_residual_sd) = mean_sd(&group.iter().map(|g| g.score_residual).collect::<Vec<_>>());
        summary.push(DecompositionSummary {
            dataset: r.dataset.clone(),
            method: r.method.clone(),
            runs: group.len(),
            score_x,
            score_x_sd,
            score_residual,
            score_residual_sd,
        });
    }
    Ok(DecompositionReport { runs, summary })
}

/// Linear decomposition on square and Y, k-curve (k = 4, 40 chunks) on twister.
pub fn decomposition_suite(n: usize) -> Vec<DecompositionCase> {
    let linear = DecompositionMethod::Linear {
        n_sources: None,
        i_min: MiThreshold::Auto,
    };
    vec![
        DecompositionCase {
            spec: StreamSpec::new(Dataset::Square, n, 0),
            method: linear.clone(),
        },
        DecompositionCase {
            spec: StreamSpec::new(Dataset::Y, n, 0),
            method: linear,
        },
        DecompositionCase {
            spec: StreamSpec::new(Dataset::Twister, n, 0),
            method: DecompositionMethod::Kcurve(KcurveConfig {
                k: 4,
                n_chunks: 40,
                prototypes_per_curve: 10,
            }),
        },
    ]
}
