//! Ground-truth stream generators and CSV ingestion.
//!
//! Every generator is a pure function of its [`StreamSpec`]. Time stamps sit
//! on the uniform grid `t_i = t_max · i / n` unless the `poisson` parameter
//! asks for exponential inter-arrival gaps.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sample::TimedSample;

#[derive(Debug, Error)]
pub enum StreamError {
    #[error("unknown dataset `{0}`; valid names: {names}", names = Dataset::NAMES.join(", "))]
    UnknownDataset(String),
    #[error("dataset `{dataset}` requires parameter `{param}`")]
    MissingParam { dataset: Dataset, param: &'static str },
    #[error("invalid stream spec: {0}")]
    Invalid(String),
    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },
    #[error("time decreases at row {row} ({prev} -> {got})")]
    NonMonotoneTime { row: usize, prev: f64, got: f64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dataset {
    Twister,
    Spiral,
    Y,
    Square,
    Sea,
    Rplane,
    FoolError,
    FoolMarginal,
}

impl Dataset {
    pub const ALL: [Dataset; 8] = [
        Dataset::Twister,
        Dataset::Spiral,
        Dataset::Y,
        Dataset::Square,
        Dataset::Sea,
        Dataset::Rplane,
        Dataset::FoolError,
        Dataset::FoolMarginal,
    ];
    pub const NAMES: [&'static str; 8] = [
        "twister",
        "spiral",
        "y",
        "square",
        "sea",
        "rplane",
        "fool_error",
        "fool_marginal",
    ];

    pub fn name(self) -> &'static str {
        Self::NAMES[Self::ALL.iter().position(|&d| d == self).unwrap()]
    }

    /// Parameters the generator reads, with their defaults.
    pub fn default_params(self) -> &'static [(&'static str, f64)] {
        match self {
            Dataset::Twister | Dataset::Spiral => &[
                ("alpha", 1.0),
                ("beta", 4.0 * PI),
                ("sigma", 0.05),
                ("t_max", 1.0),
                ("poisson", 0.0),
            ],
            Dataset::Y => &[("alpha", 0.5), ("t_max", 1.0), ("poisson", 0.0)],
            Dataset::Square => &[("alpha", 1.0), ("beta", 1.0), ("t_max", 1.0), ("poisson", 0.0)],
            Dataset::Sea => &[
                ("concepts", 4.0),
                ("theta0", 8.0),
                ("theta1", 9.0),
                ("theta2", 7.0),
                ("theta3", 9.5),
                ("noise", 0.1),
                ("t_max", 1.0),
                ("poisson", 0.0),
            ],
            Dataset::Rplane => &[
                ("dim", 2.0),
                ("concepts", 5.0),
                ("jump", PI / 2.0),
                ("noise", 0.05),
                ("t_max", 1.0),
                ("poisson", 0.0),
            ],
            Dataset::FoolError => &[
                ("separation", 4.0),
                ("spread", 1.0),
                ("purity", 0.9),
                ("shift", 6.0),
                ("onset", 0.5),
                ("t_max", 1.0),
                ("poisson", 0.0),
            ],
            Dataset::FoolMarginal => &[
                ("arm", 1.0),
                ("spread", 0.25),
                ("onset", 0.5),
                ("t_max", 1.0),
                ("poisson", 0.0),
            ],
        }
    }
}

impl fmt::Display for Dataset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Dataset {
    type Err = StreamError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::NAMES
            .iter()
            .position(|&n| n.eq_ignore_ascii_case(s))
            .map(|i| Self::ALL[i])
            .ok_or_else(|| StreamError::UnknownDataset(s.to_string()))
    }
}

/// When read from JSON, parameters left out take their dataset defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "SpecFile")]
pub struct StreamSpec {
    pub dataset: Dataset,
    pub params: BTreeMap<String, f64>,
    pub n: usize,
    pub seed: u64,
}

#[derive(Deserialize)]
struct SpecFile {
    dataset: Dataset,
    #[serde(default)]
    params: BTreeMap<String, f64>,
    n: usize,
    #[serde(default)]
    seed: u64,
}

impl From<SpecFile> for StreamSpec {
    fn from(f: SpecFile) -> Self {
        let mut spec = StreamSpec::new(f.dataset, f.n, f.seed);
        spec.params.extend(f.params);
        spec
    }
}

impl StreamSpec {
    /// Spec with every parameter of `dataset` at its default.
    pub fn new(dataset: Dataset, n: usize, seed: u64) -> Self {
        let params = dataset
            .default_params()
            .iter()
            .map(|&(k, v)| (k.to_string(), v))
            .collect();
        Self {
            dataset,
            params,
            n,
            seed,
        }
    }

    pub fn with_param(mut self, key: &str, value: f64) -> Self {
        self.params.insert(key.to_string(), value);
        self
    }

    fn param(&self, key: &'static str) -> Result<f64, StreamError> {
        self.params
            .get(key)
            .copied()
            .ok_or(StreamError::MissingParam {
                dataset: self.dataset,
                param: key,
            })
    }

    pub fn validate(&self) -> Result<(), StreamError> {
        if self.n == 0 {
            return Err(StreamError::Invalid("n must be at least 1".into()));
        }
        for &(key, _) in self.dataset.default_params() {
            let v = self.param(key)?;
            if !v.is_finite() {
                return Err(StreamError::Invalid(format!("parameter `{key}` is not finite")));
            }
        }
        if self.param("t_max")? <= 0.0 {
            return Err(StreamError::Invalid("t_max must be positive".into()));
        }
        Ok(())
    }
}

/// A generated or ingested stream with its ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledStream {
    pub samples: Vec<TimedSample>,
    /// Timestamps of abrupt changes.
    pub change_points: Vec<f64>,
    /// Set for streams that drift at every instant.
    pub continuous: bool,
    /// Number of duplicate timestamps nudged forward during ingestion.
    #[serde(default)]
    pub time_bumps: usize,
}

impl LabeledStream {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.samples.first().map_or(0, |s| s.features.len())
    }

    pub fn has_labels(&self) -> bool {
        self.samples.first().is_some_and(|s| s.label.is_some())
    }

    /// Index of the first sample at or after each change point.
    pub fn change_point_indices(&self) -> Vec<usize> {
        self.change_points
            .iter()
            .map(|&cp| self.samples.partition_point(|s| s.timestamp < cp))
            .collect()
    }

    pub fn truth(&self) -> GroundTruth {
        GroundTruth {
            change_points: self.change_points.clone(),
            continuous: self.continuous,
        }
    }
}

/// Sidecar file contents: `{"change_points": [...], "continuous": bool}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub change_points: Vec<f64>,
    pub continuous: bool,
}

fn time_grid(rng: &mut ChaCha8Rng, n: usize, t_max: f64, poisson: bool) -> Vec<f64> {
    if poisson {
        let gaps: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
        let scale = t_max / n as f64;
        gaps.iter()
            .scan(0.0, |acc, g| {
                let t = *acc;
                *acc += g * scale;
                Some(t)
            })
            .collect()
    } else {
        (0..n).map(|i| t_max * i as f64 / n as f64).collect()
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Draws the stream described by `spec`.
pub fn generate(spec: &StreamSpec) -> Result<LabeledStream, StreamError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.n;
    let t_max = spec.param("t_max")?;
    let times = time_grid(&mut rng, n, t_max, spec.param("poisson")? > 0.0);
    // Fraction of the stream elapsed, on the grid or along Poisson arrivals.
    let frac = |t: f64| t / t_max;

    let mut samples = Vec::with_capacity(n);
    let mut change_points = Vec::new();
    let mut continuous = false;

    match spec.dataset {
        Dataset::Twister | Dataset::Spiral => {
            let (alpha, beta, sigma) = (spec.param("alpha")?, spec.param("beta")?, spec.param("sigma")?);
            let twister = spec.dataset == Dataset::Twister;
            for &t in &times {
                let radius = if twister { alpha * t } else { alpha };
                let x = radius * (beta * t).sin() + sigma * normal(&mut rng);
                let y = radius * (beta * t).cos() + sigma * normal(&mut rng);
                samples.push(TimedSample::new(vec![x, y], t));
            }
            continuous = true;
        }
        Dataset::Y => {
            let alpha = spec.param("alpha")?;
            for &t in &times {
                let arm = (t - alpha).max(0.0);
                let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                let u: f64 = rng.random();
                samples.push(TimedSample::new(vec![sign * arm, u], t));
            }
            if alpha >= 0.0 && alpha < times.last().copied().unwrap_or(0.0) {
                change_points.push(alpha);
            }
        }
        Dataset::Square => {
            let (alpha, beta) = (spec.param("alpha")?, spec.param("beta")?);
            for &t in &times {
                let u1: f64 = rng.random();
                let u2: f64 = rng.random();
                samples.push(TimedSample::new(vec![alpha * t + u1, beta * t + u2], t));
            }
            continuous = true;
        }
        Dataset::Sea => {
            let concepts = spec.param("concepts")?.round().max(1.0) as usize;
            let thetas = [
                spec.param("theta0")?,
                spec.param("theta1")?,
                spec.param("theta2")?,
                spec.param("theta3")?,
            ];
            let noise = spec.param("noise")?;
            for &t in &times {
                let c = ((frac(t) * concepts as f64) as usize).min(concepts - 1);
                let f: [f64; 3] = [
                    rng.random_range(0.0..10.0),
                    rng.random_range(0.0..10.0),
                    rng.random_range(0.0..10.0),
                ];
                let mut label = u32::from(f[0] + f[1] <= thetas[c % thetas.len()]);
                if rng.random_bool(noise.clamp(0.0, 1.0)) {
                    label = 1 - label;
                }
                samples.push(TimedSample::labeled(f.to_vec(), t, label));
            }
            change_points = (1..concepts).map(|c| t_max * c as f64 / concepts as f64).collect();
        }
        Dataset::Rplane => {
            let dim = spec.param("dim")?.round().max(2.0) as usize;
            let concepts = spec.param("concepts")?.round().max(1.0) as usize;
            let jump = spec.param("jump")?;
            let noise = spec.param("noise")?;
            for &t in &times {
                let c = ((frac(t) * concepts as f64) as usize).min(concepts - 1);
                let angle = jump * c as f64;
                let x: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
                // The normal rotates in the plane of the first two coordinates;
                // further coordinates carry a fixed small weight.
                let mut score = angle.cos() * x[0] + angle.sin() * x[1];
                for v in &x[2..] {
                    score += 0.1 * v;
                }
                let mut label = u32::from(score > 0.0);
                if rng.random_bool(noise.clamp(0.0, 1.0)) {
                    label = 1 - label;
                }
                samples.push(TimedSample::labeled(x, t, label));
            }
            change_points = (1..concepts).map(|c| t_max * c as f64 / concepts as f64).collect();
        }
        Dataset::FoolError => {
            // Two clusters left and right of the vertical boundary x = 0,
            // each dominated by one class. After the onset every class-1
            // sample is translated upwards, parallel to the boundary, by a
            // ramp reaching `shift` at the end of the stream.
            let sep = spec.param("separation")?;
            let spread = spec.param("spread")?;
            let purity = spec.param("purity")?;
            let shift = spec.param("shift")?;
            let onset = spec.param("onset")?;
            for &t in &times {
                let right = rng.random_bool(0.5);
                let majority = rng.random_bool(purity.clamp(0.0, 1.0));
                let label = u32::from(right == majority);
                let cx = if right { sep } else { -sep };
                let mut p = [cx + spread * normal(&mut rng), spread * normal(&mut rng)];
                let progress = ((frac(t) - onset) / (1.0 - onset)).clamp(0.0, 1.0);
                if label == 1 {
                    p[1] += shift * progress;
                }
                samples.push(TimedSample::labeled(p.to_vec(), t, label));
            }
            change_points.push(onset * t_max);
        }
        Dataset::FoolMarginal => {
            // Four groups at (±arm, ±arm). Class 0 owns the main diagonal
            // before the onset and the anti-diagonal afterwards.
            let arm = spec.param("arm")?;
            let spread = spec.param("spread")?;
            let onset = spec.param("onset")?;
            for &t in &times {
                let sx = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                let sy = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                let main_diagonal = sx == sy;
                let swapped = frac(t) >= onset;
                let label = u32::from(main_diagonal == swapped);
                let p = [
                    sx * arm + spread * normal(&mut rng),
                    sy * arm + spread * normal(&mut rng),
                ];
                samples.push(TimedSample::labeled(p.to_vec(), t, label));
            }
            change_points.push(onset * t_max);
        }
    }

    Ok(LabeledStream {
        samples,
        change_points,
        continuous,
        time_bumps: 0,
    })
}

/// Writes `t,f0,..,f{d-1}[,y]` CSV.
pub fn write_csv<W: Write>(stream: &LabeledStream, out: W) -> Result<(), StreamError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    header.extend((0..stream.dim()).map(|j| format!("f{j}")));
    if stream.has_labels() {
        header.push("y".into());
    }
    w.write_record(&header).map_err(csv_io)?;
    for s in &stream.samples {
        let mut rec = vec![format!("{:?}", s.timestamp)];
        rec.extend(s.features.iter().map(|v| format!("{v:?}")));
        if let Some(y) = s.label {
            rec.push(y.to_string());
        }
        w.write_record(&rec).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> StreamError {
    StreamError::Io(std::io::Error::other(e))
}

/// Column selection for [`ingest_csv`].
#[derive(Debug, Clone, PartialEq)]
pub struct CsvSchema {
    pub time_col: String,
    pub feature_cols: Vec<String>,
    pub label_col: Option<String>,
}

impl CsvSchema {
    /// Schema of files written by [`write_csv`]: `t`, every `f*` column,
    /// and `y` if present.
    pub fn infer(header: &[&str]) -> Self {
        Self {
            time_col: "t".into(),
            feature_cols: header
                .iter()
                .filter(|h| h.starts_with('f') && h[1..].parse::<usize>().is_ok())
                .map(|h| h.to_string())
                .collect(),
            label_col: header.contains(&"y").then(|| "y".to_string()),
        }
    }
}

/// Relative nudge applied to a timestamp equal to its predecessor.
const TIME_BUMP: f64 = 1e-9;

pub fn ingest_csv(path: &Path, schema: Option<&CsvSchema>) -> Result<LabeledStream, StreamError> {
    ingest_reader(std::fs::File::open(path)?, schema)
}

pub fn ingest_reader<R: Read>(input: R, schema: Option<&CsvSchema>) -> Result<LabeledStream, StreamError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| StreamError::Parse {
            row: 1,
            message: e.to_string(),
        })?
        .iter()
        .map(str::to_string)
        .collect();
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let schema = schema.cloned().unwrap_or_else(|| CsvSchema::infer(&header_refs));
    let find = |name: &str| {
        header.iter().position(|h| h == name).ok_or_else(|| StreamError::Parse {
            row: 1,
            message: format!("missing column `{name}`"),
        })
    };
    let t_idx = find(&schema.time_col)?;
    let f_idx: Vec<usize> = schema.feature_cols.iter().map(|c| find(c)).collect::<Result<_, _>>()?;
    if f_idx.is_empty() {
        return Err(StreamError::Parse {
            row: 1,
            message: "no feature columns".into(),
        });
    }
    let y_idx = schema.label_col.as_deref().map(find).transpose()?;

    let mut samples: Vec<TimedSample> = Vec::new();
    let mut bumps = 0;
    let mut last_raw: Option<f64> = None;
    for (i, rec) in rdr.records().enumerate() {
        // Row 1 is the header.
        let row = i + 2;
        let rec = rec.map_err(|e| StreamError::Parse {
            row,
            message: e.to_string(),
        })?;
        let field = |j: usize| -> Result<f64, StreamError> {
            let raw = rec.get(j).unwrap_or("");
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| StreamError::Parse {
                    row,
                    message: format!("`{raw}` in column `{}` is not a finite number", header[j]),
                })
        };
        let mut t = field(t_idx)?;
        let features = f_idx.iter().map(|&j| field(j)).collect::<Result<Vec<_>, _>>()?;
        let label = match y_idx {
            Some(j) => {
                let raw = rec.get(j).unwrap_or("");
                Some(raw.parse::<u32>().map_err(|_| StreamError::Parse {
                    row,
                    message: format!("label `{raw}` is not a class id"),
                })?)
            }
            None => None,
        };
        if let Some(prev) = last_raw {
            if t < prev {
                return Err(StreamError::NonMonotoneTime { row, prev, got: t });
            }
        }
        last_raw = Some(t);
        if let Some(emitted) = samples.last().map(|s| s.timestamp) {
            if t <= emitted {
                t = emitted + TIME_BUMP * emitted.abs().max(1.0);
                bumps += 1;
            }
        }
        samples.push(TimedSample {
            features,
            timestamp: t,
            label,
        });
    }
    Ok(LabeledStream {
        samples,
        change_points: Vec::new(),
        continuous: false,
        time_bumps: bumps,
    })
}

pub fn write_truth<W: Write>(truth: &GroundTruth, out: W) -> Result<(), StreamError> {
    serde_json::to_writer_pretty(out, truth)?;
    Ok(())
}

pub fn read_truth(path: &Path) -> Result<GroundTruth, StreamError> {
    Ok(serde_json::from_reader(std::fs::File::open(path)?)?)
}
