use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use driftkit::bench::{
    decomposition_suite, detection_suite, evaluate_decomposition, run_benchmark, run_decomposition, run_detector,
    score_detections, BenchCase, BenchConfig, MatchingConfig, DEFAULT_TRAIN_SIZE,
};
use driftkit::decompose::{
    kcurve_fit, kcurve_transform, linear_drifda, write_decomposition_csv, KcurveConfig, MiThreshold,
};
use driftkit::detectors::DetectorConfig;
use driftkit::sample::{feature_matrix, timestamps};
use driftkit::streams::{generate, ingest_csv, read_truth, write_csv, write_truth, StreamError};
use driftkit::theory::{equivalence_suite, MAX_ENUMERATED_TIMES};
use driftkit::{LabeledStream, StreamSpec};

use crate::{BenchArgs, Cli, Command, DecomposeArgs, DetectArgs, Failure, GenerateArgs, Method, OutputFormat, TheoryArgs};

/// Prints a line to stdout; a closed pipe ends the process quietly.
macro_rules! say {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        if let Err(e) = writeln!(std::io::stdout(), $($arg)*) {
            if e.kind() == std::io::ErrorKind::BrokenPipe {
                std::process::exit(0);
            }
            return Err(Failure::Runtime(e.into()));
        }
    }};
}

pub fn run(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Generate(a) => generate_cmd(cli, a),
        Command::Detect(a) => detect_cmd(cli, a),
        Command::Bench(a) => bench_cmd(cli, a),
        Command::Decompose(a) => decompose_cmd(cli, a),
        Command::TheoryCheck(a) => theory_cmd(cli, a),
    }
}

/// Default settings of every detector, for `detect --help`.
pub fn detector_param_help() -> String {
    let mut text = String::from(
        "Detector setting override, `key=value`; repeatable. Settings and defaults:\n",
    );
    for name in DetectorConfig::NAMES {
        let cfg = DetectorConfig::default_for(name).expect("known detector");
        let value = serde_json::to_value(&cfg).expect("configs serialize");
        let fields: Vec<String> = value
            .as_object()
            .expect("tagged object")
            .iter()
            .filter(|(k, _)| k.as_str() != "detector")
            .map(|(k, v)| format!("{k}={v}"))
            .collect();
        text.push_str(&format!("  {name}: {}\n", fields.join(", ")));
    }
    text
}

fn split_param(raw: &str) -> Result<(&str, &str), Failure> {
    raw.split_once('=')
        .map(|(k, v)| (k.trim(), v.trim()))
        .filter(|(k, _)| !k.is_empty())
        .ok_or_else(|| Failure::Usage(format!("`{raw}` is not of the form key=value")))
}

fn out_path(cli: &Cli, explicit: &Option<PathBuf>, default_name: &str) -> PathBuf {
    explicit.clone().unwrap_or_else(|| cli.out_dir.join(default_name))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    std::io::Write::write_all(&mut w, b"\n")?;
    Ok(())
}

fn truth_path(csv: &Path) -> PathBuf {
    let stem = csv.file_stem().map_or_else(|| "stream".into(), |s| s.to_string_lossy().into_owned());
    csv.with_file_name(format!("{stem}.truth.json"))
}

fn log(cli: &Cli, msg: impl FnOnce() -> String) {
    if cli.verbose > 0 {
        eprintln!("{}", msg());
    }
}

fn generate_cmd(cli: &Cli, a: &GenerateArgs) -> Result<(), Failure> {
    let mut spec = StreamSpec::new(a.dataset, a.n, cli.seed);
    for raw in &a.param {
        let (key, value) = split_param(raw)?;
        if !a.dataset.default_params().iter().any(|(k, _)| *k == key) {
            let known: Vec<&str> = a.dataset.default_params().iter().map(|(k, _)| *k).collect();
            return Err(Failure::Usage(format!(
                "`{key}` is not a parameter of {}; known: {}",
                a.dataset,
                known.join(", ")
            )));
        }
        let v: f64 = value
            .parse()
            .map_err(|_| Failure::Usage(format!("parameter `{key}` needs a number, got `{value}`")))?;
        spec = spec.with_param(key, v);
    }
    spec.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let stream = generate(&spec).map_err(|e| Failure::Runtime(e.into()))?;
    let path = out_path(cli, &a.output, &format!("{}.csv", a.dataset));
    let sidecar = truth_path(&path);
    write_csv(&stream, create(&path)?).map_err(anyhow::Error::from)?;
    write_truth(&stream.truth(), create(&sidecar)?).map_err(anyhow::Error::from)?;
    say!(
        "wrote {} ({} samples) and {}",
        path.display(),
        stream.len(),
        sidecar.display()
    );
    Ok(())
}

fn read_stream(path: &Path) -> Result<LabeledStream, Failure> {
    ingest_csv(path, None).map_err(|e| match e {
        StreamError::Io(io) => Failure::Runtime(anyhow::Error::new(io).context(format!("reading {}", path.display()))),
        other => Failure::Runtime(anyhow::Error::new(other).context(format!("in {}", path.display()))),
    })
}

/// Default config of `name` with `key=value` overrides applied.
fn detector_config(name: &str, params: &[String]) -> Result<DetectorConfig, Failure> {
    let base = DetectorConfig::default_for(name).ok_or_else(|| {
        Failure::Usage(format!(
            "unknown detector `{name}`; valid names: {}",
            DetectorConfig::NAMES.join(", ")
        ))
    })?;
    let mut value = serde_json::to_value(&base).map_err(anyhow::Error::from)?;
    let obj = value.as_object_mut().expect("tagged object");
    for raw in params {
        let (key, v) = split_param(raw)?;
        if key == "detector" || !obj.contains_key(key) {
            let known: Vec<&str> = obj.keys().map(String::as_str).filter(|k| *k != "detector").collect();
            return Err(Failure::Usage(format!(
                "`{key}` is not a {name} setting; known: {}",
                known.join(", ")
            )));
        }
        let parsed = serde_json::from_str::<Value>(v).unwrap_or_else(|_| Value::String(v.to_string()));
        obj.insert(key.to_string(), parsed);
    }
    let cfg: DetectorConfig =
        serde_json::from_value(value).map_err(|e| Failure::Usage(format!("invalid {name} setting: {e}")))?;
    cfg.build(0).map_err(|e| Failure::Usage(e.to_string()))?;
    Ok(cfg)
}

fn detect_cmd(cli: &Cli, a: &DetectArgs) -> Result<(), Failure> {
    let cfg = detector_config(&a.detector, &a.param)?;
    if a.tolerance == 0 {
        return Err(Failure::Usage("--tolerance must be at least 1".into()));
    }
    let mut stream = read_stream(&a.input)?;
    if stream.is_empty() {
        return Err(Failure::Runtime(anyhow::anyhow!("{} holds no samples", a.input.display())));
    }
    let run = run_detector(&stream, &cfg, cli.seed, a.train_size).map_err(anyhow::Error::from)?;
    let score = match &a.truth {
        Some(path) => {
            let truth = read_truth(path)
                .map_err(|e| Failure::Runtime(anyhow::Error::new(e).context(format!("reading {}", path.display()))))?;
            stream.change_points = truth.change_points;
            Some(score_detections(
                &stream.change_point_indices(),
                &run.indices(),
                MatchingConfig { tolerance: a.tolerance },
            ))
        }
        None => None,
    };
    match a.format {
        OutputFormat::Json => {
            let report = json!({
                "config": cfg,
                "samples": stream.len(),
                "detections": run.detections,
                "warnings": run.warnings,
                "runtime_s": run.runtime,
                "tolerance": a.tolerance,
                "score": score,
            });
            say!("{}", serde_json::to_string_pretty(&report).map_err(anyhow::Error::from)?);
        }
        OutputFormat::Text => {
            say!(
                "{}: {} samples, {} detections, {} warnings",
                run.detector,
                stream.len(),
                run.detections.len(),
                run.warnings
            );
            for d in &run.detections {
                say!("drift index={} t={}", d.index, d.timestamp);
            }
            if let Some(s) = score {
                let delay = s.mean_delay.map_or_else(|| "-".into(), |d| format!("{d:.1}"));
                say!(
                    "f1={:.4} precision={:.4} recall={:.4} mean_delay={delay} tolerance={}",
                    s.f1, s.precision, s.recall, a.tolerance
                );
            }
        }
    }
    log(cli, || format!("update loop took {:.3} s", run.runtime));
    Ok(())
}

fn bench_cmd(cli: &Cli, a: &BenchArgs) -> Result<(), Failure> {
    if a.seeds == 0 {
        return Err(Failure::Usage("--seeds must be at least 1".into()));
    }
    let seeds: Vec<u64> = (cli.seed..cli.seed + a.seeds).collect();
    let start = Instant::now();
    let path = out_path(cli, &a.output, "bench.json");
    if a.suite == "decomposition" {
        let report = run_decomposition(&decomposition_suite(a.n), &seeds, a.knn).map_err(anyhow::Error::from)?;
        say!("{}", report.to_table().trim_end());
        write_json(&path, &report)?;
        if let Some(csv) = &a.emit_csv {
            fs::write(csv, report.to_csv()).with_context(|| format!("writing {}", csv.display()))?;
        }
    } else {
        let suite: Vec<BenchCase> = if a.suite == "detection" {
            detection_suite()
        } else {
            let text = fs::read_to_string(&a.suite).map_err(|e| {
                Failure::Usage(format!(
                    "--suite must be `detection`, `decomposition` or a readable JSON file; {}: {e}",
                    a.suite
                ))
            })?;
            serde_json::from_str(&text).with_context(|| format!("parsing suite {}", a.suite))?
        };
        let cfg = BenchConfig {
            tolerances: a.tolerances.clone(),
            train_size: DEFAULT_TRAIN_SIZE,
        };
        let report = run_benchmark(&suite, &seeds, &cfg).map_err(anyhow::Error::from)?;
        say!("{}", report.to_table().trim_end());
        write_json(&path, &report)?;
        if let Some(csv) = &a.emit_csv {
            fs::write(csv, report.to_csv()).with_context(|| format!("writing {}", csv.display()))?;
        }
    }
    say!("report: {}", path.display());
    log(cli, || format!("grid took {:.1} s", start.elapsed().as_secs_f64()));
    Ok(())
}

fn decompose_cmd(cli: &Cli, a: &DecomposeArgs) -> Result<(), Failure> {
    let i_min: MiThreshold = a.i_min.parse().map_err(Failure::Usage)?;
    let stream = match &a.input {
        Some(path) => read_stream(path)?,
        None => {
            let spec = StreamSpec::new(a.dataset, a.n, cli.seed);
            spec.validate().map_err(|e| Failure::Usage(e.to_string()))?;
            generate(&spec).map_err(anyhow::Error::from)?
        }
    };
    if stream.is_empty() {
        return Err(Failure::Runtime(anyhow::anyhow!("stream holds no samples")));
    }
    let x = feature_matrix(&stream.samples).map_err(anyhow::Error::from)?;
    let t = timestamps(&stream.samples);
    let (dec, model, details) = match a.method {
        Method::Linear => {
            let n_sources = if a.n_sources == 0 { x.n_cols() + 1 } else { a.n_sources };
            let (model, dec) =
                linear_drifda(&stream.samples, n_sources, i_min, cli.seed).map_err(anyhow::Error::from)?;
            let details = json!({
                "n_sources": n_sources,
                "mutual_information": model.mutual_information,
                "threshold": model.threshold,
                "drifting": model.drifting,
            });
            (dec, serde_json::to_value(&model).map_err(anyhow::Error::from)?, details)
        }
        Method::Kcurve => {
            let cfg = KcurveConfig {
                k: a.k,
                n_chunks: a.chunks,
                prototypes_per_curve: a.prototypes,
            };
            let model = kcurve_fit(&stream.samples, &cfg, cli.seed).map_err(anyhow::Error::from)?;
            if let Some(w) = &model.convergence_warning {
                eprintln!("warning: {w}");
            }
            let dec = kcurve_transform(&model, &stream.samples).map_err(anyhow::Error::from)?;
            let details = json!({
                "k": cfg.k,
                "chunks": cfg.n_chunks,
                "prototypes_per_curve": cfg.prototypes_per_curve,
                "reseeds": model.reseeds,
                "convergence_warning": model.convergence_warning,
            });
            (dec, serde_json::to_value(&model).map_err(anyhow::Error::from)?, details)
        }
    };
    let (score_x, score_residual) = evaluate_decomposition(&x, &dec.x_d, &t, a.knn).map_err(anyhow::Error::from)?;
    let csv_path = out_path(cli, &a.output, "decomposition.csv");
    let scores_path = out_path(cli, &a.scores, "scores.json");
    write_decomposition_csv(create(&csv_path)?, &t, &x, &dec).map_err(anyhow::Error::from)?;
    let method = match a.method {
        Method::Linear => "linear",
        Method::Kcurve => "kcurve",
    };
    write_json(
        &scores_path,
        &json!({
            "method": method,
            "samples": x.n_rows(),
            "knn": a.knn,
            "score_x": score_x,
            "score_residual": score_residual,
            "identity_gap": dec.identity_gap(&x),
            "details": details,
        }),
    )?;
    if let Some(path) = &a.model {
        write_json(path, &model)?;
    }
    say!("{method}: score_x={score_x:.4} score_residual={score_residual:.4}");
    say!("wrote {} and {}", csv_path.display(), scores_path.display());
    Ok(())
}

fn theory_cmd(cli: &Cli, a: &TheoryArgs) -> Result<(), Failure> {
    if a.instances == 0 {
        return Err(Failure::Usage("--instances must be at least 1".into()));
    }
    if !(1..=MAX_ENUMERATED_TIMES).contains(&a.max_dim) {
        return Err(Failure::Usage(format!(
            "--max-dim must lie in 1..={MAX_ENUMERATED_TIMES}"
        )));
    }
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cli.seed);
    let reports = equivalence_suite(&mut rng, a.instances, a.max_dim);
    check_reports(&reports.iter().map(|r| (r.name, r.checked, r.violations)).collect::<Vec<_>>())?;
    log(cli, || format!("{} instances in {:.2} s", a.instances, start.elapsed().as_secs_f64()));
    Ok(())
}

/// Prints one line per property; fails when any was violated.
fn check_reports(reports: &[(&str, usize, usize)]) -> Result<(), Failure> {
    let mut failed = 0;
    for &(name, checked, violations) in reports {
        if violations == 0 {
            say!("{name}: PASS ({checked} checked)");
        } else {
            failed += 1;
            say!("{name}: FAIL ({violations} of {checked} violated)");
        }
    }
    if failed > 0 {
        return Err(Failure::Theory(format!("{failed} properties violated")));
    }
    Ok(())
}
