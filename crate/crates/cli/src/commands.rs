use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use fisherwatch::report::TraceSummary;
use fisherwatch::simgen::{generate, Event, Scenario};
use fisherwatch::{
    localize, screen as run_screen, ConfigOverrides, DetectionConfig, DetectorKind, FaultReport, Interval,
    IntervalDetection, ScreenResult, StateMatrix,
};
use serde::{Deserialize, Serialize};

use crate::artifacts::{to_json, Artifacts, SCHEMA_VERSION};
use crate::calibrate::{null_calibration, NullSetup};
use crate::failure::Failure;
use crate::{csvio, DataArgs, DEFAULT_SEED};

pub const MIN_BENCH_RUNS: usize = 5;

fn read(path: &Path) -> Result<Vec<u8>, Failure> {
    fs::read(path).map_err(|e| Failure::io(path, e))
}

fn read_overrides(path: Option<&Path>) -> Result<(ConfigOverrides, Option<Vec<u8>>), Failure> {
    let Some(path) = path else {
        return Ok((ConfigOverrides::default(), None));
    };
    let bytes = read(path)?;
    let overrides = serde_json::from_slice(&bytes)
        .map_err(|e| Failure::input("config-json", format!("{}: {e}", path.display())))?;
    Ok((overrides, Some(bytes)))
}

/// Loaded input record with the raw bytes of every file that shaped it.
pub struct Loaded {
    pub x: StateMatrix,
    pub config: DetectionConfig,
    pub data_bytes: Vec<u8>,
    pub config_bytes: Option<Vec<u8>>,
}

pub fn load(args: &DataArgs) -> Result<Loaded, Failure> {
    let data_bytes = read(&args.data)?;
    let text = std::str::from_utf8(&data_bytes)
        .map_err(|_| Failure::input("parse", format!("{} is not UTF-8", args.data.display())))?;
    let mut x = csvio::parse(text, args.transpose)?;
    if let Some(hz) = args.sample_rate {
        x = x.with_sample_rate(hz)?;
    }
    let (overrides, config_bytes) = read_overrides(args.config.as_deref())?;
    let config = overrides.resolve(x.p())?;
    Ok(Loaded {
        x,
        config,
        data_bytes,
        config_bytes,
    })
}

fn inputs<'a>(args: &'a DataArgs, loaded: &'a Loaded) -> Vec<(&'a Path, &'a [u8])> {
    let mut v = vec![(args.data.as_path(), loaded.data_bytes.as_slice())];
    if let (Some(p), Some(b)) = (&args.config, &loaded.config_bytes) {
        v.push((p.as_path(), b.as_slice()));
    }
    v
}

fn config_value(cfg: &DetectionConfig) -> serde_json::Value {
    serde_json::to_value(cfg).expect("config serializes")
}

/// Ground truth as written next to simulated records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthFile {
    pub schema_version: String,
    pub seed: u64,
    pub p: usize,
    #[serde(rename = "T")]
    pub t: usize,
    pub change_times: Vec<usize>,
    pub cutoff_times: Vec<Option<usize>>,
    pub events: Vec<Event>,
}

/// Reads a scenario, applying the seed precedence `--seed` > file > default.
pub fn read_scenario(bytes: &[u8], seed: Option<u64>) -> Result<Scenario, Failure> {
    let mut value: serde_json::Value =
        serde_json::from_slice(bytes).map_err(|e| Failure::input("scenario-json", e.to_string()))?;
    let obj = value
        .as_object_mut()
        .ok_or_else(|| Failure::input("scenario-json", "scenario must be a JSON object"))?;
    match seed {
        Some(s) => {
            obj.insert("seed".into(), s.into());
        }
        None => {
            obj.entry("seed").or_insert(DEFAULT_SEED.into());
        }
    }
    serde_json::from_value(value).map_err(|e| Failure::input("scenario-json", e.to_string()))
}

pub fn simulate(scenario_path: &Path, output: &Path, seed: Option<u64>) -> Result<(), Failure> {
    let bytes = read(scenario_path)?;
    let scenario = read_scenario(&bytes, seed)?;
    let (x, truth) = generate(&scenario)?;
    let dir = match output.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let name = output
        .file_name()
        .ok_or_else(|| Failure::input("usage", format!("{} is not a file path", output.display())))?
        .to_string_lossy()
        .into_owned();
    let stem = output
        .file_stem()
        .map_or_else(|| name.clone(), |s| s.to_string_lossy().into_owned());

    let mut out = Artifacts::new(dir);
    out.add(&name, csvio::render(&x));
    out.add_json(
        &format!("{stem}.truth.json"),
        &TruthFile {
            schema_version: SCHEMA_VERSION.into(),
            seed: scenario.seed,
            p: scenario.p,
            t: scenario.t,
            change_times: truth.change_times,
            cutoff_times: truth.cutoff_times,
            events: truth.events,
        },
    );
    let scenario_value = serde_json::to_value(&scenario).expect("scenario serializes");
    out.commit(
        &format!("{stem}.manifest.json"),
        "simulate",
        &[(scenario_path, &bytes)],
        scenario_value,
        Some(scenario.seed),
    )?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryTest {
    pub index: usize,
    pub t: usize,
    #[serde(rename = "L")]
    pub statistic: f64,
    pub reject: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreenReport {
    pub schema_version: String,
    pub command: String,
    pub p: usize,
    #[serde(rename = "T")]
    pub t: usize,
    pub config: DetectionConfig,
    pub threshold: f64,
    pub tests: Vec<BoundaryTest>,
    pub raw_intervals: Vec<Interval>,
    pub merged_intervals: Vec<Interval>,
}

impl ScreenReport {
    pub fn new(x: &StateMatrix, config: DetectionConfig, r: &ScreenResult) -> Self {
        Self {
            schema_version: SCHEMA_VERSION.into(),
            command: "screen".into(),
            p: x.p(),
            t: x.t(),
            config,
            threshold: r.threshold(),
            tests: r
                .outcomes
                .iter()
                .enumerate()
                .map(|(i, o)| BoundaryTest {
                    index: i + 1,
                    t: o.position,
                    statistic: o.statistic,
                    reject: o.reject,
                })
                .collect(),
            raw_intervals: r.raw_intervals.clone(),
            merged_intervals: r.merged_intervals.clone(),
        }
    }
}

pub fn series_csv(report: &ScreenReport) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["boundary_index", "t_i", "L_i", "threshold"]).expect("memory write");
    for t in &report.tests {
        w.write_record([
            t.index.to_string(),
            t.t.to_string(),
            t.statistic.to_string(),
            report.threshold.to_string(),
        ])
        .expect("memory write");
    }
    w.into_inner().expect("memory flush")
}

pub fn screen(args: &DataArgs) -> Result<(), Failure> {
    let loaded = load(args)?;
    let result = run_screen(&loaded.x, &loaded.config)?;
    let report = ScreenReport::new(&loaded.x, loaded.config, &result);
    let mut out = Artifacts::new(&args.out);
    out.add_json("report.json", &report);
    out.add("series.csv", series_csv(&report));
    out.commit("manifest.json", "screen", &inputs(args, &loaded), config_value(&loaded.config), None)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectReport {
    pub schema_version: String,
    pub command: String,
    pub detector: DetectorKind,
    pub p: usize,
    #[serde(rename = "T")]
    pub t: usize,
    pub config: DetectionConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_rate_hz: Option<f64>,
    pub screened_intervals: Vec<Interval>,
    pub detections: Vec<IntervalDetection>,
    pub traces: Vec<TraceSummary>,
}

impl From<&FaultReport> for DetectReport {
    fn from(r: &FaultReport) -> Self {
        Self {
            schema_version: SCHEMA_VERSION.into(),
            command: "detect".into(),
            detector: r.detector,
            p: r.p,
            t: r.t,
            config: r.config,
            sample_rate_hz: r.sample_rate_hz,
            screened_intervals: r.screened_intervals.clone(),
            detections: r.detections.clone(),
            traces: r.trace_summaries(),
        }
    }
}

pub fn traces_csv(report: &FaultReport) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["interval_id", "k", "value", "threshold", "flag"]).expect("memory write");
    for it in &report.traces {
        for (k, (v, f)) in it.trace.values.iter().zip(&it.trace.flags).enumerate() {
            w.write_record([
                it.interval_id.to_string(),
                (k + 1).to_string(),
                v.to_string(),
                it.trace.threshold.to_string(),
                u8::from(*f).to_string(),
            ])
            .expect("memory write");
        }
    }
    w.into_inner().expect("memory flush")
}

pub fn detect(args: &DataArgs, kind: DetectorKind, truth: Option<&Path>) -> Result<(), Failure> {
    let loaded = load(args)?;
    let truth_bytes = truth.map(read).transpose()?;
    let change_times = match &truth_bytes {
        Some(b) => {
            let t: TruthFile = serde_json::from_slice(b).map_err(|e| Failure::input("truth-json", e.to_string()))?;
            Some(t.change_times)
        }
        None => None,
    };
    let mut report = localize(&loaded.x, &loaded.config, kind)?;
    if let Some(ct) = &change_times {
        report.attach_truth(ct);
    }
    let mut out = Artifacts::new(&args.out);
    out.add_json("report.json", &DetectReport::from(&report));
    out.add("traces.csv", traces_csv(&report));
    let mut ins = inputs(args, &loaded);
    if let (Some(p), Some(b)) = (truth, &truth_bytes) {
        ins.push((p, b.as_slice()));
    }
    out.commit("manifest.json", "detect", &ins, config_value(&loaded.config), None)?;
    Ok(())
}

pub fn validate_null(config: Option<&Path>, mut setup: NullSetup, seed: u64, dir: &Path) -> Result<(), Failure> {
    let (overrides, config_bytes) = read_overrides(config)?;
    setup.alpha = overrides.alpha.unwrap_or(setup.alpha);
    setup.kappa = overrides.kappa.unwrap_or(setup.kappa);
    setup.beta1 = overrides.beta1.unwrap_or(setup.beta1);
    setup.beta2 = overrides.beta2.unwrap_or(setup.beta2);
    let calibration = null_calibration(&setup, seed)?;
    let mut out = Artifacts::new(dir);
    out.add_json("calibration.json", &calibration);
    let ins: Vec<(&Path, &[u8])> = match (config, &config_bytes) {
        (Some(p), Some(b)) => vec![(p, b.as_slice())],
        _ => Vec::new(),
    };
    let setup_value = serde_json::to_value(setup).expect("setup serializes");
    out.commit("manifest.json", "validate-null", &ins, setup_value, Some(seed))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodTiming {
    pub method: DetectorKind,
    pub median_seconds: f64,
    pub samples_seconds: Vec<f64>,
    pub detections: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub schema_version: String,
    pub p: usize,
    #[serde(rename = "T")]
    pub t: usize,
    pub runs: usize,
    pub config: DetectionConfig,
    pub methods: Vec<MethodTiming>,
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Times `runs` full pipeline passes per detector. Runs are interleaved
/// across detectors so drift in machine load affects each one alike.
pub fn time_methods(x: &StateMatrix, cfg: &DetectionConfig, runs: usize) -> Result<Timings, Failure> {
    if runs < MIN_BENCH_RUNS {
        return Err(Failure::input("runs", format!("--runs must be at least {MIN_BENCH_RUNS}, got {runs}")));
    }
    let kinds = [DetectorKind::Dele, DetectorKind::Deht, DetectorKind::Mp];
    let mut samples = vec![Vec::with_capacity(runs); kinds.len()];
    let mut detections = vec![0; kinds.len()];
    for _ in 0..runs {
        for (i, &kind) in kinds.iter().enumerate() {
            let start = Instant::now();
            let report = localize(x, cfg, kind)?;
            samples[i].push(start.elapsed().as_secs_f64());
            detections[i] = report.detections.len();
        }
    }
    Ok(Timings {
        schema_version: SCHEMA_VERSION.into(),
        p: x.p(),
        t: x.t(),
        runs,
        config: *cfg,
        methods: kinds
            .iter()
            .zip(samples)
            .zip(detections)
            .map(|((&method, s), detections)| MethodTiming {
                method,
                median_seconds: median(&s),
                samples_seconds: s,
                detections,
            })
            .collect(),
    })
}

pub fn bench(args: &DataArgs, runs: usize) -> Result<(), Failure> {
    let loaded = load(args)?;
    let timings = time_methods(&loaded.x, &loaded.config, runs)?;
    let mut out = Artifacts::new(&args.out);
    out.add("timings.json", to_json(&timings));
    out.commit("manifest.json", "bench", &inputs(args, &loaded), config_value(&loaded.config), None)?;
    Ok(())
}
