//! Point-by-point fault localization inside screened intervals.
//!
//! A window of d = d1 + d2 columns slides through the interval one column at
//! a time. Its first d1 columns and last d2 columns form the two samples of a
//! Fisher matrix F_k. Three per-window rules are supported:
//!
//! - DELE flags λ₁(F_k) > b, the upper support edge of the Fisher LSD.
//! - DEHT flags |L_k| ≥ U_{1−α/2}.
//! - MP (baseline) flags λ_max of the unsplit window's sample covariance above
//!   the Marčenko–Pastur edge (1 + √y)².
//!
//! A fault is declared at the first run of s consecutive flags. If the run
//! completes at window k_s, the fault time is the last column of that window.

use std::borrow::Cow;

use nalgebra::DMatrixView;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{DetectionConfig, Normalization};
use crate::error::{Error, Result};
use crate::report::{FaultReport, Interval, IntervalDetection, IntervalTrace};
use crate::rmt::{clt_constants, gaussian_quantile, mp_upper_edge, statistic_from_trace, support_edges};
use crate::screening::screen_prepared;
use crate::specstats::{dimension_ratios, normalize_record, normalize_rows, sample_covariance, WindowSplit};
use crate::state::StateMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum DetectorKind {
    Dele,
    Deht,
    Mp,
}

impl DetectorKind {
    pub fn name(&self) -> &'static str {
        match self {
            DetectorKind::Dele => "dele",
            DetectorKind::Deht => "deht",
            DetectorKind::Mp => "mp",
        }
    }
}

impl std::str::FromStr for DetectorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dele" => Ok(DetectorKind::Dele),
            "deht" => Ok(DetectorKind::Deht),
            "mp" => Ok(DetectorKind::Mp),
            other => Err(Error::Config(format!("unknown detector '{other}' (expected dele, deht or mp)"))),
        }
    }
}

/// Per-window values of one scan. Window k (1-based) is stored at index k − 1.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorTrace {
    pub kind: DetectorKind,
    pub threshold: f64,
    pub values: Vec<f64>,
    pub flags: Vec<bool>,
}

impl DetectorTrace {
    fn new(kind: DetectorKind, threshold: f64, values: Vec<f64>) -> Self {
        let flags = values.iter().map(|&v| exceeds(kind, v, threshold)).collect();
        Self {
            kind,
            threshold,
            values,
            flags,
        }
    }
}

/// DEHT uses the closed rejection region; the eigenvalue rules are strict.
fn exceeds(kind: DetectorKind, value: f64, threshold: f64) -> bool {
    match kind {
        DetectorKind::Deht => value >= threshold,
        DetectorKind::Dele | DetectorKind::Mp => value > threshold,
    }
}

/// A declared fault.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Detection {
    pub fault_time: usize,
    pub trigger_window: usize,
    pub consecutive_count: usize,
    pub kind: DetectorKind,
}

/// Smallest 1-based index j with flags[j−s+1..=j] all set.
pub fn run_rule(flags: &[bool], s: usize) -> Option<usize> {
    assert!(s >= 1, "run length must be at least 1");
    let mut run = 0;
    for (i, &f) in flags.iter().enumerate() {
        run = if f { run + 1 } else { 0 };
        if run >= s {
            return Some(i + 1);
        }
    }
    None
}

/// All K = W − d + 1 window positions over a p×W block, split after d1 columns.
pub fn slide_windows<'a>(data: &'a DMatrixView<'_, f64>, d1: usize, d2: usize) -> Result<Vec<WindowSplit<'a>>> {
    if d1 < 2 {
        return Err(Error::Config(format!("d1 must be at least 2, got {d1}")));
    }
    let d = d1 + d2;
    let w = data.ncols();
    if w < d {
        return Err(Error::IntervalTooShort { width: w, window: d });
    }
    (0..=w - d).map(|k| WindowSplit::new(data, k, d1, d2)).collect()
}

fn check_width(data: &DMatrixView<'_, f64>, d: usize) -> Result<usize> {
    let w = data.ncols();
    if w < d {
        return Err(Error::IntervalTooShort { width: w, window: d });
    }
    Ok(w - d + 1)
}

fn first_error<T>(results: Vec<Result<T>>, what: &str) -> Result<Vec<T>> {
    results
        .into_iter()
        .enumerate()
        .map(|(k, r)| r.map_err(|e| e.with_context(format!("{what} window {}", k + 1))))
        .collect()
}

fn finish(
    kind: DetectorKind,
    threshold: f64,
    values: Vec<f64>,
    cfg: &DetectionConfig,
    window: usize,
    interval_start: usize,
) -> (DetectorTrace, Option<Detection>) {
    let trace = DetectorTrace::new(kind, threshold, values);
    let detection = run_rule(&trace.flags, cfg.s).map(|k_s| Detection {
        fault_time: interval_start - 1 + k_s + window - 1,
        trigger_window: k_s,
        consecutive_count: cfg.s,
        kind,
    });
    (trace, detection)
}

/// Largest-eigenvalue scan. `data` holds the interval's columns, which start
/// at absolute sample `interval_start` (1-based).
pub fn dele_scan(
    data: DMatrixView<'_, f64>,
    interval_start: usize,
    cfg: &DetectionConfig,
) -> Result<(DetectorTrace, Option<Detection>)> {
    let p = data.nrows();
    let (y_tau, y_t) = dimension_ratios(p, cfg.d1, cfg.d2)?;
    let edge = support_edges(y_tau, y_t)?.b;
    let windows = slide_windows(&data, cfg.d1, cfg.d2)?;
    let values = windows
        .par_iter()
        .map(|w| w.spectrum(cfg.normalization).map(|s| s.largest()))
        .collect();
    let values = first_error(values, "DELE")?;
    Ok(finish(DetectorKind::Dele, edge, values, cfg, cfg.window_width(), interval_start))
}

/// Statistic-based scan; values are |L_k|.
pub fn deht_scan(
    data: DMatrixView<'_, f64>,
    interval_start: usize,
    cfg: &DetectionConfig,
) -> Result<(DetectorTrace, Option<Detection>)> {
    let p = data.nrows();
    let (y_tau, y_t) = dimension_ratios(p, cfg.d1, cfg.d2)?;
    let consts = clt_constants(y_tau, y_t, cfg.kappa, cfg.beta1, cfg.beta2)?;
    let threshold = gaussian_quantile(1.0 - cfg.alpha / 2.0)?;
    let windows = slide_windows(&data, cfg.d1, cfg.d2)?;
    let values = windows
        .par_iter()
        .map(|w| {
            w.trace_sq_dev(cfg.normalization)
                .map(|tr| statistic_from_trace(tr, p, &consts).abs())
        })
        .collect();
    let values = first_error(values, "DEHT")?;
    Ok(finish(DetectorKind::Deht, threshold, values, cfg, cfg.window_width(), interval_start))
}

/// Marčenko–Pastur baseline over unsplit windows of width d.
pub fn mp_scan(
    data: DMatrixView<'_, f64>,
    interval_start: usize,
    cfg: &DetectionConfig,
) -> Result<(DetectorTrace, Option<Detection>)> {
    let p = data.nrows();
    let d = cfg.window_width();
    let k_count = check_width(&data, d)?;
    let edge = mp_upper_edge(p as f64 / (d - 1) as f64);
    let values = (0..k_count)
        .into_par_iter()
        .map(|k| {
            let window = data.columns(k, d);
            let cov = match cfg.normalization {
                Normalization::Window => sample_covariance(normalize_rows(window)?.as_view())?,
                Normalization::Record => sample_covariance(window)?,
            };
            Ok(cov.symmetric_eigenvalues().max())
        })
        .collect();
    let values = first_error(values, "MP")?;
    Ok(finish(DetectorKind::Mp, edge, values, cfg, d, interval_start))
}

/// Dispatches to the scan for `kind`.
pub fn scan(
    kind: DetectorKind,
    data: DMatrixView<'_, f64>,
    interval_start: usize,
    cfg: &DetectionConfig,
) -> Result<(DetectorTrace, Option<Detection>)> {
    match kind {
        DetectorKind::Dele => dele_scan(data, interval_start, cfg),
        DetectorKind::Deht => deht_scan(data, interval_start, cfg),
        DetectorKind::Mp => mp_scan(data, interval_start, cfg),
    }
}

/// Applies record-level normalization when the configuration asks for it.
pub fn prepare<'a>(x: &'a StateMatrix, cfg: &DetectionConfig) -> Result<Cow<'a, StateMatrix>> {
    Ok(match cfg.normalization {
        Normalization::Record => Cow::Owned(normalize_record(x)?),
        Normalization::Window => Cow::Borrowed(x),
    })
}

/// Screens the record, then scans every merged interval with `kind`.
pub fn localize(x: &StateMatrix, cfg: &DetectionConfig, kind: DetectorKind) -> Result<FaultReport> {
    let cfg = cfg.validate(x.p())?;
    let prepared = prepare(x, &cfg)?;
    let screening = screen_prepared(&prepared, &cfg)?;
    localize_intervals(&prepared, &cfg, kind, &screening.merged_intervals)
}

/// Scans the given intervals of an already prepared record.
pub fn localize_intervals(
    prepared: &StateMatrix,
    cfg: &DetectionConfig,
    kind: DetectorKind,
    intervals: &[Interval],
) -> Result<FaultReport> {
    let mut detections = Vec::new();
    let mut traces = Vec::with_capacity(intervals.len());
    for (id, iv) in intervals.iter().enumerate() {
        let data = prepared.columns(iv.lo, iv.hi);
        let (trace, det) = scan(kind, data, iv.lo, cfg)
            .map_err(|e| e.with_context(format!("interval [{}, {}]", iv.lo, iv.hi)))?;
        if let Some(det) = det {
            detections.push(IntervalDetection {
                interval_id: id,
                interval: *iv,
                fault_time: det.fault_time,
                detector: kind,
                trigger_window: det.trigger_window,
                consecutive_count: det.consecutive_count,
                delay_samples: None,
                delay_seconds: None,
            });
        }
        traces.push(IntervalTrace {
            interval_id: id,
            interval: *iv,
            trace,
        });
    }
    Ok(FaultReport {
        detector: kind,
        p: prepared.p(),
        t: prepared.t(),
        config: *cfg,
        screened_intervals: intervals.to_vec(),
        detections,
        traces,
        sample_rate_hz: prepared.sample_rate_hz(),
    })
}
