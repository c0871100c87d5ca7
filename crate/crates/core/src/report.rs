//! Report containers shared by the screening and detection stages.

use serde::{Deserialize, Serialize};

use crate::config::DetectionConfig;
use crate::detect::{DetectorKind, DetectorTrace};

/// Closed sample range `[lo, hi]`, 1-based. Serialized as a two-element array.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct Interval {
    pub lo: usize,
    pub hi: usize,
}

impl Interval {
    pub fn new(lo: usize, hi: usize) -> Self {
        debug_assert!(lo <= hi);
        Self { lo, hi }
    }

    pub fn width(&self) -> usize {
        self.hi - self.lo + 1
    }

    pub fn contains(&self, t: usize) -> bool {
        self.lo <= t && t <= self.hi
    }
}

impl From<[usize; 2]> for Interval {
    fn from([lo, hi]: [usize; 2]) -> Self {
        Self { lo, hi }
    }
}

impl From<Interval> for [usize; 2] {
    fn from(i: Interval) -> Self {
        [i.lo, i.hi]
    }
}

/// A fault localized inside one screened interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalDetection {
    pub interval_id: usize,
    pub interval: Interval,
    /// Absolute 1-based sample index.
    pub fault_time: usize,
    pub detector: DetectorKind,
    /// Window index k_s completing the run.
    pub trigger_window: usize,
    pub consecutive_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delay_samples: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delay_seconds: Option<f64>,
}

/// Per-window series of one scan.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalTrace {
    pub interval_id: usize,
    pub interval: Interval,
    pub trace: DetectorTrace,
}

/// Compact description of a trace for JSON reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub interval_id: usize,
    pub windows: usize,
    pub threshold: f64,
    pub flagged: usize,
    pub max_value: f64,
}

/// Outcome of the full screen-then-localize pipeline for one detector.
#[derive(Debug, Clone, PartialEq)]
pub struct FaultReport {
    pub detector: DetectorKind,
    pub p: usize,
    pub t: usize,
    pub config: DetectionConfig,
    pub screened_intervals: Vec<Interval>,
    pub detections: Vec<IntervalDetection>,
    pub traces: Vec<IntervalTrace>,
    pub sample_rate_hz: Option<f64>,
}

impl FaultReport {
    /// Fills delays from known change times. The reference for each detection
    /// is the latest change time inside its interval that does not follow it.
    pub fn attach_truth(&mut self, change_times: &[usize]) {
        for det in &mut self.detections {
            let reference = change_times
                .iter()
                .copied()
                .filter(|&tau| tau + 1 >= det.interval.lo && tau <= det.fault_time)
                .max();
            det.delay_samples = reference.map(|tau| det.fault_time as i64 - tau as i64);
            det.delay_seconds = match (det.delay_samples, self.sample_rate_hz) {
                (Some(n), Some(hz)) => Some(n as f64 / hz),
                _ => None,
            };
        }
    }

    pub fn trace_summaries(&self) -> Vec<TraceSummary> {
        self.traces
            .iter()
            .map(|t| TraceSummary {
                interval_id: t.interval_id,
                windows: t.trace.values.len(),
                threshold: t.trace.threshold,
                flagged: t.trace.flags.iter().filter(|f| **f).count(),
                max_value: t.trace.values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            })
            .collect()
    }
}
