//! Coarse interval screening.
//!
//! The record is cut at t_i = i·D (i = 1..N, N = ⌊T/D⌋ − 1). At each cut the
//! segment before and the segment after are tested for equal covariance with
//! the statistic L. Every rejected cut contributes [t_{i−1}+1, t_{i+1}], and
//! overlapping or touching contributions are merged.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{DetectionConfig, Normalization};
use crate::error::{Error, Result};
use crate::report::Interval;
use crate::rmt::{clt_constants, gaussian_quantile, statistic_from_trace, TestOutcome};
use crate::specstats::{dimension_ratios, fisher_trace_sq_dev, normalize_record, normalize_rows, sample_covariance};
use crate::state::StateMatrix;

/// Boundaries t_i = i·D for i = 1..N, N = ⌊T/D⌋ − 1.
pub fn segment_boundaries(t: usize, segment_width: usize) -> Result<Vec<usize>> {
    if segment_width == 0 {
        return Err(Error::Config("segment width D must be positive".into()));
    }
    if t < 2 * segment_width {
        return Err(Error::TooShortRecord { t, segment_width });
    }
    let n = t / segment_width - 1;
    Ok((1..=n).map(|i| i * segment_width).collect())
}

/// Sorted union of intervals; intervals that overlap or touch (hi + 1 = lo′)
/// are merged.
pub fn merge_intervals(raw: &[Interval]) -> Vec<Interval> {
    let mut sorted = raw.to_vec();
    sorted.sort();
    let mut merged: Vec<Interval> = Vec::with_capacity(sorted.len());
    for iv in sorted {
        match merged.last_mut() {
            Some(last) if iv.lo <= last.hi + 1 => last.hi = last.hi.max(iv.hi),
            _ => merged.push(iv),
        }
    }
    merged
}

/// Raw intervals [t_{i−1}+1, t_{i+1}] for every rejected boundary, with
/// t_0 = 0 and t_{N+1} = T.
pub fn rejection_intervals(boundaries: &[usize], rejections: &[bool], t: usize) -> Vec<Interval> {
    debug_assert_eq!(boundaries.len(), rejections.len());
    let n = boundaries.len();
    (0..n)
        .filter(|&i| rejections[i])
        .map(|i| {
            let prev = if i == 0 { 0 } else { boundaries[i - 1] };
            let next = if i + 1 == n { t } else { boundaries[i + 1] };
            Interval::new(prev + 1, next)
        })
        .collect()
}

/// Per-boundary tests and the resulting candidate fault intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreenResult {
    pub boundaries: Vec<usize>,
    pub outcomes: Vec<TestOutcome>,
    pub raw_intervals: Vec<Interval>,
    pub merged_intervals: Vec<Interval>,
}

impl ScreenResult {
    pub fn rejections(&self) -> Vec<bool> {
        self.outcomes.iter().map(|o| o.reject).collect()
    }

    pub fn statistics(&self) -> Vec<f64> {
        self.outcomes.iter().map(|o| o.statistic).collect()
    }

    pub fn threshold(&self) -> f64 {
        self.outcomes.first().map_or(f64::NAN, |o| o.threshold)
    }
}

/// Runs the screening pass over the whole record.
pub fn screen(x: &StateMatrix, cfg: &DetectionConfig) -> Result<ScreenResult> {
    let cfg = cfg.validate(x.p())?;
    match cfg.normalization {
        Normalization::Record => screen_prepared(&normalize_record(x)?, &cfg),
        Normalization::Window => screen_prepared(x, &cfg),
    }
}

/// Screening on a record that already carries any record-level normalization.
pub(crate) fn screen_prepared(x: &StateMatrix, cfg: &DetectionConfig) -> Result<ScreenResult> {
    let t = x.t();
    let width = cfg.segment_width;
    let boundaries = segment_boundaries(t, width)?;
    let threshold = gaussian_quantile(1.0 - cfg.alpha / 2.0)?;
    let n = boundaries.len();

    let results: Vec<Result<TestOutcome>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let ti = boundaries[i];
            let prev = if i == 0 { 0 } else { boundaries[i - 1] };
            let next = if i + 1 == n { t } else { boundaries[i + 1] };
            boundary_test(x, prev + 1, ti, next, cfg, threshold)
                .map_err(|e| e.with_context(format!("boundary {} (t={ti})", i + 1)))
        })
        .collect();
    let outcomes = results.into_iter().collect::<Result<Vec<_>>>()?;

    let rejections: Vec<bool> = outcomes.iter().map(|o| o.reject).collect();
    let raw_intervals = rejection_intervals(&boundaries, &rejections, t);
    let merged_intervals = merge_intervals(&raw_intervals);
    Ok(ScreenResult {
        boundaries,
        outcomes,
        raw_intervals,
        merged_intervals,
    })
}

/// Tests columns [lo, mid] against [mid+1, hi].
fn boundary_test(
    x: &StateMatrix,
    lo: usize,
    mid: usize,
    hi: usize,
    cfg: &DetectionConfig,
    threshold: f64,
) -> Result<TestOutcome> {
    let p = x.p();
    let first = x.columns(lo, mid);
    let second = x.columns(mid + 1, hi);
    let (n1, n2) = (first.ncols(), second.ncols());
    let (s1, s2) = match cfg.normalization {
        Normalization::Window => (
            sample_covariance(normalize_rows(first)?.as_view())?,
            sample_covariance(normalize_rows(second)?.as_view())?,
        ),
        Normalization::Record => (sample_covariance(first)?, sample_covariance(second)?),
    };
    let (y_tau, y_t) = dimension_ratios(p, n1, n2)?;
    let consts = clt_constants(y_tau, y_t, cfg.kappa, cfg.beta1, cfg.beta2)?;
    let trace = fisher_trace_sq_dev(&s1, &s2)?;
    Ok(TestOutcome::evaluate(statistic_from_trace(trace, p, &consts), threshold, mid))
}
