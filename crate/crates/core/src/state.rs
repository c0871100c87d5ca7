//! The state evaluation matrix: one row per measuring point, one column per
//! sampling instant.

use nalgebra::{DMatrix, DMatrixView};

use crate::error::{Error, Result};

/// A p×T measurement record. Rows are channels, columns are sampling instants.
///
/// Columns are addressed with 1-based sample indices at the public boundary
/// (`columns(lo, hi)`), matching how faults are reported.
#[derive(Debug, Clone, PartialEq)]
pub struct StateMatrix {
    values: DMatrix<f64>,
    channel_ids: Vec<String>,
    sample_rate_hz: Option<f64>,
}

impl StateMatrix {
    /// Builds the matrix from per-channel series, preserving row order.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        if rows.len() < 2 {
            return Err(Error::Shape(format!(
                "need at least 2 channels, got {}",
                rows.len()
            )));
        }
        let t = rows[0].as_ref().len();
        if let Some((i, r)) = rows
            .iter()
            .enumerate()
            .find(|(_, r)| r.as_ref().len() != t)
        {
            return Err(Error::Shape(format!(
                "channel {} has {} samples, channel 1 has {t}",
                i + 1,
                r.as_ref().len()
            )));
        }
        let p = rows.len();
        let values = DMatrix::from_fn(p, t, |i, j| rows[i].as_ref()[j]);
        Self::from_matrix(values)
    }

    /// Wraps an existing p×T matrix after checking shape and finiteness.
    pub fn from_matrix(values: DMatrix<f64>) -> Result<Self> {
        let (p, t) = values.shape();
        if p < 2 {
            return Err(Error::Shape(format!("need at least 2 channels, got {p}")));
        }
        if t < 2 {
            return Err(Error::Shape(format!("need at least 2 samples, got {t}")));
        }
        for j in 0..t {
            for i in 0..p {
                if !values[(i, j)].is_finite() {
                    return Err(Error::NonFinite { row: i + 1, col: j + 1 });
                }
            }
        }
        let channel_ids = (1..=p).map(|i| format!("ch{i}")).collect();
        Ok(Self {
            values,
            channel_ids,
            sample_rate_hz: None,
        })
    }

    pub fn with_channel_ids(mut self, ids: Vec<String>) -> Result<Self> {
        if ids.len() != self.p() {
            return Err(Error::Shape(format!(
                "{} channel ids for {} channels",
                ids.len(),
                self.p()
            )));
        }
        self.channel_ids = ids;
        Ok(self)
    }

    pub fn with_sample_rate(mut self, hz: f64) -> Result<Self> {
        if !(hz.is_finite() && hz > 0.0) {
            return Err(Error::Config(format!("sample rate must be positive, got {hz}")));
        }
        self.sample_rate_hz = Some(hz);
        Ok(self)
    }

    /// Number of channels.
    pub fn p(&self) -> usize {
        self.values.nrows()
    }

    /// Number of sampling instants.
    pub fn t(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn channel_ids(&self) -> &[String] {
        &self.channel_ids
    }

    pub fn sample_rate_hz(&self) -> Option<f64> {
        self.sample_rate_hz
    }

    /// Copy of channel `i` (0-based row index).
    pub fn row(&self, i: usize) -> Vec<f64> {
        self.values.row(i).iter().copied().collect()
    }

    /// View of samples `lo..=hi` (1-based, inclusive).
    pub fn columns(&self, lo: usize, hi: usize) -> DMatrixView<'_, f64> {
        assert!(lo >= 1 && lo <= hi && hi <= self.t(), "column range [{lo}, {hi}] out of bounds");
        self.values.columns(lo - 1, hi - lo + 1)
    }

    /// Same record with different values (used for record-level normalization).
    pub(crate) fn replace_values(&self, values: DMatrix<f64>) -> Self {
        debug_assert_eq!(values.shape(), self.values.shape());
        Self {
            values,
            channel_ids: self.channel_ids.clone(),
            sample_rate_hz: self.sample_rate_hz,
        }
    }
}
