//! Detection parameters and the two built-in profiles.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Built-in parameter sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    /// D = 3p, s = 16.
    #[default]
    Distribution,
    /// Small segments (D = 58 at p = 34, scaled with p), s = 9.
    Transmission,
}

/// Where row normalization statistics are taken from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    /// Each channel standardized once over the whole record. Fisher spectra are
    /// invariant to this, so the CLT centering applies unchanged.
    #[default]
    Record,
    /// Each sub-sample standardized with its own row statistics.
    Window,
}

/// Fully resolved detection parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionConfig {
    /// Screening segment width D.
    #[serde(rename = "D")]
    pub segment_width: usize,
    pub d1: usize,
    pub d2: usize,
    /// Consecutive flagged windows required to declare a fault.
    pub s: usize,
    pub alpha: f64,
    /// 2 for real data, 1 for complex.
    pub kappa: u8,
    pub beta1: f64,
    pub beta2: f64,
    #[serde(default)]
    pub normalization: Normalization,
}

impl DetectionConfig {
    /// Default parameters of `profile` for `p` channels.
    ///
    /// d1 is clamped to 2 for p < 12, where p − 10 would leave no first sample.
    pub fn for_profile(profile: Profile, p: usize) -> Self {
        let (segment_width, s) = match profile {
            Profile::Distribution => (3 * p, 16),
            Profile::Transmission => ((58 * p).div_ceil(34), 9),
        };
        Self {
            segment_width,
            d1: p.saturating_sub(10).max(2),
            d2: p + 10,
            s,
            alpha: 0.01,
            kappa: 2,
            beta1: 0.0,
            beta2: 0.0,
            normalization: Normalization::Record,
        }
    }

    /// Sliding window width d = d1 + d2.
    pub fn window_width(&self) -> usize {
        self.d1 + self.d2
    }

    /// Checks every parameter invariant for a record with `p` channels.
    ///
    /// Second-sample widths must exceed p + 1: at p + 1 the covariance is
    /// invertible but the dimension ratio p/(n − 1) reaches 1, where neither
    /// the support edge nor the CLT constants exist.
    pub fn validate(self, p: usize) -> Result<Self> {
        if p < 2 {
            return Err(Error::Config(format!("p must be at least 2, got {p}")));
        }
        for (name, width) in [("d2", self.d2), ("D", self.segment_width)] {
            if width <= p {
                return Err(Error::Singular {
                    pivot_ratio: 0.0,
                    context: Some(format!("{name}={width} must exceed p={p}")),
                });
            }
            if width == p + 1 {
                return Err(Error::Config(format!(
                    "{name}={width}: ratio p/({name}-1) must be < 1, use at least p+2"
                )));
            }
        }
        if self.d1 < 2 {
            return Err(Error::Config(format!("d1 must be at least 2, got {}", self.d1)));
        }
        if self.s < 1 {
            return Err(Error::Config("s must be at least 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if self.kappa != 1 && self.kappa != 2 {
            return Err(Error::Config(format!("kappa must be 1 or 2, got {}", self.kappa)));
        }
        if !(self.beta1.is_finite() && self.beta2.is_finite()) {
            return Err(Error::Config("beta1 and beta2 must be finite".into()));
        }
        Ok(self)
    }
}

/// Partially specified configuration as read from `config.json`. Unset keys
/// fall back to the chosen profile.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigOverrides {
    #[serde(default)]
    pub profile: Option<Profile>,
    #[serde(rename = "D", default)]
    pub segment_width: Option<usize>,
    #[serde(default)]
    pub d1: Option<usize>,
    #[serde(default)]
    pub d2: Option<usize>,
    #[serde(default)]
    pub s: Option<usize>,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub kappa: Option<u8>,
    #[serde(default)]
    pub beta1: Option<f64>,
    #[serde(default)]
    pub beta2: Option<f64>,
    #[serde(default)]
    pub normalization: Option<Normalization>,
}

impl ConfigOverrides {
    /// Fills unset keys from the profile and validates the result.
    pub fn resolve(&self, p: usize) -> Result<DetectionConfig> {
        let base = DetectionConfig::for_profile(self.profile.unwrap_or_default(), p);
        DetectionConfig {
            segment_width: self.segment_width.unwrap_or(base.segment_width),
            d1: self.d1.unwrap_or(base.d1),
            d2: self.d2.unwrap_or(base.d2),
            s: self.s.unwrap_or(base.s),
            alpha: self.alpha.unwrap_or(base.alpha),
            kappa: self.kappa.unwrap_or(base.kappa),
            beta1: self.beta1.unwrap_or(base.beta1),
            beta2: self.beta2.unwrap_or(base.beta2),
            normalization: self.normalization.unwrap_or(base.normalization),
        }
        .validate(p)
    }
}
