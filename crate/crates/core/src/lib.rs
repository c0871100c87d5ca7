//! Covariance change-point detection for high-dimensional multichannel
//! records, built on Fisher random matrices.
//!
//! The pipeline has two stages. [`screening::screen`] splits the record into
//! segments of width D and tests each boundary with the CLT statistic L,
//! returning merged candidate intervals. [`detect::localize`] then slides a
//! split window through each interval and applies one of the per-window rules
//! (largest eigenvalue against the LSD support edge, the L test, or a
//! Marčenko–Pastur baseline) with an s-consecutive run rule.

pub mod config;
pub mod detect;
pub mod error;
mod quad;
pub mod report;
pub mod rmt;
pub mod screening;
pub mod simgen;
pub mod specstats;
pub mod state;

pub use config::{ConfigOverrides, DetectionConfig, Normalization, Profile};
pub use detect::{localize, run_rule, DetectorKind, DetectorTrace};
pub use error::{Error, Result};
pub use report::{FaultReport, Interval, IntervalDetection};
pub use screening::{screen, ScreenResult};
pub use simgen::{generate, Event, EventKind, GroundTruth, Scenario};
pub use state::StateMatrix;
