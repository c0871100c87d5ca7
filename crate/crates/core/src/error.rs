use thiserror::Error;

/// Errors raised by the detection pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("non-finite value at channel {row}, sample {col}")]
    NonFinite { row: usize, col: usize },

    #[error("channel {row} has zero sample variance{}", fmt_context(.context))]
    DegenerateChannel { row: usize, context: Option<String> },

    #[error(
        "second-sample covariance is singular (pivot ratio {pivot_ratio:.3e}); use a larger d2 or D{}",
        fmt_context(.context)
    )]
    Singular {
        pivot_ratio: f64,
        context: Option<String>,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("record too short: T={t} but at least 2D={} samples are required", 2 * .segment_width)]
    TooShortRecord { t: usize, segment_width: usize },

    #[error("interval of width {width} is shorter than the window width d={window}")]
    IntervalTooShort { width: usize, window: usize },

    #[error("invalid scenario: {0}")]
    Scenario(String),
}

fn fmt_context(context: &Option<String>) -> String {
    match context {
        Some(c) => format!(" ({c})"),
        None => String::new(),
    }
}

impl Error {
    /// Short machine-readable reason code.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Shape(_) => "shape",
            Error::NonFinite { .. } => "non-finite",
            Error::DegenerateChannel { .. } => "degenerate-channel",
            Error::Singular { .. } => "singular-covariance",
            Error::Config(_) => "config",
            Error::Domain(_) => "domain",
            Error::TooShortRecord { .. } => "too-short-record",
            Error::IntervalTooShort { .. } => "interval-too-short",
            Error::Scenario(_) => "scenario",
        }
    }

    /// Attaches location context (boundary or window) to numerical errors.
    pub fn with_context(self, ctx: impl Into<String>) -> Self {
        match self {
            Error::DegenerateChannel { row, context } => Error::DegenerateChannel {
                row,
                context: Some(join_context(ctx.into(), context)),
            },
            Error::Singular {
                pivot_ratio,
                context,
            } => Error::Singular {
                pivot_ratio,
                context: Some(join_context(ctx.into(), context)),
            },
            other => other,
        }
    }
}

fn join_context(outer: String, inner: Option<String>) -> String {
    match inner {
        Some(inner) => format!("{outer}, {inner}"),
        None => outer,
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
