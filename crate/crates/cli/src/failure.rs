use std::fmt;

/// Exit status for input and configuration problems.
pub const EXIT_INPUT: u8 = 2;
/// Exit status for data whose shape cannot support the requested analysis.
pub const EXIT_SHAPE: u8 = 3;

/// A failed command: exit status, short reason code and human message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Failure {
    pub exit: u8,
    pub reason: String,
    pub message: String,
}

impl Failure {
    pub fn input(reason: &str, message: impl Into<String>) -> Self {
        Self {
            exit: EXIT_INPUT,
            reason: reason.to_string(),
            message: message.into(),
        }
    }

    pub fn shape(reason: &str, message: impl Into<String>) -> Self {
        Self {
            exit: EXIT_SHAPE,
            reason: reason.to_string(),
            message: message.into(),
        }
    }

    pub fn io(path: &std::path::Path, err: std::io::Error) -> Self {
        Self::input("io", format!("{}: {err}", path.display()))
    }

    /// The single stderr line: `error[reason]: message`.
    pub fn line(&self) -> String {
        let msg = self.message.replace(['\n', '\r'], " ");
        format!("error[{}]: {}", self.reason, msg.trim())
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.line())
    }
}

impl std::error::Error for Failure {}

impl From<fisherwatch::Error> for Failure {
    fn from(e: fisherwatch::Error) -> Self {
        use fisherwatch::Error as E;
        let exit = match e {
            E::Shape(_)
            | E::TooShortRecord { .. }
            | E::IntervalTooShort { .. }
            | E::DegenerateChannel { .. }
            | E::Singular { .. } => EXIT_SHAPE,
            E::NonFinite { .. } | E::Config(_) | E::Domain(_) | E::Scenario(_) => EXIT_INPUT,
        };
        Self {
            exit,
            reason: e.code().to_string(),
            message: e.to_string(),
        }
    }
}
