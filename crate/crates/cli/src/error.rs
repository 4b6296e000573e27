use std::fmt;

use hierloss::Error;

/// Process exit statuses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitCode {
    Io = 1,
    Taxonomy = 2,
    Argument = 3,
    Config = 4,
    Data = 5,
    CheckFailed = 6,
}

#[derive(Debug)]
pub struct CliError {
    pub code: ExitCode,
    pub message: String,
}

impl CliError {
    pub fn new(code: ExitCode, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }

    pub fn argument(message: impl Into<String>) -> Self {
        Self::new(ExitCode::Argument, message)
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self::new(ExitCode::Config, message)
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self::new(ExitCode::Data, message)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Io(_) => ExitCode::Io,
            Error::Parse(_) | Error::Validation(_) => ExitCode::Taxonomy,
            Error::LevelOutOfRange { .. }
            | Error::IndexOutOfRange { .. }
            | Error::NotADistribution(_)
            | Error::InvalidData(_)
            | Error::InvalidProbability(_)
            | Error::EmptyGroundTruth
            | Error::EmptyInput
            | Error::KOutOfRange { .. } => ExitCode::Argument,
            Error::ChildrenCountExceedsLimit { .. }
            | Error::WeightLengthMismatch { .. }
            | Error::InvalidWeights(_)
            | Error::NonPositiveAlpha(_)
            | Error::SchemeDepthMismatch { .. }
            | Error::Config(_) => ExitCode::Config,
            Error::LevelMismatch(_) | Error::DataMismatch(_) => ExitCode::Data,
        };
        CliError::new(code, e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::new(ExitCode::Io, format!("i/o error: {e}"))
    }
}

/// Re-tags parse failures of a non-taxonomy file with `code`.
pub fn reading(path: &std::path::Path, code: ExitCode) -> impl Fn(Error) -> CliError + '_ {
    move |e| match e {
        Error::Parse(msg) => CliError::new(code, format!("{}: {msg}", path.display())),
        Error::Io(io) => CliError::new(ExitCode::Io, format!("{}: {io}", path.display())),
        other => other.into(),
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
