use std::fmt;

/// Bad input: unreadable or malformed CSV, config, knots or flags.
pub const EXIT_INPUT: u8 = 2;
/// Exposure column is not binary or has a single level.
pub const EXIT_EXPOSURE: u8 = 3;
/// Design matrix is rank deficient.
pub const EXIT_RANK: u8 = 4;
/// A simulation study finished with failed replicates.
pub const EXIT_REPLICATES: u8 = 5;
/// Anything else.
pub const EXIT_OTHER: u8 = 1;

/// Error carrying the process exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub error: anyhow::Error,
}

impl CliError {
    pub fn new(code: u8, error: impl Into<anyhow::Error>) -> Self {
        Self {
            code,
            error: error.into(),
        }
    }

    pub fn input(msg: impl fmt::Display) -> Self {
        Self::new(EXIT_INPUT, anyhow::anyhow!("{msg}"))
    }

    pub fn exposure(msg: impl fmt::Display) -> Self {
        Self::new(EXIT_EXPOSURE, anyhow::anyhow!("{msg}"))
    }

    pub fn other(error: impl Into<anyhow::Error>) -> Self {
        Self::new(EXIT_OTHER, error)
    }

    /// Prefix the message with `context`, keeping the exit code.
    pub fn context(self, context: impl fmt::Display + Send + Sync + 'static) -> Self {
        Self {
            code: self.code,
            error: self.error.context(context),
        }
    }
}

impl From<shapemed::Error> for CliError {
    fn from(e: shapemed::Error) -> Self {
        use shapemed::Error as E;
        let code = match e {
            E::RankDeficient(_) | E::ConstantMediator => EXIT_RANK,
            E::InvalidKnots(_)
            | E::InvalidArgument(_)
            | E::InvalidData(_)
            | E::DimensionMismatch(_)
            | E::IndexOutOfRange { .. } => EXIT_INPUT,
            E::NoConvergence(_) | E::NonPositiveVariance(_) => EXIT_OTHER,
        };
        Self::new(code, e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::other(e)
    }
}

pub type CliResult<T> = Result<T, CliError>;
