//! Error taxonomy for the command-line driver, and its mapping onto
//! process exit codes: 1 for anything the user can fix by editing inputs
//! (bad config, malformed file, contract violation), 2 for numerical
//! failures that appear at runtime (divergence, non-finite losses,
//! solvers that refuse to converge).

use hwm_core::error::HwmError;

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Aggregated configuration problems. Everything wrong with the
    /// document is collected before reporting, so one pass fixes all.
    #[error("{} configuration error(s)", .0.len())]
    Config(Vec<String>),

    /// A file existed and parsed as text but does not satisfy its format.
    #[error("{path}: {detail}")]
    Format { path: String, detail: String },

    /// Plain I/O failure, tagged with the path involved.
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// A cross-input contract violation caught at the command level
    /// (e.g. a checkpoint trained at a different dt than the dataset).
    #[error("{0}")]
    Invalid(String),

    /// Failure propagated from the numerical core.
    #[error(transparent)]
    Core(#[from] HwmError),
}

impl CliError {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl std::fmt::Display, detail: impl Into<String>) -> Self {
        CliError::Format {
            path: path.to_string(),
            detail: detail.into(),
        }
    }

    /// Exit status the process should report for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) => match e {
                HwmError::NonFinite { .. }
                | HwmError::NonFiniteState { .. }
                | HwmError::NonFiniteLoss { .. }
                | HwmError::MidpointNoConvergence { .. } => 2,
                _ => 1,
            },
            _ => 1,
        }
    }

    /// One diagnostic per line on stderr; config errors expand to their
    /// full list so nothing is hidden behind a count.
    pub fn report(&self) {
        match self {
            CliError::Config(errs) => {
                for e in errs {
                    eprintln!("config error: {e}");
                }
            }
            other => eprintln!("error: {other}"),
        }
    }
}
