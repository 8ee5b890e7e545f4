use std::path::PathBuf;

use empdyn_core::Error as CoreError;

/// Exit status for configuration and input problems.
pub const EXIT_CONFIG: i32 = 2;
/// Exit status for estimation failures.
pub const EXIT_ESTIMATION: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{0}")]
    Config(String),
    #[error("pace: all {count} subjects failed")]
    AllSubjectsFailed { count: usize },
    #[error("{stage}: {source}")]
    Estimation {
        stage: &'static str,
        #[source]
        source: CoreError,
    },
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        CliError::Parse {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Tags a core error with the pipeline stage that raised it. Input and
    /// configuration problems keep exit status 2.
    pub fn stage(stage: &'static str) -> impl FnOnce(CoreError) -> Self {
        move |source| CliError::Estimation { stage, source }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Estimation { source, .. } if !is_input_error(source) => EXIT_ESTIMATION,
            CliError::AllSubjectsFailed { .. } => EXIT_ESTIMATION,
            _ => EXIT_CONFIG,
        }
    }
}

fn is_input_error(e: &CoreError) -> bool {
    matches!(
        e,
        CoreError::MalformedRow { .. }
            | CoreError::EmptyDataset
            | CoreError::DuplicateTime { .. }
            | CoreError::InvalidSubject { .. }
            | CoreError::NoPairedSubject
            | CoreError::InvalidDomain { .. }
            | CoreError::InvalidGridSize(_)
            | CoreError::InvalidBandwidth { .. }
            | CoreError::InvalidConfig(_)
    )
}

pub type CliResult<T> = Result<T, CliError>;
