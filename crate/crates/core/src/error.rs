use alloc::string::String;

/// Errors raised by the estimation pipeline.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("line {line}: malformed row: {reason}")]
    MalformedRow { line: usize, reason: String },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("subject `{subject}` has a duplicate observation time {time}")]
    DuplicateTime { subject: String, time: f64 },

    #[error("subject `{subject}`: {reason}")]
    InvalidSubject { subject: String, reason: String },

    #[error("no subject has two or more observations; raw covariances are undefined")]
    NoPairedSubject,

    #[error("invalid domain [{lower}, {upper}]")]
    InvalidDomain { lower: f64, upper: f64 },

    #[error("evaluation grid needs at least 2 points, got {0}")]
    InvalidGridSize(usize),

    #[error("bandwidth `{name}` = {value} must lie in (0, {limit})")]
    InvalidBandwidth {
        name: &'static str,
        value: f64,
        limit: f64,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{what}: expected length {expected}, got {actual}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("insufficient local data at t = {t}{} after widening to bandwidth {bandwidth}", fmt_s(*.s))]
    InsufficientLocalData {
        t: f64,
        s: Option<f64>,
        bandwidth: f64,
    },

    #[error("singular local normal equations at t = {t}{} (bandwidth {bandwidth})", fmt_s(*.s))]
    SingularLocalFit {
        t: f64,
        s: Option<f64>,
        bandwidth: f64,
    },

    #[error("covariance has no positive eigenvalues")]
    DegenerateEigensystem,

    #[error("symmetric eigen-solver did not converge")]
    EigenNotConverged,

    #[error("eigensystem carries no eigenfunction derivatives")]
    MissingDerivatives,

    #[error("variance function is identically zero")]
    DegenerateVariance,

    #[error("drift covariance is indefinite: eigenvalue {min_eigenvalue} below tolerance -{tolerance}")]
    IndefiniteDriftCovariance { min_eigenvalue: f64, tolerance: f64 },

    #[error("conditioning matrix for subject `{subject}` is singular")]
    SingularConditioning { subject: String },
}

fn fmt_s(s: Option<f64>) -> String {
    match s {
        Some(s) => alloc::format!(", s = {s}"),
        None => String::new(),
    }
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
