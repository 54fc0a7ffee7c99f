use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the engine can report. Variant names double as the stable
/// error identifiers printed by the CLI and returned by the service.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("input contains non-finite values")]
    NonFinite,
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("regularized normal matrix is numerically singular")]
    SolveFailure,
    #[error("dimension mismatch: {0}")]
    Shape(String),

    #[error("factor count {0} is below the supported minimum")]
    KTooSmall(usize),
    #[error("factor count {0} exceeds the supported maximum")]
    KTooLarge(usize),
    #[error("{0} factors exceed the full-factorial limit of 5")]
    TooManyFactors(usize),
    #[error("a resolution-V half fraction needs at least 5 factors, got {0}")]
    ResolutionUnattainable(usize),
    #[error("no Sobol direction numbers for dimension {0}")]
    DimensionUnsupported(usize),
    #[error("could not draw a fresh screening row after {0} attempts")]
    ResampleExhausted(usize),
    #[error("invalid design parameters: {0}")]
    InvalidDesign(String),

    #[error("every hyperparameter restart failed to factorize")]
    FitFailure,
    #[error("model was conditioned on inputs only and cannot answer mean queries")]
    MeanQueryOnVarianceOnlyModel,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("session is complete")]
    SessionComplete,
    #[error("session is not complete")]
    NotComplete,
    #[error("unknown row id {0}")]
    UnknownRowId(usize),
    #[error("row {0} already has a response")]
    DuplicateResponse(usize),
    #[error("response for row {0} is not finite")]
    NonFiniteResponse(usize),
    #[error("row {0} is not part of the current phase")]
    WrongPhase(usize),
    #[error("{0} is not available in the current phase")]
    NotAvailable(String),
    #[error("unsupported session schema {0:?}")]
    Schema(String),

    #[error("unknown scenario {0:?}")]
    UnknownScenario(String),
    #[error("unknown method {0:?}")]
    UnknownMethod(String),
    #[error("need at least two replications per (method, scenario), {0} has fewer")]
    InsufficientReplications(String),

    #[error("parse error: {0}")]
    Parse(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// Stable identifier for the variant.
    pub fn name(&self) -> &'static str {
        match self {
            Error::NonFinite => "NonFinite",
            Error::Degenerate(_) => "Degenerate",
            Error::SolveFailure => "SolveFailure",
            Error::Shape(_) => "Shape",
            Error::KTooSmall(_) => "KTooSmall",
            Error::KTooLarge(_) => "KTooLarge",
            Error::TooManyFactors(_) => "TooManyFactors",
            Error::ResolutionUnattainable(_) => "ResolutionUnattainable",
            Error::DimensionUnsupported(_) => "DimensionUnsupported",
            Error::ResampleExhausted(_) => "ResampleExhausted",
            Error::InvalidDesign(_) => "InvalidDesign",
            Error::FitFailure => "FitFailure",
            Error::MeanQueryOnVarianceOnlyModel => "MeanQueryOnVarianceOnlyModel",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::SessionComplete => "SessionComplete",
            Error::NotComplete => "NotComplete",
            Error::UnknownRowId(_) => "UnknownRowId",
            Error::DuplicateResponse(_) => "DuplicateResponse",
            Error::NonFiniteResponse(_) => "NonFiniteResponse",
            Error::WrongPhase(_) => "WrongPhase",
            Error::NotAvailable(_) => "NotAvailable",
            Error::Schema(_) => "Schema",
            Error::UnknownScenario(_) => "UnknownScenario",
            Error::UnknownMethod(_) => "UnknownMethod",
            Error::InsufficientReplications(_) => "InsufficientReplications",
            Error::Parse(_) => "Parse",
            Error::Io(_) => "Io",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
