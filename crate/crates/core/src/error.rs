use thiserror::Error;

/// Unified error type for the toolkit.
///
/// Variants map onto process exit codes in the CLI: config problems exit 2,
/// data problems exit 3, numeric failures exit 4.
#[derive(Debug, Error)]
pub enum TripError {
    /// Matrix or tensor dimensions do not line up.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A batch was routed to a modality the model does not have.
    #[error("routing error: {0}")]
    Routing(String),

    /// Gradients landed in a parameter group they must never touch.
    #[error("partition violation: {0}")]
    Partition(String),

    /// An API precondition was violated (empty input, bad argument).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A non-finite value surfaced during training or evaluation.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// Cross-validation fold construction is impossible as requested.
    #[error("split error: {0}")]
    Split(String),

    /// Ingested data is malformed. Carries file and line context.
    #[error("data error: {0}")]
    Data(String),

    /// A configuration file or flag set is invalid.
    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl From<csv::Error> for TripError {
    fn from(e: csv::Error) -> TripError {
        if e.is_io_error() {
            match e.into_kind() {
                csv::ErrorKind::Io(io) => TripError::Io(io),
                other => TripError::Data(format!("csv error: {other:?}")),
            }
        } else {
            TripError::Data(format!("csv error: {e}"))
        }
    }
}

pub type Result<T> = std::result::Result<T, TripError>;

impl TripError {
    /// Exit code the CLI maps this error onto.
    pub fn exit_code(&self) -> i32 {
        match self {
            TripError::Config(_) | TripError::Contract(_) => 2,
            TripError::Data(_) | TripError::Split(_) | TripError::Io(_) => 3,
            TripError::Numeric(_) => 4,
            _ => 1,
        }
    }
}
