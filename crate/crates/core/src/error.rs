use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid data: {0}")]
    InvalidData(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("dimension mismatch: expected {expected} covariates, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("length mismatch: expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("too few observed events: need at least {required}, found {found}")]
    InsufficientEvents { required: usize, found: usize },
    #[error("degenerate conditioning: survival probability is zero at t = {0}")]
    DegenerateConditioning(f64),
    #[error("no overlap: every unit has {0} = {1}")]
    NoOverlap(&'static str, u8),
    #[error("no treatment variation in the forest neighbourhood of the query point")]
    NoTreatmentVariation,
    #[error("weak instrument: instrument and treatment residuals are uncorrelated at the query point")]
    WeakInstrument,
    #[error("variance unavailable: {0}")]
    VarianceUnavailable(&'static str),
    #[error("estimation failed: {0}")]
    Estimation(String),
    #[error("unknown setting `{0}`")]
    UnknownSetting(String),
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
}

impl Error {
    /// Errors that come from a degenerate estimation problem rather than from
    /// malformed input.
    pub fn is_degenerate(&self) -> bool {
        matches!(
            self,
            Error::DegenerateConditioning(_)
                | Error::NoOverlap(..)
                | Error::NoTreatmentVariation
                | Error::WeakInstrument
                | Error::VarianceUnavailable(_)
                | Error::Estimation(_)
                | Error::InsufficientEvents { .. }
        )
    }
}
