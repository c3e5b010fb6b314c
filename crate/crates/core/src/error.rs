use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("quadrature did not converge: achieved error {achieved:.3e}, requested {requested:.3e}")]
    Quadrature { achieved: f64, requested: f64 },

    #[error("negative measure {0}")]
    NegativeMeasure(f64),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("Levy measure '{0}' has no jump sampler")]
    SamplerMissing(String),

    #[error("distinguished logarithm lost track of the branch at r = {r:.6} (|phi| = {modulus:.3e})")]
    BranchFailure { r: f64, modulus: f64 },

    #[error("Levy measure of X_0 has {count} atom(s) with a coordinate in 2piZ; rescale with an admissible diagonal map first")]
    AtomsIn2PiZ { count: usize },

    #[error("simulation window does not cover the kernel support: {0}")]
    WindowViolation(String),

    #[error("point {0:?} is not on the realization grid")]
    GridCoverage(Vec<f64>),

    #[error("sequence point {0:?} lies outside the density-one set")]
    OutsideDensitySet(Vec<f64>),

    #[error("model is not integrable: {0}")]
    NotIntegrable(String),

    #[error("validation error at `{field}`: {message}")]
    Validation { field: String, message: String },

    #[error("io error: {0}")]
    Io(String),

    #[error("internal error: {0}")]
    Internal(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl Error {
    pub(crate) fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            message: message.into(),
        }
    }
}
