use thiserror::Error;

use crate::state::Basis;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("covariance matrix is in the {found:?} basis, expected {expected:?}")]
    BasisMismatch { expected: Basis, found: Basis },

    #[error("covariance matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("state violates the uncertainty principle (minimum symplectic eigenvalue {min_symplectic})")]
    Unphysical { min_symplectic: f64 },

    #[error("symplectic spectrum does not pair up: {0:?}")]
    SpectrumPairing(Vec<f64>),

    #[error("invalid state recipe: {0}")]
    InvalidRecipe(String),

    #[error("carrier phase undefined: d = 0 at exact resonance")]
    DegeneratePhase,

    #[error("invalid configuration field `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("no resonance dip found in DC trace ({0})")]
    NoDipFound(String),

    #[error("DC calibration did not converge after {iterations} iterations")]
    CalibrationDiverged { iterations: usize },

    #[error("incomplete dataset: {0}")]
    IncompleteDataset(String),

    #[error("design matrix is rank deficient; unresolved parameters: {unresolved:?}")]
    DegenerateDesign { unresolved: Vec<&'static str> },

    #[error("malformed file {path}: {reason}")]
    Format { path: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    TomlDe(#[from] toml::de::Error),

    #[error(transparent)]
    TomlSer(#[from] toml::ser::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
