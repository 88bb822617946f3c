use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("site out of range: {site} (lattice has {n_sites} sites)")]
    SiteOutOfRange { site: usize, n_sites: usize },

    #[error("invalid site pair ({0}, {1})")]
    InvalidPair(usize, usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("system too large: {n_sites} sites exceeds the limit of {max}")]
    TooLarge { n_sites: usize, max: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("state vector is not normalized (norm {0})")]
    NotNormalized(f64),

    #[error("invalid density matrix: {0}")]
    InvalidDensity(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("lambda grid is not uniform")]
    NonUniformGrid,

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
