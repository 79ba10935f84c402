use thiserror::Error;

/// Errors raised by the matching library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),

    #[error("invalid seed set: {0}")]
    InvalidSeeds(String),

    #[error("permutation does not fix seed {0}")]
    SeedNotFixed(usize),

    #[error("invalid covariates: {0}")]
    InvalidCovariates(String),

    #[error("diagonal pair ({0}, {0}) has no design row")]
    DiagonalPair(usize),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("insufficient seeds: {available} seed pairs for {required} coefficients")]
    InsufficientSeeds { available: usize, required: usize },

    #[error("singular hessian: design columns are collinear on the seed block")]
    SingularHessian,

    #[error("problem too large for brute force: {size} exceeds limit {limit}")]
    TooLarge { size: usize, limit: usize },

    #[error("invalid options: {0}")]
    InvalidOptions(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("i/o: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;
