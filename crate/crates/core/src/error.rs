use thiserror::Error;

/// Errors raised by the numerical routines and the command-line layer.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is not symmetric (max asymmetry {0:.3e})")]
    NonSymmetric(f64),
    #[error("matrix is not positive semidefinite (smallest eigenvalue {0:.3e})")]
    NonPsd(f64),
    #[error("diagonal entry {0} is not strictly positive")]
    ZeroDiagonal(usize),
    #[error("pair ({0}, {1}) is degenerate: 2x2 determinant vanishes")]
    DegeneratePair(usize, usize),
    #[error("matrix is singular")]
    SingularMatrix,
    #[error("dimension {got} is too small (need at least {min})")]
    DimensionTooSmall { got: usize, min: usize },
    #[error("dimension {got} exceeds the supported maximum {max}")]
    DimensionTooLarge { got: usize, max: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("normals are collinear")]
    CollinearNormals,
    #[error("normals do not span a three-dimensional subspace")]
    DegenerateTriple,
    #[error("regularization failed after {0} retries")]
    RegularizationFailed(usize),
    #[error("Gram system is singular")]
    SingularGram,
    #[error("cone directions are invalid: {0}")]
    BadDirections(String),
    #[error("facet {0} has an infinite offset")]
    InfiniteOffset(usize),
    #[error("missing triple normal for ({0}, {1}, {2})")]
    MissingTripleNormal(usize, usize, usize),
    #[error("angle floor must be positive")]
    ZeroAngle,
    #[error("quadrature budget exceeded: {0}")]
    QuadratureBudgetExceeded(String),
    #[error("no admissible pair of normals")]
    EmptyPairSet,
    #[error("beta^2 must be positive")]
    ZeroBeta,
    #[error("alpha^2 must be positive")]
    ZeroAlpha,
    #[error("smallest eigenvalue must be positive")]
    ZeroSigmaStar,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
