use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("order constraint violated: 0 < 2a' < min{{2a, a + 1/2}} required, got a = {a}, a' = {a_prime}")]
    OrderConstraint { a: f64, a_prime: f64 },

    #[error("grid for spacing h = {h} has no interior nodes")]
    EmptyGrid { h: f64 },

    #[error("erosion by {radius} leaves an empty set")]
    EmptyErosion { radius: f64 },

    #[error("kernel cutoff {cutoff} is smaller than the lattice diameter {diameter}")]
    CutoffTooSmall { cutoff: usize, diameter: usize },

    #[error("transform length {len} is too short for cutoff {cutoff} (need at least 8 * cutoff)")]
    Aliasing { len: usize, cutoff: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("matrix is not symmetric (relative asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("matrix is not positive definite after shift: {0}")]
    Indefinite(String),

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("fit window has {len} indices, at least {min} required")]
    WindowTooShort { len: usize, min: usize },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
