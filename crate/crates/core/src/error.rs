use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Horizontal query outside the terrain grid.
    #[error("point ({x}, {y}) lies outside the terrain extent")]
    OutOfTerrain { x: f64, y: f64 },

    #[error("invalid terrain: {0}")]
    InvalidTerrain(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A geometric quantity is undefined (zero-length vector, non-finite input).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("no feasible candidate after {attempts} initialization attempts around ({x:.2}, {y:.2}, {z:.2})")]
    NoFeasibleCandidate { attempts: usize, x: f64, y: f64, z: f64 },

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("scenario validation failed: {0}")]
    Validation(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
