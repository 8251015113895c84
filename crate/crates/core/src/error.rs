use std::path::PathBuf;

/// Errors raised by the simulation, quadrature and transport routines.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("grid density node {node} is {value}; densities must be finite and nonnegative")]
    BadDensity { node: usize, value: f64 },

    #[error("grid density is identically zero")]
    ZeroMass,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("size mismatch: {0} vs {1} points")]
    SizeMismatch(usize, usize),

    #[error("grids differ: [{0}, {1}] x {2} vs [{3}, {4}] x {5}")]
    GridMismatch(f64, f64, usize, f64, f64, usize),

    #[error("assignment size {n} exceeds the cap of {cap} points")]
    AssignmentTooLarge { n: usize, cap: usize },

    #[error("simulation diverged at step {step} (particle {particle}, value {value})")]
    Diverged {
        step: usize,
        particle: usize,
        value: f64,
    },

    #[error("Gibbs map: {0}")]
    Gibbs(String),

    #[error("zero denominator: {0}")]
    ZeroDenominator(&'static str),

    #[error("kinetic constants infeasible: {0}")]
    Infeasible(String),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("malformed config JSON: {0}")]
    MalformedConfig(String),

    #[error("unknown experiment kind `{0}`")]
    UnknownExperiment(String),

    #[error("missing required field `{0}`")]
    MissingField(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
