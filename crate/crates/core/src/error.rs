use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("{what}: {divisor} does not divide {value}")]
    NonDivisible {
        what: &'static str,
        value: usize,
        divisor: usize,
    },

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    /// 1-based block coordinates, matching how the output grid is usually written.
    #[error("systematic block ({0},{1}) is missing")]
    MissingBlock(usize, usize),

    #[error("index ({i},{j}) out of range for a {rows}x{cols} grid")]
    OutOfRange {
        i: usize,
        j: usize,
        rows: usize,
        cols: usize,
    },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("degree {degree} has no valid split for a {rows}x{cols} grid")]
    NoValidSplit {
        degree: usize,
        rows: usize,
        cols: usize,
    },

    #[error("degenerate distribution: {0}")]
    DegenerateDistribution(String),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("could not build an MDS generator for ({n_out},{k_in}) after {attempts} attempts")]
    SingularGenerator {
        n_out: usize,
        k_in: usize,
        attempts: usize,
    },

    #[error("{erased} erasures exceed the {capacity} the code can correct")]
    TooManyErasures { erased: usize, capacity: usize },

    #[error("ill-conditioned solve: relative residual {0:e}")]
    IllConditioned(f64),

    #[error("coefficient {0:e} too small to divide by")]
    NumericUnderflow(f64),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("no worker count up to {max_workers} reaches failure rate {target}")]
    NotFound { max_workers: usize, target: f64 },

    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("{0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
