use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("parameter {value} lies outside the basis domain [{lo}, {hi}]")]
    Domain { value: f64, lo: f64, hi: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("quadrature with {nodes} nodes cannot resolve level {level} (need at least {required})")]
    QuadratureTooCoarse {
        nodes: usize,
        level: usize,
        required: usize,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("solver error: {0}")]
    Solver(String),

    #[error("step size {step} exceeds the admissible bound {bound} ({rule})")]
    StepTooLarge {
        step: f64,
        bound: f64,
        rule: &'static str,
    },

    #[error("I/O error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
