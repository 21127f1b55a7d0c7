use thiserror::Error;

/// Errors raised by the analytic and simulation layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("no sign change over bracket [{lo}, {hi}] (f(lo)={f_lo}, f(hi)={f_hi})")]
    NoSignChange { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },

    #[error("root finder exceeded {0} iterations")]
    MaxIterations(usize),

    #[error("quadrature on [{a}, {b}] stalled with error estimate {error:e}")]
    NonConvergence { a: f64, b: f64, error: f64 },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("Laplace exponent evaluated at negative argument {0}")]
    InvalidBeta(f64),

    #[error("no upper bracket for the inverse Laplace exponent at rate {0}")]
    BracketFailure(f64),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("repeated root near {0} in the scale-function denominator; perturb the rate")]
    RepeatedRoot(f64),

    #[error("domain error: {0}")]
    DomainError(String),

    #[error("regime error: {0}")]
    RegimeError(String),

    #[error("convergence error: {0}")]
    ConvergenceError(String),

    #[error("stopping region branches at level {y}: b* jumps from {b_here} to {b_probe}")]
    BranchingDetected { y: f64, b_here: f64, b_probe: f64 },

    #[error("no root: {0}")]
    NoRoot(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// Short machine-readable tag, used by the CLI's error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::NoSignChange { .. } => "NoSignChange",
            Error::MaxIterations(_) => "MaxIterations",
            Error::NonConvergence { .. } => "NonConvergence",
            Error::DegenerateInput(_) => "DegenerateInput",
            Error::InvalidBeta(_) => "InvalidBeta",
            Error::BracketFailure(_) => "BracketFailure",
            Error::InvalidModel(_) => "InvalidModel",
            Error::RepeatedRoot(_) => "RepeatedRoot",
            Error::DomainError(_) => "DomainError",
            Error::RegimeError(_) => "RegimeError",
            Error::ConvergenceError(_) => "ConvergenceError",
            Error::BranchingDetected { .. } => "BranchingDetected",
            Error::NoRoot(_) => "NoRoot",
            Error::Config(_) => "Config",
            Error::Io(_) => "Io",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
