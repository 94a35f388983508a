use thiserror::Error;

/// Errors raised by kernel construction, inference and testing routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid state space: {0}")]
    StateSpace(String),

    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("reducible EMC: state {unreachable} cannot be reached from state {from}")]
    ReducibleEmc { from: usize, unreachable: usize },

    #[error("absorbing state {0}")]
    AbsorbingState(usize),

    #[error("kernels are not comparable: {0}")]
    Mismatch(String),

    #[error("rho is not stationary for the kernel (max residual {0:e})")]
    NotStationary(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("trajectory too short for one block (n = {n}, kappa = {kappa})")]
    TrajectoryTooShort { n: usize, kappa: usize },

    #[error("off-support evaluation at step {step}: both densities vanish")]
    OffSupport { step: usize },

    #[error("hypotheses not epsilon-separated: distance {distance:e} < epsilon {epsilon:e}")]
    NotSeparated { distance: f64, epsilon: f64 },

    #[error("trajectory exceeds prior support at step {step}: sojourn {sojourn} > k_max {k_max}")]
    ExceedsPriorSupport { step: usize, sojourn: usize, k_max: usize },

    #[error("unreachable initial state {0}")]
    UnreachableInit(usize),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// Short machine-readable code used by the command-line front end.
    pub fn code(&self) -> &'static str {
        match self {
            Error::StateSpace(_) => "E_STATE_SPACE",
            Error::InvalidKernel(_) => "E_INVALID_KERNEL",
            Error::ReducibleEmc { .. } => "E_REDUCIBLE",
            Error::AbsorbingState(_) => "E_ABSORBING",
            Error::Mismatch(_) => "E_MISMATCH",
            Error::NotStationary(_) => "E_NOT_STATIONARY",
            Error::InvalidParameter(_) => "E_PARAMETER",
            Error::TrajectoryTooShort { .. } => "E_TOO_SHORT",
            Error::OffSupport { .. } => "E_OFF_SUPPORT",
            Error::NotSeparated { .. } => "E_NOT_SEPARATED",
            Error::ExceedsPriorSupport { .. } => "E_PRIOR_SUPPORT",
            Error::UnreachableInit(_) => "E_UNREACHABLE_INIT",
            Error::Unsupported(_) => "E_UNSUPPORTED",
            Error::Parse(_) => "E_PARSE",
            Error::Io(_) => "E_IO",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
