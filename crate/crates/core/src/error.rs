use thiserror::Error;

/// Every failure the library can report. `code()` gives a stable
/// machine-readable tag, `exit_code()` the CLI mapping.
#[derive(Debug, Error)]
pub enum Error {
    #[error("interface coefficients do not sum to one at k={k}: sum={sum}")]
    BalanceViolation { k: f64, sum: f64 },
    #[error("beta must exceed 1, got {0}")]
    DegenerateBeta(f64),
    #[error("absorption coefficient at k=0 must be positive, got {0}")]
    DegenerateAbsorption(f64),
    #[error("{name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("{name} must be finite and satisfy {requirement}, got {value}")]
    InvalidParameter {
        name: &'static str,
        requirement: &'static str,
        value: f64,
    },
    #[error("scattering kernel is not symmetric: R({k},{kp}) differs from R({kp},{k}) by {diff}")]
    AsymmetricKernel { k: f64, kp: f64, diff: f64 },
    #[error("interface coefficient {which} is not even in k at k={k}")]
    NonEvenCoefficient { which: &'static str, k: f64 },
    #[error("Hoelder bound violated for {which} at k={k}: deviation {deviation} > bound {bound}")]
    HolderViolation {
        which: &'static str,
        k: f64,
        deviation: f64,
        bound: f64,
    },
    #[error("momentum k=0 has zero scattering rate")]
    ZeroRate,
    #[error("quadrature failed to reach tolerance {tolerance}: estimated error {estimate}")]
    QuadratureFailure { tolerance: f64, estimate: f64 },
    #[error("starting position y=0 is not allowed")]
    InvalidOrigin,
    #[error("iteration did not converge: achieved {achieved}, tolerance {tolerance}")]
    NotConverged { achieved: f64, tolerance: f64 },
    #[error("point ({y},{k}) lies outside the grid domain")]
    InterpolationOutOfDomain { y: f64, k: f64 },
    #[error("truncation a={a} must be at least twice the grid spacing h={h}")]
    TruncationTooFine { a: f64, h: f64 },
    #[error("linear system is singular or not positive definite at pivot {pivot}")]
    SingularSystem { pivot: usize },
    #[error("test function support touches the interface")]
    SupportTouchesInterface,
    #[error("insufficient samples: {got} < {needed}")]
    InsufficientSamples { got: usize, needed: usize },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("interrupted")]
    Interrupted,
}

impl Error {
    pub fn code(&self) -> &'static str {
        match self {
            Error::BalanceViolation { .. } => "BalanceViolation",
            Error::DegenerateBeta(_) => "DegenerateBeta",
            Error::DegenerateAbsorption(_) => "DegenerateAbsorption",
            Error::NonPositive { .. } => "NonPositive",
            Error::InvalidParameter { .. } => "InvalidParameter",
            Error::AsymmetricKernel { .. } => "AsymmetricKernel",
            Error::NonEvenCoefficient { .. } => "NonEvenCoefficient",
            Error::HolderViolation { .. } => "HolderViolation",
            Error::ZeroRate => "ZeroRate",
            Error::QuadratureFailure { .. } => "QuadratureFailure",
            Error::InvalidOrigin => "InvalidOrigin",
            Error::NotConverged { .. } => "NotConverged",
            Error::InterpolationOutOfDomain { .. } => "InterpolationOutOfDomain",
            Error::TruncationTooFine { .. } => "TruncationTooFine",
            Error::SingularSystem { .. } => "SingularSystem",
            Error::SupportTouchesInterface => "SupportTouchesInterface",
            Error::InsufficientSamples { .. } => "InsufficientSamples",
            Error::InvalidGrid(_) => "InvalidGrid",
            Error::Config(_) => "ConfigError",
            Error::Io(_) => "IoError",
            Error::Interrupted => "Interrupted",
        }
    }

    /// 0 ok, 1 model invalid, 2 usage/parse, 3 non-convergence, 4 io,
    /// 130 interrupted.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::BalanceViolation { .. }
            | Error::DegenerateBeta(_)
            | Error::DegenerateAbsorption(_)
            | Error::NonPositive { .. }
            | Error::InvalidParameter { .. }
            | Error::AsymmetricKernel { .. }
            | Error::NonEvenCoefficient { .. }
            | Error::HolderViolation { .. }
            | Error::ZeroRate => 1,
            Error::NotConverged { .. } | Error::QuadratureFailure { .. } => 3,
            Error::Io(_) => 4,
            // shell convention for a run stopped by SIGINT
            Error::Interrupted => 130,
            _ => 2,
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

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
