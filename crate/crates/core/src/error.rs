use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid value at `{path}`: {msg}")]
    Validation { path: String, msg: String },
    #[error("dangling reference at `{path}`: {msg}")]
    DanglingReference { path: String, msg: String },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("capacitance matrix is not positive definite (pivot {pivot:e} F at row {row})")]
    PositiveDefiniteness { row: usize, pivot: f64 },
    #[error("topology error: {0}")]
    Topology(String),
    #[error("eigensolver failed: {0}")]
    Convergence(String),
    #[error("index out of range: {0}")]
    Index(String),
    #[error("band tracking failed: {0}")]
    Tracking(String),
    #[error("no solution: {0}")]
    NoSolution(String),
    #[error("fit failed: {0}")]
    Fit(String),
    #[error("flux {flux} is outside the sweet-spot domain (cos(pi*flux) <= 0)")]
    FluxSweetSpot { flux: f64 },
    #[error("division by zero: {0}")]
    DivisionByZero(String),
    #[error("resonant denominator `{name}` vanishes")]
    ResonantDenominator { name: String },
    #[error("dressed-state assignment failed: {0}")]
    Assignment(String),
    #[error("Liouvillian steady state is not unique: {0}")]
    SingularLiouvillian(String),
}

impl Error {
    pub fn validation(path: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Validation { path: path.into(), msg: msg.into() }
    }

    /// Short machine-readable name, used in structured error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parse(_) => "ParseError",
            Error::Validation { .. } => "ValidationError",
            Error::DanglingReference { .. } => "DanglingReference",
            Error::Domain(_) => "DomainError",
            Error::PositiveDefiniteness { .. } => "PositiveDefinitenessError",
            Error::Topology(_) => "TopologyError",
            Error::Convergence(_) => "ConvergenceError",
            Error::Index(_) => "IndexError",
            Error::Tracking(_) => "TrackingError",
            Error::NoSolution(_) => "NoSolutionError",
            Error::Fit(_) => "FitError",
            Error::FluxSweetSpot { .. } => "FluxSweetSpotError",
            Error::DivisionByZero(_) => "DivisionByZero",
            Error::ResonantDenominator { .. } => "ResonantDenominator",
            Error::Assignment(_) => "AssignmentError",
            Error::SingularLiouvillian(_) => "SingularLiouvillian",
        }
    }

    /// Configuration problems (bad input) as opposed to numerical failures.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Parse(_)
                | Error::Validation { .. }
                | Error::DanglingReference { .. }
                | Error::Domain(_)
                | Error::Topology(_)
                | Error::Index(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
