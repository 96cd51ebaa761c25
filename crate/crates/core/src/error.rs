use std::fmt;

use thiserror::Error;

/// Which standing assumption on the parameters was violated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegimeCondition {
    /// `lambda0 < eps - eta <= 0 < r`: habit growth slower than the interest rate.
    Growth,
    /// `rho > r (1 - gamma)`: the value function stays finite.
    FiniteValue,
}

impl RegimeCondition {
    pub fn code(self) -> &'static str {
        match self {
            RegimeCondition::Growth => "growth",
            RegimeCondition::FiniteValue => "finite-value",
        }
    }
}

impl fmt::Display for RegimeCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("DomainError: {0}")]
    Domain(String),

    #[error("RegimeError({condition}): {detail}")]
    Regime {
        condition: RegimeCondition,
        detail: String,
    },

    #[error("BracketError: no sign change found after {iterations} doublings")]
    Bracket { iterations: usize },

    #[error("RootError: residual {residual:e} above tolerance at lambda = {lambda}")]
    Root { lambda: f64, residual: f64 },

    #[error("InconsistencyError: {0}")]
    Inconsistency(String),

    #[error("ContourError: winding number {winding} not integral after {points} boundary points")]
    Contour { winding: f64, points: usize },

    #[error("StepError: implicit weight {weight} >= 1, increase the grid count n")]
    Step { weight: f64 },

    #[error("CoarseGridError: implicit weight {weight} >= 1, increase the grid count n")]
    CoarseGrid { weight: f64 },

    #[error("MismatchError: {what} differ by {gap:e} (relative)")]
    Mismatch { what: &'static str, gap: f64 },

    #[error("ConstraintError: {what} violated first at t = {t}")]
    Constraint { what: &'static str, t: f64 },

    #[error("Infeasible(initial-capital): k0 = {k0} does not exceed discounted minimal consumption {threshold}")]
    Infeasible { k0: f64, threshold: f64 },

    #[error("OptimalityViolation: perturbation improved J by {gain:e} (tolerance {tolerance:e})")]
    OptimalityViolation { gain: f64, tolerance: f64 },

    #[error("NonConvergence: ascent stalled after {iterations} iterations with stationarity {stationarity:e}")]
    NonConvergence { iterations: usize, stationarity: f64 },

    #[error("ParseError: {0}")]
    Parse(String),

    #[error("IoError: {0}")]
    Io(String),
}

impl Error {
    /// Short machine-greppable reason code, e.g. `RegimeError(growth)`.
    pub fn reason_code(&self) -> String {
        match self {
            Error::Domain(_) => "DomainError".into(),
            Error::Regime { condition, .. } => format!("RegimeError({condition})"),
            Error::Bracket { .. } => "BracketError".into(),
            Error::Root { .. } => "RootError".into(),
            Error::Inconsistency(_) => "InconsistencyError".into(),
            Error::Contour { .. } => "ContourError".into(),
            Error::Step { .. } => "StepError".into(),
            Error::CoarseGrid { .. } => "CoarseGridError".into(),
            Error::Mismatch { .. } => "MismatchError".into(),
            Error::Constraint { .. } => "ConstraintError".into(),
            Error::Infeasible { .. } => "Infeasible(initial-capital)".into(),
            Error::OptimalityViolation { .. } => "OptimalityViolation".into(),
            Error::NonConvergence { .. } => "NonConvergence".into(),
            Error::Parse(_) => "ParseError".into(),
            Error::Io(_) => "IoError".into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
