use thiserror::Error;

/// Errors raised by the numerical routines of this crate.
///
/// Each variant carries a stable machine-readable [`Error::kind`] so the CLI
/// can report failures as JSON.
#[derive(Debug, Error)]
pub enum Error {
    #[error("integration failed at t = {t}: {reason}")]
    IntegrationFailure { t: f64, reason: String },

    #[error("Newton iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NewtonDiverged { iterations: usize, residual: f64 },

    #[error("Jacobian is singular at q = {q}")]
    JacobianSingular { q: f64 },

    #[error("no fold found between q = {start} and q = {end}")]
    NoFoldInBracket { start: f64, end: f64 },

    #[error("degenerate fold: {0}")]
    DegenerateFold(String),

    #[error("fold assumption violated: {0}")]
    FoldAssumption(String),

    #[error("forcing has no regular maximum (second derivative {q_ddot} >= 0)")]
    NotAMaximum { q_ddot: f64 },

    #[error("forcing crosses the threshold {crossings} times; a single exceedance interval is required")]
    NotSinglePeaked { crossings: usize },

    #[error("bisection bracket invalid at t_e = {t_e}: {reason}")]
    BracketFailure { t_e: f64, reason: String },

    #[error("invalid autocorrelation {a}: series too short, constant or nonstationary")]
    InvalidAutocorrelation { a: f64 },

    #[error("invalid scaling parameters: {0}")]
    InvalidScaling(String),

    #[error("discretization failure: {0}")]
    DiscretizationFailure(String),

    #[error("no metastable well for xbar = {xbar} (requires xbar < 0)")]
    NoMetastableWell { xbar: f64 },

    #[error("no connecting orbit: deterministic solution blows up at t = {t}")]
    NoConnectingOrbit { t: f64 },

    #[error("mode approximation invalid: xbar reaches {max_xbar} >= 0")]
    ModeApproxInvalid { max_xbar: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("configuration invalid: {}", .0.join("; "))]
    Validation(Vec<String>),

    #[error("budget exceeded after {completed} of {total} work units")]
    BudgetExceeded { completed: usize, total: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("config parse error: {0}")]
    Config(String),
}

impl Error {
    /// Short identifier used in machine-readable error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::IntegrationFailure { .. } => "integration-failure",
            Error::NewtonDiverged { .. } => "newton-diverged",
            Error::JacobianSingular { .. } => "jacobian-singular",
            Error::NoFoldInBracket { .. } => "no-fold-in-bracket",
            Error::DegenerateFold(_) => "degenerate-fold",
            Error::FoldAssumption(_) => "fold-assumption",
            Error::NotAMaximum { .. } => "not-a-maximum",
            Error::NotSinglePeaked { .. } => "not-single-peaked",
            Error::BracketFailure { .. } => "bracket-failure",
            Error::InvalidAutocorrelation { .. } => "invalid-autocorrelation",
            Error::InvalidScaling(_) => "invalid-scaling",
            Error::DiscretizationFailure(_) => "discretization-failure",
            Error::NoMetastableWell { .. } => "no-metastable-well",
            Error::NoConnectingOrbit { .. } => "no-connecting-orbit",
            Error::ModeApproxInvalid { .. } => "mode-approx-invalid",
            Error::InvalidInput(_) => "invalid-input",
            Error::Validation(_) => "validation",
            Error::BudgetExceeded { .. } => "budget-exceeded",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Config(_) => "config",
        }
    }

    /// True for errors caused by bad user input rather than numerical trouble.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidInput(_)
                | Error::Validation(_)
                | Error::Config(_)
                | Error::InvalidScaling(_)
                | Error::NotAMaximum { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
