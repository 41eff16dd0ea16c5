use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid scenario: {field}: {reason}")]
    InvalidConfig { field: &'static str, reason: String },

    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),

    #[error("timestamp mismatch: {0}")]
    TimestampMismatch(String),

    #[error("non-positive duration {0}")]
    NonPositiveDuration(f64),

    #[error("cubic infeasible under limits")]
    CubicInfeasible,

    #[error("infeasible approach: {0}")]
    InfeasibleApproach(String),

    #[error("horizon too short: {steps} steps")]
    HorizonTooShort { steps: i64 },

    #[error("terminal state unreachable: {0}")]
    TerminalUnreachable(String),

    #[error("solver did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("episode already complete at x = {0:.3} m")]
    EpisodeComplete(f64),

    #[error("episode did not terminate before t_max = {0} s")]
    EpisodeTimeout(f64),

    #[error("red-light violation at t = {t:.2} s, x = {x:.3} m")]
    SafetyViolation { t: f64, x: f64 },

    #[error("planner failed at t = {t:.2} s: {source}")]
    Planner {
        t: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("planner indistinguishable from benchmark (zero indicator denominator)")]
    ZeroDenominator,

    #[error("plan segments do not tile time: {0}")]
    SegmentCoverage(String),

    #[error("desk-scale guard exceeded: {0}")]
    GuardExceeded(String),

    #[error("no feasible lattice path")]
    NoFeasiblePath,

    #[error("empty report set")]
    EmptyReport,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("scenario parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
