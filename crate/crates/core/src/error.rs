use thiserror::Error;

use crate::exprlang::ExprError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Expr(#[from] ExprError),

    #[error("invalid system: {0}")]
    InvalidSystem(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("complement basis is rank deficient with the frozen pivot order (residual {residual:.3e}); re-anchor the system")]
    RankDeficient { residual: f64 },

    #[error("singular frame{}: condition number {condition:.3e}", node.map(|i| format!(" at node {i}")).unwrap_or_default())]
    SingularFrame { node: Option<usize>, condition: f64 },

    #[error("component x{component} is free at the {end} end but has no hint")]
    MissingHint { component: usize, end: &'static str },

    #[error("step size underflow at s = {s:.6e} (h = {h:.3e}); the flow is too stiff, reduce N or lambda")]
    StiffnessFailure { s: f64, h: f64 },

    #[error("non-finite value at node {node}, component x{component}, s = {s:.6e}")]
    NonFinite { node: usize, component: usize, s: f64 },

    #[error("action increased from {previous:.9e} to {current:.9e} at s = {s:.6e}")]
    ActionIncreased { s: f64, previous: f64, current: f64 },

    #[error("degenerate time dilation at node {node}: a = {a:.3e}")]
    DegenerateDilation { node: usize, a: f64 },

    #[error("physical time {t} outside [0, {t_max}]")]
    TimeOutOfRange { t: f64, t_max: f64 },

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable short name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Expr(_) => "expression",
            Error::InvalidSystem(_) => "invalid_system",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::RankDeficient { .. } => "rank_deficient",
            Error::SingularFrame { .. } => "singular_frame",
            Error::MissingHint { .. } => "missing_hint",
            Error::StiffnessFailure { .. } => "stiffness_failure",
            Error::NonFinite { .. } => "non_finite",
            Error::ActionIncreased { .. } => "action_increased",
            Error::DegenerateDilation { .. } => "degenerate_dilation",
            Error::TimeOutOfRange { .. } => "time_out_of_range",
            Error::Config { .. } => "config",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }
}
