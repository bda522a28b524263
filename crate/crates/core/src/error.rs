use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Effective inertia `M(x)` fell to or below the physical floor.
    #[error("non-physical state at t = {time} s: effective inertia {inertia} <= {floor}")]
    NonPhysical { time: f64, inertia: f64, floor: f64 },

    #[error("trajectory diverged at t = {time} s")]
    Diverged { time: f64 },

    #[error("infeasible gain: discriminant m0^2 - 4 k12 dP = {discriminant} < 0")]
    InfeasibleGain { discriminant: f64 },

    #[error("initial tangent is singular at zero discriminant (k12 = {k12})")]
    SingularInitialTangent { k12: f64 },

    #[error("no equilibrium: steady-state quadratic has discriminant {discriminant}")]
    NoEquilibrium { discriminant: f64 },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("operation `{op}` is not supported for this parameterization: {reason}")]
    Unsupported { op: &'static str, reason: String },

    #[error("trajectory has no tangent information")]
    MissingTangents,

    #[error("gradient set is empty")]
    EmptyGradientSet,

    #[error("perturbation of component {component} is infeasible: {source}")]
    InfeasiblePerturbation {
        component: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("schema mismatch at row {row}, column `{column}`: {message}")]
    SchemaMismatch {
        row: usize,
        column: String,
        message: String,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error on {path:?}: {message}")]
    Io { path: PathBuf, message: String },
}

impl Error {
    /// Short machine-readable tag, used by the CLI error record.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::NonPhysical { .. } => "non_physical",
            Error::Diverged { .. } => "diverged",
            Error::InfeasibleGain { .. } => "infeasible_gain",
            Error::SingularInitialTangent { .. } => "singular_initial_tangent",
            Error::NoEquilibrium { .. } => "no_equilibrium",
            Error::InvalidParams(_) => "invalid_params",
            Error::Unsupported { .. } => "unsupported",
            Error::MissingTangents => "missing_tangents",
            Error::EmptyGradientSet => "empty_gradient_set",
            Error::InfeasiblePerturbation { .. } => "infeasible_perturbation",
            Error::Degenerate(_) => "degenerate_input",
            Error::SchemaMismatch { .. } => "schema_mismatch",
            Error::Config(_) => "config",
            Error::Io { .. } => "io",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, err: impl std::fmt::Display) -> Self {
        Error::Io {
            path: path.into(),
            message: err.to_string(),
        }
    }
}
