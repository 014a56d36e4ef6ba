use thiserror::Error;

use crate::problem::ConstraintKind;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("length mismatch for {what}: expected {expected}, got {got}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid ESS parameters: {0}")]
    InvalidParams(String),

    #[error("invalid tariff: {0}")]
    InvalidTariff(String),

    #[error("invalid profile: {0}")]
    InvalidProfile(String),

    #[error("horizon must contain at least one step")]
    EmptyHorizon,

    #[error("simplex iteration limit ({0}) reached")]
    IterationLimit(usize),

    #[error("solve outcome is not optimal")]
    NotOptimal,

    #[error("constraint {kind:?} at step {step} is not part of this problem")]
    MissingConstraint { kind: ConstraintKind, step: usize },

    #[error("step {0} is not simultaneously charging and discharging")]
    NoSimultaneity(usize),

    #[error("repair precondition violated: {0}")]
    Precondition(String),

    #[error("no split (a, b) exists for forwarding repair: need {need}, have {have}")]
    SplitInfeasible { need: f64, have: f64 },

    #[error("repair did not terminate within {0} rounds")]
    MaxRoundsExceeded(usize),

    #[error("input trajectory is infeasible: {0}")]
    InfeasibleInput(String),

    #[error("oracle horizon {0} exceeds the supported maximum of 3")]
    HorizonTooLong(usize),

    #[error("oracle found no feasible grid point")]
    NoFeasibleGridPoint,

    #[error("solver failed at wall-clock step {step}: {reason}")]
    StepFailed { step: usize, reason: String, lp_dump: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
