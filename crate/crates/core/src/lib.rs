//! Linear-programming home energy management.
//!
//! A single home with rooftop solar, a battery and a grid connection is
//! dispatched over a finite horizon by solving a linear program. On top of
//! the LP this crate offers KKT certification of solutions, detection and
//! repair of steps that charge and discharge at once, a brute-force oracle
//! for tiny horizons, and a receding-horizon driver.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! `*F64` aliases below are the usual entry points.

pub mod error;
pub mod kkt;
pub mod model;
pub mod mpc;
pub mod oracle;
pub mod problem;
pub mod repair;
pub mod scalar;
pub mod solver;

pub use error::{Error, Result};
pub use kkt::{
    certificate_for_point, certificate_of_suboptimality, check, check_pair, classify_regime, Behavior,
    Certificate, CertificateCase, GroupRecord, KktReport, Multipliers, Regime, StepStationarity,
};
pub use mpc::{run, RunLog, ScenarioConfig};
pub use model::{
    balance_residual, check_feasible, cost, max_simultaneity, simultaneity_index, simultaneous_steps,
    soc_step, soc_trajectory, DecisionTrajectory, EssParams, ExogenousProfile, FeasibilityReport,
    SocTrajectory, StepControl, Tariff, Violation, DEFAULT_TOL,
};
pub use oracle::{enumerate, GridSpec, OracleResult};
pub use problem::{
    build_p1, extract_trajectory, pack_trajectory, ConstraintIndex, ConstraintKind, LpStandardForm,
    RowRef, VarKind,
};
pub use repair::{
    detect, next_charging, repair_forwarding, repair_local, repair_terminal, repair_until_clean, RepairCase,
    RepairOutcome, RepairPlan, SplitPolicy,
};
pub use scalar::Scalar;
pub use solver::{
    dual_by_constraint, solve, FarkasCertificate, ImprovingRay, SolveOptions, SolveOutcome, SolveStatus,
};

pub type EssParamsF64 = EssParams<f64>;
pub type EssParamsF32 = EssParams<f32>;
pub type TariffF64 = Tariff<f64>;
pub type TariffF32 = Tariff<f32>;
pub type ExogenousProfileF64 = ExogenousProfile<f64>;
pub type ExogenousProfileF32 = ExogenousProfile<f32>;
pub type DecisionTrajectoryF64 = DecisionTrajectory<f64>;
pub type DecisionTrajectoryF32 = DecisionTrajectory<f32>;
pub type LpF64 = LpStandardForm<f64>;
pub type LpF32 = LpStandardForm<f32>;
pub type SolveOutcomeF64 = SolveOutcome<f64>;
