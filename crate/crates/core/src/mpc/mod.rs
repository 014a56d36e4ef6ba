//! Receding-horizon simulation: scenario files, profile ingestion and the
//! step-by-step driver. Works in `f64` only.

mod config;
mod ingest;
mod run;

pub use config::{
    EssSection, LoadSource, PricePeriod, ProfileSection, Scenario, ScenarioConfig, Schedule, SolarSource,
    SyntheticLoad, SyntheticSolar, TariffSection, Tolerances,
};
pub use ingest::{ingest_load, ingest_load_path, ingest_solar, ingest_solar_path, PvArray};
pub use run::{plan_step, run, run_in, run_scenario, run_with, RunLog, StepRecord};
