//! Experiment specs, parameter sweeps and their CSV output.

pub mod config;
pub mod montecarlo;
pub mod report;
pub mod sweep;

pub use config::{spec_hash, DistanceKind, ExperimentSpec, MechanismKind, MechanismSweep, RemapKind, ScenarioKind};
pub use montecarlo::{mc_evaluate, mc_evaluate_seeded, stream_rng, McSettings, RemapMode};
pub use report::{read_csv, write_csv, SweepHeader, SweepRow, CSV_HEADER};
pub use sweep::{prepare_scenario, run_sweep, run_sweep_on, sweep_rows, Scenario};
