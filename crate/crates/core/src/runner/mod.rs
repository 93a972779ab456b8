//! Experiment orchestration: synthetic states, training runs with on-disk
//! artifacts, the verification suites and grid sweeps.

mod config;
mod experiment;
mod persist;
mod sweep;
mod verify;

pub use config::{long_tail_counts, ExperimentConfig, OutputPaths};
pub use experiment::{experiment, generate_state, ExperimentOutcome, ExperimentReport, GeneratedState, RunManifest};
pub use persist::{load_state, save_state, write_json, STATE_SCHEMA_VERSION};
pub use sweep::{sweep, SweepConfig, SweepGrid, SweepRun};
pub use verify::{verify, Check, Suite, SuiteReport};
