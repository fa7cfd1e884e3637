//! Configuration, initial data, snapshots and the experiment pipeline.

pub mod checks;
pub mod config;
pub mod experiment;
pub mod scenario;
pub mod snapshot;

pub use checks::{check_gauge_dir, check_norms_dir, GaugeCheckReport, NormCheckReport};
pub use config::{RunConfig, ScenarioName, TargetName};
pub use experiment::{run_experiment, ExperimentReport};
pub use scenario::generate_initial_data;
pub use snapshot::{read_snapshot, write_snapshot, Snapshot};
