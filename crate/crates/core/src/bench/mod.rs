//! Benchmark harness: run configuration, training runs, mode comparison
//! and the property battery.

pub mod compare;
pub mod config;
pub mod run;
pub mod verify;

pub use compare::{cmd_compare, CompareError, CompareStatus, ComparisonSummary};
pub use config::{load_config, parse_config, ConfigError, RunConfig};
pub use run::{cmd_replay, cmd_train, RunError};
pub use verify::{run_battery, BatterySize, Model, PropertyReport};
