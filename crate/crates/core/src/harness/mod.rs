//! Fault injection, the experiment modes and Monte Carlo statistics.

pub mod config;
pub mod faults;
pub mod report;
pub mod runner;
pub mod stats;

pub use config::{ExperimentConfig, Mode};
pub use faults::{FaultAction, FaultDuration, FaultEvent, FaultType, ResolvedFault, SchedulePreset, SensorChoice};
pub use runner::{run_experiment, run_experiment_with, run_one, DataSource, ExperimentOutcome, RunResult};
pub use stats::{compare_modes, compare_paired, summarize, PairedComparison, RateSummary, SummaryStats};
