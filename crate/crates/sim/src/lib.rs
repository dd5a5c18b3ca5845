//! Closed-loop experiments for the adaptive tube controllers: JSON
//! configuration, the receding-horizon loop, seed-for-seed comparison, and
//! CSV/JSON/SVG artifacts.

pub mod closed_loop;
pub mod compare;
pub mod config;
pub mod output;
pub mod plot;

pub use closed_loop::{run_closed_loop, ClosedLoopTrace, Controller, FailureKind, RunFailure, StepRecord};
pub use compare::{compare, ComparisonReport};
pub use config::{load, parse, ConfigError, Experiment, ExperimentConfig, Offline};
