//! Experiment harness for the vartrack simulator: configs, trial runner,
//! bound-check registry, variability studies and output formats.

pub mod checks;
pub mod config;
pub mod corpus;
pub mod error;
pub mod experiment;
pub mod formats;
pub mod study;

pub use checks::{lookup, registry, CheckDef};
pub use config::{ExperimentConfig, FreqTrackerSpec, TrackerSpec};
pub use error::{HarnessError, Result};
pub use experiment::{run_experiment, CheckResult, Report, Status, TrialSummary};
pub use study::{variability_study, StudyKind, StudyTable};
