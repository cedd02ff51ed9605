//! Experiment harness for tabular periodic Q-learning: JSON configs,
//! parallel multi-seed runs, CSV traces and summaries, and matched-budget
//! comparisons against standard Q-learning.

pub mod benchmark;
pub mod compare;
pub mod config;
pub mod error;
pub mod experiment;

pub use config::{load_config, parse_config, ExperimentConfig};
pub use error::{HarnessError, Result};
pub use experiment::{run_experiment, write_outputs, ExperimentResult, SummaryRow};
