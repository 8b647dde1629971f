//! Configuration-driven experiments on top of `optrack-core`.

pub mod config;
pub mod error;
pub mod experiment;
pub mod feedback;
pub mod output;
pub mod sweep;

pub use config::{parse_config, parse_config_str, ExperimentConfig, Method};
pub use error::{CliError, Result};
pub use experiment::{run_experiment, ExperimentOutput};
pub use feedback::{open_loop, sampled_feedback, FeedbackResult};
pub use output::{emit_outputs, trajectory_csv};
pub use sweep::{epsilon_sweep, SweepRow};
