//! Experiment harness behind the command-line front end: configuration and
//! presets, multi-seed runs, the sampler comparison and parameter sweeps.

pub mod config;
pub mod run;

pub use config::{load_config, ConfigSource, DynamicsKind, ExperimentConfig, KlMethod, Method, Preset};
pub use run::{run_experiment, simulate, sweep, RunOutcome, RunShape, SeedRun, SweepAxis};
