//! Configuration, experiment dispatch and CSV output for the `doublet`
//! command-line tool.

pub mod config;
pub mod run;

pub use config::{parse_config, preset_names, preset_text, resolve, Experiment, RunConfig};
pub use run::{run, Outcome};
