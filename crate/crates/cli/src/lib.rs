//! Command-line front end for `ergomlmc`: layered configuration, named
//! experiment presets, and CSV/JSON emission.

pub mod config;
pub mod error;
pub mod output;
pub mod presets;
pub mod run;

pub use config::{parse_config, Command, RunConfig, Settings, SpringSpec};
pub use error::{CliError, Result};
pub use output::{write_artifacts, Artifact};
pub use run::execute;
