//! Configuration and orchestration behind the `multihost` binary.

pub mod config;
pub mod run;

pub use config::{parse_config_file, parse_config_str, Command, ConfigError, RunConfig};
pub use run::{run, run_in, RunError, RunOutcome};

/// Process exit codes.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const IO: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const SOLVER: i32 = 3;
    pub const ASSERTION: i32 = 4;
}
