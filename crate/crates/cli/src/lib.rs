//! Command-line front end: experiment runs, replay, report comparison,
//! audit verification and the operator gateway.

pub mod checks;
pub mod commands;
pub mod config;
pub mod serve;

/// Process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Ok = 0,
    Breach = 1,
    ConfigError = 2,
}

impl From<Exit> for std::process::ExitCode {
    fn from(e: Exit) -> Self {
        std::process::ExitCode::from(e as u8)
    }
}
