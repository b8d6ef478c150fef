//! Library half of the experiment runner: config loading, named generators,
//! records CSV, SVG plots, and the invariant reports. The `radial-greedy`
//! binary is a thin dispatcher over these.

pub mod config;
pub mod csvio;
pub mod generators;
pub mod report;
pub mod svg;

/// CLI-level error; `invariant` selects exit code 2 instead of 1.
#[derive(Debug)]
pub struct CliError {
    pub message: String,
    pub invariant: bool,
}

impl CliError {
    pub fn failure(message: impl Into<String>) -> Self {
        CliError {
            message: message.into(),
            invariant: false,
        }
    }

    pub fn invariant(message: impl Into<String>) -> Self {
        CliError {
            message: message.into(),
            invariant: true,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}
