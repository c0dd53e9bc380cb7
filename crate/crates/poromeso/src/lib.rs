//! Configuration, output files and command-line entry points for poromeso runs.

pub mod batch;
pub mod compare;
pub mod config;
pub mod output;
pub mod run;

use output::CsvRow;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("solver failure at {message}")]
    Solver { message: String, rows: Vec<CsvRow> },
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    /// 2 for bad configuration or arguments, 1 otherwise.
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Config(_) | Self::Input(_) => 2,
            Self::Solver { .. } | Self::Io(_) => 1,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        Self::Io(e.to_string())
    }
}
