pub mod config;
pub mod output;
pub mod presets;
pub mod runner;

use epsense_core::CoreError;

/// Process exit codes: 0 ok, 1 threshold miss, 2 model invalid,
/// 3 I/O or parse, 4 numeric range.
#[derive(Debug)]
pub enum CliError {
    Io(std::io::Error),
    Parse(String),
    Core(CoreError),
    Miss(String),
    Overflow { last_good: Option<f64>, detail: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) | CliError::Parse(_) => 3,
            CliError::Core(CoreError::InvalidModel(_)) => 2,
            CliError::Core(_) => 4,
            CliError::Miss(_) => 1,
            CliError::Overflow { .. } => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Io(e) => write!(f, "{e}"),
            CliError::Parse(msg) => write!(f, "{msg}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Miss(msg) => write!(f, "{msg}"),
            CliError::Overflow { last_good, detail } => match last_good {
                Some(t) => write!(f, "{detail}; last good grid point: {t}"),
                None => write!(f, "{detail}; no grid point finished"),
            },
        }
    }
}

impl std::error::Error for CliError {}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        CliError::Core(e)
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Parse(format!("JSON error: {e}"))
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
