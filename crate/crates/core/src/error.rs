use thiserror::Error;

/// Errors surfaced by the simulator and its configuration layer.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    /// A runtime precondition was broken. The run cannot continue.
    #[error("contract violation: {0}")]
    Contract(String),

    /// One or more configuration problems, each with its line number (0 when not tied to a line).
    #[error("invalid configuration:\n{}", format_config_errors(.0))]
    Config(Vec<ConfigError>),

    #[error("malformed trace at line {line}: {reason}")]
    Trace { line: usize, reason: String },

    #[error("batch failed: {0}")]
    Batch(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub line: usize,
    pub message: String,
}

impl ConfigError {
    pub fn new(line: usize, message: impl Into<String>) -> Self {
        ConfigError { line, message: message.into() }
    }
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.line == 0 {
            write!(f, "{}", self.message)
        } else {
            write!(f, "line {}: {}", self.line, self.message)
        }
    }
}

fn format_config_errors(errs: &[ConfigError]) -> String {
    errs.iter().map(|e| format!("  {e}")).collect::<Vec<_>>().join("\n")
}

pub fn contract<T>(msg: impl Into<String>) -> Result<T, SimError> {
    Err(SimError::Contract(msg.into()))
}

pub type Result<T, E = SimError> = std::result::Result<T, E>;
