use std::fmt;

/// Failure classes with distinct process exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags, config keys or values; nothing was written.
    Config(String),
    /// Missing or malformed inputs, or unwritable outputs.
    Data(String),
    /// Divergence, stagnation or non-finite arithmetic.
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }

    /// Wraps a validation failure: always a config error.
    pub fn config(e: ebm_recon::Error) -> Self {
        CliError::Config(e.to_string())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<ebm_recon::Error> for CliError {
    fn from(e: ebm_recon::Error) -> Self {
        if e.is_numerical() {
            CliError::Numerical(e.to_string())
        } else if matches!(e, ebm_recon::Error::Config(_)) {
            CliError::Config(e.to_string())
        } else {
            CliError::Data(e.to_string())
        }
    }
}
