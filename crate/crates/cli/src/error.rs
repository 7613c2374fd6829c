use std::fmt;
use std::process::ExitCode;

/// Failure of a CLI invocation, carrying its exit status.
#[derive(Debug)]
pub enum CliError {
    /// Malformed input file, config syntax or missing key (exit 2).
    Input(String),
    /// Invalid or incompatible numeric parameters (exit 3).
    Param(String),
    /// A config that parses but violates an invariant (exit 4).
    Invariant(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Input(_) => 2,
            CliError::Param(_) => 3,
            CliError::Invariant(_) => 4,
        })
    }

    /// Library error raised while handling direct parameters.
    pub fn param(e: mvfdr::Error) -> Self {
        CliError::Param(e.to_string())
    }

    /// Library error raised while running a config: structural violations
    /// map to exit 4, everything else to exit 3.
    pub fn from_config(e: mvfdr::Error) -> Self {
        match e {
            mvfdr::Error::Config(_) => CliError::Invariant(e.to_string()),
            other => CliError::Param(other.to_string()),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(m) => write!(f, "input error: {m}"),
            CliError::Param(m) => write!(f, "parameter error: {m}"),
            CliError::Invariant(m) => write!(f, "config error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

pub type CliResult<T> = Result<T, CliError>;
