use std::fmt;

/// Failure classes, each with its own process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad arguments or configuration.
    Usage(anyhow::Error),
    /// Missing or malformed input data.
    Data(anyhow::Error),
    /// Anything that went wrong while running.
    Runtime(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (kind, e) = match self {
            CliError::Usage(e) => ("usage", e),
            CliError::Data(e) => ("data", e),
            CliError::Runtime(e) => ("runtime", e),
        };
        write!(f, "{kind} error: {e:#}")
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Tags an error with its class.
pub trait Classify<T> {
    fn usage(self) -> CliResult<T>;
    fn data(self) -> CliResult<T>;
    fn runtime(self) -> CliResult<T>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn usage(self) -> CliResult<T> {
        self.map_err(|e| CliError::Usage(e.into()))
    }

    fn data(self) -> CliResult<T> {
        self.map_err(|e| CliError::Data(e.into()))
    }

    fn runtime(self) -> CliResult<T> {
        self.map_err(|e| CliError::Runtime(e.into()))
    }
}
