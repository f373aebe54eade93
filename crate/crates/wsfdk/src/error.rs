use crate::container::ContainerError;

/// Command failures, each tied to one process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Exit 1: bad flags or arguments.
    #[error("{0}")]
    Usage(String),
    /// Exit 2: unreadable, malformed or inconsistent inputs.
    #[error("{0}")]
    Data(String),
    /// Exit 3: the computation produced non-finite values.
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

impl From<wsfdk_core::Error> for CliError {
    fn from(e: wsfdk_core::Error) -> Self {
        match e {
            wsfdk_core::Error::NonFiniteLoss { .. } => CliError::Numeric(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<ContainerError> for CliError {
    fn from(e: ContainerError) -> Self {
        CliError::Data(e.to_string())
    }
}
