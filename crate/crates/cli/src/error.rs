use thiserror::Error;

/// Failures surfaced to the user, split by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, dataset specs or parameter values.
    #[error("config error: {0}")]
    Config(String),

    /// Unreadable or malformed input data.
    #[error("data error: {0}")]
    Data(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 3,
            CliError::Data(_) | CliError::Io(_) => 2,
        }
    }
}

impl From<kdswitch::Error> for CliError {
    fn from(e: kdswitch::Error) -> Self {
        use kdswitch::Error as E;
        match e {
            E::AlphabetTooSmall(_) | E::ZeroDimension | E::InvalidPrior(_) | E::InvalidParameter(_) => {
                CliError::Config(e.to_string())
            }
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
