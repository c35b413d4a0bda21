use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] loomix_core::Error),

    #[error("output error: {0}")]
    Output(String),
}

impl CliError {
    /// Process exit status: 2 config, 3 data, 4 numerical.
    pub fn exit_code(&self) -> i32 {
        use loomix_core::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Core(E::Input(_)) => 2,
            CliError::Core(E::Data(_)) | CliError::Core(E::Io(_)) => 3,
            CliError::Core(E::Numerical(_)) | CliError::Core(E::SingularLoo { .. }) => 4,
            CliError::Output(_) => 3,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Output(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

pub(crate) fn config_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(CliError::Config(msg.into()))
}
