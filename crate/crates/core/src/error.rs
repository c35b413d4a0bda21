use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Caller supplied an argument outside the operation's domain.
    #[error("invalid input: {0}")]
    Input(String),

    /// Malformed or inconsistent data (CSV content, responses, shapes).
    #[error("data error: {0}")]
    Data(String),

    /// A factorization or density evaluation failed.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Leave-one-out posterior for observation `index` is improper.
    #[error("observation {index} has leverage {leverage} (leave-one-out posterior is singular)")]
    SingularLoo { index: usize, leverage: f64 },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn input<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Input(msg.into()))
}
