use alloc::string::String;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Validation(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("amplitude shifted past the last bin in round {round}")]
    Overflow { round: usize },
    #[error("unsupported configuration: {0}")]
    Unsupported(String),
    #[error("incomplete data: {0}")]
    Incomplete(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = core::result::Result<T, Error>;

macro_rules! bail {
    ($kind:ident, $($arg:tt)*) => {
        return Err($crate::Error::$kind(alloc::format!($($arg)*)))
    };
}
pub(crate) use bail;
