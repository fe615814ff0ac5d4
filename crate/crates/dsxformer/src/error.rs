use thiserror::Error;

/// Error type shared across the whole crate.
///
/// The CLI maps variants onto exit codes: configuration errors exit 2,
/// data/format errors exit 3, numeric divergence exits 4.
#[derive(Debug, Error)]
pub enum DsxError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, DsxError>;

impl DsxError {
    pub fn exit_code(&self) -> i32 {
        match self {
            DsxError::Config(_) | DsxError::Dimension(_) => 2,
            DsxError::Data(_) | DsxError::Format(_) | DsxError::Io(_) => 3,
            DsxError::Numeric(_) => 4,
        }
    }
}

macro_rules! dim_err {
    ($($arg:tt)*) => { $crate::error::DsxError::Dimension(format!($($arg)*)) };
}
macro_rules! cfg_err {
    ($($arg:tt)*) => { $crate::error::DsxError::Config(format!($($arg)*)) };
}
macro_rules! data_err {
    ($($arg:tt)*) => { $crate::error::DsxError::Data(format!($($arg)*)) };
}
macro_rules! fmt_err {
    ($($arg:tt)*) => { $crate::error::DsxError::Format(format!($($arg)*)) };
}
macro_rules! num_err {
    ($($arg:tt)*) => { $crate::error::DsxError::Numeric(format!($($arg)*)) };
}

pub(crate) use {cfg_err, data_err, dim_err, fmt_err, num_err};
