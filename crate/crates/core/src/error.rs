use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("negative line integral {value} at index {index}")]
    NegativeLineIntegral { index: usize, value: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("data range must be positive, got {0}")]
    DataRange(f64),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("sample {0} does not match the model geometry")]
    GeometryMismatch(usize),
    #[error("non-finite loss in epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
}

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }
}
