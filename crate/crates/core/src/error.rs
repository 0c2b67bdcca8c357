use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Invalid inputs to the lattice, game and learning layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("temperature must be positive and finite, got {0}")]
    Temperature(f64),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
