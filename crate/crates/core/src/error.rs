use thiserror::Error;

use crate::channel::ChannelError;
use crate::delay::DelayError;
use crate::geometry::GeometryError;
use crate::io::ConfigError;
use crate::tomography::TomographyError;

/// Top-level error joining the per-module error types.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Delay(#[from] DelayError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Tomography(#[from] TomographyError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for the CLI: 2 config, 3 physics/trace, 4 estimator.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Io(_) => 2,
            Error::Geometry(_) | Error::Delay(_) | Error::Channel(_) => 3,
            Error::Tomography(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
