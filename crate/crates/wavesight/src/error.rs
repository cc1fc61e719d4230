//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by configuration validation, geometry edge cases and the
/// file-format layer.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid or inconsistent configuration values.
    #[error("configuration error: {0}")]
    Config(String),

    /// Target at zero range from the sensing array; the projection is undefined.
    #[error("degenerate target: range is zero")]
    DegenerateTarget,

    /// Angle of arrival at (or beyond) +/-90 degrees collapses the projection
    /// triangle (the boresight leg has zero length).
    #[error("boresight-degenerate angle of arrival: {0} deg")]
    BoresightDegenerate(f64),

    /// CFR timestamps do not line up with the expected sampling slots.
    #[error("synchronization error: {0}")]
    Synchronization(String),

    /// Data produced under one configuration was fed to an operation
    /// expecting another (e.g. cropping a frame with a mismatched ROI).
    #[error("consistency error: {0}")]
    Consistency(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("scenario parse error: {0}")]
    Toml(#[from] toml::de::Error),

    /// Malformed binary capture or raster file.
    #[error("format error: {0}")]
    Format(String),
}

impl Error {
    /// Stable machine-readable kind tag used by the CLI error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::DegenerateTarget => "degenerate_target",
            Error::BoresightDegenerate(_) => "boresight_degenerate",
            Error::Synchronization(_) => "synchronization",
            Error::Consistency(_) => "consistency",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Toml(_) => "toml",
            Error::Format(_) => "format",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
