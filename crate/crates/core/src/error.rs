//! Error type shared by every stage of the library.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A numeric parameter is out of its admissible range (bad sigma, scale, q, ...).
    #[error("parameter error: {0}")]
    Parameter(String),

    /// Two volumes that must share dims/spacing do not.
    #[error("geometry error: {0}")]
    Geometry(String),

    /// Input data violates a stage precondition (empty mask, degenerate intensities, ...).
    #[error("data error: {0}")]
    Data(String),

    /// A file is not a valid instance of the declared on-disk format.
    #[error("format error in field `{field}`: {message}")]
    Format { field: String, message: String },

    /// Values cannot be represented in the requested on-disk datatype.
    #[error("conversion error: {0}")]
    Conversion(String),

    /// A continuous sample point lies outside the volume.
    #[error("domain error: {0}")]
    Domain(String),

    /// The voxel topology makes a solve ill-posed (disconnected components, ...).
    #[error("topology error: {0}")]
    Topology(String),

    /// A phantom specification is geometrically impossible.
    #[error("phantom spec error: {0}")]
    Spec(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn format(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Format {
            field: field.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
