//! Error taxonomy shared by the simulation and learning modules.

/// Crate-wide error type.
///
/// The variants are grouped by how a caller should react: `Validation`,
/// `Range`, and `DegenerateGeometry` indicate bad inputs or configuration and
/// map to a usage failure at the CLI boundary; `Numeric` indicates a runtime
/// numeric breakdown (non-finite losses, NaN actions) and `Io` a filesystem
/// problem, both of which map to a runtime failure.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A configuration or argument violates a documented precondition.
    #[error("validation: {0}")]
    Validation(String),

    /// A value lies outside its documented domain (e.g. a slot index past the
    /// end of a path).
    #[error("out of range: {0}")]
    Range(String),

    /// Geometry that leaves a quantity undefined, such as coincident points.
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    /// A numeric invariant broke at runtime (NaN action, non-finite loss).
    #[error("numeric: {0}")]
    Numeric(String),

    /// Filesystem or serialization failure.
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// True for errors caused by bad inputs or configuration (as opposed to
    /// runtime numeric/IO failures).
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::Validation(_) | Error::Range(_) | Error::DegenerateGeometry(_)
        )
    }
}
