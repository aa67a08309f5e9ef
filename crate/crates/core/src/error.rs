//! Error type shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path} at line {line}: {message}")]
    Parse {
        path: String,
        line: u64,
        message: String,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("individual {individual}: chosen product {chosen} is not in the offered set")]
    ChosenNotOffered { individual: String, chosen: String },

    #[error("embedding file is missing rows for products: {}", ids.join(", "))]
    MissingProducts { ids: Vec<String> },

    #[error("duplicate product id {id}")]
    DuplicateProduct { id: String },

    #[error("non-finite value at row {row} ({id}), column {column}")]
    NonFinite {
        row: usize,
        id: String,
        column: usize,
    },

    #[error("products missing attributes: {0}")]
    MissingAttributes(String),

    #[error("products never chosen in the estimation sample: {}", ids.join(", "))]
    UnidentifiedProducts { ids: Vec<String> },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("unknown {kind} '{name}'; available: {}", available.join(", "))]
    UnknownStrategy {
        kind: &'static str,
        name: String,
        available: Vec<&'static str>,
    },
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Classifies the error for process exit codes: numerical failures are
    /// distinguished from input/validation problems.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Numerical(_))
    }
}
