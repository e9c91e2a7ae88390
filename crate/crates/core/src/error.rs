use std::fmt;

use crate::system::Violation;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Malformed system, map or witness text. `locus` is either a
    /// line/column position or a field path.
    #[error("parse error at {locus}: {message}")]
    Parse { locus: String, message: String },

    #[error("invalid system: {}", ViolationList(.0))]
    Validation(Vec<Violation>),

    #[error("unknown content `{0}`")]
    UnknownContent(String),

    #[error("unknown context `{0}`")]
    UnknownContext(String),

    /// An argument outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("capacity exceeded: {cells} measured cells, limit is {limit}")]
    Capacity { cells: usize, limit: usize },

    #[error("numerical failure: {message} (best bound {best_bound})")]
    Numerical { message: String, best_bound: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn domain(message: impl Into<String>) -> Self {
        Error::Domain(message.into())
    }

    pub(crate) fn parse(locus: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            locus: locus.into(),
            message: message.into(),
        }
    }
}

struct ViolationList<'a>(&'a [Violation]);

impl fmt::Display for ViolationList<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}
