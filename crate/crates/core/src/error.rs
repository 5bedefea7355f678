use std::fmt;

use crate::tensor::VarId;

/// Coarse failure class reported by the command-line front end.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Category {
    Parse,
    Shape,
    Capacity,
    InconsistentEvidence,
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Category::Parse => "parse",
            Category::Shape => "shape",
            Category::Capacity => "capacity",
            Category::InconsistentEvidence => "inconsistent-evidence",
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("token {token}: {msg}")]
    Parse { token: usize, msg: String },

    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("value {value} out of range for variable {var} (cardinality {card})")]
    Domain { var: VarId, value: usize, card: usize },

    #[error("{0}")]
    Shape(String),

    #[error("space complexity {space:.2} exceeds cap {cap:.2}")]
    Capacity { space: f64, cap: f64 },

    #[error("exhaustive order search refuses {tensors} tensors (limit {limit}); use the greedy order")]
    TooManyTensors { tensors: usize, limit: usize },

    #[error("query set is empty; use MPE for the full assignment")]
    EmptyQuery,

    #[error("inconsistent evidence: {0}")]
    Inconsistent(String),
}

impl Error {
    pub fn category(&self) -> Category {
        match self {
            Error::Parse { .. } | Error::Io { .. } => Category::Parse,
            Error::Domain { .. } | Error::Shape(_) | Error::EmptyQuery => Category::Shape,
            Error::Capacity { .. } | Error::TooManyTensors { .. } => Category::Capacity,
            Error::Inconsistent(_) => Category::InconsistentEvidence,
        }
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
