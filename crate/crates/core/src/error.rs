use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty geometry")]
    EmptyGeometry,

    #[error("non-finite value")]
    NonFinite,

    #[error("unknown relation: {0}")]
    UnknownRelation(String),

    #[error("relation arity: {0}")]
    RelationArity(String),

    #[error("invalid tree: {0}")]
    InvalidTree(String),

    #[error("no parse")]
    NoParse,

    #[error("length mismatch: {left} predictions vs {right} gold answers")]
    LengthMismatch { left: usize, right: usize },

    #[error("invalid taxonomy: {0}")]
    Taxonomy(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn parse(path: impl Into<String>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
