use std::path::PathBuf;

use thiserror::Error;

use crate::guidance_client::GuidanceError;
use crate::mesh::MeshError;
use crate::sparse::SparseError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Sparse(#[from] SparseError),
    #[error("Poisson system is not SPD: mesh has {components} connected components and only one is pinned")]
    Disconnected { components: usize },
    #[error("length mismatch for {what}: expected {expected}, got {actual}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error(transparent)]
    Guidance(#[from] GuidanceError),
    #[error("numerical abort at iteration {iteration}: {detail}")]
    NumericalAbort { iteration: usize, detail: String },
    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: String, message: String },
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
