use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed matrices, shape mismatches, invalid indices.
    #[error("structural input error: {0}")]
    Structural(String),

    #[error("infeasible move {kind:?} {source_node}->{target}: {reason}")]
    MoveInfeasible {
        kind: crate::graph::MoveKind,
        source_node: usize,
        target: usize,
        reason: &'static str,
    },

    /// A node has more parents than the regressor is allowed to fit.
    #[error("node {node} has in-degree {in_degree}, above the cap of {cap}")]
    DegreeCap {
        node: usize,
        in_degree: usize,
        cap: usize,
    },

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// Bad user-supplied data (files, datasets, seeds).
    #[error("input error: {0}")]
    Input(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by the caller's inputs rather than by a
    /// pipeline stage.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Structural(_)
                | Error::Input(_)
                | Error::Config(_)
                | Error::Io { .. }
                | Error::Json(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
