use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the geometry, matching and fill routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("point {index} has a non-finite coordinate")]
    NonFinite { index: usize },

    #[error("cloud is degenerate: {0}")]
    DegenerateCloud(String),

    #[error("points {first} and {second} coincide exactly")]
    DuplicatePoints { first: usize, second: usize },

    #[error("octree depth cap of {cap} levels reached before every point was isolated")]
    DepthCapReached { cap: u32 },

    #[error("requested {requested} neighbours but only {available} points exist")]
    InsufficientPoints { requested: usize, available: usize },

    #[error("point set is empty")]
    EmptySet,

    #[error("cube holds only {found} points, at least 3 are needed")]
    TooFewPoints { found: usize },

    #[error("no candidate cube survives the search")]
    NoCandidates,

    #[error("cube geometry is degenerate (collinear points)")]
    DegenerateGeometry,

    #[error("normal equations are singular")]
    SingularSystem,

    #[error("hole box contains no points")]
    EmptyHole,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
