use std::path::PathBuf;

/// Errors produced by the topological rewiring pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid node id {node} (graph has {n_nodes} nodes)")]
    InvalidNode { node: usize, n_nodes: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("hamming metric requires binary features (node {node} has value {value})")]
    NonBinaryFeatures { node: usize, value: f64 },

    #[error("neighborhood of node {0} carries no edge weights; build it in weighted mode")]
    UnweightedNeighborhood(usize),

    #[error("empty neighborhood")]
    EmptyNeighborhood,

    #[error("diagram dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),

    #[error("thresholds must satisfy eps1 < eps2 (got {eps1} and {eps2})")]
    InvalidThresholds { eps1: f64, eps2: f64 },

    #[error("no labeled training nodes")]
    NoTrainingNodes,

    #[error("not enough non-edges: requested {requested}, available {available}")]
    InsufficientNonEdges { requested: usize, available: usize },

    #[error("edge ({0}, {1}) already present")]
    EdgePresent(usize, usize),

    #[error("unknown variant `{0}`")]
    UnknownVariant(String),

    #[error("parse error in {path}: {msg}")]
    Parse { path: PathBuf, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Whether the error is an I/O failure of the given kind, including I/O
    /// failures surfaced by the CSV writer.
    pub fn is_io_kind(&self, kind: std::io::ErrorKind) -> bool {
        match self {
            Error::Io(e) => e.kind() == kind,
            Error::Csv(e) => matches!(e.kind(), csv::ErrorKind::Io(io) if io.kind() == kind),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
