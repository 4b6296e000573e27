use thiserror::Error;

/// Structural problems found while validating a taxonomy document.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ValidationError {
    #[error("taxonomy has no nodes")]
    Empty,
    #[error("duplicate node id `{0}`")]
    DuplicateId(String),
    #[error("node `{0}` has level 0; levels start at 1 (leaves)")]
    ZeroLevel(String),
    #[error("taxonomy has no root (every node declares a parent)")]
    NoRoot,
    #[error("taxonomy has multiple roots: {0:?}")]
    MultipleRoots(Vec<String>),
    #[error("node `{node}` references unknown parent `{parent}`")]
    UnknownParent { node: String, parent: String },
    #[error("cycle detected through nodes {0:?}")]
    Cycle(Vec<String>),
    #[error("node `{node}` is at level {level} but its parent `{parent}` is at level {parent_level} (expected {expected})", expected = level + 1)]
    ParentLevel {
        node: String,
        level: usize,
        parent: String,
        parent_level: usize,
    },
    #[error("node `{node}` at level {level} has no children; all leaves must sit at level 1")]
    RaggedLeaf { node: String, level: usize },
    #[error("root `{root}` is at level {level} but the deepest node is at level {max_level}")]
    RootNotTopmost {
        root: String,
        level: usize,
        max_level: usize,
    },
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid taxonomy: {0}")]
    Validation(#[from] ValidationError),
    #[error("level {level} out of range (valid: {min}..={max})")]
    LevelOutOfRange { level: usize, min: usize, max: usize },
    #[error("index {index} out of range for {len} classes")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("level mismatch: {0}")]
    LevelMismatch(String),
    #[error("not a probability distribution: {0}")]
    NotADistribution(String),
    #[error("invalid data: {0}")]
    InvalidData(String),
    #[error("invalid probability: {0}")]
    InvalidProbability(String),
    #[error("parent `{parent}` has {children} children, above the inclusion-exclusion limit of {limit}")]
    ChildrenCountExceedsLimit {
        parent: String,
        children: usize,
        limit: usize,
    },
    #[error("weight vector has length {got}, taxonomy has {expected} levels")]
    WeightLengthMismatch { got: usize, expected: usize },
    #[error("invalid level weights: {0}")]
    InvalidWeights(String),
    #[error("alpha must be positive, got {0}")]
    NonPositiveAlpha(f64),
    #[error("weight scheme `{scheme}` needs at least {min_levels} levels, taxonomy has {levels}")]
    SchemeDepthMismatch {
        scheme: String,
        min_levels: usize,
        levels: usize,
    },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("ground truth set is empty")]
    EmptyGroundTruth,
    #[error("input is empty")]
    EmptyInput,
    #[error("k = {k} out of range (valid: 1..={max})")]
    KOutOfRange { k: usize, max: usize },
    #[error("data does not match taxonomy: {0}")]
    DataMismatch(String),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
