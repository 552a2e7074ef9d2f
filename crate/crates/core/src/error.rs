use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("arity too large: {arity} exceeds cap {cap}")]
    ArityTooLarge { arity: usize, cap: usize },

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("invalid tensor: {0}")]
    InvalidTensor(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("permutation size mismatch: permutation on {perm} nodes, tensor on {tensor}")]
    PermutationSizeMismatch { perm: usize, tensor: usize },

    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),

    #[error("order mismatch: expected order {expected}, got {actual}")]
    OrderMismatch { expected: usize, actual: usize },

    #[error("tensor budget exceeded: {elements} elements above budget {budget}")]
    BudgetExceeded { elements: u128, budget: u128 },

    #[error("coefficient count mismatch: expected {expected}, got {actual}")]
    CoeffCount { expected: usize, actual: usize },

    #[error("parameter vector length mismatch: expected {expected}, got {actual}")]
    ParamLength { expected: usize, actual: usize },

    #[error("n = {n} too small for topology {topology} (needs n >= {min})")]
    TooFewNodes {
        topology: &'static str,
        n: usize,
        min: usize,
    },

    #[error("infinite distance: graph is disconnected")]
    Disconnected,

    #[error("exact edit distance infeasible, n too large ({n} > {max})")]
    EditDistanceInfeasible { n: usize, max: usize },

    #[error("brute-force budget exceeded: {0}")]
    SearchBudget(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("internal error: {0}")]
    Internal(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
