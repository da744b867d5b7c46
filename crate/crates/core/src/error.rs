use thiserror::Error;

/// Errors raised anywhere in the consensus toolkit.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConsensusError {
    #[error("self-loop on node {0}")]
    SelfLoop(usize),
    #[error("node {node} out of range for graph with {n} nodes")]
    NodeOutOfRange { node: usize, n: usize },
    #[error("graph is disconnected ({reached} of {n} nodes reachable from node 0)")]
    Disconnected { reached: usize, n: usize },
    #[error("graph needs at least 2 nodes, got {0}")]
    TooFewNodes(usize),
    #[error("random graph generation failed after {0} attempts")]
    GenerationFailed(usize),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("unknown graph name `{0}`")]
    UnknownName(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("{0} did not converge")]
    NoConvergence(&'static str),
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),
    #[error("horizon {horizon} exceeds schedule length {len} without periodic continuation")]
    HorizonExceedsSchedule { horizon: usize, len: usize },
    #[error("eigenvalue 1 of the period product is not simple")]
    EigenvalueOneNotSimple,
    #[error("non-finite value encountered: {0}")]
    NonFinite(String),
    #[error("zero Laplacian eigenvalue is not simple (multiplicity {0})")]
    ZeroEigNotSimple(usize),
    #[error("negative weight {value} at row {row}, edge {edge}")]
    NegativeWeight { row: usize, edge: usize, value: f64 },
    #[error("malformed schedule: {0}")]
    MalformedSchedule(String),
    #[error("malformed edge list: {0}")]
    MalformedEdgeList(String),
    #[error("graph mismatch: {0}")]
    GraphMismatch(String),
}

impl ConsensusError {
    /// Short stable identifier, used in machine-readable CLI diagnostics.
    pub fn kind(&self) -> &'static str {
        match self {
            Self::SelfLoop(_) => "SelfLoop",
            Self::NodeOutOfRange { .. } => "NodeOutOfRange",
            Self::Disconnected { .. } => "Disconnected",
            Self::TooFewNodes(_) => "TooFewNodes",
            Self::GenerationFailed(_) => "GenerationFailed",
            Self::InvalidParams(_) => "InvalidParams",
            Self::UnknownName(_) => "UnknownName",
            Self::DimensionMismatch { .. } => "DimensionMismatch",
            Self::NotSymmetric(_) => "NotSymmetric",
            Self::NoConvergence(_) => "NoConvergence",
            Self::PreconditionViolated(_) => "PreconditionViolated",
            Self::HorizonExceedsSchedule { .. } => "HorizonExceedsSchedule",
            Self::EigenvalueOneNotSimple => "EigenvalueOneNotSimple",
            Self::NonFinite(_) => "NonFinite",
            Self::ZeroEigNotSimple(_) => "ZeroEigNotSimple",
            Self::NegativeWeight { .. } => "NegativeWeight",
            Self::MalformedSchedule(_) => "MalformedSchedule",
            Self::MalformedEdgeList(_) => "MalformedEdgeList",
            Self::GraphMismatch(_) => "GraphMismatch",
        }
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Self::GenerationFailed(_)
                | Self::NotSymmetric(_)
                | Self::NoConvergence(_)
                | Self::PreconditionViolated(_)
                | Self::EigenvalueOneNotSimple
                | Self::NonFinite(_)
                | Self::ZeroEigNotSimple(_)
        )
    }
}

pub type Result<T, E = ConsensusError> = std::result::Result<T, E>;
