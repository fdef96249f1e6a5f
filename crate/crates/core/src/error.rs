use alloc::string::String;
use core::fmt;

use crate::graph::NodeId;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    DimensionMismatch { context: &'static str, expected: usize, found: usize },
    NotSquare { rows: usize, cols: usize },
    InvalidRank { rank: usize, max: usize },
    Graph(GraphError),
    NoSuchEdge { from: NodeId, to: NodeId },
    NotBothParents { node: NodeId, v: NodeId, w: NodeId },
    NoParameters(NodeId),
    NumericOverflow { node: NodeId },
    KinkProximity { node: NodeId, value: f64 },
    CapExceeded { params: usize, cap: usize },
    NotAChain(String),
    InsufficientData(&'static str),
    ZeroBudget,
}

/// First violated graph invariant found by validation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GraphError {
    CycleDetected { node: NodeId },
    DimMismatch { node: NodeId, detail: String },
    MultipleOutputs { count: usize },
    NoOutput,
    OutputNotLoss { node: NodeId },
    DanglingParent { node: NodeId, parent: usize },
    MissingParents { node: NodeId },
    WrongArity { node: NodeId, expected: usize, found: usize },
    DuplicateParent { node: NodeId },
    InputWithParents { node: NodeId },
    BadSharing { detail: String },
}

impl fmt::Display for GraphError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GraphError::CycleDetected { node } => write!(f, "cycle detected through node {}", node.0),
            GraphError::DimMismatch { node, detail } => {
                write!(f, "dimension mismatch at node {}: {detail}", node.0)
            }
            GraphError::MultipleOutputs { count } => {
                write!(f, "graph has {count} loss nodes, expected exactly one")
            }
            GraphError::NoOutput => f.write_str("graph has no loss node"),
            GraphError::OutputNotLoss { node } => write!(f, "output node {} is not a loss node", node.0),
            GraphError::DanglingParent { node, parent } => {
                write!(f, "node {} references missing parent {parent}", node.0)
            }
            GraphError::MissingParents { node } => write!(f, "non-input node {} has no parents", node.0),
            GraphError::WrongArity { node, expected, found } => {
                write!(f, "node {} expects {expected} parents, found {found}", node.0)
            }
            GraphError::DuplicateParent { node } => write!(f, "node {} lists a parent twice", node.0),
            GraphError::InputWithParents { node } => write!(f, "input node {} has parents", node.0),
            GraphError::BadSharing { detail } => write!(f, "invalid parameter sharing: {detail}"),
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::DimensionMismatch { context, expected, found } => {
                write!(f, "{context}: expected dimension {expected}, found {found}")
            }
            Error::NotSquare { rows, cols } => write!(f, "matrix is {rows}x{cols}, expected square"),
            Error::InvalidRank { rank, max } => write!(f, "rank {rank} outside 1..={max}"),
            Error::Graph(e) => write!(f, "invalid graph: {e}"),
            Error::NoSuchEdge { from, to } => write!(f, "no edge {} -> {}", from.0, to.0),
            Error::NotBothParents { node, v, w } => {
                write!(f, "nodes {} and {} are not two distinct parents of {}", v.0, w.0, node.0)
            }
            Error::NoParameters(v) => write!(f, "node {} has no parameters", v.0),
            Error::NumericOverflow { node } => write!(f, "non-finite activation at node {}", node.0),
            Error::KinkProximity { node, value } => {
                write!(f, "pre-activation {value:e} at node {} is too close to a kink", node.0)
            }
            Error::CapExceeded { params, cap } => write!(
                f,
                "dense Hessian with P={params} exceeds cap {cap}; use the Hessian-vector product path"
            ),
            Error::NotAChain(msg) => write!(f, "not a chain: {msg}"),
            Error::InsufficientData(msg) => write!(f, "insufficient data: {msg}"),
            Error::ZeroBudget => f.write_str("skip budget must be at least 1"),
        }
    }
}

impl From<GraphError> for Error {
    fn from(e: GraphError) -> Self {
        Error::Graph(e)
    }
}

impl core::error::Error for Error {}
impl core::error::Error for GraphError {}

pub type Result<T> = core::result::Result<T, Error>;
