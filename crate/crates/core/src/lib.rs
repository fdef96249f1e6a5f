#![no_std]

extern crate alloc;

pub mod error;
pub mod graph;
pub mod calculus;
pub mod decomposition;
pub mod diagnostics;
pub mod hessian;
pub mod hvp;
pub mod linalg;
pub mod oracle;
pub mod zoo;

pub use error::{Error, GraphError, Result};
pub use graph::{Activation, Graph, GraphBuilder, Node, NodeId, NodeKind};
pub use linalg::{Matrix, Tensor3, Vector};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
