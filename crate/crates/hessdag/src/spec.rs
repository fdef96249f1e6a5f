//! Graph-spec JSON: the file format every CLI subcommand reads.
//!
//! ```json
//! {
//!   "nodes": [
//!     {"id": "x", "kind": "input", "rows": 1, "cols": 3, "parents": []},
//!     {"id": "h", "kind": "linear", "out": 4, "bias": true, "parents": ["x"]},
//!     {"id": "a", "kind": "activation", "activation": "gelu", "parents": ["h"], "measure": true},
//!     {"id": "y", "kind": "linear", "out": 2, "bias": true, "parents": ["a"]},
//!     {"id": "loss", "kind": "loss_mse", "parents": ["y"]}
//!   ],
//!   "out": "loss",
//!   "sharing": []
//! }
//! ```

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use hessdag_core::{Activation, Graph, Node, NodeId, NodeKind};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{io_err, CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSpec {
    pub nodes: Vec<NodeSpec>,
    pub out: String,
    #[serde(default)]
    pub sharing: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub id: String,
    #[serde(flatten)]
    pub kind: KindSpec,
    #[serde(default)]
    pub parents: Vec<String>,
    #[serde(default, skip_serializing_if = "is_false")]
    pub measure: bool,
}

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KindSpec {
    Input { rows: usize, cols: usize },
    Linear { out: usize, bias: bool },
    Activation { activation: String },
    Sum,
    Concat,
    MeanPoolRows { seq_len: usize },
    SoftmaxAttention { d_k: usize },
    LossMse,
    LossSoftmaxCe { classes: usize },
}

impl KindSpec {
    fn from_kind(kind: &NodeKind) -> Self {
        match *kind {
            NodeKind::Input { rows, cols } => KindSpec::Input { rows, cols },
            NodeKind::Linear { out, bias } => KindSpec::Linear { out, bias },
            NodeKind::Activation(a) => KindSpec::Activation { activation: a.name().to_string() },
            NodeKind::SumMerge => KindSpec::Sum,
            NodeKind::ConcatMerge => KindSpec::Concat,
            NodeKind::MeanPoolRows { seq_len } => KindSpec::MeanPoolRows { seq_len },
            NodeKind::SoftmaxAttention { d_k } => KindSpec::SoftmaxAttention { d_k },
            NodeKind::LossMse => KindSpec::LossMse,
            NodeKind::LossSoftmaxCe { classes } => KindSpec::LossSoftmaxCe { classes },
        }
    }

    fn to_kind(&self, id: &str) -> Result<NodeKind> {
        Ok(match self {
            KindSpec::Input { rows, cols } => NodeKind::Input { rows: *rows, cols: *cols },
            KindSpec::Linear { out, bias } => NodeKind::Linear { out: *out, bias: *bias },
            KindSpec::Activation { activation } => {
                let names: Vec<&str> = Activation::ALL.iter().map(|a| a.name()).collect();
                NodeKind::Activation(Activation::from_name(activation).ok_or_else(|| {
                    CliError::config(format!("node {id}: unknown activation {activation:?} (expected one of {names:?})"))
                })?)
            }
            KindSpec::Sum => NodeKind::SumMerge,
            KindSpec::Concat => NodeKind::ConcatMerge,
            KindSpec::MeanPoolRows { seq_len } => NodeKind::MeanPoolRows { seq_len: *seq_len },
            KindSpec::SoftmaxAttention { d_k } => NodeKind::SoftmaxAttention { d_k: *d_k },
            KindSpec::LossMse => NodeKind::LossMse,
            KindSpec::LossSoftmaxCe { classes } => NodeKind::LossSoftmaxCe { classes: *classes },
        })
    }
}

impl GraphSpec {
    /// Node ids are the graph labels; repeated labels get an `_{index}` suffix.
    pub fn from_graph(g: &Graph) -> Self {
        let ids = unique_ids(g);
        let nodes = g
            .nodes()
            .iter()
            .enumerate()
            .map(|(i, n)| NodeSpec {
                id: ids[i].clone(),
                kind: KindSpec::from_kind(&n.kind),
                parents: n.parents.iter().map(|p| ids[p.0].clone()).collect(),
                measure: n.measure,
            })
            .collect();
        let sharing = g.sharing().iter().map(|grp| grp.iter().map(|v| ids[v.0].clone()).collect()).collect();
        GraphSpec { nodes, out: ids[g.out().0].clone(), sharing }
    }

    pub fn build(&self) -> Result<Graph> {
        let mut index = BTreeMap::new();
        for (i, n) in self.nodes.iter().enumerate() {
            if index.insert(n.id.as_str(), NodeId(i)).is_some() {
                return Err(CliError::config(format!("duplicate node id {:?}", n.id)));
            }
        }
        let lookup = |id: &str, ctx: &str| {
            index.get(id).copied().ok_or_else(|| CliError::config(format!("{ctx}: unknown node id {id:?}")))
        };
        let mut nodes = Vec::with_capacity(self.nodes.len());
        for n in &self.nodes {
            let parents =
                n.parents.iter().map(|p| lookup(p, &format!("parents of {}", n.id))).collect::<Result<Vec<_>>>()?;
            let mut node = Node::new(n.id.clone(), n.kind.to_kind(&n.id)?, parents);
            node.measure = n.measure;
            nodes.push(node);
        }
        let out = lookup(&self.out, "out")?;
        let sharing = self
            .sharing
            .iter()
            .map(|grp| grp.iter().map(|id| lookup(id, "sharing")).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        Ok(Graph::new(nodes, out, sharing)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("graph spec serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| CliError::config(format!("graph spec: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        serde_json::from_str(&text).map_err(|source| CliError::Json { path: path.to_path_buf(), source })
    }
}

fn unique_ids(g: &Graph) -> Vec<String> {
    let mut seen = HashSet::new();
    g.nodes()
        .iter()
        .enumerate()
        .map(|(i, n)| {
            let id = if seen.contains(&n.label) { format!("{}_{i}", n.label) } else { n.label.clone() };
            seen.insert(id.clone());
            id
        })
        .collect()
}

/// First 16 hex digits of the SHA-256 of the compact spec JSON.
pub fn graph_hash(g: &Graph) -> String {
    hash_str(&serde_json::to_string(&GraphSpec::from_graph(g)).expect("graph spec serializes"))
}

pub fn hash_str(s: &str) -> String {
    let digest = Sha256::digest(s.as_bytes());
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// Resolves `"label"` or a numeric node index.
pub fn resolve_node(g: &Graph, name: &str) -> Result<NodeId> {
    if let Some(v) = g.find(name) {
        return Ok(v);
    }
    match name.parse::<usize>() {
        Ok(i) if i < g.len() => Ok(NodeId(i)),
        _ => Err(CliError::config(format!("no node named {name:?}"))),
    }
}
