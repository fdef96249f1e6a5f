//! Immutable DAG of typed nodes.
//!
//! Every node value is a `rows × cols` matrix stored flattened row-major, so
//! plain feature vectors are `1 × d`. The loss is an ordinary node with a
//! scalar output and exactly one parent.

use alloc::collections::{BTreeSet, BinaryHeap, VecDeque};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Reverse;
use core::fmt;

use crate::error::{GraphError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub usize);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.0)
    }
}

const LEAKY_SLOPE: f64 = 0.01;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Elementwise nonlinearities. Piecewise-linear ones use `σ'(0) = σ''(0) = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Relu,
    LeakyRelu,
    Softplus,
    Silu,
    Gelu,
    Tanh,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + libm::exp(-z))
    } else {
        let e = libm::exp(z);
        e / (1.0 + e)
    }
}

fn normal_pdf(z: f64) -> f64 {
    INV_SQRT_2PI * libm::exp(-0.5 * z * z)
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z * core::f64::consts::FRAC_1_SQRT_2)
}

impl Activation {
    pub const ALL: [Activation; 6] = [
        Activation::Relu,
        Activation::LeakyRelu,
        Activation::Softplus,
        Activation::Silu,
        Activation::Gelu,
        Activation::Tanh,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::LeakyRelu => "leaky_relu",
            Activation::Softplus => "softplus",
            Activation::Silu => "silu",
            Activation::Gelu => "gelu",
            Activation::Tanh => "tanh",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.name() == s)
    }

    pub fn is_piecewise_linear(self) -> bool {
        matches!(self, Activation::Relu | Activation::LeakyRelu)
    }

    pub fn value(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    z
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu => {
                if z > 0.0 {
                    z
                } else {
                    LEAKY_SLOPE * z
                }
            }
            Activation::Softplus => z.max(0.0) + libm::log1p(libm::exp(-z.abs())),
            Activation::Silu => z * sigmoid(z),
            Activation::Gelu => z * normal_cdf(z),
            Activation::Tanh => libm::tanh(z),
        }
    }

    pub fn d1(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu => {
                if z > 0.0 {
                    1.0
                } else if z < 0.0 {
                    LEAKY_SLOPE
                } else {
                    0.0
                }
            }
            Activation::Softplus => sigmoid(z),
            Activation::Silu => {
                let s = sigmoid(z);
                s + z * s * (1.0 - s)
            }
            Activation::Gelu => normal_cdf(z) + z * normal_pdf(z),
            Activation::Tanh => {
                let t = libm::tanh(z);
                1.0 - t * t
            }
        }
    }

    pub fn d2(self, z: f64) -> f64 {
        match self {
            Activation::Relu | Activation::LeakyRelu => 0.0,
            Activation::Softplus => {
                let s = sigmoid(z);
                s * (1.0 - s)
            }
            Activation::Silu => {
                let s = sigmoid(z);
                s * (1.0 - s) * (2.0 + z * (1.0 - 2.0 * s))
            }
            Activation::Gelu => normal_pdf(z) * (2.0 - z * z),
            Activation::Tanh => {
                let t = libm::tanh(z);
                -2.0 * t * (1.0 - t * t)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NodeKind {
    Input { rows: usize, cols: usize },
    /// Row-wise `x Wᵀ + b` with `W: out × in`.
    Linear { out: usize, bias: bool },
    Activation(Activation),
    SumMerge,
    /// Per-row concatenation of parent features.
    ConcatMerge,
    MeanPoolRows { seq_len: usize },
    /// Parents `(Q, K, V)`; output `softmax(Q Kᵀ / sqrt(d_k)) V`.
    SoftmaxAttention { d_k: usize },
    LossMse,
    LossSoftmaxCe { classes: usize },
}

impl NodeKind {
    pub fn is_loss(&self) -> bool {
        matches!(self, NodeKind::LossMse | NodeKind::LossSoftmaxCe { .. })
    }

    pub fn is_input(&self) -> bool {
        matches!(self, NodeKind::Input { .. })
    }

    pub fn tag(&self) -> &'static str {
        match self {
            NodeKind::Input { .. } => "input",
            NodeKind::Linear { .. } => "linear",
            NodeKind::Activation(_) => "activation",
            NodeKind::SumMerge => "sum",
            NodeKind::ConcatMerge => "concat",
            NodeKind::MeanPoolRows { .. } => "mean_pool_rows",
            NodeKind::SoftmaxAttention { .. } => "softmax_attention",
            NodeKind::LossMse => "loss_mse",
            NodeKind::LossSoftmaxCe { .. } => "loss_softmax_ce",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub label: String,
    pub kind: NodeKind,
    pub parents: Vec<NodeId>,
    /// Whether the node takes part in distance profiles.
    pub measure: bool,
}

impl Node {
    pub fn new(label: impl Into<String>, kind: NodeKind, parents: Vec<NodeId>) -> Self {
        Node { label: label.into(), kind, parents, measure: false }
    }
}

/// Where a node's parameters live inside the flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamSlot {
    pub offset: usize,
    pub len: usize,
    /// Index into [`Graph::param_groups`].
    pub group: usize,
}

/// All directed paths between two nodes, possibly truncated.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathSet {
    pub paths: Vec<Vec<NodeId>>,
    pub overflow: bool,
}

pub const DEFAULT_PATH_CAP: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    nodes: Vec<Node>,
    out: NodeId,
    sharing: Vec<Vec<NodeId>>,
    shapes: Vec<(usize, usize)>,
    children: Vec<Vec<NodeId>>,
    order: Vec<NodeId>,
    position: Vec<usize>,
    slots: Vec<Option<ParamSlot>>,
    groups: Vec<Vec<NodeId>>,
    param_count: usize,
}

impl Graph {
    /// Validates and freezes a graph. `out` must be the unique loss node;
    /// each entry of `sharing` lists Linear nodes that use one parameter block.
    pub fn new(nodes: Vec<Node>, out: NodeId, sharing: Vec<Vec<NodeId>>) -> Result<Self> {
        let n = nodes.len();
        for (i, node) in nodes.iter().enumerate() {
            let id = NodeId(i);
            for p in &node.parents {
                if p.0 >= n {
                    return Err(GraphError::DanglingParent { node: id, parent: p.0 }.into());
                }
            }
            let distinct: BTreeSet<_> = node.parents.iter().collect();
            if distinct.len() != node.parents.len() {
                return Err(GraphError::DuplicateParent { node: id }.into());
            }
        }

        let mut children = vec![Vec::new(); n];
        for (i, node) in nodes.iter().enumerate() {
            for p in &node.parents {
                children[p.0].push(NodeId(i));
            }
        }
        let order = stable_topological_order(&nodes, &children)?;
        let mut position = vec![0; n];
        for (k, v) in order.iter().enumerate() {
            position[v.0] = k;
        }

        let losses: Vec<usize> = (0..n).filter(|&i| nodes[i].kind.is_loss()).collect();
        match losses.len() {
            0 => return Err(GraphError::NoOutput.into()),
            1 => {}
            count => return Err(GraphError::MultipleOutputs { count }.into()),
        }
        if out.0 >= n || !nodes[out.0].kind.is_loss() {
            return Err(GraphError::OutputNotLoss { node: out }.into());
        }

        let mut shapes = vec![(0, 0); n];
        for &v in &order {
            shapes[v.0] = infer_shape(v, &nodes[v.0], &shapes)?;
        }

        let mut slots = vec![None; n];
        let mut groups: Vec<Vec<NodeId>> = Vec::new();
        let mut param_count = 0;
        let mut seen = vec![false; n];
        for group in &sharing {
            if group.is_empty() {
                return Err(GraphError::BadSharing { detail: "empty group".into() }.into());
            }
            let first = group[0];
            for &v in group {
                if v.0 >= n {
                    return Err(GraphError::BadSharing { detail: format!("unknown node {}", v.0) }.into());
                }
                if seen[v.0] {
                    return Err(GraphError::BadSharing { detail: format!("node {} in two groups", v.0) }.into());
                }
                seen[v.0] = true;
                if !matches!(nodes[v.0].kind, NodeKind::Linear { .. }) {
                    return Err(GraphError::BadSharing { detail: format!("node {} has no parameters", v.0) }.into());
                }
                if param_shape(&nodes[v.0], &shapes, &nodes) != param_shape(&nodes[first.0], &shapes, &nodes) {
                    return Err(GraphError::BadSharing {
                        detail: format!("nodes {} and {} differ in parameter shape", first.0, v.0),
                    }
                    .into());
                }
            }
        }
        for &v in &order {
            if slots[v.0].is_some() {
                continue;
            }
            let len = param_len_of(&nodes[v.0], &shapes, &nodes);
            if len == 0 {
                continue;
            }
            let members = sharing.iter().find(|g| g.contains(&v)).cloned().unwrap_or_else(|| vec![v]);
            let slot = ParamSlot { offset: param_count, len, group: groups.len() };
            for m in &members {
                slots[m.0] = Some(slot);
            }
            groups.push(members);
            param_count += len;
        }

        Ok(Graph { nodes, out, sharing, shapes, children, order, position, slots, groups, param_count })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, v: NodeId) -> &Node {
        &self.nodes[v.0]
    }

    pub fn kind(&self, v: NodeId) -> &NodeKind {
        &self.nodes[v.0].kind
    }

    pub fn ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.nodes.len()).map(NodeId)
    }

    pub fn find(&self, label: &str) -> Option<NodeId> {
        self.nodes.iter().position(|n| n.label == label).map(NodeId)
    }

    /// The loss node.
    pub fn out(&self) -> NodeId {
        self.out
    }

    /// The node whose value the loss consumes.
    pub fn loss_input(&self) -> NodeId {
        self.nodes[self.out.0].parents[0]
    }

    pub fn sharing(&self) -> &[Vec<NodeId>] {
        &self.sharing
    }

    pub fn parents(&self, v: NodeId) -> &[NodeId] {
        &self.nodes[v.0].parents
    }

    pub fn children(&self, v: NodeId) -> &[NodeId] {
        &self.children[v.0]
    }

    pub fn shape(&self, v: NodeId) -> (usize, usize) {
        self.shapes[v.0]
    }

    /// Flattened dimension `rows · cols`.
    pub fn dim(&self, v: NodeId) -> usize {
        let (r, c) = self.shapes[v.0];
        r * c
    }

    pub fn inputs(&self) -> Vec<NodeId> {
        self.ids().filter(|&v| self.kind(v).is_input()).collect()
    }

    /// Parents before children; ties broken by insertion index.
    pub fn topological_order(&self) -> &[NodeId] {
        &self.order
    }

    pub fn position(&self, v: NodeId) -> usize {
        self.position[v.0]
    }

    pub fn param_slot(&self, v: NodeId) -> Option<ParamSlot> {
        self.slots[v.0]
    }

    pub fn param_count(&self) -> usize {
        self.param_count
    }

    /// Each group is a list of nodes sharing one parameter slice.
    pub fn param_groups(&self) -> &[Vec<NodeId>] {
        &self.groups
    }

    pub fn param_nodes(&self) -> Vec<NodeId> {
        self.order.iter().copied().filter(|&v| self.slots[v.0].is_some()).collect()
    }

    /// Nodes eligible for distance profiles: flagged nodes, or every
    /// non-input non-loss node when none is flagged.
    pub fn measured_nodes(&self) -> Vec<NodeId> {
        let flagged: Vec<NodeId> = self.order.iter().copied().filter(|&v| self.nodes[v.0].measure).collect();
        if !flagged.is_empty() {
            return flagged;
        }
        self.order
            .iter()
            .copied()
            .filter(|&v| !self.kind(v).is_input() && !self.kind(v).is_loss())
            .collect()
    }

    /// Undirected shortest-path length; `None` when unreachable.
    pub fn graph_distance(&self, v: NodeId, w: NodeId) -> Option<usize> {
        self.distances_from(v)[w.0]
    }

    pub fn distances_from(&self, v: NodeId) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.len()];
        dist[v.0] = Some(0);
        let mut queue = VecDeque::from([v]);
        while let Some(x) = queue.pop_front() {
            let d = dist[x.0].unwrap_or(0);
            for &y in self.parents(x).iter().chain(self.children(x)) {
                if dist[y.0].is_none() {
                    dist[y.0] = Some(d + 1);
                    queue.push_back(y);
                }
            }
        }
        dist
    }

    /// `Desc(v)` including `v`, as a membership mask.
    pub fn descendant_mask(&self, v: NodeId) -> Vec<bool> {
        let mut mask = vec![false; self.len()];
        mask[v.0] = true;
        for &x in &self.order[self.position[v.0]..] {
            if mask[x.0] {
                for &c in self.children(x) {
                    mask[c.0] = true;
                }
            }
        }
        mask
    }

    /// `Anc(v)` including `v`, as a membership mask.
    pub fn ancestor_mask(&self, v: NodeId) -> Vec<bool> {
        let mut mask = vec![false; self.len()];
        mask[v.0] = true;
        for &x in self.order[..=self.position[v.0]].iter().rev() {
            if mask[x.0] {
                for &p in self.parents(x) {
                    mask[p.0] = true;
                }
            }
        }
        mask
    }

    /// Whether `a` is `b` or one of its ancestors.
    pub fn reaches(&self, a: NodeId, b: NodeId) -> bool {
        a == b || (self.position[a.0] < self.position[b.0] && self.descendant_mask(a)[b.0])
    }

    pub fn common_descendants(&self, v: NodeId, w: NodeId) -> Vec<NodeId> {
        let a = self.descendant_mask(v);
        let b = self.descendant_mask(w);
        self.order.iter().copied().filter(|x| a[x.0] && b[x.0]).collect()
    }

    /// Directed `v → c` paths in lexicographic order of node indices,
    /// stopping once `cap` paths have been collected.
    pub fn enumerate_paths(&self, v: NodeId, c: NodeId, cap: usize) -> PathSet {
        let reach = self.ancestor_mask(c);
        let mut set = PathSet { paths: Vec::new(), overflow: false };
        if !reach[v.0] {
            return set;
        }
        let mut sorted_children: Vec<Vec<NodeId>> = self.children.clone();
        for ch in &mut sorted_children {
            ch.sort();
        }
        let mut stack = vec![v];
        self.walk_paths(&sorted_children, &reach, c, cap, &mut stack, &mut set);
        set
    }

    fn walk_paths(
        &self,
        children: &[Vec<NodeId>],
        reach: &[bool],
        target: NodeId,
        cap: usize,
        stack: &mut Vec<NodeId>,
        set: &mut PathSet,
    ) {
        if set.overflow {
            return;
        }
        let x = *stack.last().expect("non-empty path");
        if x == target {
            if set.paths.len() >= cap {
                set.overflow = true;
            } else {
                set.paths.push(stack.clone());
            }
            return;
        }
        for &y in &children[x.0] {
            if reach[y.0] {
                stack.push(y);
                self.walk_paths(children, reach, target, cap, stack, set);
                stack.pop();
            }
        }
    }
}

fn stable_topological_order(nodes: &[Node], children: &[Vec<NodeId>]) -> Result<Vec<NodeId>> {
    let n = nodes.len();
    let mut indegree: Vec<usize> = nodes.iter().map(|nd| nd.parents.len()).collect();
    let mut ready: BinaryHeap<Reverse<usize>> = (0..n).filter(|&i| indegree[i] == 0).map(Reverse).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(Reverse(i)) = ready.pop() {
        order.push(NodeId(i));
        for c in &children[i] {
            indegree[c.0] -= 1;
            if indegree[c.0] == 0 {
                ready.push(Reverse(c.0));
            }
        }
    }
    if order.len() < n {
        let stuck = (0..n).find(|&i| indegree[i] > 0).unwrap_or(0);
        return Err(GraphError::CycleDetected { node: NodeId(stuck) }.into());
    }
    Ok(order)
}

fn arity_error(node: NodeId, expected: usize, found: usize) -> crate::error::Error {
    GraphError::WrongArity { node, expected, found }.into()
}

fn dim_error(node: NodeId, detail: String) -> crate::error::Error {
    GraphError::DimMismatch { node, detail }.into()
}

fn infer_shape(id: NodeId, node: &Node, shapes: &[(usize, usize)]) -> Result<(usize, usize)> {
    let ps: Vec<(usize, usize)> = node.parents.iter().map(|p| shapes[p.0]).collect();
    let unary = |expected: usize| -> Result<(usize, usize)> {
        if ps.len() != expected {
            return Err(arity_error(id, expected, ps.len()));
        }
        Ok(ps[0])
    };
    match &node.kind {
        NodeKind::Input { rows, cols } => {
            if !ps.is_empty() {
                return Err(GraphError::InputWithParents { node: id }.into());
            }
            if *rows == 0 || *cols == 0 {
                return Err(dim_error(id, "input has an empty dimension".into()));
            }
            Ok((*rows, *cols))
        }
        kind => {
            if ps.is_empty() {
                return Err(GraphError::MissingParents { node: id }.into());
            }
            match kind {
                NodeKind::Linear { out, .. } => {
                    let (r, _) = unary(1)?;
                    if *out == 0 {
                        return Err(dim_error(id, "linear output width is 0".into()));
                    }
                    Ok((r, *out))
                }
                NodeKind::Activation(_) => unary(1),
                NodeKind::SumMerge => {
                    if let Some(bad) = ps.iter().find(|s| **s != ps[0]) {
                        return Err(dim_error(
                            id,
                            format!("sum of {}x{} and {}x{}", ps[0].0, ps[0].1, bad.0, bad.1),
                        ));
                    }
                    Ok(ps[0])
                }
                NodeKind::ConcatMerge => {
                    if ps.iter().any(|s| s.0 != ps[0].0) {
                        return Err(dim_error(id, "concatenated parents differ in row count".into()));
                    }
                    Ok((ps[0].0, ps.iter().map(|s| s.1).sum()))
                }
                NodeKind::MeanPoolRows { seq_len } => {
                    let (r, c) = unary(1)?;
                    if r != *seq_len {
                        return Err(dim_error(id, format!("pooling expects {seq_len} rows, parent has {r}")));
                    }
                    Ok((1, c))
                }
                NodeKind::SoftmaxAttention { d_k } => {
                    if ps.len() != 3 {
                        return Err(arity_error(id, 3, ps.len()));
                    }
                    let (q, k, v) = (ps[0], ps[1], ps[2]);
                    if q.1 != *d_k || k.1 != *d_k {
                        return Err(dim_error(id, format!("query/key width must equal d_k={d_k}")));
                    }
                    if q.0 != k.0 || k.0 != v.0 {
                        return Err(dim_error(id, "attention parents differ in row count".into()));
                    }
                    Ok((q.0, v.1))
                }
                NodeKind::LossMse => {
                    unary(1)?;
                    Ok((1, 1))
                }
                NodeKind::LossSoftmaxCe { classes } => {
                    let (r, c) = unary(1)?;
                    if r * c != *classes || *classes < 2 {
                        return Err(dim_error(id, format!("expected {classes} logits, found {}", r * c)));
                    }
                    Ok((1, 1))
                }
                NodeKind::Input { .. } => unreachable!(),
            }
        }
    }
}

fn param_shape(node: &Node, shapes: &[(usize, usize)], _nodes: &[Node]) -> Option<(usize, usize, bool)> {
    match node.kind {
        NodeKind::Linear { out, bias } => Some((out, shapes[node.parents[0].0].1, bias)),
        _ => None,
    }
}

fn param_len_of(node: &Node, shapes: &[(usize, usize)], nodes: &[Node]) -> usize {
    match param_shape(node, shapes, nodes) {
        Some((out, inp, bias)) => out * inp + if bias { out } else { 0 },
        None => 0,
    }
}

/// Incremental construction with automatic labels `n0, n1, …`.
#[derive(Debug, Default, Clone)]
pub struct GraphBuilder {
    nodes: Vec<Node>,
    sharing: Vec<Vec<NodeId>>,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, kind: NodeKind, parents: &[NodeId]) -> NodeId {
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node::new(format!("n{}", id.0), kind, parents.to_vec()));
        id
    }

    pub fn input(&mut self, rows: usize, cols: usize) -> NodeId {
        self.add(NodeKind::Input { rows, cols }, &[])
    }

    pub fn linear(&mut self, parent: NodeId, out: usize, bias: bool) -> NodeId {
        self.add(NodeKind::Linear { out, bias }, &[parent])
    }

    pub fn activation(&mut self, parent: NodeId, act: Activation) -> NodeId {
        self.add(NodeKind::Activation(act), &[parent])
    }

    pub fn sum(&mut self, parents: &[NodeId]) -> NodeId {
        self.add(NodeKind::SumMerge, parents)
    }

    pub fn concat(&mut self, parents: &[NodeId]) -> NodeId {
        self.add(NodeKind::ConcatMerge, parents)
    }

    pub fn mean_pool(&mut self, parent: NodeId, seq_len: usize) -> NodeId {
        self.add(NodeKind::MeanPoolRows { seq_len }, &[parent])
    }

    pub fn attention(&mut self, q: NodeId, k: NodeId, v: NodeId, d_k: usize) -> NodeId {
        self.add(NodeKind::SoftmaxAttention { d_k }, &[q, k, v])
    }

    pub fn loss_mse(&mut self, parent: NodeId) -> NodeId {
        self.add(NodeKind::LossMse, &[parent])
    }

    pub fn loss_ce(&mut self, parent: NodeId, classes: usize) -> NodeId {
        self.add(NodeKind::LossSoftmaxCe { classes }, &[parent])
    }

    pub fn label(&mut self, v: NodeId, label: impl Into<String>) -> &mut Self {
        self.nodes[v.0].label = label.into();
        self
    }

    pub fn measure(&mut self, v: NodeId) -> &mut Self {
        self.nodes[v.0].measure = true;
        self
    }

    pub fn share(&mut self, group: &[NodeId]) -> &mut Self {
        self.sharing.push(group.to_vec());
        self
    }

    /// Uses the last loss node added as the output.
    pub fn build(self) -> Result<Graph> {
        let out = self.nodes.iter().rposition(|n| n.kind.is_loss()).map(NodeId).unwrap_or(NodeId(usize::MAX));
        if out.0 == usize::MAX {
            return Err(GraphError::NoOutput.into());
        }
        Graph::new(self.nodes, out, self.sharing)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    fn chain3() -> Graph {
        let mut b = GraphBuilder::new();
        let x = b.input(1, 2);
        let h = b.linear(x, 2, true);
        b.loss_mse(h);
        b.build().unwrap()
    }

    fn diamond() -> (Graph, [NodeId; 4]) {
        let mut b = GraphBuilder::new();
        let v1 = b.input(1, 3);
        let v2 = b.activation(v1, Activation::Tanh);
        let v3 = b.activation(v1, Activation::Softplus);
        let v4 = b.sum(&[v2, v3]);
        b.loss_mse(v4);
        (b.build().unwrap(), [v1, v2, v3, v4])
    }

    #[test]
    fn validate_cases() {
        let mut b = GraphBuilder::new();
        let x = b.input(1, 2);
        b.loss_mse(x);
        assert!(b.build().is_ok());

        let nodes = vec![
            Node::new("a", NodeKind::Input { rows: 1, cols: 2 }, vec![]),
            Node::new("b", NodeKind::Activation(Activation::Tanh), vec![NodeId(1)]),
            Node::new("l", NodeKind::LossMse, vec![NodeId(1)]),
        ];
        assert!(matches!(
            Graph::new(nodes, NodeId(2), vec![]),
            Err(Error::Graph(GraphError::CycleDetected { .. }))
        ));

        let mut b = GraphBuilder::new();
        let x = b.input(1, 3);
        let y = b.input(1, 4);
        let s = b.sum(&[x, y]);
        b.loss_mse(s);
        assert!(matches!(b.build(), Err(Error::Graph(GraphError::DimMismatch { .. }))));

        let mut b = GraphBuilder::new();
        let x = b.input(1, 3);
        b.loss_mse(x);
        b.loss_mse(x);
        assert!(matches!(b.build(), Err(Error::Graph(GraphError::MultipleOutputs { count: 2 }))));

        let nodes = vec![
            Node::new("a", NodeKind::Input { rows: 1, cols: 2 }, vec![]),
            Node::new("l", NodeKind::LossMse, vec![NodeId(7)]),
        ];
        assert!(matches!(
            Graph::new(nodes, NodeId(1), vec![]),
            Err(Error::Graph(GraphError::DanglingParent { parent: 7, .. }))
        ));
    }

    #[test]
    fn topological_cases() {
        let g = chain3();
        assert_eq!(g.topological_order(), &[NodeId(0), NodeId(1), NodeId(2)]);
        let (g, [v1, _, _, v4]) = diamond();
        let order = g.topological_order();
        assert_eq!(order[0], v1);
        assert_eq!(order[order.len() - 2], v4);
        assert_eq!(*order.last().unwrap(), g.out());
    }

    #[test]
    fn distance_cases() {
        let (g, [v1, v2, v3, v4]) = diamond();
        assert_eq!(g.graph_distance(v1, v2), Some(1));
        assert_eq!(g.graph_distance(v2, v2), Some(0));
        assert_eq!(g.graph_distance(v2, v3), Some(2));
        assert_eq!(g.graph_distance(v1, v4), Some(2));
    }

    #[test]
    fn common_descendant_cases() {
        let mut b = GraphBuilder::new();
        let v0 = b.input(1, 2);
        let v1 = b.activation(v0, Activation::Tanh);
        let v2 = b.activation(v1, Activation::Tanh);
        let l = b.loss_mse(v2);
        let g = b.build().unwrap();
        assert_eq!(g.common_descendants(v0, v1), vec![v1, v2, l]);

        let (g, [_, v2, v3, v4]) = diamond();
        assert_eq!(g.common_descendants(v2, v3), vec![v4, g.out()]);
    }

    #[test]
    fn path_cases() {
        let mut b = GraphBuilder::new();
        let v0 = b.input(1, 2);
        let v1 = b.activation(v0, Activation::Tanh);
        let v2 = b.activation(v1, Activation::Tanh);
        b.loss_mse(v2);
        let g = b.build().unwrap();
        assert_eq!(g.enumerate_paths(v0, v2, 10).paths.len(), 1);

        let (g, [v1, _, _, v4]) = diamond();
        let ps = g.enumerate_paths(v1, v4, 10);
        assert_eq!(ps.paths.len(), 2);
        assert!(ps.paths[0] < ps.paths[1]);
        let capped = g.enumerate_paths(v1, v4, 1);
        assert!(capped.overflow);
        assert_eq!(capped.paths.len(), 1);

        let mut b = GraphBuilder::new();
        let v0 = b.input(1, 2);
        let v1 = b.activation(v0, Activation::Tanh);
        let v2 = b.sum(&[v0, v1]);
        b.loss_mse(v2);
        let g = b.build().unwrap();
        assert_eq!(g.enumerate_paths(v0, v2, 10).paths.len(), 2);
    }

    #[test]
    fn param_layout_with_sharing() {
        let mut b = GraphBuilder::new();
        let x = b.input(1, 3);
        let a = b.linear(x, 3, true);
        let h = b.activation(a, Activation::Tanh);
        let c = b.linear(h, 3, true);
        let d = b.linear(c, 2, false);
        b.loss_mse(d);
        b.share(&[a, c]);
        let g = b.build().unwrap();
        assert_eq!(g.param_count(), 12 + 6);
        assert_eq!(g.param_slot(a), g.param_slot(c));
        assert_eq!(g.param_slot(d).unwrap().offset, 12);
        assert_eq!(g.param_groups().len(), 2);

        let mut b = GraphBuilder::new();
        let x = b.input(1, 3);
        let a = b.linear(x, 3, true);
        let c = b.linear(a, 2, true);
        b.loss_mse(c);
        b.share(&[a, c]);
        assert!(matches!(b.build(), Err(Error::Graph(GraphError::BadSharing { .. }))));
    }

    #[test]
    fn activation_derivatives_match_differences() {
        for act in Activation::ALL {
            for &z in &[-1.7, -0.4, 0.3, 0.5, 2.2] {
                let h = 1e-5;
                let d1 = (act.value(z + h) - act.value(z - h)) / (2.0 * h);
                assert!((d1 - act.d1(z)).abs() < 1e-8, "{act:?} d1 at {z}");
                let h = 1e-4;
                let d2 = (act.value(z + h) - 2.0 * act.value(z) + act.value(z - h)) / (h * h);
                assert!((d2 - act.d2(z)).abs() < 1e-6, "{act:?} d2 at {z}");
            }
            if act.is_piecewise_linear() {
                assert_eq!(act.d1(0.0), 0.0);
                assert_eq!(act.d2(0.0), 0.0);
            }
        }
    }
}
