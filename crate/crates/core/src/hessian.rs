//! Exact input-Hessian blocks `H_{v,w} = ∂²L/∂ε_v∂ε_w` (offsets injected on
//! node outputs, ancestors held fixed) and the parametric blocks built on
//! top of them.
//!
//! The recursion always expands the topologically earlier node `v`:
//!
//! ```text
//! H_{v,w} = Σ_{u∈Ch(v)} D_{u←v}ᵀ H_{u,w} + Σ_{u∈Ch(v)} Σ_{p∈Pa(u)} C_{u;v,p} J_{p←w}
//! ```
//!
//! where `C_{u;v,p}` is the backward-weighted curvature of `u` and `J_{p←w}`
//! the total forward Jacobian (zero unless `w` reaches `p`). The loss node
//! contributes `∇²L`; every other node contributes a tensor term. Restricting
//! the curvature sources gives the Gauss–Newton and tensor parts through the
//! same code path.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use crate::calculus::{
    backward, forward, jacobian_edge, jacobian_param, weighted_curvature, weighted_mixed_param,
    weighted_param_curvature, BackwardState, ForwardState, LocalOp, Sample,
};
use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::linalg::Matrix;

/// Which curvature sources feed the recursion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Mode {
    Full,
    /// Loss curvature only.
    GaussNewton,
    /// Node-function curvature only.
    Tensor,
}

impl Mode {
    fn admits(self, g: &Graph, u: NodeId) -> bool {
        match self {
            Mode::Full => true,
            Mode::GaussNewton => u == g.out(),
            Mode::Tensor => u != g.out(),
        }
    }
}

/// Blocks keyed by node pair with shape checks against the node dimensions.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BlockMatrix {
    dims: Vec<usize>,
    blocks: BTreeMap<(NodeId, NodeId), Matrix>,
}

impl BlockMatrix {
    pub fn new(g: &Graph) -> Self {
        BlockMatrix { dims: g.ids().map(|v| g.dim(v)).collect(), blocks: BTreeMap::new() }
    }

    pub fn insert(&mut self, v: NodeId, w: NodeId, m: Matrix) -> Result<()> {
        if m.shape() != (self.dims[v.0], self.dims[w.0]) {
            return Err(Error::DimensionMismatch {
                context: "block shape",
                expected: self.dims[v.0] * self.dims[w.0],
                found: m.rows() * m.cols(),
            });
        }
        self.blocks.insert((v, w), m);
        Ok(())
    }

    pub fn get(&self, v: NodeId, w: NodeId) -> Option<&Matrix> {
        self.blocks.get(&(v, w))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(NodeId, NodeId), &Matrix)> {
        self.blocks.iter()
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Largest `‖H_{v,w} − H_{w,v}ᵀ‖_max` over stored mirrored pairs.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (&(v, w), m) in &self.blocks {
            if let Some(t) = self.blocks.get(&(w, v)) {
                worst = worst.max(m.sub(&t.transpose()).map(|d| d.max_abs()).unwrap_or(f64::INFINITY));
            }
        }
        worst
    }

    /// Dense matrix over the listed nodes, in that order. Missing blocks are zero.
    pub fn assemble(&self, nodes: &[NodeId]) -> Matrix {
        let offs: Vec<usize> = nodes
            .iter()
            .scan(0, |acc, v| {
                let o = *acc;
                *acc += self.dims[v.0];
                Some(o)
            })
            .collect();
        let n: usize = nodes.iter().map(|v| self.dims[v.0]).sum();
        let mut m = Matrix::zeros(n, n);
        for (a, &v) in nodes.iter().enumerate() {
            for (b, &w) in nodes.iter().enumerate() {
                if let Some(blk) = self.blocks.get(&(v, w)) {
                    m.add_block(offs[a], offs[b], blk);
                }
            }
        }
        m
    }
}

/// `(H_{v,w} + H_{w,v}ᵀ) / 2`
pub fn symmetrize(h_vw: &Matrix, h_wv: &Matrix) -> Result<Matrix> {
    Ok(h_vw.add(&h_wv.transpose())?.scale(0.5))
}

type PairKey = (Mode, usize, usize);

/// Memo of computed blocks plus the recursion guard.
#[derive(Debug, Clone)]
pub struct HessianCache {
    memoize: bool,
    blocks: BTreeMap<PairKey, Matrix>,
    in_progress: BTreeSet<PairKey>,
    total_jac: BTreeMap<(usize, usize), Option<Matrix>>,
    edges: BTreeMap<(usize, usize), LocalOp>,
    curvatures: BTreeMap<(usize, usize, usize), LocalOp>,
    evaluations: usize,
}

impl HessianCache {
    pub fn new(memoize: bool) -> Self {
        HessianCache {
            memoize,
            blocks: BTreeMap::new(),
            in_progress: BTreeSet::new(),
            total_jac: BTreeMap::new(),
            edges: BTreeMap::new(),
            curvatures: BTreeMap::new(),
            evaluations: 0,
        }
    }

    /// Number of block recursions actually evaluated (cache misses).
    pub fn evaluations(&self) -> usize {
        self.evaluations
    }

    pub fn is_idle(&self) -> bool {
        self.in_progress.is_empty()
    }
}

/// One per-sample analysis: forward/backward state plus its cache.
pub struct HessianSession<'a> {
    g: &'a Graph,
    fs: &'a ForwardState,
    bs: &'a BackwardState,
    cache: HessianCache,
}

impl<'a> HessianSession<'a> {
    pub fn new(g: &'a Graph, fs: &'a ForwardState, bs: &'a BackwardState) -> Self {
        HessianSession { g, fs, bs, cache: HessianCache::new(true) }
    }

    pub fn without_memo(g: &'a Graph, fs: &'a ForwardState, bs: &'a BackwardState) -> Self {
        HessianSession { g, fs, bs, cache: HessianCache::new(false) }
    }

    pub fn graph(&self) -> &'a Graph {
        self.g
    }

    pub fn forward_state(&self) -> &'a ForwardState {
        self.fs
    }

    pub fn backward_state(&self) -> &'a BackwardState {
        self.bs
    }

    pub fn cache(&self) -> &HessianCache {
        &self.cache
    }

    /// `H^f_{v,w}`
    pub fn input_block(&mut self, v: NodeId, w: NodeId) -> Matrix {
        self.block(v, w, Mode::Full)
    }

    pub fn block(&mut self, v: NodeId, w: NodeId, mode: Mode) -> Matrix {
        let m = self.pair(v, w, mode);
        debug_assert!(self.cache.is_idle());
        m
    }

    /// `Σ_{u∈Ch(v)} D_{u←v}ᵀ H_{u,out}` for `v ≠ out`: the boundary block
    /// receives no direct curvature when the loss input feeds only the loss.
    pub fn boundary_block(&mut self, v: NodeId) -> Matrix {
        let out = self.g.loss_input();
        let mut acc = Matrix::zeros(self.g.dim(v), self.g.dim(out));
        for &u in self.g.children(v) {
            let h = self.pair(u, out, Mode::Full);
            let d = self.edge(u, v);
            acc.add_assign(&d.tr_mul(&h)).expect("shape");
        }
        acc
    }

    fn pair(&mut self, v: NodeId, w: NodeId, mode: Mode) -> Matrix {
        if self.g.position(v) <= self.g.position(w) {
            self.ordered(v, w, mode)
        } else {
            self.ordered(w, v, mode).transpose()
        }
    }

    fn ordered(&mut self, v: NodeId, w: NodeId, mode: Mode) -> Matrix {
        let key = (mode, v.0, w.0);
        if let Some(m) = self.cache.blocks.get(&key) {
            return m.clone();
        }
        assert!(self.cache.in_progress.insert(key), "block recursion revisited ({}, {}) before completion", v.0, w.0);
        self.cache.evaluations += 1;
        let g = self.g;
        let mut h = Matrix::zeros(g.dim(v), g.dim(w));
        for &u in g.children(v) {
            let huw = self.pair(u, w, mode);
            let d = self.edge(u, v);
            h.add_assign(&d.tr_mul(&huw)).expect("shape");
            if !mode.admits(g, u) {
                continue;
            }
            for &p in g.parents(u) {
                let Some(j) = self.total_jacobian(p, w) else { continue };
                let c = self.curvature(u, v, p);
                if c.is_zero() {
                    continue;
                }
                h.add_assign(&c.mul(&j)).expect("shape");
            }
        }
        self.cache.in_progress.remove(&key);
        if self.cache.memoize {
            self.cache.blocks.insert(key, h.clone());
        }
        h
    }

    pub fn edge(&mut self, u: NodeId, p: NodeId) -> LocalOp {
        if let Some(op) = self.cache.edges.get(&(u.0, p.0)) {
            return op.clone();
        }
        let op = jacobian_edge(self.g, self.fs, u, p).expect("edge exists");
        self.cache.edges.insert((u.0, p.0), op.clone());
        op
    }

    /// Backward-weighted `C_{u;a,b}`.
    pub fn curvature(&mut self, u: NodeId, a: NodeId, b: NodeId) -> LocalOp {
        if let Some(op) = self.cache.curvatures.get(&(u.0, a.0, b.0)) {
            return op.clone();
        }
        let op = weighted_curvature(self.g, self.fs, u, a, b, self.bs.grad(u)).expect("parents of u");
        self.cache.curvatures.insert((u.0, a.0, b.0), op.clone());
        op
    }

    /// Total forward Jacobian `J_{p←w} = ∂f_p/∂ε_w`; `None` when `w` does not reach `p`.
    pub fn total_jacobian(&mut self, p: NodeId, w: NodeId) -> Option<Matrix> {
        if p == w {
            return Some(Matrix::identity(self.g.dim(w)));
        }
        if self.g.position(p) < self.g.position(w) {
            return None;
        }
        if let Some(j) = self.cache.total_jac.get(&(p.0, w.0)) {
            return j.clone();
        }
        let mut acc: Option<Matrix> = None;
        for &q in self.g.parents(p) {
            if let Some(jq) = self.total_jacobian(q, w) {
                let term = self.edge(p, q).mul(&jq);
                match &mut acc {
                    Some(a) => a.add_assign(&term).expect("shape"),
                    None => acc = Some(term),
                }
            }
        }
        self.cache.total_jac.insert((p.0, w.0), acc.clone());
        acc
    }

    fn mixed_term(&mut self, v: NodeId, w: NodeId, dw: &Matrix) -> Option<Matrix> {
        let mut acc: Option<Matrix> = None;
        for &p in self.g.parents(v) {
            let Some(j) = self.total_jacobian(p, w) else { continue };
            let e = weighted_mixed_param(self.g, self.fs, v, p, self.bs.grad(v)).expect("parameter node");
            let term = e.tr_matmul(&j.matmul(dw).expect("shape")).expect("shape");
            match &mut acc {
                Some(a) => a.add_assign(&term).expect("shape"),
                None => acc = Some(term),
            }
        }
        acc
    }

    /// `H_{θ_v,θ_w}` for two parameter-owning nodes, treating each node's
    /// parameters as its own copy (shared groups are summed by the caller).
    pub fn param_block(&mut self, v: NodeId, w: NodeId) -> Result<Matrix> {
        let dv = jacobian_param(self.g, self.fs, v)?;
        let dw = jacobian_param(self.g, self.fs, w)?;
        let h = self.input_block(v, w);
        let mut out = dv.tr_matmul(&h.matmul(&dw)?)?;
        if v == w {
            out.add_assign(&weighted_param_curvature(self.g, v, self.bs.grad(v))?)?;
        }
        if let Some(m) = self.mixed_term(v, w, &dw) {
            out.add_assign(&m)?;
        }
        if let Some(m) = self.mixed_term(w, v, &dv) {
            out.add_assign(&m.transpose())?;
        }
        Ok(out)
    }

    /// This sample's `P × P` parameter Hessian, shared slices summed.
    pub fn param_hessian(&mut self) -> Matrix {
        let g = self.g;
        let pn = g.param_nodes();
        let mut full = Matrix::zeros(g.param_count(), g.param_count());
        for (a, &v) in pn.iter().enumerate() {
            for &w in &pn[a..] {
                let mut blk = self.param_block(v, w).expect("parameter nodes");
                if v == w {
                    blk = blk.symmetric_part().expect("square");
                }
                let sv = g.param_slot(v).expect("slot").offset;
                let sw = g.param_slot(w).expect("slot").offset;
                full.add_block(sv, sw, &blk);
                if v != w {
                    full.add_block(sw, sv, &blk.transpose());
                }
            }
        }
        full
    }
}

/// Forward and backward state of one sample.
#[derive(Debug, Clone)]
pub struct Evaluated {
    pub forward: ForwardState,
    pub backward: BackwardState,
}

pub fn evaluate(g: &Graph, theta: &[f64], samples: &[Sample]) -> Result<Vec<Evaluated>> {
    samples
        .iter()
        .map(|s| {
            let forward = forward(g, theta, s)?;
            let backward = backward(g, &forward);
            Ok(Evaluated { forward, backward })
        })
        .collect()
}

/// Per-sample sessions whose blocks are averaged before any norm is taken.
pub struct BatchSession<'a> {
    g: &'a Graph,
    sessions: Vec<HessianSession<'a>>,
}

impl<'a> BatchSession<'a> {
    pub fn new(g: &'a Graph, evals: &'a [Evaluated]) -> Self {
        BatchSession { g, sessions: evals.iter().map(|e| HessianSession::new(g, &e.forward, &e.backward)).collect() }
    }

    pub fn graph(&self) -> &'a Graph {
        self.g
    }

    pub fn len(&self) -> usize {
        self.sessions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sessions.is_empty()
    }

    pub fn sessions(&mut self) -> &mut [HessianSession<'a>] {
        &mut self.sessions
    }

    pub fn block(&mut self, v: NodeId, w: NodeId, mode: Mode) -> Matrix {
        self.mean(|s| s.block(v, w, mode))
    }

    pub fn input_block(&mut self, v: NodeId, w: NodeId) -> Matrix {
        self.block(v, w, Mode::Full)
    }

    pub fn mean(&mut self, mut f: impl FnMut(&mut HessianSession<'a>) -> Matrix) -> Matrix {
        let n = self.sessions.len() as f64;
        let mut acc: Option<Matrix> = None;
        for s in &mut self.sessions {
            let m = f(s);
            match &mut acc {
                Some(a) => a.add_assign(&m).expect("shape"),
                None => acc = Some(m),
            }
        }
        acc.map(|a| a.scale(1.0 / n)).unwrap_or_else(|| Matrix::zeros(0, 0))
    }
}

pub const DEFAULT_ASSEMBLY_CAP: usize = 5_000;
pub const HARD_ASSEMBLY_CAP: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AssemblyCap {
    pub cap: usize,
    /// Allows caps above [`HARD_ASSEMBLY_CAP`].
    pub override_hard_cap: bool,
}

impl Default for AssemblyCap {
    fn default() -> Self {
        AssemblyCap { cap: DEFAULT_ASSEMBLY_CAP, override_hard_cap: false }
    }
}

impl AssemblyCap {
    pub fn effective(&self) -> usize {
        if self.override_hard_cap {
            self.cap
        } else {
            self.cap.min(HARD_ASSEMBLY_CAP)
        }
    }
}

/// Batch-mean `∇²_θ L` assembled from parametric blocks.
pub fn assemble_full_hessian(g: &Graph, evals: &[Evaluated], cap: AssemblyCap) -> Result<Matrix> {
    let p = g.param_count();
    if p > cap.effective() {
        return Err(Error::CapExceeded { params: p, cap: cap.effective() });
    }
    if evals.is_empty() {
        return Err(Error::InsufficientData("no samples"));
    }
    let mut batch = BatchSession::new(g, evals);
    Ok(batch.mean(|s| s.param_hessian()))
}
