//! Hessian–vector products without materializing blocks, and the
//! probe-based estimators that sit on top of them.
//!
//! A tangent `t` is pushed forward from the chosen offsets (and optionally a
//! parameter direction); a co-state `ρ_x = d(∂L/∂f_x)` is then pulled back:
//!
//! ```text
//! ρ_x = Σ_{u∈Ch(x)} [ D_{u←x}ᵀ ρ_u + Σ_{p∈Pa(u)} C_{u;x,p} t_p + E_{u,x} r_{θ_u} ]
//! ```
//!
//! so that `ρ_v = Σ_w H_{v,w} r_w`.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::calculus::{
    curvature_apply, jvp_edge, mixed_param_apply, mixed_param_apply_tr, param_jvp, param_vjp, vjp_edge,
    BackwardState, ForwardState,
};
use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId, NodeKind};
use crate::hessian::{Evaluated, Mode};
use crate::linalg::{axpy, norm, norm_sq, Matrix};

/// Per-node tangent aligned with the forward values.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentState {
    tangents: Vec<Vec<f64>>,
    active: Vec<bool>,
}

impl TangentState {
    pub fn tangent(&self, v: NodeId) -> &[f64] {
        &self.tangents[v.0]
    }

    /// False when the tangent at `v` is structurally zero.
    pub fn is_active(&self, v: NodeId) -> bool {
        self.active[v.0]
    }
}

/// Linearized forward pass seeded with offsets at `sources` and, when given,
/// a full-length parameter direction.
pub fn tangent_forward(
    g: &Graph,
    fs: &ForwardState,
    sources: &[(NodeId, &[f64])],
    param_dir: Option<&[f64]>,
) -> Result<TangentState> {
    if let Some(r) = param_dir {
        if r.len() != g.param_count() {
            return Err(Error::DimensionMismatch { context: "parameter direction", expected: g.param_count(), found: r.len() });
        }
    }
    for (v, r) in sources {
        if r.len() != g.dim(*v) {
            return Err(Error::DimensionMismatch { context: "tangent source", expected: g.dim(*v), found: r.len() });
        }
    }
    let n = g.len();
    let mut tangents: Vec<Vec<f64>> = g.ids().map(|v| vec![0.0; g.dim(v)]).collect();
    let mut active = vec![false; n];
    for &x in g.topological_order() {
        let mut t = vec![0.0; g.dim(x)];
        let mut on = false;
        for &q in g.parents(x) {
            if active[q.0] {
                axpy(&mut t, 1.0, &jvp_edge(g, fs, x, q, &tangents[q.0])?);
                on = true;
            }
        }
        if let (Some(r), Some(slot)) = (param_dir, g.param_slot(x)) {
            axpy(&mut t, 1.0, &param_jvp(g, fs, x, &r[slot.offset..slot.offset + slot.len])?);
            on = true;
        }
        for (v, r) in sources {
            if *v == x {
                axpy(&mut t, 1.0, r);
                on = true;
            }
        }
        tangents[x.0] = t;
        active[x.0] = on;
    }
    Ok(TangentState { tangents, active })
}

fn has_curvature(kind: &NodeKind) -> bool {
    match kind {
        NodeKind::Activation(a) => !a.is_piecewise_linear(),
        NodeKind::SoftmaxAttention { .. } | NodeKind::LossMse | NodeKind::LossSoftmaxCe { .. } => true,
        _ => false,
    }
}

fn admits(g: &Graph, mode: Mode, u: NodeId) -> bool {
    match mode {
        Mode::Full => true,
        Mode::GaussNewton => u == g.out(),
        Mode::Tensor => u != g.out(),
    }
}

/// Co-states `ρ_x` for every node.
pub fn costate(
    g: &Graph,
    fs: &ForwardState,
    bs: &BackwardState,
    ts: &TangentState,
    param_dir: Option<&[f64]>,
    mode: Mode,
) -> Result<Vec<Vec<f64>>> {
    let mut rho: Vec<Vec<f64>> = g.ids().map(|v| vec![0.0; g.dim(v)]).collect();
    let mut live = vec![false; g.len()];
    for &u in g.topological_order().iter().rev() {
        let omega = bs.grad(u);
        let curv = admits(g, mode, u) && has_curvature(g.kind(u));
        let mixed = mode != Mode::GaussNewton && param_dir.is_some() && g.param_slot(u).is_some();
        for &x in g.parents(u) {
            let mut acc = vec![0.0; g.dim(x)];
            let mut on = false;
            if live[u.0] {
                acc = vjp_edge(g, fs, u, x, &rho[u.0])?;
                on = true;
            }
            if curv {
                for &p in g.parents(u) {
                    if ts.is_active(p) {
                        axpy(&mut acc, 1.0, &curvature_apply(g, fs, u, x, p, omega, ts.tangent(p))?);
                        on = true;
                    }
                }
            }
            if mixed {
                let r = param_dir.expect("checked");
                let slot = g.param_slot(u).expect("checked");
                axpy(&mut acc, 1.0, &mixed_param_apply(g, fs, u, x, omega, &r[slot.offset..slot.offset + slot.len])?);
                on = true;
            }
            if on {
                axpy(&mut rho[x.0], 1.0, &acc);
                live[x.0] = true;
            }
        }
    }
    Ok(rho)
}

/// `Σ_w H_{v,w} r_w` for one sample.
pub fn block_hvp(
    g: &Graph,
    fs: &ForwardState,
    bs: &BackwardState,
    v: NodeId,
    sources: &[(NodeId, &[f64])],
    mode: Mode,
) -> Result<Vec<f64>> {
    let ts = tangent_forward(g, fs, sources, None)?;
    let mut rho = costate(g, fs, bs, &ts, None, mode)?;
    Ok(core::mem::take(&mut rho[v.0]))
}

/// `∇²_θ L · r` for one sample, shared slices summed.
pub fn sample_param_hvp(g: &Graph, fs: &ForwardState, bs: &BackwardState, r: &[f64]) -> Result<Vec<f64>> {
    let ts = tangent_forward(g, fs, &[], Some(r))?;
    let rho = costate(g, fs, bs, &ts, Some(r), Mode::Full)?;
    let mut out = vec![0.0; g.param_count()];
    for u in g.param_nodes() {
        let slot = g.param_slot(u).expect("parameter node");
        let dst = &mut out[slot.offset..slot.offset + slot.len];
        axpy(dst, 1.0, &param_vjp(g, fs, u, &rho[u.0])?);
        for &p in g.parents(u) {
            if ts.is_active(p) {
                axpy(dst, 1.0, &mixed_param_apply_tr(g, fs, u, p, bs.grad(u), ts.tangent(p))?);
            }
        }
    }
    Ok(out)
}

/// Batch-mean `∇²_θ L · r`.
pub fn param_hvp(g: &Graph, evals: &[Evaluated], r: &[f64]) -> Result<Vec<f64>> {
    if r.len() != g.param_count() {
        return Err(Error::DimensionMismatch { context: "parameter direction", expected: g.param_count(), found: r.len() });
    }
    if evals.is_empty() {
        return Err(Error::InsufficientData("no samples"));
    }
    let mut acc = vec![0.0; r.len()];
    for e in evals {
        axpy(&mut acc, 1.0, &sample_param_hvp(g, &e.forward, &e.backward, r)?);
    }
    let n = evals.len() as f64;
    acc.iter_mut().for_each(|x| *x /= n);
    Ok(acc)
}

/// A linear map with access to its transpose.
pub trait BlockOperator {
    fn rows(&self) -> usize;
    fn cols(&self) -> usize;
    fn apply(&self, x: &[f64]) -> Vec<f64>;
    fn apply_tr(&self, y: &[f64]) -> Vec<f64>;
}

impl BlockOperator for Matrix {
    fn rows(&self) -> usize {
        Matrix::rows(self)
    }

    fn cols(&self) -> usize {
        Matrix::cols(self)
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.matvec(x).expect("probe length")
    }

    fn apply_tr(&self, y: &[f64]) -> Vec<f64> {
        self.tr_matvec(y).expect("probe length")
    }
}

/// Batch-mean `H_{v,w}` in one mode, applied by co-state propagation.
pub struct PairOperator<'a> {
    pub g: &'a Graph,
    pub evals: &'a [Evaluated],
    pub v: NodeId,
    pub w: NodeId,
    pub mode: Mode,
}

impl PairOperator<'_> {
    fn mean(&self, at: NodeId, src: NodeId, x: &[f64]) -> Vec<f64> {
        let mut acc = vec![0.0; self.g.dim(at)];
        for e in self.evals {
            let y = block_hvp(self.g, &e.forward, &e.backward, at, &[(src, x)], self.mode).expect("pair operator");
            axpy(&mut acc, 1.0, &y);
        }
        let n = self.evals.len().max(1) as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        acc
    }
}

impl BlockOperator for PairOperator<'_> {
    fn rows(&self) -> usize {
        self.g.dim(self.v)
    }

    fn cols(&self) -> usize {
        self.g.dim(self.w)
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.mean(self.v, self.w, x)
    }

    fn apply_tr(&self, y: &[f64]) -> Vec<f64> {
        self.mean(self.w, self.v, y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ProbeDistribution {
    #[default]
    Rademacher,
    Gaussian,
}

/// Probe `k` depends only on `(seed, k)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProbeStream {
    pub seed: u64,
    pub distribution: ProbeDistribution,
    counter: u64,
}

impl ProbeStream {
    pub fn new(seed: u64, distribution: ProbeDistribution) -> Self {
        ProbeStream { seed, distribution, counter: 0 }
    }

    pub fn rademacher(seed: u64) -> Self {
        Self::new(seed, ProbeDistribution::Rademacher)
    }

    pub fn counter(&self) -> u64 {
        self.counter
    }

    pub fn probe(&self, index: u64, dim: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index);
        match self.distribution {
            ProbeDistribution::Rademacher => (0..dim).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect(),
            ProbeDistribution::Gaussian => (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect(),
        }
    }

    pub fn next_probe(&mut self, dim: usize) -> Vec<f64> {
        let z = self.probe(self.counter, dim);
        self.counter += 1;
        z
    }
}

/// `(1/m) Σ_k ‖A z_k‖²`
pub fn hutchinson_frob_sq(op: impl Fn(&[f64]) -> Vec<f64>, dim: usize, m: usize, stream: &mut ProbeStream) -> f64 {
    if m == 0 {
        return 0.0;
    }
    (0..m).map(|_| norm_sq(&op(&stream.next_probe(dim)))).sum::<f64>() / m as f64
}

pub const DEFAULT_POWER_ITERS: usize = 50;
pub const DEFAULT_SPECTRAL_FLOOR: f64 = 1e-24;

/// Power iteration on `AᵀA`, started from the next probe.
pub fn power_spectral_sq<O: BlockOperator + ?Sized>(op: &O, iters: usize, stream: &mut ProbeStream) -> f64 {
    let mut q = stream.next_probe(op.cols());
    let n = norm(&q);
    if n == 0.0 {
        return 0.0;
    }
    q.iter_mut().for_each(|x| *x /= n);
    for _ in 0..iters {
        let next = op.apply_tr(&op.apply(&q));
        let n = norm(&next);
        if n == 0.0 {
            return 0.0;
        }
        q = next.into_iter().map(|x| x / n).collect();
    }
    norm_sq(&op.apply(&q))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StableRankEstimate {
    Value(f64),
    /// Spectral estimate fell below the floor.
    Degenerate,
}

impl StableRankEstimate {
    pub fn value(self) -> Option<f64> {
        match self {
            StableRankEstimate::Value(x) => Some(x),
            StableRankEstimate::Degenerate => None,
        }
    }
}

pub fn stochastic_stable_rank<O: BlockOperator + ?Sized>(
    op: &O,
    m: usize,
    iters: usize,
    stream: &mut ProbeStream,
    floor: f64,
) -> StableRankEstimate {
    let frob = hutchinson_frob_sq(|z| op.apply(z), op.cols(), m, stream);
    let top = power_spectral_sq(op, iters, stream);
    if top < floor {
        StableRankEstimate::Degenerate
    } else {
        StableRankEstimate::Value(frob / top)
    }
}

/// `sqrt(‖H^T‖²) / (sqrt(‖H^GN‖²) + eps)`, both Hutchinson estimates driven by
/// the same probes.
pub fn stochastic_gn_gap<G, T>(gn: &G, tensor: &T, m: usize, stream: &mut ProbeStream, eps: f64) -> f64
where
    G: BlockOperator + ?Sized,
    T: BlockOperator + ?Sized,
{
    if m == 0 {
        return 0.0;
    }
    let (mut num, mut den) = (0.0, 0.0);
    for _ in 0..m {
        let z = stream.next_probe(gn.cols());
        num += norm_sq(&tensor.apply(&z));
        den += norm_sq(&gn.apply(&z));
    }
    let m = m as f64;
    libm::sqrt(num / m) / (libm::sqrt(den / m) + eps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::gaussian_vector;

    #[test]
    fn hutchinson_identity_and_zero() {
        let mut s = ProbeStream::rademacher(3);
        assert_eq!(hutchinson_frob_sq(|z| z.to_vec(), 7, 5, &mut s), 7.0);
        assert_eq!(hutchinson_frob_sq(|z| vec![0.0; z.len()], 7, 5, &mut s), 0.0);
    }

    #[test]
    fn hutchinson_seeded_matrix() {
        let a = Matrix::new(8, 8, gaussian_vector(64, 17)).unwrap();
        let exact = a.frobenius_norm().powi(2);
        let est = hutchinson_frob_sq(|z| a.matvec(z).unwrap(), 8, 2000, &mut ProbeStream::rademacher(2024));
        assert!((est - exact).abs() / exact < 0.1, "{est} vs {exact}");
    }

    #[test]
    fn probes_are_indexed() {
        let mut s = ProbeStream::new(9, ProbeDistribution::Gaussian);
        let a = s.next_probe(4);
        let b = s.next_probe(4);
        assert_eq!(a, s.probe(0, 4));
        assert_eq!(b, s.probe(1, 4));
        assert_ne!(a, b);
    }

    #[test]
    fn stable_rank_cases() {
        let u = gaussian_vector(5, 1);
        let w = gaussian_vector(4, 2);
        let r1 = Matrix::outer(&u, &w);
        let est = stochastic_stable_rank(&r1, 200, 50, &mut ProbeStream::rademacher(5), DEFAULT_SPECTRAL_FLOOR);
        assert!((est.value().unwrap() - 1.0).abs() < 0.15);
        let z = Matrix::zeros(3, 3);
        assert_eq!(stochastic_stable_rank(&z, 10, 10, &mut ProbeStream::rademacher(5), DEFAULT_SPECTRAL_FLOOR), StableRankEstimate::Degenerate);
    }
}
