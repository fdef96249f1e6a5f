//! Forward and backward passes plus exact first and second derivatives of
//! every node kind.
//!
//! Second-order information is exposed in contracted form: for a node `u`
//! with output weights `ω` (normally the backward signal at `u`) the
//! *weighted curvature* `C_{u;a,b} = Σ_i ω_i ∂²f_{u,i}/∂f_a∂f_b` is a
//! `d_a × d_b` matrix. Full rank-3 tensors are recovered by contracting with
//! unit weights.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId, NodeKind};
use crate::linalg::{axpy, dot, Matrix, Tensor3};

/// Side input consumed by the loss node.
#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    Vector(Vec<f64>),
    Class(usize),
}

/// One batch element: values for the input nodes (in node order) and the target.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub inputs: Vec<Vec<f64>>,
    pub target: Target,
}

impl Sample {
    pub fn new(inputs: Vec<Vec<f64>>, target: Target) -> Self {
        Sample { inputs, target }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardState {
    theta: Vec<f64>,
    values: Vec<Vec<f64>>,
    /// Row-stochastic attention weights or class probabilities; empty otherwise.
    aux: Vec<Vec<f64>>,
    target: Target,
    loss: f64,
}

impl ForwardState {
    pub fn value(&self, v: NodeId) -> &[f64] {
        &self.values[v.0]
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn loss(&self) -> f64 {
        self.loss
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn target(&self) -> &Target {
        &self.target
    }

    /// Softmax weights of an attention node (`S × S`, row-major) or the
    /// class probabilities of a cross-entropy loss.
    pub fn probabilities(&self, v: NodeId) -> &[f64] {
        &self.aux[v.0]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackwardState {
    grads: Vec<Vec<f64>>,
}

impl BackwardState {
    /// `δ_v = ∂L/∂f_v`
    pub fn grad(&self, v: NodeId) -> &[f64] {
        &self.grads[v.0]
    }

    pub fn grads(&self) -> &[Vec<f64>] {
        &self.grads
    }
}

/// A local linear map in the cheapest representation that is exact.
#[derive(Debug, Clone, PartialEq)]
pub enum LocalOp {
    Zero { rows: usize, cols: usize },
    Identity(usize),
    Diagonal(Vec<f64>),
    Dense(Matrix),
}

impl LocalOp {
    pub fn rows(&self) -> usize {
        match self {
            LocalOp::Zero { rows, .. } => *rows,
            LocalOp::Identity(n) => *n,
            LocalOp::Diagonal(d) => d.len(),
            LocalOp::Dense(m) => m.rows(),
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            LocalOp::Zero { cols, .. } => *cols,
            LocalOp::Identity(n) => *n,
            LocalOp::Diagonal(d) => d.len(),
            LocalOp::Dense(m) => m.cols(),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            LocalOp::Zero { .. } => true,
            LocalOp::Identity(_) => false,
            LocalOp::Diagonal(d) => d.iter().all(|&x| x == 0.0),
            LocalOp::Dense(m) => m.max_abs() == 0.0,
        }
    }

    pub fn to_dense(&self) -> Matrix {
        match self {
            LocalOp::Zero { rows, cols } => Matrix::zeros(*rows, *cols),
            LocalOp::Identity(n) => Matrix::identity(*n),
            LocalOp::Diagonal(d) => Matrix::from_diag(d),
            LocalOp::Dense(m) => m.clone(),
        }
    }

    pub fn transpose(&self) -> LocalOp {
        match self {
            LocalOp::Zero { rows, cols } => LocalOp::Zero { rows: *cols, cols: *rows },
            LocalOp::Dense(m) => LocalOp::Dense(m.transpose()),
            other => other.clone(),
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        match self {
            LocalOp::Zero { rows, .. } => vec![0.0; *rows],
            LocalOp::Identity(_) => x.to_vec(),
            LocalOp::Diagonal(d) => d.iter().zip(x).map(|(a, b)| a * b).collect(),
            LocalOp::Dense(m) => m.matvec(x).expect("local operator shape"),
        }
    }

    pub fn apply_tr(&self, y: &[f64]) -> Vec<f64> {
        match self {
            LocalOp::Zero { cols, .. } => vec![0.0; *cols],
            LocalOp::Identity(_) => y.to_vec(),
            LocalOp::Diagonal(d) => d.iter().zip(y).map(|(a, b)| a * b).collect(),
            LocalOp::Dense(m) => m.tr_matvec(y).expect("local operator shape"),
        }
    }

    /// `op · m`
    pub fn mul(&self, m: &Matrix) -> Matrix {
        match self {
            LocalOp::Zero { rows, .. } => Matrix::zeros(*rows, m.cols()),
            LocalOp::Identity(_) => m.clone(),
            LocalOp::Diagonal(d) => Matrix::from_fn(m.rows(), m.cols(), |i, j| d[i] * m[(i, j)]),
            LocalOp::Dense(a) => a.matmul(m).expect("local operator shape"),
        }
    }

    /// `opᵀ · m`
    pub fn tr_mul(&self, m: &Matrix) -> Matrix {
        match self {
            LocalOp::Zero { cols, .. } => Matrix::zeros(*cols, m.cols()),
            LocalOp::Identity(_) => m.clone(),
            LocalOp::Diagonal(d) => Matrix::from_fn(m.rows(), m.cols(), |i, j| d[i] * m[(i, j)]),
            LocalOp::Dense(a) => a.tr_matmul(m).expect("local operator shape"),
        }
    }

    /// `m · op`
    pub fn right_mul(&self, m: &Matrix) -> Matrix {
        match self {
            LocalOp::Zero { cols, .. } => Matrix::zeros(m.rows(), *cols),
            LocalOp::Identity(_) => m.clone(),
            LocalOp::Diagonal(d) => Matrix::from_fn(m.rows(), m.cols(), |i, j| m[(i, j)] * d[j]),
            LocalOp::Dense(a) => m.matmul(a).expect("local operator shape"),
        }
    }
}

struct LinearView<'a> {
    w: &'a [f64],
    b: Option<&'a [f64]>,
    out: usize,
    inp: usize,
}

impl LinearView<'_> {
    #[inline]
    fn w(&self, i: usize, j: usize) -> f64 {
        self.w[i * self.inp + j]
    }
}

fn linear_view<'a>(g: &Graph, theta: &'a [f64], v: NodeId) -> LinearView<'a> {
    let NodeKind::Linear { out, bias } = *g.kind(v) else { unreachable!("not a linear node") };
    let inp = g.shape(g.parents(v)[0]).1;
    let slot = g.param_slot(v).expect("linear nodes own parameters");
    let w = &theta[slot.offset..slot.offset + out * inp];
    let b = bias.then(|| &theta[slot.offset + out * inp..slot.offset + out * inp + out]);
    LinearView { w, b, out, inp }
}

fn parent_index(g: &Graph, u: NodeId, p: NodeId) -> Result<usize> {
    g.parents(u).iter().position(|&x| x == p).ok_or(Error::NoSuchEdge { from: p, to: u })
}

fn softmax_in_place(x: &mut [f64]) {
    let m = x.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let mut s = 0.0;
    for v in x.iter_mut() {
        *v = libm::exp(*v - m);
        s += *v;
    }
    x.iter_mut().for_each(|v| *v /= s);
}

pub fn forward(g: &Graph, theta: &[f64], sample: &Sample) -> Result<ForwardState> {
    forward_with_offsets(g, theta, sample, &[])
}

/// Forward pass with additive offsets `f_v ← g_v(…) + ε_v`; ancestors of
/// an offset node are unaffected.
pub fn forward_with_offsets(
    g: &Graph,
    theta: &[f64],
    sample: &Sample,
    offsets: &[(NodeId, &[f64])],
) -> Result<ForwardState> {
    if theta.len() != g.param_count() {
        return Err(Error::DimensionMismatch {
            context: "parameter vector",
            expected: g.param_count(),
            found: theta.len(),
        });
    }
    let n = g.len();
    let mut values: Vec<Vec<f64>> = vec![Vec::new(); n];
    let mut aux: Vec<Vec<f64>> = vec![Vec::new(); n];
    let mut input_index = 0;
    let inputs = g.inputs();
    if sample.inputs.len() != inputs.len() {
        return Err(Error::DimensionMismatch {
            context: "number of input tensors",
            expected: inputs.len(),
            found: sample.inputs.len(),
        });
    }
    let mut loss = 0.0;
    for &v in g.topological_order() {
        let (rows, cols) = g.shape(v);
        let ps = g.parents(v);
        let mut f = match g.kind(v) {
            NodeKind::Input { .. } => {
                let k = inputs.iter().position(|&x| x == v).unwrap_or(input_index);
                input_index += 1;
                let x = &sample.inputs[k];
                if x.len() != rows * cols {
                    return Err(Error::DimensionMismatch {
                        context: "input tensor",
                        expected: rows * cols,
                        found: x.len(),
                    });
                }
                x.clone()
            }
            NodeKind::Linear { .. } => {
                let lin = linear_view(g, theta, v);
                let x = &values[ps[0].0];
                let mut f = vec![0.0; rows * cols];
                for s in 0..rows {
                    let xs = &x[s * lin.inp..(s + 1) * lin.inp];
                    for i in 0..lin.out {
                        let bias = lin.b.map_or(0.0, |b| b[i]);
                        f[s * lin.out + i] = dot(&lin.w[i * lin.inp..(i + 1) * lin.inp], xs) + bias;
                    }
                }
                f
            }
            NodeKind::Activation(act) => values[ps[0].0].iter().map(|&z| act.value(z)).collect(),
            NodeKind::SumMerge => {
                let mut f = values[ps[0].0].clone();
                for p in &ps[1..] {
                    axpy(&mut f, 1.0, &values[p.0]);
                }
                f
            }
            NodeKind::ConcatMerge => {
                let mut f = Vec::with_capacity(rows * cols);
                for s in 0..rows {
                    for p in ps {
                        let c = g.shape(*p).1;
                        f.extend_from_slice(&values[p.0][s * c..(s + 1) * c]);
                    }
                }
                f
            }
            NodeKind::MeanPoolRows { seq_len } => {
                let x = &values[ps[0].0];
                let mut f = vec![0.0; cols];
                for s in 0..*seq_len {
                    axpy(&mut f, 1.0 / *seq_len as f64, &x[s * cols..(s + 1) * cols]);
                }
                f
            }
            NodeKind::SoftmaxAttention { d_k } => {
                let (q, k, val) = (&values[ps[0].0], &values[ps[1].0], &values[ps[2].0]);
                let s_len = rows;
                let dv = cols;
                let scale = 1.0 / libm::sqrt(*d_k as f64);
                let mut probs = vec![0.0; s_len * s_len];
                let mut f = vec![0.0; rows * cols];
                for a in 0..s_len {
                    let row = &mut probs[a * s_len..(a + 1) * s_len];
                    for j in 0..s_len {
                        row[j] = dot(&q[a * d_k..(a + 1) * d_k], &k[j * d_k..(j + 1) * d_k]) * scale;
                    }
                    softmax_in_place(row);
                    for j in 0..s_len {
                        axpy(&mut f[a * dv..(a + 1) * dv], row[j], &val[j * dv..(j + 1) * dv]);
                    }
                }
                aux[v.0] = probs;
                f
            }
            NodeKind::LossMse => {
                let y = &values[ps[0].0];
                let Target::Vector(t) = &sample.target else {
                    return Err(Error::DimensionMismatch { context: "regression target", expected: y.len(), found: 1 });
                };
                if t.len() != y.len() {
                    return Err(Error::DimensionMismatch {
                        context: "regression target",
                        expected: y.len(),
                        found: t.len(),
                    });
                }
                let l = y.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / y.len() as f64;
                vec![l]
            }
            NodeKind::LossSoftmaxCe { classes } => {
                let z = &values[ps[0].0];
                let Target::Class(c) = sample.target else {
                    return Err(Error::DimensionMismatch { context: "class target", expected: 1, found: 0 });
                };
                if c >= *classes {
                    return Err(Error::DimensionMismatch { context: "class index", expected: *classes, found: c });
                }
                let m = z.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
                let lse = m + libm::log(z.iter().map(|&x| libm::exp(x - m)).sum::<f64>());
                let mut p = z.clone();
                softmax_in_place(&mut p);
                aux[v.0] = p;
                vec![lse - z[c]]
            }
        };
        for (w, eps) in offsets {
            if *w == v {
                if eps.len() != f.len() {
                    return Err(Error::DimensionMismatch { context: "offset", expected: f.len(), found: eps.len() });
                }
                axpy(&mut f, 1.0, eps);
            }
        }
        if f.iter().any(|x| !x.is_finite()) {
            return Err(Error::NumericOverflow { node: v });
        }
        if v == g.out() {
            loss = f[0];
        }
        values[v.0] = f;
    }
    Ok(ForwardState { theta: theta.to_vec(), values, aux, target: sample.target.clone(), loss })
}

/// Reverse sweep `δ_v = Σ_{u ∈ Ch(v)} D_{u←v}ᵀ δ_u` seeded with `δ_loss = 1`.
pub fn backward(g: &Graph, fs: &ForwardState) -> BackwardState {
    let mut grads: Vec<Vec<f64>> = g.ids().map(|v| vec![0.0; g.dim(v)]).collect();
    grads[g.out().0][0] = 1.0;
    for &u in g.topological_order().iter().rev() {
        if grads[u.0].iter().all(|&x| x == 0.0) {
            continue;
        }
        let du = grads[u.0].clone();
        for &p in g.parents(u) {
            let contrib = vjp_edge(g, fs, u, p, &du).expect("edge exists");
            axpy(&mut grads[p.0], 1.0, &contrib);
        }
    }
    BackwardState { grads }
}

/// `∇_θ L` with shared slices summed.
pub fn param_gradient(g: &Graph, fs: &ForwardState, bs: &BackwardState) -> Vec<f64> {
    let mut out = vec![0.0; g.param_count()];
    for v in g.param_nodes() {
        let slot = g.param_slot(v).expect("parameter node");
        let gv = param_vjp(g, fs, v, bs.grad(v)).expect("parameter node");
        axpy(&mut out[slot.offset..slot.offset + slot.len], 1.0, &gv);
    }
    out
}

/// `∇_{f_out} L` at the loss input.
pub fn loss_gradient(g: &Graph, fs: &ForwardState) -> Vec<f64> {
    let out = g.loss_input();
    let y = fs.value(out);
    match (g.kind(g.out()), fs.target()) {
        (NodeKind::LossMse, Target::Vector(t)) => {
            let s = 2.0 / y.len() as f64;
            y.iter().zip(t).map(|(a, b)| s * (a - b)).collect()
        }
        (NodeKind::LossSoftmaxCe { .. }, Target::Class(c)) => {
            let mut p = fs.probabilities(g.out()).to_vec();
            p[*c] -= 1.0;
            p
        }
        _ => unreachable!("target kind checked in forward"),
    }
}

/// `∇²_{f_out} L` at the loss input.
pub fn loss_hessian(g: &Graph, fs: &ForwardState) -> Matrix {
    let d = g.dim(g.loss_input());
    match g.kind(g.out()) {
        NodeKind::LossMse => Matrix::identity(d).scale(2.0 / d as f64),
        _ => {
            let p = fs.probabilities(g.out());
            Matrix::from_fn(d, d, |i, j| if i == j { p[i] - p[i] * p[j] } else { -p[i] * p[j] })
        }
    }
}

struct AttentionParts<'a> {
    q: &'a [f64],
    k: &'a [f64],
    v: &'a [f64],
    o: &'a [f64],
    p: &'a [f64],
    s: usize,
    dk: usize,
    dv: usize,
    c: f64,
}

fn attention_parts<'a>(g: &Graph, fs: &'a ForwardState, u: NodeId) -> AttentionParts<'a> {
    let NodeKind::SoftmaxAttention { d_k } = *g.kind(u) else { unreachable!("not attention") };
    let ps = g.parents(u);
    let (s, dv) = g.shape(u);
    AttentionParts {
        q: fs.value(ps[0]),
        k: fs.value(ps[1]),
        v: fs.value(ps[2]),
        o: fs.value(u),
        p: fs.probabilities(u),
        s,
        dk: d_k,
        dv,
        c: libm::sqrt(d_k as f64),
    }
}

fn attention_jacobian(at: &AttentionParts<'_>, which: usize) -> Matrix {
    let (s, dk, dv, c) = (at.s, at.dk, at.dv, at.c);
    let pr = |a: usize, j: usize| at.p[a * s + j];
    match which {
        0 => {
            let mut m = Matrix::zeros(s * dv, s * dk);
            for a in 0..s {
                for e in 0..dv {
                    for mm in 0..dk {
                        let mut acc = 0.0;
                        for j in 0..s {
                            acc += pr(a, j) * (at.v[j * dv + e] - at.o[a * dv + e]) * at.k[j * dk + mm];
                        }
                        m[(a * dv + e, a * dk + mm)] = acc / c;
                    }
                }
            }
            m
        }
        1 => {
            let mut m = Matrix::zeros(s * dv, s * dk);
            for a in 0..s {
                for e in 0..dv {
                    for b in 0..s {
                        let coef = pr(a, b) * (at.v[b * dv + e] - at.o[a * dv + e]) / c;
                        for mm in 0..dk {
                            m[(a * dv + e, b * dk + mm)] = coef * at.q[a * dk + mm];
                        }
                    }
                }
            }
            m
        }
        _ => {
            let mut m = Matrix::zeros(s * dv, s * dv);
            for a in 0..s {
                for b in 0..s {
                    for e in 0..dv {
                        m[(a * dv + e, b * dv + e)] = pr(a, b);
                    }
                }
            }
            m
        }
    }
}

/// Weighted second derivatives of attention for the parent-index pair `(ia, ib)`.
fn attention_curvature(at: &AttentionParts<'_>, omega: &[f64], ia: usize, ib: usize) -> Matrix {
    if ia > ib {
        return attention_curvature(at, omega, ib, ia).transpose();
    }
    let (s, dk, dv, c) = (at.s, at.dk, at.dv, at.c);
    let dim = |i: usize| if i == 2 { s * dv } else { s * dk };
    let mut m = Matrix::zeros(dim(ia), dim(ib));
    if ia == 2 && ib == 2 {
        return m;
    }
    let kmat = Matrix::new(s, dk, at.k.to_vec()).expect("key shape");
    for a in 0..s {
        let p = &at.p[a * s..(a + 1) * s];
        let w = &omega[a * dv..(a + 1) * dv];
        let q = &at.q[a * dk..(a + 1) * dk];
        let gv: Vec<f64> = (0..s).map(|b| dot(w, &at.v[b * dv..(b + 1) * dv])).collect();
        let gbar = dot(p, &gv);
        let gamma: Vec<f64> = (0..s).map(|b| p[b] * (gv[b] - gbar)).collect();
        let hss = Matrix::from_fn(s, s, |j, k| {
            let diag = if j == k { gamma[j] } else { 0.0 };
            diag - p[j] * gamma[k] - p[k] * gamma[j]
        });
        let amat = Matrix::from_fn(s, s, |k, b| if k == b { p[b] - p[k] * p[b] } else { -p[k] * p[b] });
        match (ia, ib) {
            (0, 0) => {
                let khk = kmat.tr_matmul(&hss.matmul(&kmat).expect("shape")).expect("shape");
                for i in 0..dk {
                    for j in 0..dk {
                        m[(a * dk + i, a * dk + j)] += khk[(i, j)] / (c * c);
                    }
                }
            }
            (0, 1) => {
                let kh = kmat.tr_matmul(&hss).expect("shape");
                for i in 0..dk {
                    for b in 0..s {
                        for j in 0..dk {
                            let mut x = kh[(i, b)] * q[j] / (c * c);
                            if i == j {
                                x += gamma[b] / c;
                            }
                            m[(a * dk + i, b * dk + j)] += x;
                        }
                    }
                }
            }
            (1, 1) => {
                for b in 0..s {
                    for b2 in 0..s {
                        let h = hss[(b, b2)] / (c * c);
                        if h == 0.0 {
                            continue;
                        }
                        for i in 0..dk {
                            for j in 0..dk {
                                m[(b * dk + i, b2 * dk + j)] += q[i] * h * q[j];
                            }
                        }
                    }
                }
            }
            (0, 2) => {
                let ka = kmat.tr_matmul(&amat).expect("shape");
                for i in 0..dk {
                    for b in 0..s {
                        for e in 0..dv {
                            m[(a * dk + i, b * dv + e)] += ka[(i, b)] * w[e] / c;
                        }
                    }
                }
            }
            (1, 2) => {
                for b2 in 0..s {
                    for i in 0..dk {
                        let lhs = q[i] / c;
                        for b in 0..s {
                            let coef = lhs * amat[(b2, b)];
                            for e in 0..dv {
                                m[(b2 * dk + i, b * dv + e)] += coef * w[e];
                            }
                        }
                    }
                }
            }
            _ => unreachable!(),
        }
    }
    m
}

/// `D_{u←p} = ∂f_u/∂f_p`.
pub fn jacobian_edge(g: &Graph, fs: &ForwardState, u: NodeId, p: NodeId) -> Result<LocalOp> {
    let k = parent_index(g, u, p)?;
    let du = g.dim(u);
    let dp = g.dim(p);
    Ok(match g.kind(u) {
        NodeKind::Input { .. } => unreachable!("inputs have no parents"),
        NodeKind::Linear { .. } => {
            let lin = linear_view(g, fs.theta(), u);
            let rows = g.shape(u).0;
            let mut m = Matrix::zeros(du, dp);
            for s in 0..rows {
                for i in 0..lin.out {
                    for j in 0..lin.inp {
                        m[(s * lin.out + i, s * lin.inp + j)] = lin.w(i, j);
                    }
                }
            }
            LocalOp::Dense(m)
        }
        NodeKind::Activation(act) => LocalOp::Diagonal(fs.value(p).iter().map(|&z| act.d1(z)).collect()),
        NodeKind::SumMerge => LocalOp::Identity(du),
        NodeKind::ConcatMerge => {
            let (rows, cols) = g.shape(u);
            let pc = g.shape(p).1;
            let off: usize = g.parents(u)[..k].iter().map(|x| g.shape(*x).1).sum();
            let mut m = Matrix::zeros(du, dp);
            for s in 0..rows {
                for j in 0..pc {
                    m[(s * cols + off + j, s * pc + j)] = 1.0;
                }
            }
            LocalOp::Dense(m)
        }
        NodeKind::MeanPoolRows { seq_len } => {
            let cols = g.shape(u).1;
            let mut m = Matrix::zeros(du, dp);
            for s in 0..*seq_len {
                for c in 0..cols {
                    m[(c, s * cols + c)] = 1.0 / *seq_len as f64;
                }
            }
            LocalOp::Dense(m)
        }
        NodeKind::SoftmaxAttention { .. } => LocalOp::Dense(attention_jacobian(&attention_parts(g, fs, u), k)),
        NodeKind::LossMse | NodeKind::LossSoftmaxCe { .. } => {
            LocalOp::Dense(Matrix::new(1, dp, loss_gradient(g, fs)).expect("shape"))
        }
    })
}

/// `D_v = ∂f_v/∂θ_v`, columns in parameter-slot order.
pub fn jacobian_param(g: &Graph, fs: &ForwardState, v: NodeId) -> Result<Matrix> {
    let Some(slot) = g.param_slot(v) else { return Err(Error::NoParameters(v)) };
    let lin = linear_view(g, fs.theta(), v);
    let x = fs.value(g.parents(v)[0]);
    let rows = g.shape(v).0;
    let mut m = Matrix::zeros(g.dim(v), slot.len);
    for s in 0..rows {
        for i in 0..lin.out {
            for j in 0..lin.inp {
                m[(s * lin.out + i, i * lin.inp + j)] = x[s * lin.inp + j];
            }
            if lin.b.is_some() {
                m[(s * lin.out + i, lin.out * lin.inp + i)] = 1.0;
            }
        }
    }
    Ok(m)
}

/// `C_{u;a,b} = Σ_i ω_i ∂²f_{u,i}/∂f_a∂f_b` for parents `a`, `b` of `u`.
pub fn weighted_curvature(
    g: &Graph,
    fs: &ForwardState,
    u: NodeId,
    a: NodeId,
    b: NodeId,
    omega: &[f64],
) -> Result<LocalOp> {
    let (ia, ib) = match (parent_index(g, u, a), parent_index(g, u, b)) {
        (Ok(x), Ok(y)) => (x, y),
        _ if a == b => return Err(Error::NoSuchEdge { from: a, to: u }),
        _ => return Err(Error::NotBothParents { node: u, v: a, w: b }),
    };
    let zero = LocalOp::Zero { rows: g.dim(a), cols: g.dim(b) };
    if omega.iter().all(|&x| x == 0.0) {
        return Ok(zero);
    }
    Ok(match g.kind(u) {
        NodeKind::Activation(act) => {
            if act.is_piecewise_linear() {
                zero
            } else {
                LocalOp::Diagonal(fs.value(a).iter().zip(omega).map(|(&z, w)| w * act.d2(z)).collect())
            }
        }
        NodeKind::LossMse => {
            let d = g.dim(a);
            LocalOp::Diagonal(vec![omega[0] * 2.0 / d as f64; d])
        }
        NodeKind::LossSoftmaxCe { .. } => LocalOp::Dense(loss_hessian(g, fs).scale(omega[0])),
        NodeKind::SoftmaxAttention { .. } => {
            LocalOp::Dense(attention_curvature(&attention_parts(g, fs, u), omega, ia, ib))
        }
        _ => zero,
    })
}

/// `E_{u,p} = Σ_i ω_i ∂²f_{u,i}/∂f_p∂θ_u`, a `d_p × p_u` matrix.
pub fn weighted_mixed_param(g: &Graph, fs: &ForwardState, u: NodeId, p: NodeId, omega: &[f64]) -> Result<Matrix> {
    parent_index(g, u, p)?;
    let Some(slot) = g.param_slot(u) else { return Err(Error::NoParameters(u)) };
    let lin = linear_view(g, fs.theta(), u);
    let rows = g.shape(u).0;
    let mut m = Matrix::zeros(g.dim(p), slot.len);
    for s in 0..rows {
        for i in 0..lin.out {
            let w = omega[s * lin.out + i];
            for j in 0..lin.inp {
                m[(s * lin.inp + j, i * lin.inp + j)] = w;
            }
        }
    }
    Ok(m)
}

/// `Σ_i ω_i ∂²f_{v,i}/∂θ_v²`; identically zero for affine nodes.
pub fn weighted_param_curvature(g: &Graph, v: NodeId, _omega: &[f64]) -> Result<Matrix> {
    let Some(slot) = g.param_slot(v) else { return Err(Error::NoParameters(v)) };
    Ok(Matrix::zeros(slot.len, slot.len))
}

fn unit(d: usize, i: usize) -> Vec<f64> {
    let mut e = vec![0.0; d];
    e[i] = 1.0;
    e
}

/// `∂²f_u/∂f_v²`, `d_u × d_v × d_v`.
pub fn tensor_input(g: &Graph, fs: &ForwardState, u: NodeId, v: NodeId) -> Result<Tensor3> {
    let du = g.dim(u);
    let slices = (0..du)
        .map(|i| weighted_curvature(g, fs, u, v, v, &unit(du, i)).map(|c| c.to_dense()))
        .collect::<Result<Vec<_>>>()?;
    Tensor3::from_slices(&slices, g.dim(v), g.dim(v))
}

/// `∂²f_u/∂f_v∂f_w` for two distinct parents.
pub fn tensor_mixed(g: &Graph, fs: &ForwardState, u: NodeId, v: NodeId, w: NodeId) -> Result<Tensor3> {
    if v == w || parent_index(g, u, v).is_err() || parent_index(g, u, w).is_err() {
        return Err(Error::NotBothParents { node: u, v, w });
    }
    let du = g.dim(u);
    let slices = (0..du)
        .map(|i| weighted_curvature(g, fs, u, v, w, &unit(du, i)).map(|c| c.to_dense()))
        .collect::<Result<Vec<_>>>()?;
    Tensor3::from_slices(&slices, g.dim(v), g.dim(w))
}

/// `∂²f_v/∂θ_v²`, `d_v × p_v × p_v`.
pub fn tensor_param(g: &Graph, fs: &ForwardState, v: NodeId) -> Result<Tensor3> {
    let _ = fs;
    let Some(slot) = g.param_slot(v) else { return Err(Error::NoParameters(v)) };
    let dv = g.dim(v);
    let slices = (0..dv)
        .map(|i| weighted_param_curvature(g, v, &unit(dv, i)))
        .collect::<Result<Vec<_>>>()?;
    Tensor3::from_slices(&slices, slot.len, slot.len)
}

/// `∂²f_u/∂f_v∂θ_u`, `d_u × d_v × p_u`.
pub fn tensor_input_param(g: &Graph, fs: &ForwardState, u: NodeId, v: NodeId) -> Result<Tensor3> {
    let Some(slot) = g.param_slot(u) else { return Err(Error::NoParameters(u)) };
    let du = g.dim(u);
    let slices = (0..du)
        .map(|i| weighted_mixed_param(g, fs, u, v, &unit(du, i)))
        .collect::<Result<Vec<_>>>()?;
    Tensor3::from_slices(&slices, g.dim(v), slot.len)
}

/// `D_{u←p} t`
pub fn jvp_edge(g: &Graph, fs: &ForwardState, u: NodeId, p: NodeId, t: &[f64]) -> Result<Vec<f64>> {
    let k = parent_index(g, u, p)?;
    Ok(match g.kind(u) {
        NodeKind::Linear { .. } => {
            let lin = linear_view(g, fs.theta(), u);
            let rows = g.shape(u).0;
            let mut out = vec![0.0; rows * lin.out];
            for s in 0..rows {
                let ts = &t[s * lin.inp..(s + 1) * lin.inp];
                for i in 0..lin.out {
                    out[s * lin.out + i] = dot(&lin.w[i * lin.inp..(i + 1) * lin.inp], ts);
                }
            }
            out
        }
        NodeKind::Activation(act) => fs.value(p).iter().zip(t).map(|(&z, x)| act.d1(z) * x).collect(),
        NodeKind::SumMerge => t.to_vec(),
        NodeKind::ConcatMerge => {
            let (rows, cols) = g.shape(u);
            let pc = g.shape(p).1;
            let off: usize = g.parents(u)[..k].iter().map(|x| g.shape(*x).1).sum();
            let mut out = vec![0.0; rows * cols];
            for s in 0..rows {
                out[s * cols + off..s * cols + off + pc].copy_from_slice(&t[s * pc..(s + 1) * pc]);
            }
            out
        }
        NodeKind::MeanPoolRows { seq_len } => {
            let cols = g.shape(u).1;
            let mut out = vec![0.0; cols];
            for s in 0..*seq_len {
                axpy(&mut out, 1.0 / *seq_len as f64, &t[s * cols..(s + 1) * cols]);
            }
            out
        }
        NodeKind::LossMse | NodeKind::LossSoftmaxCe { .. } => vec![dot(&loss_gradient(g, fs), t)],
        _ => jacobian_edge(g, fs, u, p)?.apply(t),
    })
}

/// `D_{u←p}ᵀ y`
pub fn vjp_edge(g: &Graph, fs: &ForwardState, u: NodeId, p: NodeId, y: &[f64]) -> Result<Vec<f64>> {
    let k = parent_index(g, u, p)?;
    Ok(match g.kind(u) {
        NodeKind::Linear { .. } => {
            let lin = linear_view(g, fs.theta(), u);
            let rows = g.shape(u).0;
            let mut out = vec![0.0; rows * lin.inp];
            for s in 0..rows {
                for i in 0..lin.out {
                    let yi = y[s * lin.out + i];
                    if yi != 0.0 {
                        axpy(&mut out[s * lin.inp..(s + 1) * lin.inp], yi, &lin.w[i * lin.inp..(i + 1) * lin.inp]);
                    }
                }
            }
            out
        }
        NodeKind::Activation(act) => fs.value(p).iter().zip(y).map(|(&z, x)| act.d1(z) * x).collect(),
        NodeKind::SumMerge => y.to_vec(),
        NodeKind::ConcatMerge => {
            let (rows, cols) = g.shape(u);
            let pc = g.shape(p).1;
            let off: usize = g.parents(u)[..k].iter().map(|x| g.shape(*x).1).sum();
            let mut out = Vec::with_capacity(rows * pc);
            for s in 0..rows {
                out.extend_from_slice(&y[s * cols + off..s * cols + off + pc]);
            }
            out
        }
        NodeKind::MeanPoolRows { seq_len } => {
            let mut out = Vec::with_capacity(seq_len * y.len());
            for _ in 0..*seq_len {
                out.extend(y.iter().map(|x| x / *seq_len as f64));
            }
            out
        }
        NodeKind::LossMse | NodeKind::LossSoftmaxCe { .. } => {
            loss_gradient(g, fs).into_iter().map(|x| x * y[0]).collect()
        }
        _ => jacobian_edge(g, fs, u, p)?.apply_tr(y),
    })
}

/// `C_{u;a,b} t`
pub fn curvature_apply(
    g: &Graph,
    fs: &ForwardState,
    u: NodeId,
    a: NodeId,
    b: NodeId,
    omega: &[f64],
    t: &[f64],
) -> Result<Vec<f64>> {
    Ok(match g.kind(u) {
        NodeKind::Activation(act) if a == b && parent_index(g, u, a).is_ok() => {
            if act.is_piecewise_linear() {
                vec![0.0; t.len()]
            } else {
                fs.value(a).iter().zip(omega).zip(t).map(|((&z, w), x)| w * act.d2(z) * x).collect()
            }
        }
        NodeKind::LossMse if a == b && parent_index(g, u, a).is_ok() => {
            let s = omega[0] * 2.0 / t.len() as f64;
            t.iter().map(|x| s * x).collect()
        }
        NodeKind::LossSoftmaxCe { .. } if a == b && parent_index(g, u, a).is_ok() => {
            let p = fs.probabilities(u);
            let pt = dot(p, t);
            p.iter().zip(t).map(|(pi, x)| omega[0] * pi * (x - pt)).collect()
        }
        _ => weighted_curvature(g, fs, u, a, b, omega)?.apply(t),
    })
}

/// `D_v r`
pub fn param_jvp(g: &Graph, fs: &ForwardState, v: NodeId, r: &[f64]) -> Result<Vec<f64>> {
    let Some(slot) = g.param_slot(v) else { return Err(Error::NoParameters(v)) };
    if r.len() != slot.len {
        return Err(Error::DimensionMismatch { context: "parameter direction", expected: slot.len, found: r.len() });
    }
    let lin = linear_view(g, fs.theta(), v);
    let x = fs.value(g.parents(v)[0]);
    let rows = g.shape(v).0;
    let mut out = vec![0.0; rows * lin.out];
    for s in 0..rows {
        for i in 0..lin.out {
            let mut acc = dot(&r[i * lin.inp..(i + 1) * lin.inp], &x[s * lin.inp..(s + 1) * lin.inp]);
            if lin.b.is_some() {
                acc += r[lin.out * lin.inp + i];
            }
            out[s * lin.out + i] = acc;
        }
    }
    Ok(out)
}

/// `D_vᵀ y`
pub fn param_vjp(g: &Graph, fs: &ForwardState, v: NodeId, y: &[f64]) -> Result<Vec<f64>> {
    let Some(slot) = g.param_slot(v) else { return Err(Error::NoParameters(v)) };
    let lin = linear_view(g, fs.theta(), v);
    let x = fs.value(g.parents(v)[0]);
    let rows = g.shape(v).0;
    let mut out = vec![0.0; slot.len];
    for s in 0..rows {
        let xs = &x[s * lin.inp..(s + 1) * lin.inp];
        for i in 0..lin.out {
            let yi = y[s * lin.out + i];
            if yi == 0.0 {
                continue;
            }
            axpy(&mut out[i * lin.inp..(i + 1) * lin.inp], yi, xs);
            if lin.b.is_some() {
                out[lin.out * lin.inp + i] += yi;
            }
        }
    }
    Ok(out)
}

/// `E_{u,p} r`
pub fn mixed_param_apply(
    g: &Graph,
    fs: &ForwardState,
    u: NodeId,
    p: NodeId,
    omega: &[f64],
    r: &[f64],
) -> Result<Vec<f64>> {
    parent_index(g, u, p)?;
    if g.param_slot(u).is_none() {
        return Err(Error::NoParameters(u));
    }
    let lin = linear_view(g, fs.theta(), u);
    let rows = g.shape(u).0;
    let mut out = vec![0.0; rows * lin.inp];
    for s in 0..rows {
        for i in 0..lin.out {
            let w = omega[s * lin.out + i];
            if w != 0.0 {
                axpy(&mut out[s * lin.inp..(s + 1) * lin.inp], w, &r[i * lin.inp..(i + 1) * lin.inp]);
            }
        }
    }
    Ok(out)
}

/// `E_{u,p}ᵀ t`
pub fn mixed_param_apply_tr(
    g: &Graph,
    fs: &ForwardState,
    u: NodeId,
    p: NodeId,
    omega: &[f64],
    t: &[f64],
) -> Result<Vec<f64>> {
    parent_index(g, u, p)?;
    let Some(slot) = g.param_slot(u) else { return Err(Error::NoParameters(u)) };
    let lin = linear_view(g, fs.theta(), u);
    let rows = g.shape(u).0;
    let mut out = vec![0.0; slot.len];
    for s in 0..rows {
        let ts = &t[s * lin.inp..(s + 1) * lin.inp];
        for i in 0..lin.out {
            let w = omega[s * lin.out + i];
            if w != 0.0 {
                axpy(&mut out[i * lin.inp..(i + 1) * lin.inp], w, ts);
            }
        }
    }
    Ok(out)
}

/// Smallest `|z|` feeding a piecewise-linear activation, with its node.
pub fn nearest_kink(g: &Graph, fs: &ForwardState) -> Option<(NodeId, f64)> {
    let mut best: Option<(NodeId, f64)> = None;
    for v in g.ids() {
        if let NodeKind::Activation(act) = g.kind(v) {
            if !act.is_piecewise_linear() {
                continue;
            }
            let z = fs.value(g.parents(v)[0]).iter().fold(f64::INFINITY, |m, x| m.min(x.abs()));
            if best.map_or(true, |(_, b)| z < b) {
                best = Some((v, z));
            }
        }
    }
    best
}
