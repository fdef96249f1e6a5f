//! Reference architectures, parameter initialization and synthetic samples.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::calculus::{Sample, Target};
use crate::error::Result;
use crate::graph::{Activation, Graph, GraphBuilder, NodeId, NodeKind};
use crate::linalg::{spectral_norm_sq, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    Mse,
    SoftmaxCe { classes: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Merge {
    Sum,
    /// Concat → Linear → activation.
    Concat,
}

/// A built graph plus the nodes of interest, in depth order.
#[derive(Debug, Clone)]
pub struct Architecture {
    pub graph: Graph,
    pub layers: Vec<NodeId>,
}

fn finish_loss(b: &mut GraphBuilder, h: NodeId, loss: LossKind) -> NodeId {
    let l = match loss {
        LossKind::Mse => b.loss_mse(h),
        LossKind::SoftmaxCe { classes } => b.loss_ce(h, classes),
    };
    b.label(l, "loss");
    l
}

/// `x → [Linear → σ] × widths.len() → Linear(out) → loss`; the activation
/// outputs are the measured layers.
pub fn mlp_chain(input: usize, widths: &[usize], out: usize, act: Activation, loss: LossKind) -> Result<Architecture> {
    let mut b = GraphBuilder::new();
    let x = b.input(1, input);
    b.label(x, "x");
    let mut h = x;
    let mut layers = Vec::new();
    for (i, &w) in widths.iter().enumerate() {
        let z = b.linear(h, w, true);
        b.label(z, format!("lin{}", i + 1));
        h = b.activation(z, act);
        b.label(h, format!("act{}", i + 1)).measure(h);
        layers.push(h);
    }
    let y = b.linear(h, out, true);
    b.label(y, "head");
    finish_loss(&mut b, y, loss);
    Ok(Architecture { graph: b.build()?, layers })
}

/// Chain whose measured nodes include the head output, so that pairs reach
/// the loss input directly. Used for distance profiles.
pub fn mlp_chain_with_head(input: usize, widths: &[usize], out: usize, act: Activation, loss: LossKind) -> Result<Architecture> {
    let mut arch = mlp_chain(input, widths, out, act, loss)?;
    let head = arch.graph.loss_input();
    arch.layers.push(head);
    let mut nodes = arch.graph.nodes().to_vec();
    nodes[head.0].measure = true;
    arch.graph = Graph::new(nodes, arch.graph.out(), arch.graph.sharing().to_vec())?;
    Ok(arch)
}

/// Stem `v1`, two branches `v2`, `v3`, merge `v4`, linear head, MSE.
/// `layers = [v1, v2, v3, v4]`.
pub fn diamond(input: usize, width: usize, merge: Merge, act: Activation) -> Result<Architecture> {
    let mut b = GraphBuilder::new();
    let x = b.input(1, input);
    b.label(x, "x");
    let s = b.linear(x, width, true);
    b.label(s, "stem_lin");
    let v1 = b.activation(s, act);
    b.label(v1, "stem").measure(v1);
    let a = b.linear(v1, width, true);
    b.label(a, "left_lin");
    let v2 = b.activation(a, act);
    b.label(v2, "left").measure(v2);
    let c = b.linear(v1, width, true);
    b.label(c, "right_lin");
    let v3 = b.activation(c, act);
    b.label(v3, "right").measure(v3);
    let v4 = match merge {
        Merge::Sum => b.sum(&[v2, v3]),
        Merge::Concat => {
            let cat = b.concat(&[v2, v3]);
            b.label(cat, "cat");
            let m = b.linear(cat, width, true);
            b.label(m, "merge_lin");
            b.activation(m, act)
        }
    };
    b.label(v4, "merge").measure(v4);
    let y = b.linear(v4, 1, true);
    b.label(y, "head");
    finish_loss(&mut b, y, LossKind::Mse);
    Ok(Architecture { graph: b.build()?, layers: vec![v1, v2, v3, v4] })
}

/// `v0 → v1 → v2` with an identity skip `v0 → v2` (sum merge) and a linear
/// read-out. `layers = [v0, v1, v2]`.
pub fn skip_block(input: usize, width: usize, act: Activation) -> Result<Architecture> {
    let mut b = GraphBuilder::new();
    let x = b.input(1, input);
    b.label(x, "x");
    let z0 = b.linear(x, width, true);
    let v0 = b.activation(z0, act);
    b.label(v0, "v0").measure(v0);
    let z1 = b.linear(v0, width, true);
    let v1 = b.activation(z1, act);
    b.label(v1, "v1").measure(v1);
    let r = b.linear(v1, width, true);
    let v2 = b.sum(&[v0, r]);
    b.label(v2, "v2").measure(v2);
    let y = b.linear(v2, 2, true);
    b.label(y, "head");
    finish_loss(&mut b, y, LossKind::Mse);
    Ok(Architecture { graph: b.build()?, layers: vec![v0, v1, v2] })
}

/// Pre-activation residual stack: `s_{k+1} = s_k + Linear(σ(…Linear(σ(s_k))))`
/// with `per_block` Linear layers per block. `layers = [s_0, …, s_blocks]`.
pub fn residual_chain(width: usize, blocks: usize, per_block: usize, act: Activation) -> Result<Architecture> {
    let mut b = GraphBuilder::new();
    let x = b.input(1, width);
    b.label(x, "x");
    let mut s = b.linear(x, width, true);
    b.label(s, "s0").measure(s);
    let mut layers = vec![s];
    for k in 0..blocks {
        let mut t = s;
        for j in 0..per_block {
            let a = b.activation(t, act);
            b.label(a, format!("b{k}_act{j}"));
            t = b.linear(a, width, false);
            b.label(t, format!("b{k}_lin{j}"));
        }
        s = b.sum(&[s, t]);
        b.label(s, format!("s{}", k + 1)).measure(s);
        layers.push(s);
    }
    finish_loss(&mut b, s, LossKind::Mse);
    Ok(Architecture { graph: b.build()?, layers })
}

/// Plain chain of `depth` layers `h_{k+1} = Linear(σ(h_k))`, the vanilla
/// counterpart of [`residual_chain`] with one layer per step. `layers = [h_0, …, h_depth]`.
pub fn plain_chain(width: usize, depth: usize, act: Activation) -> Result<Architecture> {
    let mut b = GraphBuilder::new();
    let x = b.input(1, width);
    b.label(x, "x");
    let mut h = b.linear(x, width, true);
    b.label(h, "h0").measure(h);
    let mut layers = vec![h];
    for k in 0..depth {
        let a = b.activation(h, act);
        h = b.linear(a, width, false);
        b.label(h, format!("h{}", k + 1)).measure(h);
        layers.push(h);
    }
    finish_loss(&mut b, h, LossKind::Mse);
    Ok(Architecture { graph: b.build()?, layers })
}

/// `X → (Q, K, V) → attention → mean-pool → Linear(1) → MSE`.
/// `layers = [Q, K, V, attention]`.
pub fn toy_attention(seq: usize, d: usize) -> Result<Architecture> {
    let mut b = GraphBuilder::new();
    let x = b.input(seq, d);
    b.label(x, "x");
    let q = b.linear(x, d, false);
    b.label(q, "q").measure(q);
    let k = b.linear(x, d, false);
    b.label(k, "k").measure(k);
    let v = b.linear(x, d, false);
    b.label(v, "v").measure(v);
    let a = b.attention(q, k, v, d);
    b.label(a, "attn").measure(a);
    let p = b.mean_pool(a, seq);
    b.label(p, "pool");
    let y = b.linear(p, 1, true);
    b.label(y, "head");
    finish_loss(&mut b, y, LossKind::Mse);
    Ok(Architecture { graph: b.build()?, layers: vec![q, k, v, a] })
}

/// Position-wise control for [`toy_attention`]: three Linear+ReLU layers
/// applied per row, then mean-pool and a linear head. `layers` are the
/// three activation outputs.
pub fn relu_control(seq: usize, d: usize) -> Result<Architecture> {
    let mut b = GraphBuilder::new();
    let x = b.input(seq, d);
    b.label(x, "x");
    let mut h = x;
    let mut layers = Vec::new();
    for i in 0..3 {
        let z = b.linear(h, d, true);
        h = b.activation(z, Activation::Relu);
        b.label(h, format!("relu{}", i + 1)).measure(h);
        layers.push(h);
    }
    let p = b.mean_pool(h, seq);
    let y = b.linear(p, 1, true);
    b.label(y, "head");
    finish_loss(&mut b, y, LossKind::Mse);
    Ok(Architecture { graph: b.build()?, layers })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitScheme {
    /// `Var = 2 / fan_in`
    He,
    /// `Var = 1 / fan_in`
    Xavier,
}

impl InitScheme {
    pub fn for_activation(act: Activation) -> Self {
        if act.is_piecewise_linear() {
            InitScheme::He
        } else {
            InitScheme::Xavier
        }
    }
}

/// Gaussian weights with fan-in scaling and zero biases.
pub fn init_params(g: &Graph, scheme: InitScheme, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut theta = vec![0.0; g.param_count()];
    for group in g.param_groups() {
        let v = group[0];
        let NodeKind::Linear { out, .. } = *g.kind(v) else { continue };
        let fan_in = g.shape(g.parents(v)[0]).1;
        let gain = match scheme {
            InitScheme::He => 2.0,
            InitScheme::Xavier => 1.0,
        };
        let normal = Normal::new(0.0, libm::sqrt(gain / fan_in as f64)).expect("positive std");
        let slot = g.param_slot(v).expect("slot");
        for x in &mut theta[slot.offset..slot.offset + out * fan_in] {
            *x = normal.sample(&mut rng);
        }
    }
    theta
}

/// Every parameter (biases included) drawn from `N(0, scale²)`.
pub fn random_params(g: &Graph, scale: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..g.param_count()).map(|_| { let z: f64 = StandardNormal.sample(&mut rng); scale * z }).collect()
}

/// Rescales each weight matrix to spectral norm `target`.
pub fn rescale_spectral(g: &Graph, theta: &mut [f64], target: f64) {
    for group in g.param_groups() {
        let v = group[0];
        let NodeKind::Linear { out, .. } = *g.kind(v) else { continue };
        let inp = g.shape(g.parents(v)[0]).1;
        let slot = g.param_slot(v).expect("slot");
        let w = &mut theta[slot.offset..slot.offset + out * inp];
        let m = Matrix::new(out, inp, w.to_vec()).expect("shape");
        let s = libm::sqrt(spectral_norm_sq(&m, 500, 17));
        if s > 0.0 {
            w.iter_mut().for_each(|x| *x *= target / s);
        }
    }
}

/// Inputs from `N(0, 1)`; regression targets from `N(0, 1)` or uniform classes.
pub fn random_samples(g: &Graph, n: usize, seed: u64) -> Vec<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inputs = g.inputs();
    let d_out = g.dim(g.loss_input());
    (0..n)
        .map(|_| {
            let xs = inputs
                .iter()
                .map(|&v| (0..g.dim(v)).map(|_| -> f64 { StandardNormal.sample(&mut rng) }).collect())
                .collect();
            let target = match g.kind(g.out()) {
                NodeKind::LossSoftmaxCe { classes } => Target::Class(rng.random_range(0..*classes)),
                _ => Target::Vector((0..d_out).map(|_| -> f64 { StandardNormal.sample(&mut rng) }).collect()),
            };
            Sample::new(xs, target)
        })
        .collect()
}
