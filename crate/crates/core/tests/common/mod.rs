#![allow(dead_code)]

use hessdag_core::calculus::Sample;
use hessdag_core::oracle::check_kinks;
use hessdag_core::zoo::{self, LossKind, Merge};
use hessdag_core::{Activation, Graph, GraphBuilder, Matrix, NodeId};

pub fn rel(a: &Matrix, b: &Matrix) -> f64 {
    a.sub(b).unwrap().frobenius_norm() / b.frobenius_norm().max(1e-300)
}

pub fn rel_vec(a: &[f64], b: &[f64]) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    let n: f64 = b.iter().map(|y| y * y).sum();
    (d / n.max(1e-300)).sqrt()
}

/// Smooth graphs with P ≤ 200.
pub fn suite() -> Vec<(&'static str, Graph)> {
    vec![
        ("chain2-tanh", zoo::mlp_chain(3, &[4, 4], 2, Activation::Tanh, LossKind::Mse).unwrap().graph),
        ("chain3-gelu", zoo::mlp_chain(3, &[4, 3, 4], 2, Activation::Gelu, LossKind::Mse).unwrap().graph),
        ("chain4-silu-ce", zoo::mlp_chain(3, &[3, 3, 3, 3], 3, Activation::Silu, LossKind::SoftmaxCe { classes: 3 }).unwrap().graph),
        ("chain2-softplus", zoo::mlp_chain(4, &[5, 5], 2, Activation::Softplus, LossKind::Mse).unwrap().graph),
        ("diamond-sum", zoo::diamond(3, 4, Merge::Sum, Activation::Tanh).unwrap().graph),
        ("diamond-cat", zoo::diamond(3, 3, Merge::Concat, Activation::Silu).unwrap().graph),
        ("skip", zoo::skip_block(3, 4, Activation::Gelu).unwrap().graph),
        ("residual", zoo::residual_chain(3, 2, 2, Activation::Tanh).unwrap().graph),
        ("attention", zoo::toy_attention(3, 3).unwrap().graph),
        ("chain1-tanh-ce", zoo::mlp_chain(4, &[6], 4, Activation::Tanh, LossKind::SoftmaxCe { classes: 4 }).unwrap().graph),
    ]
}

pub fn relu_suite() -> Vec<(&'static str, Graph)> {
    vec![
        ("chain3-relu", zoo::mlp_chain(3, &[4, 4, 4], 2, Activation::Relu, LossKind::Mse).unwrap().graph),
        ("chain2-leaky-ce", zoo::mlp_chain(3, &[5, 4], 3, Activation::LeakyRelu, LossKind::SoftmaxCe { classes: 3 }).unwrap().graph),
        ("diamond-sum-relu", zoo::diamond(3, 4, Merge::Sum, Activation::Relu).unwrap().graph),
        ("diamond-cat-relu", zoo::diamond(3, 4, Merge::Concat, Activation::Relu).unwrap().graph),
        ("skip-relu", zoo::skip_block(3, 4, Activation::Relu).unwrap().graph),
        ("relu-control", zoo::relu_control(3, 3).unwrap().graph),
    ]
}

/// Random point whose pre-activations all sit at least 1e-3 from a kink.
pub fn kink_free(g: &Graph, seed: u64, n: usize) -> (Vec<f64>, Vec<Sample>) {
    for k in 0..100 {
        let theta = zoo::random_params(g, 0.7, seed * 1000 + k);
        let samples = zoo::random_samples(g, n, seed * 1000 + k + 500);
        if check_kinks(g, &theta, &samples, 1e-3).is_ok() {
            return (theta, samples);
        }
    }
    panic!("no kink-free point found");
}

const ACTS: [Activation; 6] = [
    Activation::Tanh,
    Activation::Gelu,
    Activation::Silu,
    Activation::Softplus,
    Activation::Relu,
    Activation::LeakyRelu,
];

/// Random vector-valued DAG driven by `(op, a, b)` triples. Ops pick an
/// existing node by `a` and build a Linear, activation, sum or concat.
/// Nodes that never reach the head stay dangling. With `smooth`, only
/// smooth activations are used.
pub fn random_dag(ops: &[(u8, u8, u8)], smooth: bool) -> Graph {
    let mut b = GraphBuilder::new();
    let mut pool: Vec<(NodeId, usize)> = vec![(b.input(1, 3), 3)];
    let acts: &[Activation] = if smooth { &ACTS[..4] } else { &ACTS };
    for &(op, a, k) in ops {
        let (src, d) = pool[a as usize % pool.len()];
        let mates: Vec<(NodeId, usize)> = pool.iter().copied().filter(|&(n, dn)| n != src && dn == d).collect();
        let others: Vec<(NodeId, usize)> = pool.iter().copied().filter(|&(n, _)| n != src).collect();
        let node = match op % 4 {
            1 => (b.activation(src, acts[k as usize % acts.len()]), d),
            2 if !mates.is_empty() => (b.sum(&[src, mates[k as usize % mates.len()].0]), d),
            3 if !others.is_empty() && d <= 6 => {
                let (o, dn) = others[k as usize % others.len()];
                (b.concat(&[src, o]), d + dn)
            }
            _ => {
                let w = 2 + k as usize % 3;
                (b.linear(src, w, k % 2 == 0), w)
            }
        };
        b.measure(node.0);
        pool.push(node);
    }
    let last = pool.last().unwrap().0;
    let head = b.linear(last, 2, true);
    b.loss_mse(head);
    b.build().unwrap()
}
