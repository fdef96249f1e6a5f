//! Gauss–Newton / tensor split of input-Hessian blocks and the spectral
//! diagnostics built on it.

use alloc::vec::Vec;

use crate::calculus::loss_hessian;
use crate::error::{Error, Result};
use crate::graph::NodeId;
use crate::hessian::{BatchSession, BlockMatrix, HessianSession, Mode};
use crate::linalg::{sym_eigen, Matrix, Vector};

pub const DEFAULT_GAP_EPS: f64 = 1e-12;

/// `full = gn + tensor` for one node pair.
#[derive(Debug, Clone, PartialEq)]
pub struct DecomposedBlock {
    pub v: NodeId,
    pub w: NodeId,
    pub gn: Matrix,
    pub tensor: Matrix,
    pub full: Matrix,
}

impl DecomposedBlock {
    pub fn gn_norm(&self) -> f64 {
        self.gn.frobenius_norm()
    }

    pub fn tensor_norm(&self) -> f64 {
        self.tensor.frobenius_norm()
    }

    pub fn full_norm(&self) -> f64 {
        self.full.frobenius_norm()
    }

    pub fn gn_gap(&self, eps: f64) -> f64 {
        gn_gap(&self.gn, &self.tensor, eps)
    }
}

/// `‖tensor‖_F / (‖gn‖_F + eps)`
pub fn gn_gap(gn: &Matrix, tensor: &Matrix, eps: f64) -> f64 {
    tensor.frobenius_norm() / (gn.frobenius_norm() + eps)
}

/// GN block from the loss-curvature-only recursion.
pub fn gn_block_recursive(s: &mut HessianSession<'_>, v: NodeId, w: NodeId) -> Matrix {
    s.block(v, w, Mode::GaussNewton)
}

/// Tensor block from its own recursion (base case zero).
pub fn tensor_block_recursive(s: &mut HessianSession<'_>, v: NodeId, w: NodeId) -> Matrix {
    s.block(v, w, Mode::Tensor)
}

/// `J_vᵀ ∇²L J_w` with `J_x` the total Jacobian of the loss input with
/// respect to an offset on `x`.
pub fn gn_block_unrolled(s: &mut HessianSession<'_>, v: NodeId, w: NodeId) -> Matrix {
    let g = s.graph();
    let li = g.loss_input();
    match (s.total_jacobian(li, v), s.total_jacobian(li, w)) {
        (Some(jv), Some(jw)) => {
            let h = loss_hessian(g, s.forward_state());
            jv.tr_matmul(&h.matmul(&jw).expect("shape")).expect("shape")
        }
        _ => Matrix::zeros(g.dim(v), g.dim(w)),
    }
}

pub fn decompose(s: &mut HessianSession<'_>, v: NodeId, w: NodeId) -> DecomposedBlock {
    let full = s.block(v, w, Mode::Full);
    let gn = s.block(v, w, Mode::GaussNewton);
    let tensor = full.sub(&gn).expect("shape");
    DecomposedBlock { v, w, gn, tensor, full }
}

/// Batch-mean decomposition; each part is averaged before any norm.
pub fn decompose_batch(b: &mut BatchSession<'_>, v: NodeId, w: NodeId) -> DecomposedBlock {
    let full = b.block(v, w, Mode::Full);
    let gn = b.block(v, w, Mode::GaussNewton);
    let tensor = full.sub(&gn).expect("shape");
    DecomposedBlock { v, w, gn, tensor, full }
}

/// All ordered pairs over `nodes` in one mode.
pub fn block_matrix(b: &mut BatchSession<'_>, nodes: &[NodeId], mode: Mode) -> BlockMatrix {
    let g = b.graph();
    let mut bm = BlockMatrix::new(g);
    for &v in nodes {
        for &w in nodes {
            bm.insert(v, w, b.block(v, w, mode)).expect("engine shapes");
        }
    }
    bm
}

/// `Σ_{λ < −tol} |λ|` of the symmetric part.
pub fn negative_mass(h: &Matrix, tol: f64) -> Result<f64> {
    if !h.is_square() {
        return Err(Error::NotSquare { rows: h.rows(), cols: h.cols() });
    }
    let eig = sym_eigen(h, 1e-14)?;
    Ok(eig.values.iter().filter(|&&l| l < -tol).map(|l| -l).sum())
}

/// Eigenpairs with `λ < −tau`, most negative first.
pub fn escape_directions(h: &Matrix, tau: f64) -> Result<Vec<(f64, Vector)>> {
    if !h.is_square() {
        return Err(Error::NotSquare { rows: h.rows(), cols: h.cols() });
    }
    let eig = sym_eigen(h, 1e-14)?;
    let mut out: Vec<(f64, Vector)> = eig
        .values
        .iter()
        .enumerate()
        .filter(|(_, &l)| l < -tau)
        .map(|(k, &l)| (l, eig.vectors.column(k)))
        .collect();
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(out)
}
