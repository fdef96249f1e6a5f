//! Brute-force finite-difference ground truth.

use alloc::vec;
use alloc::vec::Vec;

use crate::calculus::{forward, forward_with_offsets, nearest_kink, Sample};
use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::linalg::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FdScheme {
    /// `(f(x+h) − f(x−h)) / 2h`
    Central1,
    /// `(f(x+h) − 2f(x) + f(x−h)) / h²` on the diagonal
    Central2,
    /// `(f(++) − f(+−) − f(−+) + f(−−)) / 4h²` off the diagonal
    Mixed4,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdConfig {
    pub h: f64,
    pub scheme: FdScheme,
    pub kink_margin: f64,
}

impl FdConfig {
    pub fn first_order() -> Self {
        FdConfig { h: 1e-5, scheme: FdScheme::Central1, kink_margin: 1e-3 }
    }

    pub fn second_order() -> Self {
        FdConfig { h: 1e-4, scheme: FdScheme::Mixed4, kink_margin: 1e-3 }
    }

    pub fn with_step(mut self, h: f64) -> Self {
        self.h = h;
        self
    }
}

impl Default for FdConfig {
    fn default() -> Self {
        Self::second_order()
    }
}

pub fn fd_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], cfg: &FdConfig) -> Vec<f64> {
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|i| {
            xp[i] = x[i] + cfg.h;
            let fp = f(&xp);
            xp[i] = x[i] - cfg.h;
            let fm = f(&xp);
            xp[i] = x[i];
            (fp - fm) / (2.0 * cfg.h)
        })
        .collect()
}

/// Central-difference Jacobian of a vector function.
pub fn fd_jacobian(f: impl Fn(&[f64]) -> Vec<f64>, x: &[f64], h: f64) -> Matrix {
    let mut xp = x.to_vec();
    let mut cols = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        xp[i] = x[i] + h;
        let fp = f(&xp);
        xp[i] = x[i] - h;
        let fm = f(&xp);
        xp[i] = x[i];
        cols.push(fp.iter().zip(&fm).map(|(a, b)| (a - b) / (2.0 * h)).collect::<Vec<_>>());
    }
    let rows = cols.first().map_or(0, |c| c.len());
    Matrix::from_columns(rows, &cols)
}

/// Unsymmetrized second differences of `f` in the split coordinates
/// `x = (a, b)`: entry `(i, j)` is `∂²f/∂a_i∂b_j`.
pub fn fd_cross(f: impl Fn(&[f64], &[f64]) -> f64, a: &[f64], b: &[f64], h: f64) -> Matrix {
    let mut ap = a.to_vec();
    let mut bp = b.to_vec();
    let mut m = Matrix::zeros(a.len(), b.len());
    for i in 0..a.len() {
        for j in 0..b.len() {
            let mut eval = |sa: f64, sb: f64| {
                ap[i] = a[i] + sa * h;
                bp[j] = b[j] + sb * h;
                let v = f(&ap, &bp);
                ap[i] = a[i];
                bp[j] = b[j];
                v
            };
            m[(i, j)] = (eval(1.0, 1.0) - eval(1.0, -1.0) - eval(-1.0, 1.0) + eval(-1.0, -1.0)) / (4.0 * h * h);
        }
    }
    m
}

/// Unsymmetrized Hessian: three-point rule on the diagonal, four-point
/// mixed rule elsewhere.
pub fn fd_hessian_raw(f: impl Fn(&[f64]) -> f64, x: &[f64], cfg: &FdConfig) -> Matrix {
    let n = x.len();
    let h = cfg.h;
    let f0 = f(x);
    let mut xp = x.to_vec();
    let mut m = Matrix::zeros(n, n);
    for i in 0..n {
        xp[i] = x[i] + h;
        let fp = f(&xp);
        xp[i] = x[i] - h;
        let fm = f(&xp);
        xp[i] = x[i];
        m[(i, i)] = (fp - 2.0 * f0 + fm) / (h * h);
        for j in 0..n {
            if j == i {
                continue;
            }
            let mut eval = |si: f64, sj: f64| {
                xp[i] = x[i] + si * h;
                xp[j] = x[j] + sj * h;
                let v = f(&xp);
                xp[i] = x[i];
                xp[j] = x[j];
                v
            };
            m[(i, j)] = (eval(1.0, 1.0) - eval(1.0, -1.0) - eval(-1.0, 1.0) + eval(-1.0, -1.0)) / (4.0 * h * h);
        }
    }
    m
}

pub fn fd_hessian(f: impl Fn(&[f64]) -> f64, x: &[f64], cfg: &FdConfig) -> Matrix {
    fd_hessian_raw(f, x, cfg).symmetric_part().expect("square")
}

/// Rejects evaluation points where a piecewise-linear unit sits within
/// `margin` of its kink.
pub fn check_kinks(g: &Graph, theta: &[f64], samples: &[Sample], margin: f64) -> Result<()> {
    for s in samples {
        let fs = forward(g, theta, s)?;
        if let Some((node, z)) = nearest_kink(g, &fs) {
            if z <= margin {
                return Err(Error::KinkProximity { node, value: z });
            }
        }
    }
    Ok(())
}

/// Batch-mean loss as a function of the parameters.
pub fn batch_loss(g: &Graph, theta: &[f64], samples: &[Sample]) -> f64 {
    samples
        .iter()
        .map(|s| forward(g, theta, s).map(|fs| fs.loss()).unwrap_or(f64::NAN))
        .sum::<f64>()
        / samples.len() as f64
}

/// `∇²_θ L` of the batch-mean loss by central differences.
pub fn fd_param_hessian(g: &Graph, theta: &[f64], samples: &[Sample], cfg: &FdConfig) -> Result<Matrix> {
    check_kinks(g, theta, samples, cfg.kink_margin)?;
    Ok(fd_hessian(|t| batch_loss(g, t, samples), theta, cfg))
}

pub fn fd_param_gradient(g: &Graph, theta: &[f64], samples: &[Sample], cfg: &FdConfig) -> Result<Vec<f64>> {
    check_kinks(g, theta, samples, cfg.kink_margin)?;
    Ok(fd_gradient(|t| batch_loss(g, t, samples), theta, cfg))
}

/// `∂²L/∂ε_v∂ε_w` by re-running the forward pass with additive offsets on
/// `f_v` and `f_w`; ancestors stay fixed.
pub fn fd_block(
    g: &Graph,
    theta: &[f64],
    sample: &Sample,
    v: NodeId,
    w: NodeId,
    cfg: &FdConfig,
) -> Result<Matrix> {
    check_kinks(g, theta, core::slice::from_ref(sample), cfg.kink_margin)?;
    let zv = vec![0.0; g.dim(v)];
    let zw = vec![0.0; g.dim(w)];
    let loss = |a: &[f64], b: &[f64]| {
        forward_with_offsets(g, theta, sample, &[(v, a), (w, b)]).map(|fs| fs.loss()).unwrap_or(f64::NAN)
    };
    Ok(fd_cross(loss, &zv, &zw, cfg.h))
}

/// `∂L/∂ε_v` by central differences of the offset forward pass.
pub fn fd_activation_gradient(g: &Graph, theta: &[f64], sample: &Sample, v: NodeId, cfg: &FdConfig) -> Vec<f64> {
    let z = vec![0.0; g.dim(v)];
    fd_gradient(
        |e| forward_with_offsets(g, theta, sample, &[(v, e)]).map(|fs| fs.loss()).unwrap_or(f64::NAN),
        &z,
        cfg,
    )
}
