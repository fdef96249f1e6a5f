//! Dense double-precision storage and the handful of factorizations the
//! curvature diagnostics need: power iteration, cyclic Jacobi for symmetric
//! eigenvalues and one-sided Jacobi for singular values.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Index, IndexMut};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Dense vectors are plain `Vec<f64>`; these helpers cover the BLAS-1 needs.
pub type Vector = Vec<f64>;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

pub fn norm(a: &[f64]) -> f64 {
    libm::sqrt(norm_sq(a))
}

/// `y += alpha * x`
pub fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    debug_assert_eq!(y.len(), x.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Seeded standard-normal vector.
pub fn gaussian_vector(len: usize, seed: u64) -> Vector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| StandardNormal.sample(&mut rng)).collect()
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                context: "matrix data length",
                expected: rows * cols,
                found: data.len(),
            });
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_diag(d: &[f64]) -> Self {
        let mut m = Self::zeros(d.len(), d.len());
        for (i, &x) in d.iter().enumerate() {
            m[(i, i)] = x;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    /// `a bᵀ`
    pub fn outer(a: &[f64], b: &[f64]) -> Self {
        Self::from_fn(a.len(), b.len(), |i, j| a[i] * b[j])
    }

    /// Column vectors stacked side by side.
    pub fn from_columns(rows: usize, columns: &[Vector]) -> Self {
        Self::from_fn(rows, columns.len(), |i, j| columns[j][i])
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vector {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn diagonal(&self) -> Vector {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    pub fn trace(&self) -> f64 {
        self.diagonal().iter().sum()
    }

    pub fn transpose(&self) -> Matrix {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn frobenius_norm(&self) -> f64 {
        frobenius_norm(self)
    }

    fn check_same_shape(&self, other: &Matrix, context: &'static str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::DimensionMismatch {
                context,
                expected: self.rows * self.cols,
                found: other.rows * other.cols,
            });
        }
        Ok(())
    }

    /// `self · other`
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch {
                context: "matmul inner dimension",
                expected: self.cols,
                found: other.rows,
            });
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let orow = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                axpy(orow, a, other.row(k));
            }
        }
        Ok(out)
    }

    /// `selfᵀ · other`
    pub fn tr_matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows {
            return Err(Error::DimensionMismatch {
                context: "transposed matmul shared dimension",
                expected: self.rows,
                found: other.rows,
            });
        }
        let mut out = Matrix::zeros(self.cols, other.cols);
        for k in 0..self.rows {
            let brow = other.row(k);
            for i in 0..self.cols {
                let a = self.data[k * self.cols + i];
                if a == 0.0 {
                    continue;
                }
                axpy(&mut out.data[i * other.cols..(i + 1) * other.cols], a, brow);
            }
        }
        Ok(out)
    }

    /// `self · otherᵀ`
    pub fn matmul_tr(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.cols {
            return Err(Error::DimensionMismatch {
                context: "matmul with transpose inner dimension",
                expected: self.cols,
                found: other.cols,
            });
        }
        Ok(Matrix::from_fn(self.rows, other.rows, |i, j| dot(self.row(i), other.row(j))))
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vector> {
        if x.len() != self.cols {
            return Err(Error::DimensionMismatch {
                context: "matvec",
                expected: self.cols,
                found: x.len(),
            });
        }
        Ok((0..self.rows).map(|i| dot(self.row(i), x)).collect())
    }

    /// `selfᵀ · y`
    pub fn tr_matvec(&self, y: &[f64]) -> Result<Vector> {
        if y.len() != self.rows {
            return Err(Error::DimensionMismatch {
                context: "transposed matvec",
                expected: self.rows,
                found: y.len(),
            });
        }
        let mut out = vec![0.0; self.cols];
        for (i, &yi) in y.iter().enumerate() {
            if yi != 0.0 {
                axpy(&mut out, yi, self.row(i));
            }
        }
        Ok(out)
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        let mut out = self.clone();
        out.add_assign(other)?;
        Ok(out)
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.check_same_shape(other, "matrix subtraction")?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Ok(Matrix { rows: self.rows, cols: self.cols, data })
    }

    pub fn add_assign(&mut self, other: &Matrix) -> Result<()> {
        self.axpy(1.0, other)
    }

    /// `self += alpha · other`
    pub fn axpy(&mut self, alpha: f64, other: &Matrix) -> Result<()> {
        self.check_same_shape(other, "matrix accumulation")?;
        axpy(&mut self.data, alpha, &other.data);
        Ok(())
    }

    pub fn scale(&self, s: f64) -> Matrix {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|x| x * s).collect() }
    }

    pub fn scale_in_place(&mut self, s: f64) {
        self.data.iter_mut().for_each(|x| *x *= s);
    }

    /// `(self + selfᵀ) / 2`
    pub fn symmetric_part(&self) -> Result<Matrix> {
        if !self.is_square() {
            return Err(Error::NotSquare { rows: self.rows, cols: self.cols });
        }
        Ok(Matrix::from_fn(self.rows, self.cols, |i, j| 0.5 * (self[(i, j)] + self[(j, i)])))
    }

    /// Copies `block` into `self` with its top-left corner at `(r0, c0)`, adding to existing values.
    pub fn add_block(&mut self, r0: usize, c0: usize, block: &Matrix) {
        for i in 0..block.rows {
            let dst = &mut self.data[(r0 + i) * self.cols + c0..(r0 + i) * self.cols + c0 + block.cols];
            axpy(dst, 1.0, block.row(i));
        }
    }

    pub fn sub_matrix(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> Matrix {
        Matrix::from_fn(rows, cols, |i, j| self[(r0 + i, c0 + j)])
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Dense rank-3 array indexed `[i, j, k]`, row-major in that order.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    dims: [usize; 3],
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(d0: usize, d1: usize, d2: usize) -> Self {
        Tensor3 { dims: [d0, d1, d2], data: vec![0.0; d0 * d1 * d2] }
    }

    /// Stacks `d0` matrices of equal shape along the first axis.
    pub fn from_slices(slices: &[Matrix], d1: usize, d2: usize) -> Result<Self> {
        let mut t = Self::zeros(slices.len(), d1, d2);
        for (i, s) in slices.iter().enumerate() {
            if s.shape() != (d1, d2) {
                return Err(Error::DimensionMismatch {
                    context: "tensor slice shape",
                    expected: d1 * d2,
                    found: s.rows() * s.cols(),
                });
            }
            t.data[i * d1 * d2..(i + 1) * d1 * d2].copy_from_slice(s.data());
        }
        Ok(t)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[(i * self.dims[1] + j) * self.dims[2] + k]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, x: f64) {
        self.data[(i * self.dims[1] + j) * self.dims[2] + k] = x;
    }

    /// `T[i, •, •]`
    pub fn slice(&self, i: usize) -> Matrix {
        let n = self.dims[1] * self.dims[2];
        Matrix::new(self.dims[1], self.dims[2], self.data[i * n..(i + 1) * n].to_vec())
            .expect("slice length matches by construction")
    }

    /// `Σ_i weights[i] · T[i, •, •]`
    pub fn contract_first(&self, weights: &[f64]) -> Result<Matrix> {
        if weights.len() != self.dims[0] {
            return Err(Error::DimensionMismatch {
                context: "tensor contraction",
                expected: self.dims[0],
                found: weights.len(),
            });
        }
        let n = self.dims[1] * self.dims[2];
        let mut out = vec![0.0; n];
        for (i, &w) in weights.iter().enumerate() {
            if w != 0.0 {
                axpy(&mut out, w, &self.data[i * n..(i + 1) * n]);
            }
        }
        Matrix::new(self.dims[1], self.dims[2], out)
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm(&self.data)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

pub fn frobenius_norm(m: &Matrix) -> f64 {
    norm(m.data())
}

/// Estimate of the squared largest singular value by power iteration on
/// `mᵀm`. Returns 0 for the all-zero matrix.
///
/// After `t` iterations the estimate is `‖m q_t‖²` with `q_t` the normalized
/// iterate, which is a Rayleigh quotient of `mᵀm` and therefore never
/// decreases with `t`.
pub fn spectral_norm_sq(m: &Matrix, iters: usize, seed: u64) -> f64 {
    let iters = iters.max(1);
    if m.max_abs() == 0.0 || m.cols() == 0 {
        return 0.0;
    }
    let mut q = gaussian_vector(m.cols(), seed);
    let n = norm(&q);
    q.iter_mut().for_each(|x| *x /= n);
    for _ in 0..iters {
        let p = m.matvec(&q).expect("shape");
        let mut next = m.tr_matvec(&p).expect("shape");
        let n = norm(&next);
        if n == 0.0 {
            return 0.0;
        }
        next.iter_mut().for_each(|x| *x /= n);
        q = next;
    }
    norm_sq(&m.matvec(&q).expect("shape"))
}

/// Eigen-decomposition of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymEigen {
    /// Descending.
    pub values: Vector,
    /// Column `k` is the unit eigenvector for `values[k]`.
    pub vectors: Matrix,
}

/// Cyclic Jacobi on the symmetric part `(m + mᵀ)/2`.
///
/// Sweeps until the off-diagonal Frobenius norm drops below `tol·‖m‖_F`
/// (or an absolute floor for tiny matrices).
pub fn sym_eigen(m: &Matrix, tol: f64) -> Result<SymEigen> {
    let mut a = m.symmetric_part()?;
    let n = a.rows();
    let mut v = Matrix::identity(n);
    let scale = frobenius_norm(&a);
    let threshold = (tol * scale).max(f64::MIN_POSITIVE);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum();
        if libm::sqrt(off) <= threshold {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = a[(p, p)];
                let aqq = a[(q, q)];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + libm::sqrt(theta * theta + 1.0));
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / libm::sqrt(t * t + 1.0);
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(j, j)].total_cmp(&a[(i, i)]));
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let vectors = Matrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    Ok(SymEigen { values, vectors })
}

/// Eigenvalues of `(m + mᵀ)/2` in descending order.
pub fn sym_eigenvalues(m: &Matrix, tol: f64) -> Result<Vector> {
    Ok(sym_eigen(m, tol)?.values)
}

/// Full thin singular value decomposition `m = U diag(s) Vᵀ`.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: Matrix,
    /// Descending, non-negative, length `min(rows, cols)`.
    pub s: Vector,
    pub v: Matrix,
}

/// One-sided (Hestenes) Jacobi SVD. Small singular values are resolved to
/// roughly machine precision relative to `σ₁`, which the rank-bottleneck
/// checks depend on.
pub fn svd(m: &Matrix) -> Svd {
    if m.rows() < m.cols() {
        let t = svd(&m.transpose());
        return Svd { u: t.v, s: t.s, v: t.u };
    }
    let (rows, n) = m.shape();
    // columns of `a` are rotated in place; work on the transpose so columns are contiguous
    let mut at = m.transpose();
    let mut v = Matrix::identity(n);
    for _sweep in 0..80 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (alpha, beta, gamma) = {
                    let cp = at.row(p);
                    let cq = at.row(q);
                    (norm_sq(cp), norm_sq(cq), dot(cp, cq))
                };
                if gamma == 0.0 || gamma.abs() <= 1e-15 * libm::sqrt(alpha * beta) {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + libm::sqrt(1.0 + zeta * zeta));
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / libm::sqrt(1.0 + t * t);
                let s = c * t;
                for k in 0..rows {
                    let xp = at[(p, k)];
                    let xq = at[(q, k)];
                    at[(p, k)] = c * xp - s * xq;
                    at[(q, k)] = s * xp + c * xq;
                }
                for k in 0..n {
                    let vp = v[(k, p)];
                    let vq = v[(k, q)];
                    v[(k, p)] = c * vp - s * vq;
                    v[(k, q)] = s * vp + c * vq;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let sigma: Vec<f64> = (0..n).map(|j| norm(at.row(j))).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| sigma[j].total_cmp(&sigma[i]));
    let s: Vector = order.iter().map(|&j| sigma[j]).collect();
    let smax = s.first().copied().unwrap_or(0.0);
    let v_sorted = Matrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    // left vectors; columns with negligible σ are completed to an orthonormal set
    let mut ucols: Vec<Vector> = Vec::with_capacity(n);
    let mut pending = Vec::new();
    for (c, &j) in order.iter().enumerate() {
        if s[c] > smax * 1e-300 && s[c] > 0.0 {
            let mut col: Vector = at.row(j).iter().map(|x| x / s[c]).collect();
            for prev in ucols.iter().filter(|c| !c.is_empty()) {
                let d = dot(prev, &col);
                axpy(&mut col, -d, prev);
            }
            let nc = norm(&col);
            if nc > 0.5 {
                col.iter_mut().for_each(|x| *x /= nc);
                ucols.push(col);
                continue;
            }
        }
        pending.push(c);
        ucols.push(Vec::new());
    }
    complete_orthonormal(&mut ucols, rows, &pending);
    Svd { u: Matrix::from_columns(rows, &ucols), s, v: v_sorted }
}

fn complete_orthonormal(cols: &mut [Vector], dim: usize, missing: &[usize]) {
    let mut basis = 0;
    for &slot in missing {
        loop {
            let mut cand = vec![0.0; dim];
            cand[basis % dim] = 1.0;
            basis += 1;
            for (k, c) in cols.iter().enumerate() {
                if k != slot && !c.is_empty() {
                    let d = dot(c, &cand);
                    axpy(&mut cand, -d, c);
                }
            }
            let n = norm(&cand);
            if n > 1e-6 {
                cand.iter_mut().for_each(|x| *x /= n);
                cols[slot] = cand;
                break;
            }
        }
    }
}

/// Rank-`r` factors of the best Frobenius approximation together with the
/// discarded tail `sqrt(Σ_{i>r} σ_i²)`.
#[derive(Debug, Clone)]
pub struct TruncatedSvd {
    pub u: Matrix,
    pub s: Vector,
    pub v: Matrix,
    pub tail_error: f64,
}

impl TruncatedSvd {
    pub fn reconstruct(&self) -> Matrix {
        let us = Matrix::from_fn(self.u.rows(), self.s.len(), |i, j| self.u[(i, j)] * self.s[j]);
        us.matmul_tr(&self.v).expect("factor shapes agree")
    }
}

pub fn truncated_svd(m: &Matrix, r: usize) -> Result<TruncatedSvd> {
    let max = m.rows().min(m.cols());
    if r == 0 || r > max {
        return Err(Error::InvalidRank { rank: r, max });
    }
    let full = svd(m);
    let tail: f64 = full.s[r..].iter().map(|x| x * x).sum();
    Ok(TruncatedSvd {
        u: full.u.sub_matrix(0, 0, m.rows(), r),
        s: full.s[..r].to_vec(),
        v: full.v.sub_matrix(0, 0, m.cols(), r),
        tail_error: libm::sqrt(tail),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seeded(rows: usize, cols: usize, seed: u64) -> Matrix {
        Matrix::new(rows, cols, gaussian_vector(rows * cols, seed)).unwrap()
    }

    fn col_orthonormal_err(m: &Matrix) -> f64 {
        let g = m.tr_matmul(m).unwrap();
        g.sub(&Matrix::identity(m.cols())).unwrap().max_abs()
    }

    #[test]
    fn frobenius_cases() {
        assert_eq!(frobenius_norm(&Matrix::zeros(3, 3)), 0.0);
        assert!((frobenius_norm(&Matrix::identity(2)) - libm::sqrt(2.0)).abs() < 1e-15);
        let m = seeded(4, 5, 7);
        let mut acc = 0.0;
        for i in 0..4 {
            for j in 0..5 {
                acc += m[(i, j)] * m[(i, j)];
            }
        }
        assert!((frobenius_norm(&m) - libm::sqrt(acc)).abs() < 1e-14);
    }

    #[test]
    fn spectral_norm_cases() {
        let d = Matrix::from_diag(&[3.0, 1.0]);
        assert!((spectral_norm_sq(&d, 50, 1) - 9.0).abs() < 1e-9);
        assert!((spectral_norm_sq(&Matrix::identity(4), 10, 3) - 1.0).abs() < 1e-12);
        assert_eq!(spectral_norm_sq(&Matrix::zeros(3, 2), 10, 3), 0.0);
        let m = seeded(6, 6, 11);
        let gram = m.tr_matmul(&m).unwrap();
        let top = sym_eigenvalues(&gram, 1e-14).unwrap()[0];
        let est = spectral_norm_sq(&m, 500, 5);
        assert!((est - top).abs() / top < 1e-6, "{est} vs {top}");
    }

    #[test]
    fn spectral_norm_monotone_in_iterations() {
        let m = seeded(5, 4, 2);
        let mut prev = 0.0;
        for t in 1..30 {
            let e = spectral_norm_sq(&m, t, 9);
            assert!(e >= prev * (1.0 - 1e-12));
            prev = e;
        }
    }

    #[test]
    fn eigen_cases() {
        let d = Matrix::from_diag(&[2.0, -1.0]);
        assert_eq!(sym_eigenvalues(&d, 1e-12).unwrap(), vec![2.0, -1.0]);
        let one = Matrix::new(1, 1, vec![4.5]).unwrap();
        assert_eq!(sym_eigenvalues(&one, 1e-12).unwrap(), vec![4.5]);
        let a = seeded(5, 5, 3).symmetric_part().unwrap();
        let ev = sym_eigenvalues(&a, 1e-14).unwrap();
        assert!((ev.iter().sum::<f64>() - a.trace()).abs() < 1e-10);
        assert!(ev.windows(2).all(|w| w[0] >= w[1]));
        assert!(matches!(sym_eigenvalues(&seeded(2, 3, 1), 1e-12), Err(Error::NotSquare { .. })));
    }

    #[test]
    fn eigenvectors_diagonalize() {
        let a = seeded(6, 6, 8).symmetric_part().unwrap();
        let e = sym_eigen(&a, 1e-14).unwrap();
        let av = a.matmul(&e.vectors).unwrap();
        for k in 0..6 {
            for i in 0..6 {
                assert!((av[(i, k)] - e.values[k] * e.vectors[(i, k)]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn truncated_svd_cases() {
        let u = [1.0, -2.0, 0.5];
        let v = [0.3, 4.0];
        let m = Matrix::outer(&u, &v);
        let t = truncated_svd(&m, 1).unwrap();
        assert!(t.reconstruct().sub(&m).unwrap().frobenius_norm() < 1e-10);

        let t = truncated_svd(&Matrix::identity(3), 2).unwrap();
        let err = t.reconstruct().sub(&Matrix::identity(3)).unwrap().frobenius_norm();
        assert!((err - 1.0).abs() < 1e-12);

        let m = seeded(6, 4, 21);
        let t = truncated_svd(&m, 2).unwrap();
        let gram_ev = sym_eigenvalues(&m.tr_matmul(&m).unwrap(), 1e-15).unwrap();
        let oracle = libm::sqrt(gram_ev[2].max(0.0) + gram_ev[3].max(0.0));
        let err = t.reconstruct().sub(&m).unwrap().frobenius_norm();
        assert!((err - oracle).abs() < 1e-8);
        assert!((t.tail_error - err).abs() < 1e-8);
        assert!(col_orthonormal_err(&t.u) < 1e-8);
        assert!(col_orthonormal_err(&t.v) < 1e-8);

        assert!(matches!(truncated_svd(&m, 0), Err(Error::InvalidRank { .. })));
        assert!(matches!(truncated_svd(&m, 5), Err(Error::InvalidRank { .. })));
    }

    #[test]
    fn svd_of_rank_deficient_matrix_has_orthonormal_u() {
        let mut m = Matrix::zeros(4, 3);
        m[(0, 0)] = 2.0;
        m[(2, 2)] = 1.0;
        let d = svd(&m);
        let utu = d.u.tr_matmul(&d.u).unwrap();
        assert!(utu.sub(&Matrix::identity(3)).unwrap().max_abs() < 1e-12);
        assert_eq!(d.s, alloc::vec![2.0, 1.0, 0.0]);
    }

    #[test]
    fn svd_of_rank_deficient_is_orthonormal() {
        let a = seeded(7, 2, 4);
        let b = seeded(2, 5, 6);
        let m = a.matmul(&b).unwrap();
        let s = svd(&m);
        assert!(s.s[2] < 1e-12 * s.s[0]);
        assert!(col_orthonormal_err(&s.u) < 1e-10);
        assert!(col_orthonormal_err(&s.v) < 1e-10);
    }
}
