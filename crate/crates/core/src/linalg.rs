//! Dense linear-algebra kernels shared by the estimators and centralities.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::math;
use crate::{Error, Result};

/// Reciprocal-condition threshold below which a factorization is treated
/// as singular.
pub const RCOND_MIN: f64 = 1e-14;

/// Cholesky factorization of a symmetric positive definite matrix with a
/// cheap reciprocal-condition screen on the factor's diagonal.
pub struct SpdFactor {
    matrix: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
}

impl SpdFactor {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        let chol = Cholesky::new(matrix.clone())
            .ok_or_else(|| Error::Numeric("matrix is not positive definite".into()))?;
        let l = chol.l_dirty();
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for i in 0..l.nrows() {
            let d = l[(i, i)];
            lo = lo.min(d);
            hi = hi.max(d);
        }
        if l.nrows() > 0 && !(lo * lo >= RCOND_MIN * hi * hi) {
            return Err(Error::Numeric(alloc::format!(
                "factorization is numerically singular (diagonal ratio {:e})",
                lo * lo / (hi * hi)
            )));
        }
        Ok(Self { matrix, chol })
    }

    /// Solves `M x = b` with two steps of iterative refinement.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut x = self.chol.solve(b);
        for _ in 0..2 {
            let r = b - &self.matrix * &x;
            x += self.chol.solve(&r);
        }
        x
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }
}

/// True when the symmetric matrix admits a Cholesky factorization.
pub fn is_positive_definite(m: &DMatrix<f64>) -> bool {
    Cholesky::new(m.clone()).is_some()
}

/// Largest eigenvalue magnitude of a symmetric matrix.
pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 || a.iter().all(|&v| v == 0.0) {
        return 0.0;
    }
    a.clone()
        .symmetric_eigenvalues()
        .iter()
        .fold(0.0f64, |acc, &l| acc.max(math::abs(l)))
}

/// Maximum absolute row sum.
pub fn inf_norm(a: &DMatrix<f64>) -> f64 {
    (0..a.nrows())
        .map(|i| a.row(i).iter().map(|v| math::abs(*v)).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Matrix exponential by scaling and squaring of a truncated Taylor series.
///
/// The argument is scaled until its infinity norm is at most 1/2, where a
/// degree-18 Taylor polynomial is accurate to below double rounding. For
/// entrywise nonnegative arguments every term is nonnegative, so the result
/// keeps entrywise relative accuracy, including exact zeros between
/// disconnected blocks.
pub fn expm(x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows();
    let norm = inf_norm(x);
    let mut squarings = 0u32;
    let mut scale = 1.0;
    while norm * scale > 0.5 {
        scale *= 0.5;
        squarings += 1;
    }
    let b = x * scale;
    let degree = 18;
    let eye = DMatrix::<f64>::identity(n, n);
    // Horner: I + B (I + B/2 (I + B/3 ( ... )))
    let mut acc = eye.clone();
    for k in (1..=degree).rev() {
        acc = &eye + (&b * &acc) / (k as f64);
    }
    for _ in 0..squarings {
        acc = &acc * &acc;
    }
    acc
}

/// Connected components of the graph whose edges are the nonzero
/// off-diagonal entries. Components are listed by smallest member, each in
/// ascending node order.
pub fn connected_components(a: &DMatrix<f64>) -> Vec<Vec<usize>> {
    let n = a.nrows();
    let mut label = vec![usize::MAX; n];
    let mut out = Vec::new();
    for start in 0..n {
        if label[start] != usize::MAX {
            continue;
        }
        let id = out.len();
        let mut members = vec![start];
        label[start] = id;
        let mut head = 0;
        while head < members.len() {
            let u = members[head];
            head += 1;
            for v in 0..n {
                if v != u && label[v] == usize::MAX && a[(u, v)] != 0.0 {
                    label[v] = id;
                    members.push(v);
                }
            }
        }
        members.sort_unstable();
        out.push(members);
    }
    out
}

/// Principal submatrix on the given indices.
pub fn submatrix(a: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), idx.len(), |i, j| a[(idx[i], idx[j])])
}

/// Largest entrywise difference between two equally shaped matrices.
pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .fold(0.0, |m, (x, y)| m.max(math::abs(x - y)))
}
