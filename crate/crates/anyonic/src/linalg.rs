//! Dense and sparse complex linear algebra in double precision.

use crate::error::{Error, Result};
use faer::{Mat, MatRef, Par};
use rayon::prelude::*;
use std::sync::Once;

pub use faer::c64;

static SEQUENTIAL: Once = Once::new();

/// Pins faer to sequential kernels so that results do not depend on the thread count.
pub fn ensure_sequential() {
    SEQUENTIAL.call_once(|| faer::set_global_parallelism(Par::Seq));
}

pub fn zero() -> c64 {
    c64::new(0.0, 0.0)
}

pub fn one() -> c64 {
    c64::new(1.0, 0.0)
}

pub fn identity(n: usize) -> Mat<c64> {
    Mat::from_fn(n, n, |i, j| if i == j { one() } else { zero() })
}

pub fn max_abs(a: MatRef<'_, c64>) -> f64 {
    let mut m: f64 = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max(a[(i, j)].norm());
        }
    }
    m
}

pub fn frobenius(a: MatRef<'_, c64>) -> f64 {
    let mut s = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            s += a[(i, j)].norm_sqr();
        }
    }
    s.sqrt()
}

pub fn sub(a: MatRef<'_, c64>, b: MatRef<'_, c64>) -> Mat<c64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] - b[(i, j)])
}

pub fn matmul(a: MatRef<'_, c64>, b: MatRef<'_, c64>) -> Mat<c64> {
    ensure_sequential();
    a * b
}

/// `||A B - B A||_F`.
pub fn commutator_norm(a: MatRef<'_, c64>, b: MatRef<'_, c64>) -> f64 {
    frobenius(sub(matmul(a, b).as_ref(), matmul(b, a).as_ref()).as_ref())
}

/// Singular values in decreasing order.
pub fn singular_values(a: MatRef<'_, c64>) -> Result<Vec<f64>> {
    ensure_sequential();
    if a.nrows() == 0 || a.ncols() == 0 {
        return Ok(Vec::new());
    }
    a.singular_values()
        .map_err(|e| Error::Numerical(format!("SVD failed: {e:?}")))
}

/// Numerical rank with a cutoff relative to the largest singular value.
pub fn rank(a: MatRef<'_, c64>, rel_tol: f64) -> Result<usize> {
    let s = singular_values(a)?;
    let top = s.first().copied().unwrap_or(0.0);
    if top == 0.0 {
        return Ok(0);
    }
    Ok(s.iter().filter(|&&x| x > rel_tol * top).count())
}

/// Orthonormal basis (as columns) of the right null space of `a`.
pub fn null_space(a: MatRef<'_, c64>, rel_tol: f64) -> Result<Mat<c64>> {
    ensure_sequential();
    let n = a.ncols();
    if a.nrows() == 0 {
        return Ok(identity(n));
    }
    let svd = a
        .svd()
        .map_err(|e| Error::Numerical(format!("SVD failed: {e:?}")))?;
    let s = svd.S().column_vector();
    let k = s.nrows().min(n);
    let top = if k > 0 { s[0].re } else { 0.0 };
    let kept: Vec<usize> = (0..n)
        .filter(|&j| j >= k || s[j].re <= rel_tol * top.max(f64::MIN_POSITIVE))
        .collect();
    let v = svd.V();
    Ok(Mat::from_fn(n, kept.len(), |i, j| v[(i, kept[j])]))
}

/// Least-squares solution of `a x = b` through the pseudo-inverse.
pub fn lstsq(a: MatRef<'_, c64>, b: MatRef<'_, c64>) -> Result<Mat<c64>> {
    ensure_sequential();
    let svd = a
        .thin_svd()
        .map_err(|e| Error::Numerical(format!("SVD failed: {e:?}")))?;
    let pinv = svd.pseudoinverse();
    Ok(&pinv * b)
}

pub fn inverse(a: MatRef<'_, c64>) -> Mat<c64> {
    use faer::linalg::solvers::DenseSolveCore;
    ensure_sequential();
    a.partial_piv_lu().inverse()
}

/// Eigenvalues and right eigenvectors (columns) of a general complex matrix.
pub fn eig(a: MatRef<'_, c64>) -> Result<(Vec<c64>, Mat<c64>)> {
    ensure_sequential();
    if a.nrows() == 0 {
        return Ok((Vec::new(), Mat::zeros(0, 0)));
    }
    let e = a
        .eigen()
        .map_err(|e| Error::Numerical(format!("eigendecomposition failed: {e:?}")))?;
    let s = e.S().column_vector();
    let vals = (0..s.nrows()).map(|i| s[i]).collect();
    Ok((vals, e.U().to_owned()))
}

pub fn eigenvalues(a: MatRef<'_, c64>) -> Result<Vec<c64>> {
    ensure_sequential();
    a.eigenvalues()
        .map_err(|e| Error::Numerical(format!("eigenvalues failed: {e:?}")))
}

pub fn column(a: MatRef<'_, c64>, j: usize) -> Vec<c64> {
    (0..a.nrows()).map(|i| a[(i, j)]).collect()
}

pub fn norm(v: &[c64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn dot(u: &[c64], v: &[c64]) -> c64 {
    u.iter().zip(v).fold(zero(), |s, (a, b)| s + a.conj() * b)
}

/// Orthonormal basis of the span of `vs` by twice-applied modified Gram-Schmidt.
/// Vectors that fall below `drop_tol` of their original norm are discarded.
pub fn orthonormalize(vs: &[Vec<c64>], drop_tol: f64) -> Vec<Vec<c64>> {
    let mut out: Vec<Vec<c64>> = Vec::with_capacity(vs.len());
    for v in vs {
        let n0 = norm(v);
        if n0 == 0.0 {
            continue;
        }
        let mut w = v.clone();
        for _ in 0..2 {
            for q in &out {
                let c = dot(q, &w);
                for (wi, qi) in w.iter_mut().zip(q) {
                    *wi -= c * qi;
                }
            }
        }
        let n = norm(&w);
        if n > drop_tol * n0 {
            out.push(w.into_iter().map(|x| x / n).collect());
        }
    }
    out
}

/// Rows above which sparse products are split across threads. Each row is still
/// summed in a fixed order, so results do not depend on the thread count.
const PAR_ROWS: usize = 16384;

/// Compressed sparse row matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Sparse {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<c64>,
}

impl Sparse {
    /// Builds from per-row entry lists; duplicates are summed and exact zeros dropped.
    pub fn from_rows(nrows: usize, ncols: usize, rows: Vec<Vec<(usize, c64)>>) -> Self {
        assert_eq!(rows.len(), nrows);
        let mut indptr = Vec::with_capacity(nrows + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for mut row in rows {
            row.sort_by_key(|e| e.0);
            let mut i = 0;
            while i < row.len() {
                let col = row[i].0;
                let mut v = zero();
                while i < row.len() && row[i].0 == col {
                    v += row[i].1;
                    i += 1;
                }
                if v != zero() {
                    assert!(col < ncols, "column {col} out of range");
                    indices.push(col);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        Sparse {
            nrows,
            ncols,
            indptr,
            indices,
            values,
        }
    }

    /// Builds from per-column entry lists `(row, value)`.
    pub fn from_columns(nrows: usize, ncols: usize, cols: Vec<Vec<(usize, c64)>>) -> Self {
        assert_eq!(cols.len(), ncols);
        let mut rows = vec![Vec::new(); nrows];
        for (j, col) in cols.into_iter().enumerate() {
            for (i, v) in col {
                rows[i].push((j, v));
            }
        }
        Sparse::from_rows(nrows, ncols, rows)
    }

    pub fn identity(n: usize) -> Self {
        Sparse::from_rows(n, n, (0..n).map(|i| vec![(i, one())]).collect())
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, c64)> + '_ {
        let r = self.indptr[i]..self.indptr[i + 1];
        self.indices[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, c64)> + '_ {
        (0..self.nrows).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn get(&self, i: usize, j: usize) -> c64 {
        self.row(i).find(|e| e.0 == j).map(|e| e.1).unwrap_or_else(zero)
    }

    pub fn apply(&self, x: &[c64]) -> Vec<c64> {
        assert_eq!(x.len(), self.ncols);
        let row = |i: usize| self.row(i).fold(zero(), |s, (j, v)| s + v * x[j]);
        if self.nrows >= PAR_ROWS {
            (0..self.nrows).into_par_iter().map(row).collect()
        } else {
            (0..self.nrows).map(row).collect()
        }
    }

    /// `self * b` for dense `b`.
    pub fn mul_dense(&self, b: MatRef<'_, c64>) -> Mat<c64> {
        assert_eq!(b.nrows(), self.ncols);
        let mut out = Mat::<c64>::zeros(self.nrows, b.ncols());
        for j in 0..b.ncols() {
            for i in 0..self.nrows {
                let mut s = zero();
                for (k, v) in self.row(i) {
                    s += v * b[(k, j)];
                }
                out[(i, j)] = s;
            }
        }
        out
    }

    /// `self * other`.
    pub fn mul_sparse(&self, other: &Sparse) -> Sparse {
        assert_eq!(self.ncols, other.nrows);
        let rows = (0..self.nrows)
            .map(|i| {
                let mut acc: Vec<(usize, c64)> = Vec::new();
                for (k, v) in self.row(i) {
                    for (j, w) in other.row(k) {
                        acc.push((j, v * w));
                    }
                }
                acc
            })
            .collect();
        Sparse::from_rows(self.nrows, other.ncols, rows)
    }

    pub fn scale(&self, s: c64) -> Sparse {
        let mut out = self.clone();
        for v in &mut out.values {
            *v *= s;
        }
        out
    }

    pub fn to_dense(&self) -> Mat<c64> {
        let mut m = Mat::<c64>::zeros(self.nrows, self.ncols);
        for (i, j, v) in self.triplets() {
            m[(i, j)] = v;
        }
        m
    }

    pub fn from_dense(a: MatRef<'_, c64>) -> Sparse {
        let rows = (0..a.nrows())
            .map(|i| (0..a.ncols()).map(|j| (j, a[(i, j)])).collect())
            .collect();
        Sparse::from_rows(a.nrows(), a.ncols(), rows)
    }
}
