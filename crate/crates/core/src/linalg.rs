//! Dense linear-algebra helpers: Gram-Schmidt bases, projections, symmetric eigen
//! problems and guarded inverses.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Orthonormal basis of a set of columns together with the triangular factor.
#[derive(Debug, Clone)]
pub struct Basis<T: Real> {
    /// `n × r` matrix with orthonormal columns.
    pub q: DMatrix<T>,
    /// `r × r` upper-triangular factor with `a[:, kept] = q * r` (only when no prior basis was removed).
    pub r: DMatrix<T>,
    pub kept: Vec<usize>,
    pub dropped: Vec<usize>,
}

/// Relative tolerance below which a column counts as dependent on the ones before it.
pub fn rank_tol<T: Real>() -> T {
    T::tol(1e-10)
}

/// Modified Gram-Schmidt with one re-orthogonalization pass, left to right.
///
/// A column whose remaining norm falls below `tol` times its original norm is dropped.
/// When `prior` is given (orthonormal columns) its span is removed first.
pub fn orthonormalize<T: Real>(a: &DMatrix<T>, prior: Option<&DMatrix<T>>, tol: T) -> Basis<T> {
    let n = a.nrows();
    let mut qs: Vec<DVector<T>> = Vec::new();
    let mut rcols: Vec<Vec<T>> = Vec::new();
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for j in 0..a.ncols() {
        let mut v: DVector<T> = a.column(j).into_owned();
        let norm0 = v.norm();
        let mut coefs = vec![T::zero(); qs.len() + 1];
        for _ in 0..2 {
            if let Some(p) = prior {
                for pc in p.column_iter() {
                    let c = pc.dot(&v);
                    v.axpy(-c, &pc, T::one());
                }
            }
            for (i, q) in qs.iter().enumerate() {
                let c = q.dot(&v);
                v.axpy(-c, q, T::one());
                coefs[i] += c;
            }
        }
        let norm = v.norm();
        if norm0 == T::zero() || !(norm > tol * norm0) {
            dropped.push(j);
            continue;
        }
        *coefs.last_mut().unwrap() = norm;
        qs.push(v / norm);
        rcols.push(coefs);
        kept.push(j);
    }
    let r_dim = qs.len();
    let q = if r_dim == 0 {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&qs)
    };
    let mut r = DMatrix::zeros(r_dim, r_dim);
    for (j, col) in rcols.iter().enumerate() {
        for (i, &c) in col.iter().enumerate() {
            r[(i, j)] = c;
        }
    }
    Basis {
        q,
        r,
        kept,
        dropped,
    }
}

/// Least-squares coefficients of `y` on `a`; columns dependent on earlier ones get zero.
pub fn lstsq<T: Real>(a: &DMatrix<T>, y: &DVector<T>) -> Result<DVector<T>> {
    let basis = orthonormalize(a, None, rank_tol());
    let gamma = basis.q.transpose() * y;
    let kept = basis
        .r
        .solve_upper_triangular(&gamma)
        .ok_or_else(|| Error::Singular("least-squares triangular factor".into()))?;
    let mut out = DVector::zeros(a.ncols());
    for (i, &j) in basis.kept.iter().enumerate() {
        out[j] = kept[i];
    }
    Ok(out)
}

/// Columns of `blocks` side by side; all blocks must share the row count.
pub fn hstack<T: Real>(nrows: usize, blocks: &[&DMatrix<T>]) -> DMatrix<T> {
    let ncols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(nrows, ncols);
    let mut at = 0;
    for b in blocks {
        debug_assert_eq!(b.nrows(), nrows);
        out.columns_mut(at, b.ncols()).copy_from(*b);
        at += b.ncols();
    }
    out
}

/// `m - q (q' m)` for orthonormal `q`.
pub fn residualize<T: Real>(q: &DMatrix<T>, m: &DMatrix<T>) -> DMatrix<T> {
    if q.ncols() == 0 {
        return m.clone();
    }
    m - q * (q.transpose() * m)
}

pub fn residualize_vec<T: Real>(q: &DMatrix<T>, v: &DVector<T>) -> DVector<T> {
    if q.ncols() == 0 {
        return v.clone();
    }
    v - q * (q.transpose() * v)
}

pub fn symmetrize<T: Real>(m: &mut DMatrix<T>) {
    let half = T::lit(0.5);
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            let v = (m[(i, j)] + m[(j, i)]) * half;
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Eigen-decomposition of a symmetric matrix with eigenvalues ascending.
pub fn sym_eigen<T: Real>(m: &DMatrix<T>) -> Result<(DVector<T>, DMatrix<T>)> {
    let n = m.nrows();
    if n == 0 {
        return Ok((DVector::zeros(0), DMatrix::zeros(0, 0)));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite entry in symmetric eigenproblem".into()));
    }
    let mut s = m.clone();
    symmetrize(&mut s);
    let eig = SymmetricEigen::try_new(s, T::lit(T::EPSILON), 10_000)
        .ok_or_else(|| Error::Numerical("symmetric eigen solver did not converge".into()))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[a]
            .partial_cmp(&eig.eigenvalues[b])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let vectors = DMatrix::from_columns(
        &order
            .iter()
            .map(|&i| eig.eigenvectors.column(i).into_owned())
            .collect::<Vec<_>>(),
    );
    Ok((values, vectors))
}

/// Moore-Penrose inverse of a symmetric matrix restricted to eigenvalues above
/// `tol * max |eigenvalue|`. With `positive_only`, negative eigenvalues are discarded too.
/// Returns the inverse and the retained rank.
pub fn pinv_sym<T: Real>(m: &DMatrix<T>, positive_only: bool) -> Result<(DMatrix<T>, usize)> {
    let (vals, vecs) = sym_eigen(m)?;
    let n = m.nrows();
    let scale = vals.iter().fold(T::zero(), |acc, v| acc.max(v.abs()));
    let cut = T::tol(1e-10) * scale * T::lit(n.max(1) as f64);
    let mut out = DMatrix::zeros(n, n);
    let mut rank = 0;
    for (i, &l) in vals.iter().enumerate() {
        let keep = if positive_only { l > cut } else { l.abs() > cut };
        if keep && scale > T::zero() {
            let v = vecs.column(i);
            out += &v * v.transpose() / l;
            rank += 1;
        }
    }
    Ok((out, rank))
}

/// `v' m⁻¹ v` for symmetric positive semidefinite `m`; falls back to the
/// pseudo-inverse when the Cholesky factorization fails or is ill conditioned.
/// The flag reports whether the fallback was used.
pub fn inv_quadratic<T: Real>(v: &DVector<T>, m: &DMatrix<T>) -> Result<(T, bool)> {
    if let Some(ch) = Cholesky::new(m.clone()) {
        let l = ch.l_dirty();
        let diag_max = (0..l.nrows()).fold(T::zero(), |a, i| a.max(l[(i, i)]));
        let diag_min = (0..l.nrows()).fold(T::max_value().unwrap(), |a, i| a.min(l[(i, i)]));
        // squared ratio approximates the condition number
        if diag_min > T::zero() && diag_min / diag_max > T::tol(1e-7) {
            let x = ch.solve(v);
            return Ok((v.dot(&x), false));
        }
    }
    let (p, _) = pinv_sym(m, false)?;
    Ok(((v.transpose() * p * v)[(0, 0)], true))
}

/// Per-cluster sums of `b_i * u_i`: row `g` of the result is `Σ_{i∈g} u_i b_i'`.
pub fn cluster_scores<T: Real>(
    b: &DMatrix<T>,
    u: &DVector<T>,
    cluster: &[usize],
    n_clusters: usize,
) -> DMatrix<T> {
    let mut s = DMatrix::zeros(n_clusters, b.ncols());
    for j in 0..b.ncols() {
        let col = b.column(j);
        for i in 0..b.nrows() {
            s[(cluster[i], j)] += col[i] * u[i];
        }
    }
    s
}

/// Relabel arbitrary cluster keys densely as `0..G` in sorted key order.
pub fn dense_labels<K: Ord + Clone>(keys: &[K]) -> (Vec<usize>, usize) {
    let mut uniq: Vec<K> = keys.to_vec();
    uniq.sort();
    uniq.dedup();
    let labels = keys
        .iter()
        .map(|k| uniq.binary_search(k).expect("key present"))
        .collect();
    (labels, uniq.len())
}
