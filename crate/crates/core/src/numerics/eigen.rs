//! Dense symmetric eigensolver: Householder tridiagonalization followed by
//! implicit-shift QL, in the form popularized by EISPACK `tred2`/`tql2`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::Real;

const QL_SWEEPS_PER_VALUE: usize = 60;

/// Square real symmetric matrix stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymmetricMatrix<T> {
    dim: usize,
    entries: Vec<T>,
}

impl<T: Real> SymmetricMatrix<T> {
    /// Validates shape and symmetry of a row-major buffer.
    pub fn new(dim: usize, entries: Vec<T>) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("dim", "matrix must be at least 1x1"));
        }
        if entries.len() != dim * dim {
            return Err(invalid(
                "entries",
                format!("expected {} values, got {}", dim * dim, entries.len()),
            ));
        }
        let scale = entries
            .iter()
            .fold(T::zero(), |acc, v| acc.max(v.abs()));
        if !scale.is_finite() {
            return Err(invalid("entries", "matrix contains non-finite values"));
        }
        let tol = T::lit(4.0) * T::epsilon() * scale;
        for i in 0..dim {
            for j in (i + 1)..dim {
                let (a, b) = (entries[i * dim + j], entries[j * dim + i]);
                if (a - b).abs() > tol {
                    return Err(invalid(
                        "entries",
                        format!("not symmetric at ({i},{j}): {a} vs {b}"),
                    ));
                }
            }
        }
        Ok(Self { dim, entries })
    }

    pub fn zeros(dim: usize) -> Self {
        assert!(dim > 0, "matrix must be at least 1x1");
        Self {
            dim,
            entries: vec![T::zero(); dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_diagonal(&vec![T::one(); dim])
    }

    pub fn from_diagonal(diag: &[T]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m.entries[i * m.dim + i] = d;
        }
        m
    }

    /// Builds the matrix from its lower triangle; `f(i, j)` is called with `j <= i`.
    pub fn from_lower(dim: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            for j in 0..=i {
                m.set(i, j, f(i, j));
            }
        }
        m
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.entries[i * self.dim + j]
    }

    /// Sets both `(i, j)` and `(j, i)`.
    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.entries[i * self.dim + j] = v;
        self.entries[j * self.dim + i] = v;
    }

    pub fn entries(&self) -> &[T] {
        &self.entries
    }

    pub fn frobenius_norm(&self) -> T {
        self.entries.iter().map(|&v| v * v).sum::<T>().sqrt()
    }

    /// Matrix-vector product.
    pub fn apply(&self, v: &[T]) -> Vec<T> {
        assert_eq!(v.len(), self.dim);
        self.entries
            .chunks_exact(self.dim)
            .map(|row| row.iter().zip(v).map(|(&a, &b)| a * b).sum())
            .collect()
    }
}

/// Lowest eigenpairs of a symmetric matrix, eigenvalues ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymmetricEigen<T> {
    pub values: Vec<T>,
    /// `vectors[i]` is the unit eigenvector belonging to `values[i]`.
    pub vectors: Vec<Vec<T>>,
}

/// Lowest `k` eigenpairs of `m`.
pub fn symmetric_eigen<T: Real>(m: &SymmetricMatrix<T>, k: usize) -> Result<SymmetricEigen<T>> {
    check_count(k, m.dim)?;
    let n = m.dim;
    let mut v = m.entries.clone();
    let mut d = vec![T::zero(); n];
    let mut e = vec![T::zero(); n];
    householder_tridiagonalize(n, &mut v, &mut d, &mut e);
    implicit_ql(n, &mut d, &mut e, Some(&mut v))?;
    Ok(collect_lowest(n, &d, Some(&v), k))
}

/// All eigenvalues of `m`, ascending.
pub fn symmetric_eigenvalues<T: Real>(m: &SymmetricMatrix<T>) -> Result<Vec<T>> {
    let n = m.dim;
    let mut v = m.entries.clone();
    let mut d = vec![T::zero(); n];
    let mut e = vec![T::zero(); n];
    householder_tridiagonalize(n, &mut v, &mut d, &mut e);
    implicit_ql(n, &mut d, &mut e, None)?;
    d.sort_by(|a, b| a.partial_cmp(b).expect("finite eigenvalues"));
    Ok(d)
}

/// Lowest `k` eigenpairs of the symmetric tridiagonal matrix with the given
/// diagonal and off-diagonal (`off.len() == diag.len() - 1`).
pub fn tridiagonal_eigen<T: Real>(
    diag: &[T],
    off: &[T],
    k: usize,
    with_vectors: bool,
) -> Result<SymmetricEigen<T>> {
    let n = diag.len();
    check_count(k, n)?;
    if off.len() + 1 != n {
        return Err(invalid("off", "off-diagonal must have length dim - 1"));
    }
    let mut d = diag.to_vec();
    // `implicit_ql` expects the sub-diagonal in e[1..n], as left by the reduction.
    let mut e = vec![T::zero(); n];
    e[1..].copy_from_slice(off);
    let mut v = with_vectors.then(|| SymmetricMatrix::<T>::identity(n).entries);
    implicit_ql(n, &mut d, &mut e, v.as_deref_mut())?;
    Ok(collect_lowest(n, &d, v.as_deref(), k))
}

fn check_count(k: usize, dim: usize) -> Result<()> {
    if k == 0 || k > dim {
        Err(invalid("k", format!("need 1 <= k <= {dim}, got {k}")))
    } else {
        Ok(())
    }
}

fn collect_lowest<T: Real>(n: usize, d: &[T], v: Option<&[T]>, k: usize) -> SymmetricEigen<T> {
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].partial_cmp(&d[b]).expect("finite eigenvalues"));
    order.truncate(k);
    let values = order.iter().map(|&i| d[i]).collect();
    let vectors = match v {
        Some(v) => order
            .iter()
            .map(|&col| (0..n).map(|row| v[row * n + col]).collect())
            .collect(),
        None => Vec::new(),
    };
    SymmetricEigen { values, vectors }
}

/// Reduces the symmetric matrix held in `v` to tridiagonal form, leaving the
/// orthogonal transformation in `v`, the diagonal in `d` and the sub-diagonal
/// in `e[1..n]`.
fn householder_tridiagonalize<T: Real>(n: usize, v: &mut [T], d: &mut [T], e: &mut [T]) {
    let idx = |r: usize, c: usize| r * n + c;
    for j in 0..n {
        d[j] = v[idx(n - 1, j)];
    }
    for i in (1..n).rev() {
        let mut scale = T::zero();
        let mut h = T::zero();
        for dk in d.iter().take(i) {
            scale = scale + dk.abs();
        }
        if scale == T::zero() {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[idx(i - 1, j)];
                v[idx(i, j)] = T::zero();
                v[idx(j, i)] = T::zero();
            }
        } else {
            for dk in d.iter_mut().take(i) {
                *dk = *dk / scale;
                h = h + *dk * *dk;
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > T::zero() {
                g = -g;
            }
            e[i] = scale * g;
            h = h - f * g;
            d[i - 1] = f - g;
            for ej in e.iter_mut().take(i) {
                *ej = T::zero();
            }
            for j in 0..i {
                f = d[j];
                v[idx(j, i)] = f;
                g = e[j] + v[idx(j, j)] * f;
                for k in (j + 1)..i {
                    g = g + v[idx(k, j)] * d[k];
                    e[k] = e[k] + v[idx(k, j)] * f;
                }
                e[j] = g;
            }
            f = T::zero();
            for j in 0..i {
                e[j] = e[j] / h;
                f = f + e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] = e[j] - hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    v[idx(k, j)] = v[idx(k, j)] - (f * e[k] + g * d[k]);
                }
                d[j] = v[idx(i - 1, j)];
                v[idx(i, j)] = T::zero();
            }
        }
        d[i] = h;
    }

    // Accumulate the transformations.
    for i in 0..n.saturating_sub(1) {
        v[idx(n - 1, i)] = v[idx(i, i)];
        v[idx(i, i)] = T::one();
        let h = d[i + 1];
        if h != T::zero() {
            for k in 0..=i {
                d[k] = v[idx(k, i + 1)] / h;
            }
            for j in 0..=i {
                let mut g = T::zero();
                for k in 0..=i {
                    g = g + v[idx(k, i + 1)] * v[idx(k, j)];
                }
                for k in 0..=i {
                    v[idx(k, j)] = v[idx(k, j)] - g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[idx(k, i + 1)] = T::zero();
        }
    }
    for j in 0..n {
        d[j] = v[idx(n - 1, j)];
        v[idx(n - 1, j)] = T::zero();
    }
    v[idx(n - 1, n - 1)] = T::one();
    e[0] = T::zero();
}

/// Diagonalizes the tridiagonal matrix (`d`, `e[1..n]`) in place. When `v` is
/// given, the rotations are accumulated into its columns.
fn implicit_ql<T: Real>(
    n: usize,
    d: &mut [T],
    e: &mut [T],
    mut v: Option<&mut [T]>,
) -> Result<()> {
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = T::zero();

    let eps = T::epsilon();
    let two = T::lit(2.0);
    let mut f = T::zero();
    let mut tst1 = T::zero();
    let mut total_sweeps = 0usize;

    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n - 1 && e[m].abs() > eps * tst1 {
            m += 1;
        }
        if m > l {
            let mut sweeps = 0usize;
            loop {
                sweeps += 1;
                total_sweeps += 1;
                if sweeps > QL_SWEEPS_PER_VALUE {
                    return Err(Error::NoConvergence {
                        iterations: total_sweeps,
                    });
                }
                let g = d[l];
                let mut p = (d[l + 1] - g) / (two * e[l]);
                let mut r = p.hypot(T::one());
                if p < T::zero() {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().skip(l + 2) {
                    *di = *di - h;
                }
                f = f + h;

                p = d[m];
                let mut c = T::one();
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = T::zero();
                let mut s2 = T::zero();
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    let g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    if let Some(v) = v.as_deref_mut() {
                        for k in 0..n {
                            let row = k * n;
                            let h = v[row + i + 1];
                            v[row + i + 1] = s * v[row + i] + c * h;
                            v[row + i] = c * v[row + i] - s * h;
                        }
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] = d[l] + f;
        e[l] = T::zero();
    }
    Ok(())
}
