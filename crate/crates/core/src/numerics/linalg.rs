//! Small dense least-squares problems (a handful of columns).

use crate::error::{invalid, Error, Result};
use crate::numerics::eigen::{symmetric_eigen, SymmetricMatrix};
use crate::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct LeastSquares<T> {
    pub coefficients: Vec<T>,
    pub residuals: Vec<T>,
    pub residual_sum_squares: T,
    /// `s^2 (X^T X)^{-1}` with `s^2 = RSS / (n - p)`; zero when `n == p`.
    pub covariance: Vec<Vec<T>>,
}

impl<T: Real> LeastSquares<T> {
    pub fn standard_errors(&self) -> Vec<T> {
        (0..self.coefficients.len())
            .map(|i| self.covariance[i][i].max(T::zero()).sqrt())
            .collect()
    }
}

/// Ordinary least squares `y ≈ X b` with `X` given column by column.
///
/// Solved through the eigendecomposition of the normal matrix, which is
/// adequate for the well-conditioned few-column designs used in the fits.
/// A rank-deficient design is an identifiability error.
pub fn least_squares<T: Real>(columns: &[Vec<T>], y: &[T]) -> Result<LeastSquares<T>> {
    let p = columns.len();
    let n = y.len();
    if p == 0 {
        return Err(invalid("columns", "empty design"));
    }
    if columns.iter().any(|c| c.len() != n) {
        return Err(invalid("columns", "column length differs from observations"));
    }
    if n < p {
        return Err(Error::Identifiability(format!("{n} observations for {p} coefficients")));
    }
    let dot = |a: &[T], b: &[T]| a.iter().zip(b).map(|(&x, &y)| x * y).sum::<T>();
    // Columns are scaled to unit norm so the rank test does not depend on units.
    let scale: Vec<T> = columns.iter().map(|c| dot(c, c).sqrt()).collect();
    if scale.iter().any(|&s| !(s > T::zero()) || !s.is_finite()) {
        return Err(Error::Identifiability("design has a zero or non-finite column".into()));
    }
    let normal = SymmetricMatrix::from_lower(p, |i, j| dot(&columns[i], &columns[j]) / (scale[i] * scale[j]));
    let rhs: Vec<T> = columns.iter().zip(&scale).map(|(c, &s)| dot(c, y) / s).collect();
    let eig = symmetric_eigen(&normal, p)?;
    let top = eig.values.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    let floor = top * T::epsilon() * T::lit(1e3);
    if eig.values[0] <= floor {
        return Err(Error::Identifiability("design matrix is rank deficient".into()));
    }
    let mut inverse = vec![vec![T::zero(); p]; p];
    for (lambda, v) in eig.values.iter().zip(&eig.vectors) {
        for i in 0..p {
            for j in 0..p {
                inverse[i][j] = inverse[i][j] + v[i] * v[j] / *lambda;
            }
        }
    }
    for i in 0..p {
        for j in 0..p {
            inverse[i][j] = inverse[i][j] / (scale[i] * scale[j]);
        }
    }
    let rhs: Vec<T> = rhs.iter().zip(&scale).map(|(&r, &s)| r * s).collect();
    let coefficients: Vec<T> = inverse.iter().map(|row| dot(row, &rhs)).collect();
    let residuals: Vec<T> = (0..n)
        .map(|r| y[r] - (0..p).map(|c| columns[c][r] * coefficients[c]).sum::<T>())
        .collect();
    let rss = dot(&residuals, &residuals);
    let s2 = if n > p { rss / T::from_usize_lossy(n - p) } else { T::zero() };
    let covariance = inverse
        .iter()
        .map(|row| row.iter().map(|&v| v * s2).collect())
        .collect();
    Ok(LeastSquares {
        coefficients,
        residuals,
        residual_sum_squares: rss,
        covariance,
    })
}
