//! Dense small-matrix helpers and the 0/1 structured operators used by the
//! delta-method algebra.
//!
//! Conventions: `vec` stacks columns, `vech` stacks the lower triangle
//! (diagonal included) column by column. All structured operators are
//! materialized as explicit matrices; dimensions in this crate stay small.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, TvVarError};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Builds a matrix from row-major data, rejecting NaN/Inf entries.
pub fn matrix_from_rows(rows: usize, cols: usize, entries: &[f64]) -> Result<Matrix> {
    if entries.len() != rows * cols {
        return Err(TvVarError::Dimension(format!(
            "{} entries for a {rows}x{cols} matrix",
            entries.len()
        )));
    }
    if let Some(k) = entries.iter().position(|v| !v.is_finite()) {
        return Err(TvVarError::NonFinite {
            row: k / cols.max(1),
            col: k % cols.max(1),
        });
    }
    Ok(Matrix::from_row_slice(rows, cols, entries))
}

pub fn vec(m: &Matrix) -> Vector {
    Vector::from_column_slice(m.as_slice())
}

pub fn unvec(v: &Vector, rows: usize, cols: usize) -> Matrix {
    assert_eq!(v.len(), rows * cols, "unvec length mismatch");
    Matrix::from_column_slice(rows, cols, v.as_slice())
}

#[inline]
pub fn vech_len(d: usize) -> usize {
    d * (d + 1) / 2
}

/// Position of entry `(i, j)`, `i >= j`, inside `vech` of a `d x d` matrix.
#[inline]
pub fn vech_index(d: usize, i: usize, j: usize) -> usize {
    debug_assert!(i >= j && i < d);
    // column j starts after sum_{c<j} (d - c) entries
    j * d - j * j.saturating_sub(1) / 2 + (i - j)
}

pub fn vech(m: &Matrix) -> Result<Vector> {
    if !m.is_square() {
        return Err(TvVarError::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    let d = m.nrows();
    let mut out = Vec::with_capacity(vech_len(d));
    for j in 0..d {
        for i in j..d {
            out.push(m[(i, j)]);
        }
    }
    Ok(Vector::from_vec(out))
}

/// Symmetric matrix whose `vech` is `v`.
pub fn unvech(v: &Vector, d: usize) -> Matrix {
    assert_eq!(v.len(), vech_len(d), "unvech length mismatch");
    let mut m = Matrix::zeros(d, d);
    let mut k = 0;
    for j in 0..d {
        for i in j..d {
            m[(i, j)] = v[k];
            m[(j, i)] = v[k];
            k += 1;
        }
    }
    m
}

pub fn kron(a: &Matrix, b: &Matrix) -> Matrix {
    a.kronecker(b)
}

pub fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

/// Structured 0/1 operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StructuredOperator {
    /// `K_{m,n} vec(G) = vec(G')` for `m x n` matrices `G`.
    Commutation { m: usize, n: usize },
    /// `D vech(S) = vec(S)` for symmetric `d x d` matrices.
    Duplication { d: usize },
    /// `L vec(F) = vech(F)`.
    Elimination { d: usize },
    /// Picks the strictly upper-triangular positions of `vec(B)`, so that
    /// `Q vec(B) = 0` for lower-triangular `B`.
    StrictUpperSelector { d: usize },
    /// `J = [I_d, 0]`, `d x dp`.
    CompanionSelector { d: usize, p: usize },
}

impl StructuredOperator {
    pub fn shape(&self) -> (usize, usize) {
        match *self {
            StructuredOperator::Commutation { m, n } => (m * n, m * n),
            StructuredOperator::Duplication { d } => (d * d, vech_len(d)),
            StructuredOperator::Elimination { d } => (vech_len(d), d * d),
            StructuredOperator::StrictUpperSelector { d } => (d * (d.saturating_sub(1)) / 2, d * d),
            StructuredOperator::CompanionSelector { d, p } => (d, d * p),
        }
    }

    pub fn materialize(&self) -> Matrix {
        let (r, c) = self.shape();
        let mut out = Matrix::zeros(r, c);
        match *self {
            StructuredOperator::Commutation { m, n } => {
                for i in 0..m {
                    for j in 0..n {
                        out[(i * n + j, j * m + i)] = 1.0;
                    }
                }
            }
            StructuredOperator::Duplication { d } => {
                for j in 0..d {
                    for i in 0..d {
                        let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
                        out[(j * d + i, vech_index(d, hi, lo))] = 1.0;
                    }
                }
            }
            StructuredOperator::Elimination { d } => {
                for j in 0..d {
                    for i in j..d {
                        out[(vech_index(d, i, j), j * d + i)] = 1.0;
                    }
                }
            }
            StructuredOperator::StrictUpperSelector { d } => {
                let mut row = 0;
                for j in 0..d {
                    for i in 0..j {
                        out[(row, j * d + i)] = 1.0;
                        row += 1;
                    }
                }
            }
            StructuredOperator::CompanionSelector { d, .. } => {
                for i in 0..d {
                    out[(i, i)] = 1.0;
                }
            }
        }
        out
    }
}

pub fn commutation(m: usize, n: usize) -> Matrix {
    StructuredOperator::Commutation { m, n }.materialize()
}

pub fn duplication(d: usize) -> Matrix {
    StructuredOperator::Duplication { d }.materialize()
}

pub fn elimination(d: usize) -> Matrix {
    StructuredOperator::Elimination { d }.materialize()
}

pub fn strict_upper_selector(d: usize) -> Matrix {
    StructuredOperator::StrictUpperSelector { d }.materialize()
}

pub fn companion_selector(d: usize, p: usize) -> Matrix {
    StructuredOperator::CompanionSelector { d, p }.materialize()
}

/// Relative pivot threshold for the Cholesky factorization.
pub const CHOLESKY_PIVOT_TOL: f64 = 1e-12;

/// Lower Cholesky factor with positive diagonal of `(s + s')/2`.
pub fn cholesky_lower(s: &Matrix) -> Result<Matrix> {
    if !s.is_square() {
        return Err(TvVarError::NotSquare {
            rows: s.nrows(),
            cols: s.ncols(),
        });
    }
    let a = symmetrize(s);
    let d = a.nrows();
    let max_diag = (0..d).map(|i| a[(i, i)]).fold(0.0_f64, f64::max);
    let tol = CHOLESKY_PIVOT_TOL * max_diag;
    let mut l = Matrix::zeros(d, d);
    for j in 0..d {
        let mut pivot = a[(j, j)];
        for k in 0..j {
            pivot -= l[(j, k)] * l[(j, k)];
        }
        if !(pivot > tol) || max_diag <= 0.0 {
            return Err(TvVarError::NotPositiveDefinite { pivot: j });
        }
        let ljj = pivot.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..d {
            let mut v = a[(i, j)];
            for k in 0..j {
                v -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = v / ljj;
        }
    }
    Ok(l)
}

pub fn is_positive_definite(s: &Matrix) -> bool {
    cholesky_lower(s).is_ok()
}

/// Largest eigenvalue modulus (real Schur form).
pub fn spectral_radius(m: &Matrix) -> Result<f64> {
    if !m.is_square() {
        return Err(TvVarError::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    if m.nrows() == 0 {
        return Ok(0.0);
    }
    let n = m.nrows();
    let lower = (0..n).all(|i| (i + 1..n).all(|j| m[(i, j)] == 0.0));
    let upper = (0..n).all(|i| (0..i).all(|j| m[(i, j)] == 0.0));
    if lower || upper {
        // eigenvalues of a triangular matrix sit on its diagonal
        return Ok((0..n).map(|i| m[(i, i)].abs()).fold(0.0, f64::max));
    }
    let eig = m.complex_eigenvalues();
    Ok(eig.iter().map(|z| z.norm()).fold(0.0, f64::max))
}

/// Inverse of a symmetric positive definite matrix via its Cholesky factor.
pub fn spd_inverse(s: &Matrix) -> Result<Matrix> {
    let l = cholesky_lower(s)?;
    let d = l.nrows();
    let y = l
        .solve_lower_triangular(&Matrix::identity(d, d))
        .ok_or(TvVarError::NotPositiveDefinite { pivot: 0 })?;
    let mut inv = l
        .transpose()
        .solve_upper_triangular(&y)
        .ok_or(TvVarError::NotPositiveDefinite { pivot: 0 })?;
    // keep exact symmetry
    for i in 0..d {
        for j in 0..i {
            let v = 0.5 * (inv[(i, j)] + inv[(j, i)]);
            inv[(i, j)] = v;
            inv[(j, i)] = v;
        }
    }
    Ok(inv)
}

/// Cheap reciprocal condition estimate from the diagonal of a column-pivoted
/// QR factorization.
pub fn rcond_estimate(m: &Matrix) -> f64 {
    if m.nrows() == 0 {
        return 1.0;
    }
    let qr = m.clone().col_piv_qr();
    let r = qr.r();
    let diag: Vec<f64> = (0..r.nrows().min(r.ncols())).map(|i| r[(i, i)].abs()).collect();
    let max = diag.iter().cloned().fold(0.0, f64::max);
    let min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    if max == 0.0 {
        0.0
    } else {
        min / max
    }
}

/// General square inverse through pivoted QR; errors when the reciprocal
/// condition estimate falls below `rcond_min`.
pub fn checked_inverse(m: &Matrix, rcond_min: f64) -> std::result::Result<Matrix, f64> {
    let rc = rcond_estimate(m);
    if !(rc >= rcond_min) {
        return Err(rc);
    }
    let n = m.nrows();
    let qr = m.clone().col_piv_qr();
    let mut id = Matrix::identity(n, n);
    if qr.solve_mut(&mut id) {
        Ok(id)
    } else {
        Err(0.0)
    }
}

/// Symmetric PSD projection: eigenvalues below zero clipped to zero.
pub fn clip_psd(m: &Matrix) -> Matrix {
    let s = symmetrize(m);
    let eig = nalgebra::SymmetricEigen::new(s);
    let vals = eig.eigenvalues.map(|v| v.max(0.0));
    &eig.eigenvectors * Matrix::from_diagonal(&vals) * eig.eigenvectors.transpose()
}

pub fn frobenius(m: &Matrix) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}
