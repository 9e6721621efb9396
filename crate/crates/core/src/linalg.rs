//! Small dense linear algebra layer.
//!
//! Row-major [`Matrix`] and [`Vector`] types plus the three solves everything
//! else is built on: repeated powers of a square matrix, a symmetric
//! positive-definite solve with a minimum-norm fallback, and rank-revealing
//! least squares.
//!
//! Least squares is computed from a singular value decomposition (backed by
//! `nalgebra`); the SPD solve is a plain LDLᵀ factorization in natural pivot
//! order so repeated runs give bit-identical results.

use std::ops::{Deref, Index, IndexMut};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Singular values below `DEFAULT_RANK_TOL * sigma_max` count as zero.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;
/// LDLᵀ pivots below `SPD_PIVOT_TOL * max_diag` trigger the least-squares fallback.
pub const SPD_PIVOT_TOL: f64 = 1e-12;
/// Relative tolerance for the symmetry check in [`solve_spd`].
pub const SYMMETRY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Vector(Vec<f64>);

impl Vector {
    pub fn new(entries: Vec<f64>) -> Self {
        Vector(entries)
    }

    pub fn zeros(len: usize) -> Self {
        Vector(vec![0.0; len])
    }

    pub fn scalar(v: f64) -> Self {
        Vector(vec![v])
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }

    pub fn dot(&self, other: &Vector) -> f64 {
        debug_assert_eq!(self.len(), other.len());
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub fn add(&self, other: &Vector) -> Vector {
        debug_assert_eq!(self.len(), other.len());
        Vector(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, other: &Vector) -> Vector {
        debug_assert_eq!(self.len(), other.len());
        Vector(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    pub fn scale(&self, s: f64) -> Vector {
        Vector(self.0.iter().map(|a| a * s).collect())
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

impl Deref for Vector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl Index<usize> for Vector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for Vector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

impl From<Vec<f64>> for Vector {
    fn from(v: Vec<f64>) -> Self {
        Vector(v)
    }
}

impl FromIterator<f64> for Vector {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        Vector(iter.into_iter().collect())
    }
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    entries: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, entries: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::DimensionMismatch(format!("matrix must be at least 1x1, got {rows}x{cols}")));
        }
        if entries.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                entries.len()
            )));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("matrix entry".into()));
        }
        Ok(Matrix { rows, cols, entries })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::DimensionMismatch("ragged rows".into()));
        }
        Matrix::new(rows.len(), cols, rows.concat())
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "empty matrix");
        Matrix { rows, cols, entries: vec![0.0; rows * cols] }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vector {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let aik = self[(i, k)];
                for j in 0..other.cols {
                    out[(i, j)] += aik * other[(k, j)];
                }
            }
        }
        Ok(out)
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::DimensionMismatch("matrix sum".into()));
        }
        let entries = self.entries.iter().zip(&other.entries).map(|(a, b)| a + b).collect();
        Ok(Matrix { rows: self.rows, cols: self.cols, entries })
    }

    pub fn scale(&self, s: f64) -> Matrix {
        Matrix { rows: self.rows, cols: self.cols, entries: self.entries.iter().map(|v| v * s).collect() }
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.entries)
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.entries[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.entries[i * self.cols + j]
    }
}

pub fn mat_vec(a: &Matrix, v: &[f64]) -> Result<Vector> {
    if a.cols != v.len() {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} matrix times vector of length {}",
            a.rows,
            a.cols,
            v.len()
        )));
    }
    Ok((0..a.rows).map(|i| a.row(i).iter().zip(v).map(|(x, y)| x * y).sum()).collect())
}

/// `A^0 ..= A^kmax`, each power computed as `A * previous`.
pub fn mat_pow_table(a: &Matrix, kmax: usize) -> Result<Vec<Matrix>> {
    if !a.is_square() {
        return Err(Error::NotSquare { rows: a.rows, cols: a.cols });
    }
    let mut table = Vec::with_capacity(kmax + 1);
    table.push(Matrix::identity(a.rows));
    for k in 0..kmax {
        let next = a.matmul(&table[k])?;
        if next.entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("matrix power {}", k + 1)));
        }
        table.push(next);
    }
    Ok(table)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpdSolution {
    pub x: Vector,
    /// Set when the factorization hit a negligible pivot and `x` is the
    /// minimum-norm least-squares solution instead.
    pub rank_deficient: bool,
    pub rank: usize,
}

/// Solve `G x = rhs` for symmetric positive (semi)definite `G`.
///
/// LDLᵀ without pivoting. If any pivot falls below `SPD_PIVOT_TOL` times the
/// largest diagonal entry the system is treated as singular and the
/// minimum-norm least-squares solution is returned with `rank_deficient` set.
pub fn solve_spd(g: &Matrix, rhs: &[f64]) -> Result<SpdSolution> {
    if !g.is_square() {
        return Err(Error::NotSquare { rows: g.rows, cols: g.cols });
    }
    let n = g.rows;
    if rhs.len() != n {
        return Err(Error::DimensionMismatch(format!("rhs length {} for {n}x{n} system", rhs.len())));
    }
    let scale = g.max_abs();
    let mut asym = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            asym = asym.max((g[(i, j)] - g[(j, i)]).abs());
        }
    }
    if scale > 0.0 && asym > SYMMETRY_TOL * scale {
        return Err(Error::NotSymmetric(asym / scale));
    }

    let max_diag = (0..n).fold(0.0_f64, |m, i| m.max(g[(i, i)].abs()));
    let threshold = SPD_PIVOT_TOL * max_diag;

    // Unit lower-triangular L (row-major, strictly lower part) and diagonal D.
    let mut l = Matrix::zeros(n, n);
    let mut d = vec![0.0; n];
    let mut singular = max_diag == 0.0;
    if !singular {
        'factor: for j in 0..n {
            let mut dj = g[(j, j)];
            for k in 0..j {
                dj -= l[(j, k)] * l[(j, k)] * d[k];
            }
            if dj <= threshold {
                singular = true;
                break 'factor;
            }
            d[j] = dj;
            l[(j, j)] = 1.0;
            for i in (j + 1)..n {
                let mut v = g[(i, j)];
                for k in 0..j {
                    v -= l[(i, k)] * l[(j, k)] * d[k];
                }
                l[(i, j)] = v / dj;
            }
        }
    }

    if singular {
        let ls = least_squares(g, rhs)?;
        return Ok(SpdSolution { x: ls.coeffs, rank_deficient: true, rank: ls.rank });
    }

    let mut y = rhs.to_vec();
    for i in 0..n {
        for k in 0..i {
            y[i] -= l[(i, k)] * y[k];
        }
    }
    for i in 0..n {
        y[i] /= d[i];
    }
    for i in (0..n).rev() {
        for k in (i + 1)..n {
            y[i] -= l[(k, i)] * y[k];
        }
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("SPD solve".into()));
    }
    Ok(SpdSolution { x: Vector(y), rank_deficient: false, rank: n })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeastSquares {
    pub coeffs: Vector,
    pub rank: usize,
    pub residual_norm: f64,
}

impl LeastSquares {
    pub fn is_rank_deficient(&self) -> bool {
        self.rank < self.coeffs.len()
    }
}

/// Minimum-norm least-squares solution of `X c ≈ y` with the default rank cutoff.
pub fn least_squares(x: &Matrix, y: &[f64]) -> Result<LeastSquares> {
    least_squares_with_tol(x, y, DEFAULT_RANK_TOL)
}

/// Like [`least_squares`] with an explicit relative singular-value cutoff.
///
/// Square systems are accepted, which the SPD fallback relies on.
pub fn least_squares_with_tol(x: &Matrix, y: &[f64], rank_tol: f64) -> Result<LeastSquares> {
    if x.rows < x.cols {
        return Err(Error::Underdetermined { rows: x.rows, cols: x.cols });
    }
    if y.len() != x.rows {
        return Err(Error::DimensionMismatch(format!("{} observations for {} design rows", y.len(), x.rows)));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("least-squares response".into()));
    }
    let svd = x.to_nalgebra().svd(true, true);
    let u = svd.u.as_ref().expect("u requested");
    let vt = svd.v_t.as_ref().expect("v_t requested");
    let sigma = &svd.singular_values;
    let smax = sigma.iter().fold(0.0_f64, |m, &s| m.max(s));
    let cutoff = rank_tol * smax;

    let mut coeffs = vec![0.0; x.cols];
    let mut rank = 0;
    for (k, &s) in sigma.iter().enumerate() {
        if smax == 0.0 || s <= cutoff {
            continue;
        }
        rank += 1;
        let uty: f64 = (0..x.rows).map(|i| u[(i, k)] * y[i]).sum();
        let w = uty / s;
        for (j, c) in coeffs.iter_mut().enumerate() {
            *c += w * vt[(k, j)];
        }
    }
    let fitted = mat_vec(x, &coeffs)?;
    let residual_norm = fitted.iter().zip(y).map(|(f, t)| (f - t) * (f - t)).sum::<f64>().sqrt();
    Ok(LeastSquares { coeffs: Vector(coeffs), rank, residual_norm })
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn mat_vec_examples() {
        assert_eq!(mat_vec(&Matrix::identity(2), &[3.0, 4.0]).unwrap().as_slice(), &[3.0, 4.0]);
        assert_eq!(mat_vec(&Matrix::zeros(2, 2), &[3.0, 4.0]).unwrap().as_slice(), &[0.0, 0.0]);
        let a = m(&[&[1.0, 2.0], &[3.0, 4.0]]);
        assert_eq!(mat_vec(&a, &[1.0, 1.0]).unwrap().as_slice(), &[3.0, 7.0]);
        assert!(matches!(mat_vec(&a, &[1.0]), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn matrix_constructor_rejects_bad_shapes() {
        assert!(Matrix::new(2, 2, vec![1.0; 3]).is_err());
        assert!(Matrix::new(0, 2, vec![]).is_err());
        assert!(Matrix::new(1, 1, vec![f64::NAN]).is_err());
    }

    #[test]
    fn pow_table_identity_and_zero() {
        let t = mat_pow_table(&Matrix::identity(3), 3).unwrap();
        assert_eq!(t.len(), 4);
        assert!(t.iter().all(|p| *p == Matrix::identity(3)));

        let t = mat_pow_table(&Matrix::zeros(2, 2), 2).unwrap();
        assert_eq!(t[0], Matrix::identity(2));
        assert_eq!(t[1], Matrix::zeros(2, 2));
        assert_eq!(t[2], Matrix::zeros(2, 2));
    }

    #[test]
    fn pow_table_fibonacci() {
        let a = m(&[&[0.0, 1.0], &[1.0, 1.0]]);
        let t = mat_pow_table(&a, 4).unwrap();
        // Oracle: push a vector through repeated mat_vec and compare columns.
        for k in 0..=4 {
            for col in 0..2 {
                let mut v = vec![0.0; 2];
                v[col] = 1.0;
                for _ in 0..k {
                    v = mat_vec(&a, &v).unwrap().into_inner();
                }
                assert_eq!(t[k].column(col).as_slice(), v.as_slice());
            }
        }
        // A^4 = ((F3, F4), (F4, F5)) = ((2, 3), (3, 5))
        assert_eq!(t[4].entries(), &[2.0, 3.0, 3.0, 5.0]);
    }

    #[test]
    fn pow_table_rejects_rectangular() {
        assert!(matches!(mat_pow_table(&Matrix::zeros(2, 3), 1), Err(Error::NotSquare { .. })));
    }

    #[test]
    fn spd_examples() {
        let g = Matrix::identity(2).scale(2.0);
        let s = solve_spd(&g, &[4.0, 6.0]).unwrap();
        assert_eq!(s.x.as_slice(), &[2.0, 3.0]);
        assert!(!s.rank_deficient);

        let s = solve_spd(&Matrix::identity(3), &[1.0, -2.0, 5.0]).unwrap();
        assert_eq!(s.x.as_slice(), &[1.0, -2.0, 5.0]);

        let g = m(&[&[2.0, 1.0], &[1.0, 2.0]]);
        let s = solve_spd(&g, &[3.0, 3.0]).unwrap();
        assert_relative_eq!(s.x[0], 1.0, epsilon = 1e-15);
        assert_relative_eq!(s.x[1], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn spd_rejects_asymmetric() {
        let g = m(&[&[2.0, 1.0], &[0.0, 2.0]]);
        assert!(matches!(solve_spd(&g, &[1.0, 1.0]), Err(Error::NotSymmetric(_))));
    }

    #[test]
    fn spd_singular_falls_back_to_min_norm() {
        // rank one: [[1,1],[1,1]] x = (2,2) -> minimum norm x = (1,1)
        let g = m(&[&[1.0, 1.0], &[1.0, 1.0]]);
        let s = solve_spd(&g, &[2.0, 2.0]).unwrap();
        assert!(s.rank_deficient);
        assert_eq!(s.rank, 1);
        assert_relative_eq!(s.x[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(s.x[1], 1.0, epsilon = 1e-12);

        let s = solve_spd(&Matrix::zeros(2, 2), &[0.0, 0.0]).unwrap();
        assert!(s.rank_deficient);
        assert_eq!(s.rank, 0);
        assert_eq!(s.x.as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn least_squares_examples() {
        let ones = Matrix::new(3, 1, vec![1.0; 3]).unwrap();
        let ls = least_squares(&ones, &[5.0, 5.0, 5.0]).unwrap();
        assert_relative_eq!(ls.coeffs[0], 5.0, epsilon = 1e-12);
        assert_eq!(ls.rank, 1);
        assert!(ls.residual_norm < 1e-12);

        let x = m(&[&[1.0, 1.0], &[2.0, 1.0], &[3.0, 1.0]]);
        let ls = least_squares(&x, &[3.0, 5.0, 7.0]).unwrap();
        assert_relative_eq!(ls.coeffs[0], 2.0, epsilon = 1e-12);
        assert_relative_eq!(ls.coeffs[1], 1.0, epsilon = 1e-12);
        assert!(ls.residual_norm < 1e-12);
        assert!(!ls.is_rank_deficient());
    }

    #[test]
    fn least_squares_flags_collinear_columns() {
        let x = m(&[&[1.0, 2.0], &[2.0, 4.0], &[3.0, 6.0]]);
        let ls = least_squares(&x, &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(ls.rank, 1);
        assert!(ls.is_rank_deficient());
        // minimum-norm solution lies along (1, 2): c = (1,2)/5
        assert_relative_eq!(ls.coeffs[0], 0.2, epsilon = 1e-12);
        assert_relative_eq!(ls.coeffs[1], 0.4, epsilon = 1e-12);
    }

    #[test]
    fn least_squares_rejects_wide() {
        let x = Matrix::zeros(1, 2);
        assert!(matches!(least_squares(&x, &[1.0]), Err(Error::Underdetermined { .. })));
    }
}
