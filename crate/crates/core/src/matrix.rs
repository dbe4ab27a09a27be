//! Dense small-matrix algebra.
//!
//! Everything the BEKK model needs lives here: the half-vectorization
//! operators (`vec`, `vech`) and the duplication matrix linking them,
//! Kronecker products, spectral radii of general real matrices, and square
//! roots of positive-definite matrices. Matrices are tiny (at most a few
//! dozen rows), so the routines favour clarity and accuracy over blocking.

use std::fmt;
use std::ops::{Index, IndexMut};

use thiserror::Error;

/// Relative tolerance used by [`Mat::is_symmetric`].
pub const SYMMETRY_TOL: f64 = 1e-10;

/// A matrix is treated as positive definite when its smallest eigenvalue
/// exceeds this fraction of its trace.
pub const PD_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MatrixError {
    #[error("matrix dimensions must be positive (got {rows}x{cols})")]
    EmptyShape { rows: usize, cols: usize },
    #[error("expected {expected} entries for a {rows}x{cols} matrix, got {got}")]
    EntryCount {
        rows: usize,
        cols: usize,
        expected: usize,
        got: usize,
    },
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("{op} requires a square matrix, got {rows}x{cols}")]
    NotSquare {
        op: &'static str,
        rows: usize,
        cols: usize,
    },
    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },
    #[error("matrix is not positive definite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },
    #[error("dimension must be at least 1")]
    ZeroDimension,
    #[error("eigenvalue iteration did not converge")]
    NoConvergence,
}

/// Dense real matrix stored in row-major order.
#[derive(Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Mat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Mat {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}

impl Index<(usize, usize)> for Mat {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Mat {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl Mat {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, MatrixError> {
        if rows == 0 || cols == 0 {
            return Err(MatrixError::EmptyShape { rows, cols });
        }
        if data.len() != rows * cols {
            return Err(MatrixError::EntryCount {
                rows,
                cols,
                expected: rows * cols,
                got: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from nested rows. Panics on ragged or empty input,
    /// so it is meant for literals.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        assert!(!rows.is_empty(), "from_rows needs at least one row");
        let cols = rows[0].as_ref().len();
        assert!(cols > 0, "from_rows needs at least one column");
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Self {
            rows: rows.len(),
            cols,
            data,
        }
    }

    /// Matrix whose columns are stacked in `v` (inverse of [`vec`]).
    pub fn from_col_major(rows: usize, cols: usize, v: &[f64]) -> Result<Self, MatrixError> {
        if rows == 0 || cols == 0 {
            return Err(MatrixError::EmptyShape { rows, cols });
        }
        if v.len() != rows * cols {
            return Err(MatrixError::EntryCount {
                rows,
                cols,
                expected: rows * cols,
                got: v.len(),
            });
        }
        let mut out = Self::zeros(rows, cols);
        for j in 0..cols {
            for i in 0..rows {
                out[(i, j)] = v[j * rows + i];
            }
        }
        Ok(out)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "zero-sized matrix");
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut out = Self::zeros(n, n);
        for i in 0..n {
            out[(i, i)] = 1.0;
        }
        out
    }

    pub fn diag(values: &[f64]) -> Self {
        let mut out = Self::zeros(values.len(), values.len());
        for (i, v) in values.iter().enumerate() {
            out[(i, i)] = *v;
        }
        out
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    /// Row-major entries.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Mat {
        let mut out = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(j, i)] = self[(i, j)];
            }
        }
        out
    }

    pub fn matmul(&self, other: &Mat) -> Result<Mat, MatrixError> {
        if self.cols != other.rows {
            return Err(MatrixError::Shape {
                op: "matmul",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other.data[k * other.cols + j];
                }
            }
        }
        Ok(out)
    }

    pub fn mul_vec(&self, v: &[f64]) -> Result<Vec<f64>, MatrixError> {
        if self.cols != v.len() {
            return Err(MatrixError::Shape {
                op: "mul_vec",
                left: self.shape(),
                right: (v.len(), 1),
            });
        }
        Ok((0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect())
    }

    pub fn add(&self, other: &Mat) -> Result<Mat, MatrixError> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Mat) -> Result<Mat, MatrixError> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    fn zip_with(
        &self,
        other: &Mat,
        op: &'static str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Mat, MatrixError> {
        if self.shape() != other.shape() {
            return Err(MatrixError::Shape {
                op,
                left: self.shape(),
                right: other.shape(),
            });
        }
        Ok(Mat {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| f(*a, *b))
                .collect(),
        })
    }

    pub fn scale(&self, alpha: f64) -> Mat {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|a| alpha * a).collect(),
        }
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|a| a * a).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, a| acc.max(a.abs()))
    }

    fn max_asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.rows {
            for j in 0..i {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    /// Symmetric up to [`SYMMETRY_TOL`] relative to the largest entry.
    pub fn is_symmetric(&self) -> bool {
        self.is_square() && self.max_asymmetry() <= SYMMETRY_TOL * self.max_abs().max(1.0)
    }

    fn require_symmetric(&self, op: &'static str) -> Result<(), MatrixError> {
        if !self.is_square() {
            return Err(MatrixError::NotSquare {
                op,
                rows: self.rows,
                cols: self.cols,
            });
        }
        if !self.is_symmetric() {
            return Err(MatrixError::NotSymmetric {
                asymmetry: self.max_asymmetry(),
            });
        }
        Ok(())
    }

    /// `(M + M')/2`; exact for matrices that are already symmetric.
    pub fn symmetrized(&self) -> Mat {
        let mut out = self.clone();
        for i in 0..self.rows {
            for j in 0..i {
                let v = 0.5 * (self[(i, j)] + self[(j, i)]);
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
        out
    }

    /// Positive definite: symmetric with smallest eigenvalue above
    /// [`PD_TOL`] times the trace.
    pub fn is_positive_definite(&self) -> bool {
        match symmetric_eigen(self) {
            Ok(eig) => eig.values[0] > PD_TOL * self.trace().abs() && eig.values[0] > 0.0,
            Err(_) => false,
        }
    }

    /// Lower Cholesky factor `L` with `L L' = self`.
    pub fn cholesky(&self) -> Result<Mat, MatrixError> {
        self.require_symmetric("cholesky")?;
        let n = self.rows;
        let mut l = Mat::zeros(n, n);
        for j in 0..n {
            let mut d = self[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if !(d > 0.0) {
                return Err(MatrixError::NotPositiveDefinite { min_eigenvalue: d });
            }
            let d = d.sqrt();
            l[(j, j)] = d;
            for i in j + 1..n {
                let mut s = self[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / d;
            }
        }
        Ok(l)
    }

    pub fn determinant(&self) -> Result<f64, MatrixError> {
        if !self.is_square() {
            return Err(MatrixError::NotSquare {
                op: "determinant",
                rows: self.rows,
                cols: self.cols,
            });
        }
        let n = self.rows;
        let mut a = self.data.clone();
        let mut det = 1.0;
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&x, &y| a[x * n + col].abs().total_cmp(&a[y * n + col].abs()))
                .unwrap_or(col);
            if a[pivot * n + col] == 0.0 {
                return Ok(0.0);
            }
            if pivot != col {
                for j in 0..n {
                    a.swap(pivot * n + j, col * n + j);
                }
                det = -det;
            }
            let p = a[col * n + col];
            det *= p;
            for i in col + 1..n {
                let f = a[i * n + col] / p;
                for j in col..n {
                    a[i * n + j] -= f * a[col * n + j];
                }
            }
        }
        Ok(det)
    }

    /// Inverse via Gauss-Jordan elimination with partial pivoting.
    pub fn inverse(&self) -> Result<Mat, MatrixError> {
        if !self.is_square() {
            return Err(MatrixError::NotSquare {
                op: "inverse",
                rows: self.rows,
                cols: self.cols,
            });
        }
        let n = self.rows;
        let mut a = self.data.clone();
        let mut inv = Mat::identity(n).data;
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&x, &y| a[x * n + col].abs().total_cmp(&a[y * n + col].abs()))
                .unwrap_or(col);
            if a[pivot * n + col] == 0.0 {
                return Err(MatrixError::NotPositiveDefinite { min_eigenvalue: 0.0 });
            }
            if pivot != col {
                for j in 0..n {
                    a.swap(pivot * n + j, col * n + j);
                    inv.swap(pivot * n + j, col * n + j);
                }
            }
            let p = a[col * n + col];
            for j in 0..n {
                a[col * n + j] /= p;
                inv[col * n + j] /= p;
            }
            for i in 0..n {
                if i == col {
                    continue;
                }
                let f = a[i * n + col];
                if f == 0.0 {
                    continue;
                }
                for j in 0..n {
                    a[i * n + j] -= f * a[col * n + j];
                    inv[i * n + j] -= f * inv[col * n + j];
                }
            }
        }
        Ok(Mat {
            rows: n,
            cols: n,
            data: inv,
        })
    }
}

/// Column-stacking vectorization.
pub fn vec(m: &Mat) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.rows * m.cols);
    for j in 0..m.cols {
        for i in 0..m.rows {
            out.push(m[(i, j)]);
        }
    }
    out
}

/// Position of entry `(i, j)`, `i >= j`, inside `vech` of an `m x m` matrix.
#[inline]
pub fn vech_index(m: usize, i: usize, j: usize) -> usize {
    debug_assert!(i >= j && i < m);
    j * m - j * j.saturating_sub(1) / 2 + i - j
}

/// Half-vectorization: the lower triangle stacked column by column
/// (column `j` contributes rows `j..m`).
pub fn vech(m: &Mat) -> Result<Vec<f64>, MatrixError> {
    m.require_symmetric("vech")?;
    let n = m.rows;
    let mut out = Vec::with_capacity(n * (n + 1) / 2);
    for j in 0..n {
        for i in j..n {
            out.push(m[(i, j)]);
        }
    }
    Ok(out)
}

/// Inverse of [`vech`]: the symmetric matrix whose lower triangle is `v`.
pub fn unvech(m: usize, v: &[f64]) -> Result<Mat, MatrixError> {
    if m == 0 {
        return Err(MatrixError::ZeroDimension);
    }
    let len = m * (m + 1) / 2;
    if v.len() != len {
        return Err(MatrixError::EntryCount {
            rows: len,
            cols: 1,
            expected: len,
            got: v.len(),
        });
    }
    let mut out = Mat::zeros(m, m);
    let mut it = v.iter();
    for j in 0..m {
        for i in j..m {
            let x = *it.next().expect("length checked");
            out[(i, j)] = x;
            out[(j, i)] = x;
        }
    }
    Ok(out)
}

/// Duplication matrix `D_m` (shape `m² x m(m+1)/2`) together with its left
/// pseudoinverse `D_m^+ = (D_m' D_m)^{-1} D_m'`.
///
/// `vec(A) = D_m vech(A)` and `vech(A) = D_m^+ vec(A)` for every symmetric `A`.
pub fn duplication_matrix(m: usize) -> Result<(Mat, Mat), MatrixError> {
    if m == 0 {
        return Err(MatrixError::ZeroDimension);
    }
    let half = m * (m + 1) / 2;
    let mut d = Mat::zeros(m * m, half);
    let mut h = 0;
    for j in 0..m {
        for i in j..m {
            d[(j * m + i, h)] = 1.0;
            d[(i * m + j, h)] = 1.0;
            h += 1;
        }
    }
    // D'D is diagonal: 1 for diagonal entries of A, 2 for off-diagonal ones.
    let mut plus = d.transpose();
    for r in 0..half {
        let count: f64 = plus.row(r).iter().sum();
        for c in 0..m * m {
            plus[(r, c)] /= count;
        }
    }
    Ok((d, plus))
}

/// Kronecker product with block layout `(A⊗B)[i·p + r, j·q + s] = A[i,j]·B[r,s]`.
pub fn kronecker(a: &Mat, b: &Mat) -> Mat {
    let (p, q) = b.shape();
    let mut out = Mat::zeros(a.rows * p, a.cols * q);
    for i in 0..a.rows {
        for j in 0..a.cols {
            let aij = a[(i, j)];
            for r in 0..p {
                for s in 0..q {
                    out[(i * p + r, j * q + s)] = aij * b[(r, s)];
                }
            }
        }
    }
    out
}

/// Eigen-decomposition of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    /// Eigenvalues in ascending order.
    pub values: Vec<f64>,
    /// Orthonormal eigenvectors; column `k` pairs with `values[k]`.
    pub vectors: Mat,
}

/// Cyclic Jacobi eigen-decomposition for symmetric input.
pub fn symmetric_eigen(a: &Mat) -> Result<SymmetricEigen, MatrixError> {
    a.require_symmetric("symmetric_eigen")?;
    let n = a.rows;
    let mut s = a.symmetrized();
    let mut v = Mat::identity(n);
    let scale = s.frobenius_norm();
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in 0..i {
                off += s[(i, j)] * s[(i, j)];
            }
        }
        let tol = 4.0 * n as f64 * f64::EPSILON * scale;
        if off.sqrt() <= tol || off == 0.0 {
            return Ok(sorted_eigen(s, v));
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = s[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (s[(q, q)] - s[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;
                for k in 0..n {
                    let skp = s[(k, p)];
                    let skq = s[(k, q)];
                    s[(k, p)] = c * skp - sn * skq;
                    s[(k, q)] = sn * skp + c * skq;
                }
                for k in 0..n {
                    let spk = s[(p, k)];
                    let sqk = s[(q, k)];
                    s[(p, k)] = c * spk - sn * sqk;
                    s[(q, k)] = sn * spk + c * sqk;
                }
                s[(p, q)] = 0.0;
                s[(q, p)] = 0.0;
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - sn * vkq;
                    v[(k, q)] = sn * vkp + c * vkq;
                }
            }
        }
    }
    Err(MatrixError::NoConvergence)
}

fn sorted_eigen(s: Mat, v: Mat) -> SymmetricEigen {
    let n = s.rows;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| s[(x, x)].total_cmp(&s[(y, y)]));
    let values = order.iter().map(|&k| s[(k, k)]).collect();
    let mut vectors = Mat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        for i in 0..n {
            vectors[(i, dst)] = v[(i, src)];
        }
    }
    SymmetricEigen { values, vectors }
}

/// Symmetric positive-definite square root `S` with `S·S = H`.
pub fn pd_sqrt(h: &Mat) -> Result<Mat, MatrixError> {
    let eig = symmetric_eigen(h)?;
    let min = eig.values[0];
    if !(min > PD_TOL * h.trace().abs()) {
        return Err(MatrixError::NotPositiveDefinite { min_eigenvalue: min });
    }
    let n = h.rows;
    let mut out = Mat::zeros(n, n);
    for k in 0..n {
        let r = eig.values[k].sqrt();
        for i in 0..n {
            let vik = eig.vectors[(i, k)] * r;
            for j in 0..n {
                out[(i, j)] += vik * eig.vectors[(j, k)];
            }
        }
    }
    Ok(out.symmetrized())
}

/// All eigenvalues of a general real square matrix as `(re, im)` pairs.
///
/// Reduction to upper Hessenberg form by stabilized elementary similarity
/// transforms, followed by the shifted double-step QR iteration.
pub fn eigenvalues(a: &Mat) -> Result<Vec<(f64, f64)>, MatrixError> {
    if !a.is_square() {
        return Err(MatrixError::NotSquare {
            op: "eigenvalues",
            rows: a.rows,
            cols: a.cols,
        });
    }
    let n = a.rows;
    if n == 1 {
        return Ok(vec![(a[(0, 0)], 0.0)]);
    }
    // 1-based working copy keeps the QR sweep readable.
    let mut h = vec![vec![0.0; n + 1]; n + 1];
    for i in 0..n {
        for j in 0..n {
            h[i + 1][j + 1] = a[(i, j)];
        }
    }
    hessenberg(&mut h, n);
    for i in 3..=n {
        for j in 1..i - 1 {
            h[i][j] = 0.0;
        }
    }
    hessenberg_qr(&mut h, n)
}

fn hessenberg(a: &mut [Vec<f64>], n: usize) {
    for m in 2..n {
        let mut x: f64 = 0.0;
        let mut i = m;
        for j in m..=n {
            if a[j][m - 1].abs() > x.abs() {
                x = a[j][m - 1];
                i = j;
            }
        }
        if i != m {
            for j in m - 1..=n {
                let t = a[i][j];
                a[i][j] = a[m][j];
                a[m][j] = t;
            }
            for row in a.iter_mut().take(n + 1).skip(1) {
                row.swap(i, m);
            }
        }
        if x != 0.0 {
            for i in m + 1..=n {
                let mut y = a[i][m - 1];
                if y != 0.0 {
                    y /= x;
                    a[i][m - 1] = y;
                    for j in m..=n {
                        a[i][j] -= y * a[m][j];
                    }
                    for row in a.iter_mut().take(n + 1).skip(1) {
                        row[m] += y * row[i];
                    }
                }
            }
        }
    }
}

#[allow(clippy::many_single_char_names, unused_assignments)]
fn hessenberg_qr(a: &mut [Vec<f64>], n: usize) -> Result<Vec<(f64, f64)>, MatrixError> {
    let mut wr = vec![0.0; n + 1];
    let mut wi = vec![0.0; n + 1];
    let mut anorm = 0.0;
    for i in 1..=n {
        for j in (i.max(2) - 1)..=n {
            anorm += a[i][j].abs();
        }
    }
    let mut nn = n as isize;
    let mut t = 0.0;
    let (mut p, mut q, mut r) = (0.0f64, 0.0f64, 0.0f64);
    let (mut x, mut y, mut z, mut w);
    while nn >= 1 {
        let mut its = 0;
        loop {
            let nu = nn as usize;
            let mut l = nu;
            while l >= 2 {
                let mut s = a[l - 1][l - 1].abs() + a[l][l].abs();
                if s == 0.0 {
                    s = anorm;
                }
                if a[l][l - 1].abs() + s == s {
                    a[l][l - 1] = 0.0;
                    break;
                }
                l -= 1;
            }
            x = a[nu][nu];
            if l == nu {
                wr[nu] = x + t;
                wi[nu] = 0.0;
                nn -= 1;
            } else {
                y = a[nu - 1][nu - 1];
                w = a[nu][nu - 1] * a[nu - 1][nu];
                if l == nu - 1 {
                    p = 0.5 * (y - x);
                    q = p * p + w;
                    z = q.abs().sqrt();
                    x += t;
                    if q >= 0.0 {
                        z = p + z.copysign(p);
                        wr[nu - 1] = x + z;
                        wr[nu] = x + z;
                        if z != 0.0 {
                            wr[nu] = x - w / z;
                        }
                        wi[nu - 1] = 0.0;
                        wi[nu] = 0.0;
                    } else {
                        wr[nu - 1] = x + p;
                        wr[nu] = x + p;
                        wi[nu - 1] = -z;
                        wi[nu] = z;
                    }
                    nn -= 2;
                } else {
                    if its == 60 {
                        return Err(MatrixError::NoConvergence);
                    }
                    if its == 10 || its == 20 {
                        t += x;
                        for i in 1..=nu {
                            a[i][i] -= x;
                        }
                        let s = a[nu][nu - 1].abs() + a[nu - 1][nu - 2].abs();
                        x = 0.75 * s;
                        y = x;
                        w = -0.4375 * s * s;
                    }
                    its += 1;
                    let mut m = nu - 2;
                    loop {
                        z = a[m][m];
                        r = x - z;
                        let s = y - z;
                        p = (r * s - w) / a[m + 1][m] + a[m][m + 1];
                        q = a[m + 1][m + 1] - z - r - s;
                        r = a[m + 2][m + 1];
                        let s = p.abs() + q.abs() + r.abs();
                        p /= s;
                        q /= s;
                        r /= s;
                        if m == l {
                            break;
                        }
                        let u = a[m][m - 1].abs() * (q.abs() + r.abs());
                        let v = p.abs() * (a[m - 1][m - 1].abs() + z.abs() + a[m + 1][m + 1].abs());
                        if u + v == v {
                            break;
                        }
                        m -= 1;
                    }
                    for i in m + 2..=nu {
                        a[i][i - 2] = 0.0;
                        if i != m + 2 {
                            a[i][i - 3] = 0.0;
                        }
                    }
                    let mut k = m;
                    while k < nu {
                        if k != m {
                            p = a[k][k - 1];
                            q = a[k + 1][k - 1];
                            r = 0.0;
                            if k != nu - 1 {
                                r = a[k + 2][k - 1];
                            }
                            x = p.abs() + q.abs() + r.abs();
                            if x != 0.0 {
                                p /= x;
                                q /= x;
                                r /= x;
                            }
                        }
                        let s = (p * p + q * q + r * r).sqrt().copysign(p);
                        if s != 0.0 {
                            if k == m {
                                if l != m {
                                    a[k][k - 1] = -a[k][k - 1];
                                }
                            } else {
                                a[k][k - 1] = -s * x;
                            }
                            p += s;
                            x = p / s;
                            y = q / s;
                            z = r / s;
                            q /= p;
                            r /= p;
                            for j in k..=nu {
                                p = a[k][j] + q * a[k + 1][j];
                                if k != nu - 1 {
                                    p += r * a[k + 2][j];
                                    a[k + 2][j] -= p * z;
                                }
                                a[k + 1][j] -= p * y;
                                a[k][j] -= p * x;
                            }
                            let mmin = if nu < k + 3 { nu } else { k + 3 };
                            for row in a.iter_mut().take(mmin + 1).skip(l) {
                                p = x * row[k] + y * row[k + 1];
                                if k != nu - 1 {
                                    p += z * row[k + 2];
                                    row[k + 2] -= p * r;
                                }
                                row[k + 1] -= p * q;
                                row[k] -= p;
                            }
                        }
                        k += 1;
                    }
                }
            }
            if l as isize >= nn - 1 {
                break;
            }
        }
    }
    Ok((1..=n).map(|i| (wr[i], wi[i])).collect())
}

/// Spectral radius `max |λ|` of a square matrix.
pub fn spectral_radius(a: &Mat) -> Result<f64, MatrixError> {
    if !a.is_square() {
        return Err(MatrixError::NotSquare {
            op: "spectral_radius",
            rows: a.rows,
            cols: a.cols,
        });
    }
    if a.rows == 1 {
        return Ok(a[(0, 0)].abs());
    }
    if a.is_symmetric() && a.max_asymmetry() == 0.0 {
        let eig = symmetric_eigen(a)?;
        return Ok(eig.values.iter().fold(0.0, |acc: f64, v| acc.max(v.abs())));
    }
    let eig = eigenvalues(a)?;
    Ok(eig.iter().fold(0.0, |acc: f64, (re, im)| acc.max(re.hypot(*im))))
}
