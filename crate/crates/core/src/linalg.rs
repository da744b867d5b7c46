//! Dense kernels: symmetric eigendecomposition by cyclic Jacobi rotations,
//! ordered matrix products, and the spectral radius of a consensus operator
//! restricted to the complement of the all-ones direction.

use std::ops::{Index, IndexMut};

use crate::error::{ConsensusError, Result};

/// Row-major dense real matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Builds a matrix from row-major data; fails if the length is wrong or
    /// any entry is not finite.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(ConsensusError::DimensionMismatch { expected: rows * cols, found: data.len() });
        }
        if let Some(x) = data.iter().find(|x| !x.is_finite()) {
            return Err(ConsensusError::NonFinite(format!("matrix entry {x}")));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(ConsensusError::DimensionMismatch { expected: c, found: row.len() });
            }
            data.extend_from_slice(row);
        }
        Self::from_row_major(r, c, data)
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

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|x| *x *= s);
    }

    pub fn matmul(&self, rhs: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != rhs.rows {
            return Err(ConsensusError::DimensionMismatch { expected: self.cols, found: rhs.rows });
        }
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let rhs_row = &rhs.data[k * rhs.cols..(k + 1) * rhs.cols];
                for (o, b) in out_row.iter_mut().zip(rhs_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if self.cols != x.len() {
            return Err(ConsensusError::DimensionMismatch { expected: self.cols, found: x.len() });
        }
        Ok((0..self.rows).map(|i| dot(self.row(i), x)).collect())
    }

    /// Largest absolute difference between `A[i][j]` and `A[j][i]`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols.min(self.rows) {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    fn sub(&self, rhs: &DenseMatrix) -> DenseMatrix {
        let data = self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect();
        DenseMatrix { rows: self.rows, cols: self.cols, data }
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Eigenvalues in ascending order with matching orthonormal eigenvectors
/// stored as the columns of `vectors`.
#[derive(Debug, Clone)]
pub struct SymEig {
    pub values: Vec<f64>,
    pub vectors: DenseMatrix,
}

impl SymEig {
    pub fn vector(&self, k: usize) -> Vec<f64> {
        (0..self.vectors.rows()).map(|i| self.vectors[(i, k)]).collect()
    }
}

const SYMMETRY_TOL: f64 = 1e-12;
const JACOBI_TOL: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 100;

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// Iterates full sweeps over the strict upper triangle until the
/// off-diagonal Frobenius norm drops below `1e-12 * ||A||_F`.
pub fn sym_eig(a: &DenseMatrix) -> Result<SymEig> {
    check_symmetric(a)?;
    let n = a.rows();
    jacobi(a.clone(), DenseMatrix::identity(n))
}

/// Same as [`sym_eig`], but starts from an approximate eigenbasis `basis`
/// (columns orthonormal). `basis^T A basis` is then nearly diagonal and a
/// sweep or two suffices, which makes repeated decompositions of slowly
/// changing matrices cheap.
pub fn sym_eig_warm(a: &DenseMatrix, basis: &DenseMatrix) -> Result<SymEig> {
    check_symmetric(a)?;
    if basis.rows() != a.rows() || !basis.is_square() {
        return Err(ConsensusError::DimensionMismatch { expected: a.rows(), found: basis.rows() });
    }
    let mut rotated = basis.transpose().matmul(a)?.matmul(basis)?;
    symmetrize(&mut rotated);
    jacobi(rotated, basis.clone())
}

fn check_symmetric(a: &DenseMatrix) -> Result<()> {
    if !a.is_square() {
        return Err(ConsensusError::DimensionMismatch { expected: a.rows(), found: a.cols() });
    }
    let asym = a.asymmetry();
    if asym > SYMMETRY_TOL * a.max_abs().max(1.0) {
        return Err(ConsensusError::NotSymmetric(asym));
    }
    Ok(())
}

fn symmetrize(a: &mut DenseMatrix) {
    let n = a.rows();
    for i in 0..n {
        for j in (i + 1)..n {
            let m = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = m;
            a[(j, i)] = m;
        }
    }
}

fn off_diagonal_norm(a: &DenseMatrix) -> f64 {
    let n = a.rows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[(i, j)] * a[(i, j)];
            }
        }
    }
    s.sqrt()
}

fn jacobi(mut a: DenseMatrix, mut v: DenseMatrix) -> Result<SymEig> {
    let n = a.rows();
    let scale = a.frobenius_norm();
    let threshold = JACOBI_TOL * scale;
    let mut converged = scale == 0.0;
    for _ in 0..JACOBI_MAX_SWEEPS {
        if converged || off_diagonal_norm(&a) <= threshold {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = a[(p, p)];
                let aqq = a[(q, q)];
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta.is_infinite() {
                    0.0
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                if t == 0.0 {
                    a[(p, q)] = 0.0;
                    a[(q, p)] = 0.0;
                    continue;
                }
                let c = 1.0 / (t * t + 1.0).sqrt();
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
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    if !converged && off_diagonal_norm(&a) > threshold {
        return Err(ConsensusError::NoConvergence("Jacobi eigensolver"));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]));
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let mut vectors = DenseMatrix::zeros(n, n);
    for (col, &src) in order.iter().enumerate() {
        for r in 0..n {
            vectors[(r, col)] = v[(r, src)];
        }
    }
    Ok(SymEig { values, vectors })
}

/// Left-to-right product `As[0] * As[1] * ... * As[last]`; identity of the
/// given order for an empty sequence.
///
/// Time-ordered consensus products apply the latest snapshot last, so callers
/// pass snapshots newest first.
pub fn mat_product(matrices: &[DenseMatrix], order: usize) -> Result<DenseMatrix> {
    let mut acc = DenseMatrix::identity(order);
    for m in matrices {
        acc = acc.matmul(m)?;
    }
    Ok(acc)
}

const STOCHASTIC_TOL: f64 = 1e-9;
const GELFAND_MAX_SQUARINGS: usize = 60;

/// Spectral radius of `M` after deflating its simple eigenvalue 1 with
/// eigenvector `1`, i.e. of `P M P` with `P = I - (1/n) 11^T`.
///
/// Uses Gelfand's formula `||(PMP)^(2^s)||_F^(1/2^s)` with renormalised
/// repeated squaring, so complex eigenvalue pairs of nonsymmetric products
/// need no special handling.
pub fn spectral_radius_complement(m: &DenseMatrix, tol: f64) -> Result<f64> {
    if !m.is_square() {
        return Err(ConsensusError::DimensionMismatch { expected: m.rows(), found: m.cols() });
    }
    check_fixes_ones(m)?;
    let deflated = deflate(m);
    gelfand_radius(&deflated, tol)
}

fn check_fixes_ones(m: &DenseMatrix) -> Result<()> {
    let n = m.rows();
    let scale = m.max_abs().max(1.0);
    for i in 0..n {
        let row_sum: f64 = m.row(i).iter().sum();
        if (row_sum - 1.0).abs() > STOCHASTIC_TOL * scale {
            return Err(ConsensusError::PreconditionViolated(format!("row {i} sums to {row_sum}")));
        }
        let col_sum: f64 = (0..n).map(|r| m[(r, i)]).sum();
        if (col_sum - 1.0).abs() > STOCHASTIC_TOL * scale {
            return Err(ConsensusError::PreconditionViolated(format!("column {i} sums to {col_sum}")));
        }
    }
    Ok(())
}

/// `P M P` with `P = I - (1/n) 11^T`.
pub fn deflate(m: &DenseMatrix) -> DenseMatrix {
    let n = m.rows();
    let inv_n = 1.0 / n as f64;
    let row_means: Vec<f64> = (0..n).map(|i| m.row(i).iter().sum::<f64>() * inv_n).collect();
    let col_means: Vec<f64> = (0..n).map(|j| (0..n).map(|i| m[(i, j)]).sum::<f64>() * inv_n).collect();
    let grand = row_means.iter().sum::<f64>() * inv_n;
    let mut out = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            out[(i, j)] = m[(i, j)] - row_means[i] - col_means[j] + grand;
        }
    }
    out
}

/// Spectral radius of an arbitrary square matrix via renormalised repeated
/// squaring.
pub fn gelfand_radius(a: &DenseMatrix, tol: f64) -> Result<f64> {
    let mut b = a.clone();
    // log of the factor divided out of b so far; b * exp(log_scale) = a^(2^s)
    let mut log_scale = 0.0f64;
    let mut power = 1.0f64;
    let mut previous: Option<f64> = None;
    for _ in 0..=GELFAND_MAX_SQUARINGS {
        let norm = b.frobenius_norm();
        if norm == 0.0 {
            return Ok(0.0);
        }
        if !norm.is_finite() {
            return Err(ConsensusError::NonFinite("Gelfand iteration".into()));
        }
        let estimate = ((log_scale + norm.ln()) / power).exp();
        if let Some(prev) = previous {
            if (estimate - prev).abs() < tol {
                return Ok(estimate);
            }
        }
        previous = Some(estimate);
        b.scale(1.0 / norm);
        log_scale = 2.0 * (log_scale + norm.ln());
        power *= 2.0;
        b = b.matmul(&b)?;
    }
    Err(ConsensusError::NoConvergence("Gelfand spectral radius"))
}

/// `||A V - V diag(values)||_F`, for checking decompositions.
pub fn eigen_residual(a: &DenseMatrix, eig: &SymEig) -> f64 {
    let av = a.matmul(&eig.vectors).expect("square");
    let mut vd = eig.vectors.clone();
    let n = a.rows();
    for i in 0..n {
        for j in 0..n {
            vd[(i, j)] *= eig.values[j];
        }
    }
    av.sub(&vd).frobenius_norm()
}
