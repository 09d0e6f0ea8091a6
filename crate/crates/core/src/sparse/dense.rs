//! Column-major dense matrices and the dense factorizations used at subdomain scale.
//!
//! The heavy lifting (SVD, symmetric eigensolver, Cholesky, GEMM) is delegated to `faer`;
//! this module only adapts storage and pins down conventions (ordering and signs) so that
//! results are reproducible.

use std::ops::{Index, IndexMut};

use faer::linalg::solvers::{Llt, Solve};
use faer::{MatMut, MatRef, Side};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    n_rows: usize,
    n_cols: usize,
    values: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            values: vec![0.0; n_rows * n_cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    pub fn from_fn(n_rows: usize, n_cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(n_rows * n_cols);
        for j in 0..n_cols {
            for i in 0..n_rows {
                values.push(f(i, j));
            }
        }
        Self {
            n_rows,
            n_cols,
            values,
        }
    }

    pub fn from_column_major(n_rows: usize, n_cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n_rows * n_cols {
            return Err(Error::DimensionMismatch {
                context: "dense matrix storage",
                expected: n_rows * n_cols,
                found: values.len(),
            });
        }
        Ok(Self {
            n_rows,
            n_cols,
            values,
        })
    }

    /// Builds a matrix from row slices; handy in tests and small examples.
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, |r| r.len());
        assert!(rows.iter().all(|r| r.len() == n_cols), "ragged rows");
        Self::from_fn(n_rows, n_cols, |i, j| rows[i][j])
    }

    pub fn from_faer(m: MatRef<'_, f64>) -> Self {
        Self::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
    }

    #[inline]
    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    #[inline]
    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn col(&self, j: usize) -> &[f64] {
        &self.values[j * self.n_rows..(j + 1) * self.n_rows]
    }

    pub fn col_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.values[j * self.n_rows..(j + 1) * self.n_rows]
    }

    pub fn as_faer(&self) -> MatRef<'_, f64> {
        MatRef::from_column_major_slice(&self.values, self.n_rows, self.n_cols)
    }

    pub fn as_faer_mut(&mut self) -> MatMut<'_, f64> {
        MatMut::from_column_major_slice_mut(&mut self.values, self.n_rows, self.n_cols)
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.n_cols, self.n_rows, |i, j| self[(j, i)])
    }

    /// Copies the block `rows × cols` (positions, not global indices).
    pub fn submatrix(&self, rows: std::ops::Range<usize>, cols: std::ops::Range<usize>) -> Self {
        let r0 = rows.start;
        let c0 = cols.start;
        Self::from_fn(rows.len(), cols.len(), |i, j| self[(r0 + i, c0 + j)])
    }

    pub fn matmul(&self, rhs: &DenseMatrix) -> Result<DenseMatrix> {
        if self.n_cols != rhs.n_rows {
            return Err(Error::DimensionMismatch {
                context: "dense matmul",
                expected: self.n_cols,
                found: rhs.n_rows,
            });
        }
        Ok(Self::from_faer((self.as_faer() * rhs.as_faer()).as_ref()))
    }

    /// `selfᵀ · rhs`
    pub fn tr_matmul(&self, rhs: &DenseMatrix) -> Result<DenseMatrix> {
        if self.n_rows != rhs.n_rows {
            return Err(Error::DimensionMismatch {
                context: "dense transposed matmul",
                expected: self.n_rows,
                found: rhs.n_rows,
            });
        }
        Ok(Self::from_faer(
            (self.as_faer().transpose() * rhs.as_faer()).as_ref(),
        ))
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n_cols {
            return Err(Error::DimensionMismatch {
                context: "dense matvec",
                expected: self.n_cols,
                found: x.len(),
            });
        }
        let mut y = vec![0.0; self.n_rows];
        for (j, &xj) in x.iter().enumerate() {
            if xj == 0.0 {
                continue;
            }
            for (yi, &a) in y.iter_mut().zip(self.col(j)) {
                *yi += a * xj;
            }
        }
        Ok(y)
    }

    pub fn tr_matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n_rows {
            return Err(Error::DimensionMismatch {
                context: "dense transposed matvec",
                expected: self.n_rows,
                found: x.len(),
            });
        }
        Ok((0..self.n_cols)
            .map(|j| self.col(j).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Largest entry of `|M - Mᵀ|` divided by `max|M|` (0 for the zero matrix).
    pub fn relative_asymmetry(&self) -> f64 {
        assert_eq!(self.n_rows, self.n_cols);
        let scale = self.max_abs();
        if scale == 0.0 {
            return 0.0;
        }
        let mut worst: f64 = 0.0;
        for j in 0..self.n_cols {
            for i in j + 1..self.n_rows {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst / scale
    }

    pub fn symmetrize(&mut self) {
        assert_eq!(self.n_rows, self.n_cols);
        for j in 0..self.n_cols {
            for i in j + 1..self.n_rows {
                let avg = 0.5 * (self[(i, j)] + self[(j, i)]);
                self[(i, j)] = avg;
                self[(j, i)] = avg;
            }
        }
    }

    pub fn add_to_diagonal(&mut self, shift: f64) {
        for i in 0..self.n_rows.min(self.n_cols) {
            self[(i, i)] += shift;
        }
    }

    pub fn cholesky(&self) -> Result<CholeskyFactor> {
        CholeskyFactor::new(self)
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.n_rows && j < self.n_cols);
        &self.values[j * self.n_rows + i]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.n_rows && j < self.n_cols);
        &mut self.values[j * self.n_rows + i]
    }
}

/// Dense `LLᵀ` factorization of an SPD matrix.
#[derive(Clone)]
pub struct CholeskyFactor {
    llt: Llt<f64>,
}

impl std::fmt::Debug for CholeskyFactor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CholeskyFactor").field("dim", &self.dim()).finish()
    }
}

impl CholeskyFactor {
    pub fn new(a: &DenseMatrix) -> Result<Self> {
        if a.n_rows != a.n_cols {
            return Err(Error::DimensionMismatch {
                context: "cholesky of non-square matrix",
                expected: a.n_rows,
                found: a.n_cols,
            });
        }
        let llt = a
            .as_faer()
            .llt(Side::Lower)
            .map_err(|e| Error::NotPositiveDefinite {
                context: format!("dense Cholesky of order {}: {e:?}", a.n_rows),
            })?;
        Ok(Self { llt })
    }

    pub fn dim(&self) -> usize {
        self.llt.L().nrows()
    }

    pub fn lower(&self) -> DenseMatrix {
        DenseMatrix::from_faer(self.llt.L())
    }

    /// Overwrites `x` with `A⁻¹x`.
    pub fn solve_in_place(&self, x: &mut [f64]) {
        let n = x.len();
        self.llt
            .solve_in_place(MatMut::from_column_major_slice_mut(x, n, 1));
    }

    pub fn solve_matrix_in_place(&self, b: &mut DenseMatrix) {
        self.llt.solve_in_place(b.as_faer_mut());
    }
}

/// Economic singular value decomposition `X = U Σ Vᵀ`.
#[derive(Clone, Debug)]
pub struct Svd {
    pub u: DenseMatrix,
    /// Non-negative, non-increasing.
    pub sigma: Vec<f64>,
    pub v: DenseMatrix,
}

/// Economic SVD with a fixed sign convention: the largest-magnitude entry of each right
/// singular vector is made non-negative (the matching left vector is flipped with it).
pub fn dense_svd(x: &DenseMatrix) -> Result<Svd> {
    let k = x.n_rows.min(x.n_cols);
    if k == 0 {
        return Ok(Svd {
            u: DenseMatrix::zeros(x.n_rows, 0),
            sigma: Vec::new(),
            v: DenseMatrix::zeros(x.n_cols, 0),
        });
    }
    let svd = x
        .as_faer()
        .thin_svd()
        .map_err(|e| Error::decomposition("thin SVD", format!("{e:?}")))?;
    let mut u = DenseMatrix::from_faer(svd.U());
    let mut v = DenseMatrix::from_faer(svd.V());
    let s = svd.S().column_vector();
    let sigma: Vec<f64> = (0..k).map(|i| s[i]).collect();
    if sigma.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("singular values"));
    }
    for j in 0..k {
        if leading_entry_negative(v.col(j)) {
            v.col_mut(j).iter_mut().for_each(|e| *e = -*e);
            u.col_mut(j).iter_mut().for_each(|e| *e = -*e);
        }
    }
    Ok(Svd { u, sigma, v })
}

/// True when the first entry of maximal magnitude is negative.
pub(crate) fn leading_entry_negative(col: &[f64]) -> bool {
    let mut best = 0.0f64;
    let mut sign_negative = false;
    for &e in col {
        if e.abs() > best {
            best = e.abs();
            sign_negative = e < 0.0;
        }
    }
    sign_negative
}

/// Eigendecomposition of a symmetric matrix; eigenvalues ascending.
#[derive(Clone, Debug)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    pub vectors: DenseMatrix,
}

pub fn symmetric_eigen(a: &DenseMatrix) -> Result<SymmetricEigen> {
    if a.n_rows != a.n_cols {
        return Err(Error::DimensionMismatch {
            context: "symmetric eigensolver",
            expected: a.n_rows,
            found: a.n_cols,
        });
    }
    let evd = a
        .as_faer()
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::decomposition("symmetric eigensolver", format!("{e:?}")))?;
    let s = evd.S().column_vector();
    let values: Vec<f64> = (0..a.n_rows).map(|i| s[i]).collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("eigenvalues"));
    }
    Ok(SymmetricEigen {
        values,
        vectors: DenseMatrix::from_faer(evd.U()),
    })
}

pub fn symmetric_eigenvalues(a: &DenseMatrix) -> Result<Vec<f64>> {
    if a.n_rows != a.n_cols {
        return Err(Error::DimensionMismatch {
            context: "symmetric eigensolver",
            expected: a.n_rows,
            found: a.n_cols,
        });
    }
    let values = a
        .as_faer()
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::decomposition("symmetric eigensolver", format!("{e:?}")))?;
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("eigenvalues"));
    }
    Ok(values)
}

/// Solves `L X = B` in place for lower-triangular `L`.
pub(crate) fn lower_solve_in_place(l: &DenseMatrix, b: &mut DenseMatrix) {
    faer::linalg::triangular_solve::solve_lower_triangular_in_place(
        l.as_faer(),
        b.as_faer_mut(),
        faer::get_global_parallelism(),
    );
}
