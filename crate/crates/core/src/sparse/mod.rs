//! Sparse and dense matrix containers plus the kernels the rest of the crate builds on.

mod dense;
mod graph;
pub mod mtx;

pub use dense::{
    dense_svd, symmetric_eigen, symmetric_eigenvalues, CholeskyFactor, DenseMatrix, Svd,
    SymmetricEigen,
};
pub(crate) use dense::{leading_entry_negative, lower_solve_in_place};
pub use graph::AdjacencyGraph;

use crate::error::{Error, Result};

/// Relative tolerance used to decide whether a stored matrix is symmetric.
pub const SYMMETRY_TOLERANCE: f64 = 1e-12;

const UNMAPPED: usize = usize::MAX;

/// Compressed sparse row matrix with sorted, duplicate-free column indices per row.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    n_rows: usize,
    n_cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
    symmetric: bool,
}

impl CsrMatrix {
    /// Validates the raw arrays and detects symmetry.
    pub fn try_new(
        n_rows: usize,
        n_cols: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if row_offsets.len() != n_rows + 1 {
            return Err(Error::DimensionMismatch {
                context: "row offsets",
                expected: n_rows + 1,
                found: row_offsets.len(),
            });
        }
        if row_offsets[0] != 0 {
            return Err(Error::InvalidStructure("row_offsets[0] must be 0".into()));
        }
        if row_offsets.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidStructure(
                "row offsets must be non-decreasing".into(),
            ));
        }
        if *row_offsets.last().unwrap() != col_indices.len() || col_indices.len() != values.len()
        {
            return Err(Error::InvalidStructure(format!(
                "inconsistent storage: last offset {}, {} column indices, {} values",
                row_offsets[n_rows],
                col_indices.len(),
                values.len()
            )));
        }
        for r in 0..n_rows {
            let cols = &col_indices[row_offsets[r]..row_offsets[r + 1]];
            if cols.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidStructure(format!(
                    "row {r}: column indices not strictly increasing"
                )));
            }
            if let Some(&c) = cols.last() {
                if c >= n_cols {
                    return Err(Error::IndexOutOfRange {
                        index: c,
                        bound: n_cols,
                    });
                }
            }
        }
        let mut m = Self {
            n_rows,
            n_cols,
            row_offsets,
            col_indices,
            values,
            symmetric: false,
        };
        m.symmetric = m.check_symmetry(SYMMETRY_TOLERANCE);
        Ok(m)
    }

    /// Assembles from `(row, col, value)` triplets; duplicates are summed and explicit
    /// zeros stay in the pattern.
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self> {
        let mut counts = vec![0usize; n_rows + 1];
        for &(r, c, _) in triplets {
            if r >= n_rows {
                return Err(Error::IndexOutOfRange {
                    index: r,
                    bound: n_rows,
                });
            }
            if c >= n_cols {
                return Err(Error::IndexOutOfRange {
                    index: c,
                    bound: n_cols,
                });
            }
            counts[r + 1] += 1;
        }
        for r in 0..n_rows {
            counts[r + 1] += counts[r];
        }
        let mut next = counts.clone();
        let mut entries = vec![(0usize, 0.0f64); triplets.len()];
        for &(r, c, v) in triplets {
            entries[next[r]] = (c, v);
            next[r] += 1;
        }
        let mut row_offsets = Vec::with_capacity(n_rows + 1);
        let mut col_indices = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        row_offsets.push(0);
        for r in 0..n_rows {
            let row = &mut entries[counts[r]..counts[r + 1]];
            row.sort_by_key(|&(c, _)| c);
            for &(c, v) in row.iter() {
                if col_indices.len() > *row_offsets.last().unwrap()
                    && *col_indices.last().unwrap() == c
                {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_indices.push(c);
                    values.push(v);
                }
            }
            row_offsets.push(col_indices.len());
        }
        Self::try_new(n_rows, n_cols, row_offsets, col_indices, values)
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diagonal(&vec![1.0; n])
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        Self {
            n_rows: n,
            n_cols: n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n).collect(),
            values: diag.to_vec(),
            symmetric: true,
        }
    }

    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            row_offsets: vec![0; n_rows + 1],
            col_indices: Vec::new(),
            values: Vec::new(),
            symmetric: n_rows == n_cols,
        }
    }

    /// Keeps every entry with `|a_ij| > drop_tolerance`; with tolerance 0 only exact
    /// zeros are dropped.
    pub fn from_dense(a: &DenseMatrix, drop_tolerance: f64) -> Self {
        let mut row_offsets = Vec::with_capacity(a.n_rows() + 1);
        let mut col_indices = Vec::new();
        let mut values = Vec::new();
        row_offsets.push(0);
        for i in 0..a.n_rows() {
            for j in 0..a.n_cols() {
                let v = a[(i, j)];
                if v.abs() > drop_tolerance {
                    col_indices.push(j);
                    values.push(v);
                }
            }
            row_offsets.push(col_indices.len());
        }
        Self::try_new(a.n_rows(), a.n_cols(), row_offsets, col_indices, values)
            .expect("dense conversion yields valid CSR")
    }

    #[inline]
    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    #[inline]
    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    #[inline]
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    #[inline]
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let range = self.row_offsets[i]..self.row_offsets[i + 1];
        (&self.col_indices[range.clone()], &self.values[range])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).map_or(0.0, |k| vals[k])
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n_rows.min(self.n_cols))
            .map(|i| self.get(i, i))
            .collect()
    }

    /// Structural symmetry plus `|a_ij - a_ji| <= tol · max|a|` on every stored pair.
    pub fn check_symmetry(&self, relative_tolerance: f64) -> bool {
        self.relative_asymmetry() <= relative_tolerance
    }

    /// `max |a_ij − a_ji| / max |a|`, treating missing entries as zero; infinite for
    /// rectangular matrices.
    pub fn relative_asymmetry(&self) -> f64 {
        if self.n_rows != self.n_cols {
            return f64::INFINITY;
        }
        let scale = self.max_abs();
        if scale == 0.0 {
            return 0.0;
        }
        let mut worst = 0.0f64;
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                let (tcols, tvals) = self.row(j);
                let t = tcols.binary_search(&i).map_or(0.0, |k| tvals[k]);
                worst = worst.max((t - v).abs());
            }
        }
        worst / scale
    }

    /// `y = A x`, accumulating each row left to right.
    pub fn spmv(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n_cols {
            return Err(Error::DimensionMismatch {
                context: "spmv input",
                expected: self.n_cols,
                found: x.len(),
            });
        }
        let mut y = vec![0.0; self.n_rows];
        self.spmv_into(x, &mut y);
        Ok(y)
    }

    /// Panics on dimension mismatch; used on hot paths where sizes are already checked.
    pub fn spmv_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n_cols, "spmv input length");
        assert_eq!(y.len(), self.n_rows, "spmv output length");
        for (i, yi) in y.iter_mut().enumerate() {
            let range = self.row_offsets[i]..self.row_offsets[i + 1];
            let mut acc = 0.0;
            for (&c, &v) in self.col_indices[range.clone()]
                .iter()
                .zip(&self.values[range])
            {
                acc += v * x[c];
            }
            *yi = acc;
        }
    }

    fn position_map(&self, cols: &[usize]) -> Result<Vec<usize>> {
        let mut map = vec![UNMAPPED; self.n_cols];
        for (q, &c) in cols.iter().enumerate() {
            if c >= self.n_cols {
                return Err(Error::IndexOutOfRange {
                    index: c,
                    bound: self.n_cols,
                });
            }
            if map[c] != UNMAPPED {
                return Err(Error::InvalidArgument(format!(
                    "duplicate column index {c} in extraction set"
                )));
            }
            map[c] = q;
        }
        Ok(map)
    }

    fn check_rows(&self, rows: &[usize]) -> Result<()> {
        let mut seen = vec![false; self.n_rows];
        for &r in rows {
            if r >= self.n_rows {
                return Err(Error::IndexOutOfRange {
                    index: r,
                    bound: self.n_rows,
                });
            }
            if std::mem::replace(&mut seen[r], true) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate row index {r} in extraction set"
                )));
            }
        }
        Ok(())
    }

    /// Dense copy of `A(rows, cols)`; entry `(p, q)` is `A(rows[p], cols[q])`.
    pub fn extract_dense(&self, rows: &[usize], cols: &[usize]) -> Result<DenseMatrix> {
        self.check_rows(rows)?;
        let map = self.position_map(cols)?;
        let mut out = DenseMatrix::zeros(rows.len(), cols.len());
        for (p, &r) in rows.iter().enumerate() {
            let (rc, rv) = self.row(r);
            for (&c, &v) in rc.iter().zip(rv) {
                let q = map[c];
                if q != UNMAPPED {
                    out[(p, q)] = v;
                }
            }
        }
        Ok(out)
    }

    /// Sparse copy of `A(rows, cols)` with local numbering.
    pub fn extract_csr(&self, rows: &[usize], cols: &[usize]) -> Result<CsrMatrix> {
        self.check_rows(rows)?;
        let map = self.position_map(cols)?;
        let mut triplets = Vec::new();
        for (p, &r) in rows.iter().enumerate() {
            let (rc, rv) = self.row(r);
            for (&c, &v) in rc.iter().zip(rv) {
                let q = map[c];
                if q != UNMAPPED {
                    triplets.push((p, q, v));
                }
            }
        }
        CsrMatrix::from_triplets(rows.len(), cols.len(), &triplets)
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.n_rows, self.n_cols);
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                out[(i, j)] = v;
            }
        }
        out
    }

    /// Power-iteration estimate of `‖A‖₂` for a symmetric matrix (a lower bound that is
    /// typically within a fraction of a percent after 100 steps).
    pub fn norm2_estimate(&self, iterations: usize) -> f64 {
        if self.nnz() == 0 {
            return 0.0;
        }
        let n = self.n_cols;
        // Deterministic, non-degenerate start vector.
        let mut x: Vec<f64> = (0..n).map(|i| 1.0 + ((i * 7919) % 97) as f64 / 97.0).collect();
        let mut lambda = 0.0;
        let mut y = vec![0.0; self.n_rows];
        for _ in 0..iterations.max(1) {
            let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 {
                return 0.0;
            }
            x.iter_mut().for_each(|v| *v /= norm);
            self.spmv_into(&x, &mut y);
            lambda = y.iter().map(|v| v * v).sum::<f64>().sqrt();
            std::mem::swap(&mut x, &mut y);
        }
        lambda
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn tridiag(n: usize) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i > 0 {
                t.push((i, i - 1, -1.0));
                t.push((i - 1, i, -1.0));
            }
        }
        CsrMatrix::from_triplets(n, n, &t).unwrap()
    }

    #[test]
    fn spmv_examples() {
        let id = CsrMatrix::identity(3);
        assert_eq!(id.spmv(&[1.0, 2.0, 3.0]).unwrap(), vec![1.0, 2.0, 3.0]);
        assert_eq!(tridiag(3).spmv(&[1.0, 1.0, 1.0]).unwrap(), vec![1.0, 0.0, 1.0]);
        // dense cross-check
        let dense = tridiag(3).to_dense();
        assert_eq!(dense.matvec(&[1.0, 1.0, 1.0]).unwrap(), vec![1.0, 0.0, 1.0]);
        let z = CsrMatrix::zeros(2, 2);
        assert_eq!(z.spmv(&[5.0, 7.0]).unwrap(), vec![0.0, 0.0]);
        assert!(matches!(
            id.spmv(&[1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn triplets_sum_duplicates_and_keep_zeros() {
        let m = CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (0, 0, 2.0), (1, 1, 0.0), (0, 1, 1.0)])
            .unwrap();
        assert_eq!(m.nnz(), 3);
        assert_eq!(m.get(0, 0), 3.0);
        assert_eq!(m.row(1).0, &[1]);
        assert!(!m.is_symmetric());
    }

    #[test]
    fn rejects_unsorted_columns() {
        let err = CsrMatrix::try_new(1, 3, vec![0, 2], vec![2, 1], vec![1.0, 1.0]);
        assert!(matches!(err, Err(Error::InvalidStructure(_))));
    }

    #[test]
    fn extract_examples() {
        let id = CsrMatrix::identity(4);
        assert_eq!(id.extract_dense(&[2, 3], &[2, 3]).unwrap(), DenseMatrix::identity(2));
        assert_eq!(id.extract_dense(&[3, 2], &[3, 2]).unwrap(), DenseMatrix::identity(2));
        let t = tridiag(4);
        let sub = t.extract_dense(&[0, 1], &[0, 1, 2]).unwrap();
        assert_eq!(
            sub,
            DenseMatrix::from_rows(&[&[2.0, -1.0, 0.0], &[-1.0, 2.0, -1.0]])
        );
        assert!(matches!(
            t.extract_dense(&[4], &[0]),
            Err(Error::IndexOutOfRange { .. })
        ));
        let sparse = t.extract_csr(&[0, 1], &[0, 1, 2]).unwrap();
        assert_eq!(sparse.to_dense(), sub);
    }

    #[test]
    fn symmetry_tolerance_is_relative() {
        let m = CsrMatrix::from_triplets(2, 2, &[(0, 1, 1.0), (1, 0, 1.0 + 1e-14)]).unwrap();
        assert!(m.is_symmetric());
        let m = CsrMatrix::from_triplets(2, 2, &[(0, 1, 1.0), (1, 0, 1.0 + 1e-9)]).unwrap();
        assert!(!m.is_symmetric());
        let m = CsrMatrix::from_triplets(2, 2, &[(0, 1, 1.0)]).unwrap();
        assert!(!m.is_symmetric());
    }

    #[test]
    fn norm_estimate_tridiag() {
        // ‖tridiag(64)‖₂ = 2 + 2cos(π/65)
        let exact = 2.0 + 2.0 * (std::f64::consts::PI / 65.0).cos();
        let est = tridiag(64).norm2_estimate(2000);
        assert!(est <= exact * (1.0 + 1e-12) && est > 0.99 * exact);
    }

    proptest! {
        #[test]
        fn extract_then_embed_reproduces_entries(
            n in 3usize..20,
            picks in proptest::collection::vec(any::<bool>(), 20),
        ) {
            let a = tridiag(n);
            let rows: Vec<usize> = (0..n).filter(|&i| picks[i]).rev().collect();
            let cols: Vec<usize> = (0..n).filter(|&i| !picks[(i + 3) % 20]).collect();
            let sub = a.extract_dense(&rows, &cols).unwrap();
            let mut embedded = DenseMatrix::zeros(n, n);
            for (p, &r) in rows.iter().enumerate() {
                for (q, &c) in cols.iter().enumerate() {
                    embedded[(r, c)] = sub[(p, q)];
                }
            }
            for &r in &rows {
                for &c in &cols {
                    prop_assert_eq!(embedded[(r, c)], a.get(r, c));
                }
            }
        }

        #[test]
        fn symmetric_spmv_is_self_adjoint(
            seed in 0u64..1000,
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let a = crate::gen::laplace_2d(7, 5);
            let n = a.n_rows();
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let lhs = dot(&a.spmv(&x).unwrap(), &y);
            let rhs = dot(&a.spmv(&y).unwrap(), &x);
            prop_assert!((lhs - rhs).abs() <= 1e-12 * 8.0 * norm2(&x) * norm2(&y));
        }
    }
}
