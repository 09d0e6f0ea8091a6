//! Local SPSD splittings of `A`, one per overlapping subdomain.
//!
//! For subdomain `i` the dense block row `X_i = A(Ω_i, Ω̃_i)` is factored as `U Σ Vᵀ`.
//! The shifted square root `VΣVᵀ + sI` (with `s = σ_1 ε`) of `X_iᵀX_i` lives on the
//! extended set, and the splitting `Ã_ii` is its Schur complement onto `Ω_i`.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use faer::Mat;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::partition::SubdomainLayout;
use crate::sparse::{dense_svd, lower_solve_in_place, symmetric_eigenvalues, CsrMatrix, DenseMatrix};

/// Relative asymmetry tolerated in an eliminated block before it is symmetrized.
pub const ASYMMETRY_LIMIT: f64 = 1e-10;

/// `X_i = A(Ω_i, Ω̃_i)` as a dense matrix.
#[derive(Clone, Debug)]
pub struct LocalBlockRow {
    pub subdomain: usize,
    pub n_interior: usize,
    pub n_overlapping: usize,
    pub x: DenseMatrix,
}

impl LocalBlockRow {
    pub fn n_extended(&self) -> usize {
        self.x.n_cols()
    }

    /// `A(Ω_i, Ω_i)`, the leading square block.
    pub fn overlap_block(&self) -> DenseMatrix {
        self.x.submatrix(0..self.n_overlapping, 0..self.n_overlapping)
    }
}

/// Extracts `X_i` and checks that the rows of `Ω_i` have no entries outside `Ω̃_i`.
pub fn build_block_row(a: &CsrMatrix, layout: &SubdomainLayout, i: usize) -> Result<LocalBlockRow> {
    if a.n_rows() != layout.n() || a.n_cols() != layout.n() {
        return Err(Error::DimensionMismatch {
            context: "matrix order vs layout size",
            expected: layout.n(),
            found: a.n_rows(),
        });
    }
    let s = layout.subdomain(i);
    let mut inside = vec![false; layout.n()];
    for &v in s.extended() {
        inside[v] = true;
    }
    for &r in s.overlapping() {
        let (cols, vals) = a.row(r);
        if let Some((&c, _)) = cols.iter().zip(vals).find(|(&c, &v)| !inside[c] && v != 0.0) {
            return Err(Error::ClosureViolation {
                subdomain: i,
                row: r,
                col: c,
            });
        }
    }
    Ok(LocalBlockRow {
        subdomain: i,
        n_interior: s.n_interior(),
        n_overlapping: s.n_overlapping(),
        x: a.extract_dense(s.overlapping(), s.extended())?,
    })
}

/// The shifted square root `VΣVᵀ + σ_1 ε I` of `XᵀX`, kept in factored form.
#[derive(Clone, Debug)]
pub struct SqrtSplitting {
    /// `ñ × k` with orthonormal columns, `k = min(n_i, ñ_i)`.
    pub v: DenseMatrix,
    /// Non-increasing, non-negative.
    pub sigma: Vec<f64>,
    pub sigma1: f64,
    /// `σ_1 ε`
    pub shift: f64,
}

pub fn sqrt_splitting(row: &LocalBlockRow) -> Result<SqrtSplitting> {
    let svd = dense_svd(&row.x)?;
    let sigma1 = svd.sigma.first().copied().unwrap_or(0.0);
    if sigma1 <= 0.0 {
        return Err(Error::SingularSplitting {
            subdomain: row.subdomain,
        });
    }
    Ok(SqrtSplitting {
        v: svd.v,
        sigma: svd.sigma,
        sigma1,
        shift: sigma1 * f64::EPSILON,
    })
}

impl SqrtSplitting {
    pub fn dim(&self) -> usize {
        self.v.n_rows()
    }

    fn check_len(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                context: "square-root splitting operand",
                expected: self.dim(),
                found: x.len(),
            });
        }
        Ok(())
    }

    /// `(VΣVᵀ + sI) x`
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_len(x)?;
        let mut c = self.v.tr_matvec(x)?;
        for (ci, &s) in c.iter_mut().zip(&self.sigma) {
            *ci *= s;
        }
        let mut y = self.v.matvec(&c)?;
        for (yi, &xi) in y.iter_mut().zip(x) {
            *yi += self.shift * xi;
        }
        Ok(y)
    }

    /// `V(Σ + sI)⁻¹Vᵀx + s⁻¹(x − VVᵀx)`
    pub fn apply_inverse(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_len(x)?;
        if self.shift <= 0.0 {
            return Err(Error::SingularSplitting { subdomain: 0 });
        }
        let c = self.v.tr_matvec(x)?;
        let scaled: Vec<f64> = c
            .iter()
            .zip(&self.sigma)
            .map(|(ci, s)| ci / (s + self.shift))
            .collect();
        let mut y = self.v.matvec(&scaled)?;
        let null = self.null_component(x, &c)?;
        for (yi, p) in y.iter_mut().zip(&null) {
            *yi += p / self.shift;
        }
        Ok(y)
    }

    /// `(I − VVᵀ)x` with a second projection pass, so the result is orthogonal to `V`
    /// relative to its own size rather than to `‖x‖`.
    fn null_component(&self, x: &[f64], vtx: &[f64]) -> Result<Vec<f64>> {
        if self.v.n_cols() == self.dim() {
            return Ok(vec![0.0; x.len()]);
        }
        let vc = self.v.matvec(vtx)?;
        let mut p: Vec<f64> = x.iter().zip(&vc).map(|(a, b)| a - b).collect();
        let c2 = self.v.tr_matvec(&p)?;
        let vc2 = self.v.matvec(&c2)?;
        for (pi, q) in p.iter_mut().zip(&vc2) {
            *pi -= q;
        }
        Ok(p)
    }

    /// `Σ^{1/2} Vᵀ`, so that `VΣVᵀ = Gᵀ G`.
    fn half(&self) -> DenseMatrix {
        let k = self.sigma.len();
        DenseMatrix::from_fn(k, self.dim(), |r, c| self.sigma[r].sqrt() * self.v[(c, r)])
    }

    /// Dense `VΣVᵀ + sI`.
    pub fn materialize(&self) -> DenseMatrix {
        let g = self.half();
        let mut m = g.tr_matmul(&g).expect("conforming factors");
        m.add_to_diagonal(self.shift);
        m.symmetrize();
        m
    }
}

/// How the extended-set block is eliminated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SchurMethod {
    /// Cholesky of the halo block with pivots floored at `σ_1 ε`.
    #[default]
    Cholesky,
    /// Orthogonal projection using the Gram factor `[Σ^{1/2}Vᵀ; √s I]`; no squaring of the
    /// halo block.
    Orthogonal,
}

impl std::str::FromStr for SchurMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cholesky" => Ok(SchurMethod::Cholesky),
            "orthogonal" => Ok(SchurMethod::Orthogonal),
            _ => Err(Error::Config(format!(
                "unknown elimination '{s}' (cholesky, orthogonal)"
            ))),
        }
    }
}

/// `Ã_ii`, dense `n_i × n_i`, symmetric positive semi-definite up to rounding.
#[derive(Clone, Debug)]
pub struct LocalSplitting {
    pub subdomain: usize,
    pub matrix: DenseMatrix,
    pub sigma1: f64,
    pub shift: f64,
    /// Pivots raised to the floor during elimination.
    pub floored_pivots: usize,
}

impl LocalSplitting {
    pub fn dim(&self) -> usize {
        self.matrix.n_rows()
    }

    /// `uᵀ Ã_i u` with `Ã_i = R_iᵀ Ã_ii R_i`, for a global vector `u`.
    pub fn quadratic_form(&self, overlapping: &[usize], u: &[f64]) -> f64 {
        let local: Vec<f64> = overlapping.iter().map(|&v| u[v]).collect();
        let y = self.matrix.matvec(&local).expect("local size");
        local.iter().zip(&y).map(|(a, b)| a * b).sum()
    }
}

/// Lower Cholesky factor with every pivot raised to at least `floor`.
/// Returns the factor and the number of raised pivots.
fn floored_cholesky(a: &DenseMatrix, floor: f64) -> (DenseMatrix, usize) {
    let n = a.n_rows();
    let mut l = a.clone();
    let mut floored = 0;
    for j in 0..n {
        let mut d = l[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d >= floor) {
            d = floor;
            floored += 1;
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in j + 1..n {
            let mut s = l[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
        for i in 0..j {
            l[(i, j)] = 0.0;
        }
    }
    (l, floored)
}

/// Eliminates the halo block: `Ã_ii = X11 − X12 X22⁻¹ X21` of the shifted square root.
pub fn schur_splitting(
    subdomain: usize,
    sqrt: &SqrtSplitting,
    n_overlapping: usize,
    method: SchurMethod,
) -> Result<LocalSplitting> {
    let n_ext = sqrt.dim();
    if n_overlapping > n_ext {
        return Err(Error::DimensionMismatch {
            context: "overlapping size exceeds extended size",
            expected: n_ext,
            found: n_overlapping,
        });
    }
    let n_halo = n_ext - n_overlapping;
    let (mut matrix, floored_pivots) = if n_halo == 0 {
        (sqrt.materialize(), 0)
    } else {
        match method {
            SchurMethod::Cholesky => eliminate_cholesky(sqrt, n_overlapping)?,
            SchurMethod::Orthogonal => (eliminate_orthogonal(sqrt, n_overlapping), 0),
        }
    };
    if matrix.values().iter().any(|v| !v.is_finite()) {
        return Err(Error::SchurBreakdown {
            subdomain,
            detail: "non-finite entries after elimination".into(),
        });
    }
    let asym = matrix.relative_asymmetry();
    if asym > ASYMMETRY_LIMIT {
        return Err(Error::SchurBreakdown {
            subdomain,
            detail: format!("relative asymmetry {asym:.3e} after elimination"),
        });
    }
    matrix.symmetrize();
    if floored_pivots > 0 {
        log::warn!(
            "subdomain {subdomain}: {floored_pivots} halo pivot(s) raised to {:.3e}",
            sqrt.shift
        );
    }
    Ok(LocalSplitting {
        subdomain,
        matrix,
        sigma1: sqrt.sigma1,
        shift: sqrt.shift,
        floored_pivots,
    })
}

fn eliminate_cholesky(sqrt: &SqrtSplitting, n: usize) -> Result<(DenseMatrix, usize)> {
    let full = sqrt.materialize();
    let m = full.n_rows();
    let x11 = full.submatrix(0..n, 0..n);
    let x22 = full.submatrix(n..m, n..m);
    let mut w = full.submatrix(n..m, 0..n);
    let (l, floored) = floored_cholesky(&x22, sqrt.shift);
    lower_solve_in_place(&l, &mut w);
    let update = w.tr_matmul(&w)?;
    let s = DenseMatrix::from_fn(n, n, |i, j| x11[(i, j)] - update[(i, j)]);
    Ok((s, floored))
}

fn eliminate_orthogonal(sqrt: &SqrtSplitting, n: usize) -> DenseMatrix {
    // H = [G; √s I] with G = Σ^{1/2}Vᵀ, so that HᵀH is the shifted square root.
    let g = sqrt.half();
    let k = g.n_rows();
    let m = sqrt.dim();
    let root = sqrt.shift.sqrt();
    let h = Mat::<f64>::from_fn(k + m, m, |r, c| {
        if r < k {
            g[(r, c)]
        } else if r - k == c {
            root
        } else {
            0.0
        }
    });
    let h1 = h.as_ref().subcols(0, n);
    let h2 = h.as_ref().subcols(n, m - n);
    let q = h2.qr().compute_thin_Q();
    let proj = q.transpose() * h1;
    let s = h1.transpose() * h1 - proj.transpose() * &proj;
    DenseMatrix::from_faer(s.as_ref())
}

/// Builds every subdomain's splitting; subdomains are processed concurrently and
/// returned in index order.
pub fn build_splittings(
    a: &CsrMatrix,
    layout: &SubdomainLayout,
    method: SchurMethod,
) -> Result<Vec<(LocalSplitting, SplittingDiagnostics)>> {
    (0..layout.n_subdomains())
        .into_par_iter()
        .map(|i| {
            let start = Instant::now();
            let row = build_block_row(a, layout, i)?;
            let sqrt = sqrt_splitting(&row)?;
            let split = schur_splitting(i, &sqrt, row.n_overlapping, method)?;
            let tol = sqrt.sigma1 * f64::EPSILON * row.n_extended() as f64;
            let diag = SplittingDiagnostics {
                subdomain: i,
                n_interior: row.n_interior,
                n_overlapping: row.n_overlapping,
                n_extended: row.n_extended(),
                sigma1: sqrt.sigma1,
                rank: sqrt.sigma.iter().filter(|&&s| s > tol).count(),
                floored_pivots: split.floored_pivots,
                eigmin: None,
                seconds: start.elapsed().as_secs_f64(),
            };
            Ok((split, diag))
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct SplittingDiagnostics {
    pub subdomain: usize,
    pub n_interior: usize,
    pub n_overlapping: usize,
    pub n_extended: usize,
    pub sigma1: f64,
    pub rank: usize,
    pub floored_pivots: usize,
    pub eigmin: Option<f64>,
    pub seconds: f64,
}

impl SplittingDiagnostics {
    /// Fills `eigmin` with the smallest eigenvalue of `Ã_ii`.
    pub fn measure_eigmin(&mut self, split: &LocalSplitting) -> Result<()> {
        self.eigmin = symmetric_eigenvalues(&split.matrix)?.first().copied();
        Ok(())
    }
}

pub fn diagnostics_csv(rows: &[SplittingDiagnostics]) -> String {
    let mut out = String::from(
        "subdomain,n_interior,n_overlapping,n_extended,sigma1,rank,floored_pivots,eigmin,seconds\n",
    );
    for d in rows {
        let eig = d.eigmin.map(|e| format!("{e:e}")).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{:e},{},{},{},{:.6}",
            d.subdomain + 1,
            d.n_interior,
            d.n_overlapping,
            d.n_extended,
            d.sigma1,
            d.rank,
            d.floored_pivots,
            eig,
            d.seconds
        );
    }
    out
}

pub fn write_diagnostics_csv(path: impl AsRef<Path>, rows: &[SplittingDiagnostics]) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, diagnostics_csv(rows)).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}
