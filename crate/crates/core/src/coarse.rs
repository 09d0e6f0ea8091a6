//! Spectral coarse space: per-subdomain generalized eigenproblems, the coarse
//! interpolation `R_0` and the coarse operator `C_00 = R_0 A R_0ᵀ`.

use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::partition::{PartitionOfUnity, SubdomainLayout};
use crate::sparse::{
    dot, leading_entry_negative, lower_solve_in_place, symmetric_eigen, CholeskyFactor,
    CsrMatrix, DenseMatrix,
};
use crate::splitting::LocalSplitting;

/// Default cap on eigenvectors kept per subdomain.
pub const DEFAULT_NEV_MAX: usize = 20;

/// Smallest `θ` used when converting `θ = 1/(1+λ)` back to `λ`; caps `λ` near `1/ε`.
const THETA_FLOOR: f64 = f64::EPSILON;

/// Relative band below `1/τ` whose eigenpairs are refined before selection.
const REFINE_BAND: f64 = 1e-6;
const REFINE_EXTRA: usize = 8;
/// Below this `θ` (about `λ > 1e8`) the Rayleigh quotient is no better than `θ`.
const REFINE_THETA_MIN: f64 = 1e-8;

/// Shift attempts on `Ã_ii` before giving up.
const MAX_SHIFT_STEPS: usize = 40;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CoarseConfig {
    pub tau: f64,
    /// `None` keeps every eigenvector above the threshold.
    pub nev_max: Option<usize>,
}

impl Default for CoarseConfig {
    fn default() -> Self {
        Self {
            tau: 10.0,
            nev_max: Some(DEFAULT_NEV_MAX),
        }
    }
}

/// Eigenpairs of `(D A_ii D, Ã_ii + δI)`.
#[derive(Clone, Debug)]
pub struct SubdomainEigenBasis {
    pub subdomain: usize,
    /// All eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
    /// Selected eigenvectors (unit 2-norm), one column each, in `eigenvalues` order.
    pub vectors: DenseMatrix,
    /// Shift added to `Ã_ii` to make it numerically definite.
    pub delta: f64,
}

impl SubdomainEigenBasis {
    pub fn n_selected(&self) -> usize {
        self.vectors.n_cols()
    }

    pub fn selected_eigenvalues(&self) -> &[f64] {
        &self.eigenvalues[..self.n_selected()]
    }
}

/// `Ã + δI` with the smallest `δ ∈ {0, s, 10s, 100s, …}` (`s = σ_1 ε`) whose Cholesky
/// factorization succeeds.
fn shifted_definite(split: &LocalSplitting) -> Result<(DenseMatrix, f64)> {
    if split.matrix.cholesky().is_ok() {
        return Ok((split.matrix.clone(), 0.0));
    }
    let mut delta = split.shift.max(f64::MIN_POSITIVE);
    for _ in 0..MAX_SHIFT_STEPS {
        let mut b = split.matrix.clone();
        b.add_to_diagonal(delta);
        if b.cholesky().is_ok() {
            return Ok((b, delta));
        }
        delta *= 10.0;
    }
    Err(Error::NotPositiveDefinite {
        context: format!(
            "splitting of subdomain {} stays indefinite after shifting",
            split.subdomain
        ),
    })
}

fn scaled(a_ii: &DenseMatrix, d: &[f64]) -> DenseMatrix {
    DenseMatrix::from_fn(a_ii.n_rows(), a_ii.n_cols(), |i, j| d[i] * a_ii[(i, j)] * d[j])
}

/// Solves `D A_ii D u = λ (Ã_ii + δI) u` and keeps the eigenvectors with `λ > 1/τ`.
///
/// The pencil is solved in the equivalent form `B u = θ (D A_ii D + B) u`, whose right
/// side is well conditioned even when `B = Ã_ii + δI` is nearly singular; then
/// `λ = (1 − θ)/θ`.
pub fn solve_gevp(
    subdomain: usize,
    a_ii: &DenseMatrix,
    d: &[f64],
    split: &LocalSplitting,
    config: &CoarseConfig,
) -> Result<SubdomainEigenBasis> {
    if !(config.tau > 0.0) {
        return Err(Error::InvalidArgument(format!("tau must be positive, got {}", config.tau)));
    }
    let n = a_ii.n_rows();
    if a_ii.n_cols() != n || split.dim() != n || d.len() != n {
        return Err(Error::DimensionMismatch {
            context: "eigenproblem blocks",
            expected: n,
            found: split.dim(),
        });
    }
    let (b, delta) = shifted_definite(split)?;
    let dad = scaled(a_ii, d);
    let mut c = DenseMatrix::from_fn(n, n, |i, j| dad[(i, j)] + b[(i, j)]);
    c.symmetrize();
    let l = CholeskyFactor::new(&c)
        .map_err(|_| Error::NotPositiveDefinite {
            context: format!("pencil of subdomain {subdomain}"),
        })?
        .lower();

    // K = L⁻¹ B L⁻ᵀ
    let mut k = b.clone();
    lower_solve_in_place(&l, &mut k);
    let mut k = k.transpose();
    lower_solve_in_place(&l, &mut k);
    k.symmetrize();
    let eig = symmetric_eigen(&k)?;

    // ascending θ is descending λ
    let mut eigenvalues: Vec<f64> = eig
        .values
        .iter()
        .map(|&t| {
            let t = t.clamp(THETA_FLOOR, 1.0);
            (1.0 - t) / t
        })
        .collect();
    if eigenvalues.iter().any(|l| !l.is_finite()) {
        return Err(Error::NonFinite("generalized eigenvalues"));
    }
    let threshold = 1.0 / config.tau;
    let cap = config.nev_max.unwrap_or(n);
    let candidates = eigenvalues
        .iter()
        .take_while(|&&l| l > threshold * (1.0 - REFINE_BAND))
        .count()
        .min(cap + REFINE_EXTRA);

    // u = L⁻ᵀ w, normalized, largest entry positive
    let mut w = eig.vectors.submatrix(0..n, 0..candidates);
    faer::linalg::triangular_solve::solve_upper_triangular_in_place(
        l.as_faer().transpose(),
        w.as_faer_mut(),
        faer::Par::Seq,
    );
    for j in 0..candidates {
        let col = w.col_mut(j);
        let norm = dot(col, col).sqrt();
        let flip = leading_entry_negative(col);
        let scale = if flip { -1.0 / norm } else { 1.0 / norm };
        col.iter_mut().for_each(|e| *e *= scale);
        // Rayleigh quotient on the original pencil where its denominator is reliable
        if eig.values[j] >= REFINE_THETA_MIN {
            let col = w.col(j);
            let num = dot(col, &dad.matvec(col)?);
            let den = dot(col, &b.matvec(col)?);
            if den > 0.0 {
                eigenvalues[j] = num / den;
            }
        }
    }
    let mut order: Vec<usize> = (0..candidates).collect();
    order.sort_by(|&x, &y| eigenvalues[y].partial_cmp(&eigenvalues[x]).unwrap().then(x.cmp(&y)));
    let refined: Vec<f64> = order.iter().map(|&j| eigenvalues[j]).collect();
    eigenvalues[..candidates].copy_from_slice(&refined);
    let count = refined.iter().take_while(|&&l| l > threshold).count().min(cap);
    let w = DenseMatrix::from_fn(n, count, |r, c| w[(r, order[c])]);
    Ok(SubdomainEigenBasis {
        subdomain,
        eigenvalues,
        vectors: w,
        delta,
    })
}

/// Largest `‖D A D u − λ B u‖ / ((‖D A D‖ + |λ| ‖B‖) ‖u‖)` over the selected pairs, with
/// `B = Ã_ii + δI` and Frobenius norms standing in for the operator norms.
pub fn pencil_backward_error(
    basis: &SubdomainEigenBasis,
    a_ii: &DenseMatrix,
    d: &[f64],
    split: &LocalSplitting,
) -> f64 {
    let dad = scaled(a_ii, d);
    let mut b = split.matrix.clone();
    b.add_to_diagonal(basis.delta);
    let (na, nb) = (dad.frobenius_norm(), b.frobenius_norm());
    (0..basis.n_selected())
        .map(|j| {
            let u = basis.vectors.col(j);
            let lam = basis.eigenvalues[j];
            let au = dad.matvec(u).unwrap();
            let bu = b.matvec(u).unwrap();
            let r: f64 = au
                .iter()
                .zip(&bu)
                .map(|(x, y)| (x - lam * y).powi(2))
                .sum::<f64>()
                .sqrt();
            r / ((na + lam.abs() * nb) * dot(u, u).sqrt())
        })
        .fold(0.0, f64::max)
}

#[derive(Clone, Debug)]
pub struct CoarseSpace {
    /// `n_C × n`
    pub r0: CsrMatrix,
    /// Rows of `R_0` contributed by each subdomain.
    pub ranges: Vec<Range<usize>>,
    pub c00: DenseMatrix,
    pub factor: Option<CholeskyFactor>,
    /// Coarse vectors removed because `C_00` was numerically singular.
    pub dropped: usize,
    pub summary: CoarseSummary,
}

impl CoarseSpace {
    pub fn n_coarse(&self) -> usize {
        self.r0.n_rows()
    }

    /// `R_0ᵀ C_00⁻¹ R_0 r`
    pub fn correction(&self, r: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.r0.n_cols()];
        if let Some(f) = &self.factor {
            let mut y = self.r0.spmv(r).expect("coarse restriction");
            f.solve_in_place(&mut y);
            self.prolong_add(&y, &mut out);
        }
        out
    }

    /// `out += R_0ᵀ y`
    pub fn prolong_add(&self, y: &[f64], out: &mut [f64]) {
        for (i, &yi) in y.iter().enumerate() {
            let (cols, vals) = self.r0.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                out[c] += v * yi;
            }
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SubdomainCoarseSummary {
    pub subdomain: usize,
    pub selected: usize,
    pub lambda_max: Option<f64>,
    /// Smallest selected eigenvalue.
    pub lambda_min_selected: Option<f64>,
    /// Largest eigenvalue that was not selected.
    pub lambda_max_rejected: Option<f64>,
    pub delta: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CoarseSummary {
    pub n: usize,
    pub n_coarse: usize,
    pub grid_complexity: f64,
    pub tau: f64,
    pub nev_max: Option<usize>,
    pub dropped: usize,
    pub subdomains: Vec<SubdomainCoarseSummary>,
}

fn summarize(basis: &SubdomainEigenBasis) -> SubdomainCoarseSummary {
    let p = basis.n_selected();
    SubdomainCoarseSummary {
        subdomain: basis.subdomain,
        selected: p,
        lambda_max: basis.eigenvalues.first().copied(),
        lambda_min_selected: p.checked_sub(1).map(|k| basis.eigenvalues[k]),
        lambda_max_rejected: basis.eigenvalues.get(p).copied(),
        delta: basis.delta,
    }
}

/// Solves every subdomain eigenproblem (concurrently) and assembles the coarse space.
pub fn build_coarse_space(
    a: &CsrMatrix,
    layout: &SubdomainLayout,
    pou: &PartitionOfUnity,
    splittings: &[LocalSplitting],
    config: &CoarseConfig,
) -> Result<CoarseSpace> {
    let bases = (0..layout.n_subdomains())
        .into_par_iter()
        .map(|i| {
            let omega = layout.subdomain(i).overlapping();
            let a_ii = a.extract_dense(omega, omega)?;
            solve_gevp(i, &a_ii, pou.weights(i), &splittings[i], config)
        })
        .collect::<Result<Vec<_>>>()?;
    assemble_coarse(layout, pou, &bases, a, config)
}

/// Rows `(D_i z)ᵀ` scattered onto `Ω_i`, subdomain by subdomain; `C_00` is built block by
/// block so that blocks of non-neighboring subdomains are exact zeros.
pub fn assemble_coarse(
    layout: &SubdomainLayout,
    pou: &PartitionOfUnity,
    bases: &[SubdomainEigenBasis],
    a: &CsrMatrix,
    config: &CoarseConfig,
) -> Result<CoarseSpace> {
    let n = layout.n();
    if bases.len() != layout.n_subdomains() {
        return Err(Error::DimensionMismatch {
            context: "eigenbases vs subdomains",
            expected: layout.n_subdomains(),
            found: bases.len(),
        });
    }
    // W_i = D_i Z_i, local to Ω_i
    let locals: Vec<DenseMatrix> = bases
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let d = pou.weights(i);
            DenseMatrix::from_fn(b.vectors.n_rows(), b.n_selected(), |r, c| {
                d[r] * b.vectors[(r, c)]
            })
        })
        .collect();
    let mut keep: Vec<(usize, usize)> = Vec::new();
    for (i, w) in locals.iter().enumerate() {
        keep.extend((0..w.n_cols()).map(|c| (i, c)));
    }
    let c00 = coarse_operator(layout, &locals, a)?;

    let (keep, c00, factor) = if keep.is_empty() {
        (keep, c00, None)
    } else {
        match CholeskyFactor::new(&c00).ok().filter(|f| well_conditioned(f, &c00)) {
            Some(f) => (keep, c00, Some(f)),
            None => {
                let retained = pivoted_cholesky_support(&c00);
                log::warn!(
                    "coarse operator is numerically singular; dropping {} of {} coarse vectors",
                    keep.len() - retained.len(),
                    keep.len()
                );
                let sub = DenseMatrix::from_fn(retained.len(), retained.len(), |r, c| {
                    c00[(retained[r], retained[c])]
                });
                let f = if retained.is_empty() {
                    None
                } else {
                    Some(CholeskyFactor::new(&sub)?)
                };
                (retained.iter().map(|&k| keep[k]).collect(), sub, f)
            }
        }
    };

    let mut triplets = Vec::new();
    let mut ranges = vec![0..0; layout.n_subdomains()];
    for (row, &(i, c)) in keep.iter().enumerate() {
        if ranges[i].start == ranges[i].end {
            ranges[i] = row..row;
        }
        ranges[i].end = row + 1;
        for (&v, &x) in layout.subdomain(i).overlapping().iter().zip(locals[i].col(c)) {
            if x != 0.0 {
                triplets.push((row, v, x));
            }
        }
    }
    // empty ranges sit where the subdomain would have started
    let mut next = 0;
    for r in ranges.iter_mut() {
        if r.start == r.end {
            *r = next..next;
        }
        next = r.end;
    }
    let r0 = CsrMatrix::from_triplets(keep.len(), n, &triplets)?;
    let dropped = bases.iter().map(|b| b.n_selected()).sum::<usize>() - keep.len();
    let mut subdomains: Vec<SubdomainCoarseSummary> = bases.iter().map(summarize).collect();
    for (s, r) in subdomains.iter_mut().zip(&ranges) {
        s.selected = r.len();
    }
    let summary = CoarseSummary {
        n,
        n_coarse: keep.len(),
        grid_complexity: (n + keep.len()) as f64 / n as f64,
        tau: config.tau,
        nev_max: config.nev_max,
        dropped,
        subdomains,
    };
    Ok(CoarseSpace {
        r0,
        ranges,
        c00,
        factor,
        dropped,
        summary,
    })
}

/// Rejects factors with a pivot below `n ε` times the largest diagonal entry.
fn well_conditioned(f: &CholeskyFactor, a: &DenseMatrix) -> bool {
    let n = a.n_rows();
    let l = f.lower();
    let max_diag = (0..n).map(|i| a[(i, i)]).fold(0.0, f64::max);
    (0..n).all(|i| l[(i, i)] * l[(i, i)] > n as f64 * f64::EPSILON * max_diag)
}

/// `C_00` from local coarse bases `W_i` (columns on `Ω_i`).
fn coarse_operator(layout: &SubdomainLayout, locals: &[DenseMatrix], a: &CsrMatrix) -> Result<DenseMatrix> {
    let offsets: Vec<usize> = std::iter::once(0)
        .chain(locals.iter().scan(0, |acc, w| {
            *acc += w.n_cols();
            Some(*acc)
        }))
        .collect();
    let n_c = *offsets.last().unwrap();
    let mut c00 = DenseMatrix::zeros(n_c, n_c);
    if n_c == 0 {
        return Ok(c00);
    }
    let members = layout.multiplicity_lists();
    let mut position = vec![usize::MAX; layout.n()];
    for (j, wj) in locals.iter().enumerate() {
        if wj.n_cols() == 0 {
            continue;
        }
        let sj = layout.subdomain(j);
        // Y_j = A(Ω̃_j, Ω_j) W_j holds A R_0ᵀ for subdomain j's columns
        let ext = sj.extended();
        let y = a.extract_dense(ext, sj.overlapping())?.matmul(wj)?;
        for (p, &v) in ext.iter().enumerate() {
            position[v] = p;
        }
        let mut neighbors: Vec<usize> = ext
            .iter()
            .flat_map(|&v| members[v].iter().copied())
            .filter(|&i| i <= j && locals[i].n_cols() > 0)
            .collect();
        neighbors.sort_unstable();
        neighbors.dedup();
        for i in neighbors {
            let wi = &locals[i];
            for (r, &v) in layout.subdomain(i).overlapping().iter().enumerate() {
                let p = position[v];
                if p == usize::MAX {
                    continue;
                }
                for ci in 0..wi.n_cols() {
                    let w = wi[(r, ci)];
                    if w == 0.0 {
                        continue;
                    }
                    for cj in 0..wj.n_cols() {
                        c00[(offsets[i] + ci, offsets[j] + cj)] += w * y[(p, cj)];
                    }
                }
            }
        }
        for &v in ext {
            position[v] = usize::MAX;
        }
    }
    for r in 0..n_c {
        for c in 0..r {
            c00[(r, c)] = c00[(c, r)];
        }
    }
    Ok(c00)
}

/// Indices (ascending) of a numerically independent subset found by diagonally pivoted
/// Cholesky; stops once the remaining pivots fall below `n ε` times the largest diagonal.
fn pivoted_cholesky_support(a: &DenseMatrix) -> Vec<usize> {
    let n = a.n_rows();
    let mut work = a.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    let max_diag = (0..n).map(|i| a[(i, i)]).fold(0.0, f64::max);
    let tol = n as f64 * f64::EPSILON * max_diag;
    let mut rank = 0;
    for k in 0..n {
        let (p, &piv) = perm[k..]
            .iter()
            .map(|&q| &work[(q, q)])
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap().then(b.0.cmp(&a.0)))
            .unwrap();
        if !(piv > tol) {
            break;
        }
        perm.swap(k, k + p);
        let q = perm[k];
        let root = piv.sqrt();
        for &r in &perm[k + 1..] {
            work[(r, q)] /= root;
        }
        for (ii, &r) in perm[k + 1..].iter().enumerate() {
            let lr = work[(r, q)];
            for &c in &perm[k + 1..k + 2 + ii] {
                let v = work[(r, c)] - lr * work[(c, q)];
                work[(r, c)] = v;
                work[(c, r)] = v;
            }
        }
        rank += 1;
    }
    let mut kept: Vec<usize> = perm[..rank].to_vec();
    kept.sort_unstable();
    kept
}

/// `(k_c + 1)(2 + (2k_c + 1) k_m / τ)`
pub fn theoretical_bound(k_c: usize, k_m: f64, tau: f64) -> f64 {
    let kc = k_c as f64;
    (kc + 1.0) * (2.0 + (2.0 * kc + 1.0) * k_m / tau)
}

/// Sampled lower estimate of the multiplicity constant: the largest observed
/// `Σ_i uᵀÃ_iu / uᵀAu` over random `u`.
pub fn estimate_multiplicity(
    a: &CsrMatrix,
    layout: &SubdomainLayout,
    splittings: &[LocalSplitting],
    samples: usize,
    seed: u64,
) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = layout.n();
    (0..samples)
        .map(|_| {
            let u: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let sum: f64 = splittings
                .iter()
                .map(|s| s.quadratic_form(layout.subdomain(s.subdomain).overlapping(), &u))
                .sum();
            sum / dot(&u, &a.spmv(&u).unwrap())
        })
        .fold(0.0, f64::max)
}
