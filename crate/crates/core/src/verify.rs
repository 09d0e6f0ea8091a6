//! Numerical invariant checks on a configured problem: local splitting bounds, the
//! multiplicity bound, partition of unity exactness and the condition number bound.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::coarse::theoretical_bound;
use crate::error::Result;
use crate::krylov::{estimate_condition, ConditionMode};
use crate::partition::SubdomainLayout;
use crate::schwarz::{build_hierarchy, HierarchyConfig, Variant};
use crate::sparse::{dot, lower_solve_in_place, symmetric_eigenvalues, CholeskyFactor, CsrMatrix};
use crate::splitting::LocalSplitting;

/// Problems up to this order get dense spectral checks.
pub const DENSE_CHECK_LIMIT: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MarginMethod {
    /// Smallest eigenvalue of `S − Ã_ii` with `S` the Schur complement of `A` onto `Ω_i`.
    DenseSchur,
    /// Smallest sampled Rayleigh quotient of `A − Ã_i`.
    Rayleigh,
}

#[derive(Clone, Debug, Serialize)]
pub struct SplittingMargin {
    pub subdomain: usize,
    pub method: MarginMethod,
    /// Lower bound on `eigmin(A − Ã_i) / ‖A‖₂` (dense) or sampled minimum (Rayleigh).
    pub lower_gap: f64,
    /// `eigmin(Ã_ii) / ‖Ã_ii‖₂`
    pub local_min: f64,
}

/// Checks `0 ≤ Ã_i ≤ A` for each subdomain.
///
/// The dense route uses `A − Ã_i ⪰ −tI  ⇐  S_i − Ã_ii ⪰ −tI`, where
/// `S_i = A_ii − A_ic A_cc⁻¹ A_ci`, so the reported value is a certified lower bound.
pub fn splitting_margins(
    a: &CsrMatrix,
    layout: &SubdomainLayout,
    splittings: &[LocalSplitting],
    samples: usize,
    seed: u64,
) -> Result<Vec<SplittingMargin>> {
    let n = a.n_rows();
    let a_norm = a.norm2_estimate(200);
    let dense = n <= DENSE_CHECK_LIMIT;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let probes: Vec<Vec<f64>> = if dense {
        Vec::new()
    } else {
        (0..samples)
            .map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect()
    };
    let quad_a: Vec<f64> = probes.iter().map(|u| dot(u, &a.spmv(u).unwrap())).collect();
    splittings
        .iter()
        .map(|split| {
            let sub = layout.subdomain(split.subdomain);
            let local = symmetric_eigenvalues(&split.matrix)?;
            let top = local.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let local_min = if top == 0.0 { 0.0 } else { local[0] / top };
            let (method, lower_gap) = if dense {
                (MarginMethod::DenseSchur, schur_gap(a, sub.overlapping(), split)? / a_norm)
            } else {
                let gap = probes
                    .iter()
                    .zip(&quad_a)
                    .map(|(u, qa)| (qa - split.quadratic_form(sub.overlapping(), u)) / dot(u, u))
                    .fold(f64::INFINITY, f64::min);
                (MarginMethod::Rayleigh, gap / a_norm)
            };
            Ok(SplittingMargin {
                subdomain: split.subdomain,
                method,
                lower_gap,
                local_min,
            })
        })
        .collect()
}

fn schur_gap(a: &CsrMatrix, omega: &[usize], split: &LocalSplitting) -> Result<f64> {
    let n = a.n_rows();
    let mut inside = vec![false; n];
    omega.iter().for_each(|&v| inside[v] = true);
    let rest: Vec<usize> = (0..n).filter(|&v| !inside[v]).collect();
    let mut s = a.extract_dense(omega, omega)?;
    if !rest.is_empty() {
        let l = CholeskyFactor::new(&a.extract_dense(&rest, &rest)?)?.lower();
        let mut w = a.extract_dense(&rest, omega)?;
        lower_solve_in_place(&l, &mut w);
        let ww = w.tr_matmul(&w)?;
        for j in 0..omega.len() {
            for i in 0..omega.len() {
                s[(i, j)] -= ww[(i, j)];
            }
        }
    }
    for j in 0..omega.len() {
        for i in 0..omega.len() {
            s[(i, j)] -= split.matrix[(i, j)];
        }
    }
    s.symmetrize();
    Ok(symmetric_eigenvalues(&s)?[0])
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct SumBound {
    pub samples: usize,
    /// `min Σ_i uᵀÃ_iu / uᵀAu`
    pub min_ratio: f64,
    /// `max Σ_i uᵀÃ_iu / uᵀAu`
    pub max_ratio: f64,
    pub n_subdomains: usize,
}

impl SumBound {
    /// Worst relative violation of `0 ≤ Σ_i uᵀÃ_iu ≤ N uᵀAu` (non-negative when it holds).
    pub fn margin(&self) -> f64 {
        self.min_ratio.min(1.0 - self.max_ratio / self.n_subdomains as f64)
    }
}

pub fn sum_bound(
    a: &CsrMatrix,
    layout: &SubdomainLayout,
    splittings: &[LocalSplitting],
    samples: usize,
    seed: u64,
) -> SumBound {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = a.n_rows();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for _ in 0..samples {
        let u: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let qa = dot(&u, &a.spmv(&u).unwrap());
        let sum: f64 = splittings
            .iter()
            .map(|s| s.quadratic_form(layout.subdomain(s.subdomain).overlapping(), &u))
            .sum();
        lo = lo.min(sum / qa);
        hi = hi.max(sum / qa);
    }
    SumBound {
        samples,
        min_ratio: lo,
        max_ratio: hi,
        n_subdomains: layout.n_subdomains(),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BoundCheck {
    pub n_subdomains: usize,
    pub tau: f64,
    pub k_c: usize,
    pub n_coarse: usize,
    pub kappa_two_level: f64,
    pub kappa_one_level: f64,
    /// `theoretical_bound(k_c, N, τ)`
    pub bound: f64,
}

impl BoundCheck {
    pub fn within_bound(&self) -> bool {
        self.kappa_two_level <= self.bound
    }

    pub fn improves_on_one_level(&self) -> bool {
        self.kappa_two_level < self.kappa_one_level
    }
}

/// Dense condition numbers of the additive two-level and one-level ASM operators, set
/// against the bound with `k_m = N`.
pub fn bound_check(a: Arc<CsrMatrix>, config: &HierarchyConfig) -> Result<BoundCheck> {
    let two = HierarchyConfig {
        levels: 2,
        subdomains: vec![config.subdomains[0]],
        variant: Variant::TWO_ADDITIVE,
        ..config.clone()
    };
    let p2 = build_hierarchy(a.clone(), &two)?;
    let one = HierarchyConfig {
        levels: 1,
        subdomains: vec![config.subdomains[0]],
        variant: Variant::ASM,
        ..config.clone()
    };
    let p1 = build_hierarchy(a.clone(), &one)?;
    let k2 = estimate_condition(a.as_ref(), &p2, ConditionMode::Dense)?;
    let k1 = estimate_condition(a.as_ref(), &p1, ConditionMode::Dense)?;
    let summary = &p2.summaries()[0];
    Ok(BoundCheck {
        n_subdomains: summary.n_subdomains,
        tau: config.coarse.tau,
        k_c: summary.k_c,
        n_coarse: p2.n_coarse(),
        kappa_two_level: k2.kappa,
        kappa_one_level: k1.kappa,
        bound: theoretical_bound(summary.k_c, summary.n_subdomains as f64, config.coarse.tau),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gen;
    use crate::partition::{build_layout, partition_graph};
    use crate::sparse::{AdjacencyGraph, DenseMatrix};
    use crate::splitting::{build_splittings, SchurMethod};

    fn setup(a: &CsrMatrix, parts: usize) -> (SubdomainLayout, Vec<LocalSplitting>) {
        let g = AdjacencyGraph::from_matrix(a).unwrap();
        let layout = build_layout(&g, partition_graph(&g, parts, 0).unwrap()).unwrap();
        let splits = build_splittings(a, &layout, SchurMethod::Cholesky)
            .unwrap()
            .into_iter()
            .map(|(s, _)| s)
            .collect();
        (layout, splits)
    }

    #[test]
    fn schur_certificate_bounds_the_full_spectrum() {
        let a = gen::heterogeneous_2d(10, 10, 1e3);
        let (layout, splits) = setup(&a, 4);
        let margins = splitting_margins(&a, &layout, &splits, 0, 0).unwrap();
        let norm = symmetric_eigenvalues(&a.to_dense()).unwrap()[99];
        for (m, s) in margins.iter().zip(&splits) {
            let om = layout.subdomain(s.subdomain).overlapping();
            let mut d = a.to_dense();
            for (p, &i) in om.iter().enumerate() {
                for (q, &j) in om.iter().enumerate() {
                    d[(i, j)] -= s.matrix[(p, q)];
                }
            }
            d.symmetrize();
            let full = symmetric_eigenvalues(&d).unwrap()[0] / norm;
            assert!(m.lower_gap <= full + 1e-12, "{} vs {full}", m.lower_gap);
            assert!(m.lower_gap > -1e-10);
            assert!(m.local_min > -1e-10);
        }
    }

    #[test]
    fn schur_certificate_detects_violation() {
        let a = gen::laplace_1d(12);
        let (layout, mut splits) = setup(&a, 2);
        // doubling A_ii makes A − Ã_i indefinite
        let om = layout.subdomain(0).overlapping().to_vec();
        splits[0].matrix = DenseMatrix::from_fn(om.len(), om.len(), |i, j| 2.0 * a.get(om[i], om[j]));
        let margins = splitting_margins(&a, &layout, &splits, 0, 0).unwrap();
        assert!(margins[0].lower_gap < -0.1);
    }

    #[test]
    fn sum_bound_within_subdomain_count() {
        let a = gen::laplace_2d(12, 12);
        let (layout, splits) = setup(&a, 4);
        let s = sum_bound(&a, &layout, &splits, 20, 1);
        assert!(s.min_ratio >= 0.0 && s.max_ratio <= 4.0);
        assert!(s.margin() >= 0.0);
    }

    #[test]
    fn bound_holds_on_small_grid() {
        let a = Arc::new(gen::laplace_2d(16, 16));
        let cfg = HierarchyConfig {
            subdomains: vec![4],
            ..HierarchyConfig::default()
        };
        let b = bound_check(a, &cfg).unwrap();
        assert!(b.within_bound(), "{b:?}");
        assert!(b.improves_on_one_level(), "{b:?}");
    }
}
