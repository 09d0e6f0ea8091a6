//! One-level (ASM, RAS), two-level (additive, deflated) and nested multilevel overlapping
//! Schwarz preconditioners.

use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::coarse::{build_coarse_space, CoarseConfig, CoarseSpace, CoarseSummary};
use crate::error::{Error, Result};
use crate::krylov::{self, LinearOperator, Method, SolveConfig};
use crate::partition::{
    build_layout, build_partition_of_unity, color_subdomains, partition_graph, partition_quality,
    PartitionQuality, PouScheme, SubdomainLayout,
};
use crate::sparse::{AdjacencyGraph, CholeskyFactor, CsrMatrix};
use crate::splitting::{build_splittings, SchurMethod};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OneLevel {
    Asm,
    Ras,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Coupling {
    None,
    Additive,
    Deflated,
}

/// Schwarz method applied at one level.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Variant {
    pub one_level: OneLevel,
    pub coupling: Coupling,
}

impl Variant {
    pub const ASM: Variant = Variant { one_level: OneLevel::Asm, coupling: Coupling::None };
    pub const RAS: Variant = Variant { one_level: OneLevel::Ras, coupling: Coupling::None };
    /// Coarse correction plus ASM.
    pub const TWO_ADDITIVE: Variant = Variant { one_level: OneLevel::Asm, coupling: Coupling::Additive };
    /// Coarse correction, then RAS on the deflated residual.
    pub const TWO_DEFLATED: Variant = Variant { one_level: OneLevel::Ras, coupling: Coupling::Deflated };

    pub fn has_coarse(&self) -> bool {
        self.coupling != Coupling::None
    }

    /// Only ASM and additive ASM are symmetric.
    pub fn is_symmetric(&self) -> bool {
        self.one_level == OneLevel::Asm && self.coupling != Coupling::Deflated
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "asm" => Ok(Variant::ASM),
            "ras" => Ok(Variant::RAS),
            "two-additive" => Ok(Variant::TWO_ADDITIVE),
            "two-deflated" => Ok(Variant::TWO_DEFLATED),
            _ => Err(Error::Config(format!(
                "unknown variant '{s}' (ras, asm, two-additive, two-deflated)"
            ))),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match (self.one_level, self.coupling) {
            (OneLevel::Asm, Coupling::None) => "asm",
            (OneLevel::Ras, Coupling::None) => "ras",
            (OneLevel::Asm, Coupling::Additive) => "two-additive",
            (OneLevel::Ras, Coupling::Deflated) => "two-deflated",
            (OneLevel::Ras, Coupling::Additive) => "two-additive-ras",
            (OneLevel::Asm, Coupling::Deflated) => "two-deflated-asm",
        };
        f.write_str(name)
    }
}

impl Serialize for HierarchyConfig {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("HierarchyConfig", 10)?;
        st.serialize_field("levels", &self.levels)?;
        st.serialize_field("subdomains", &self.subdomains)?;
        st.serialize_field("tau", &self.coarse.tau)?;
        st.serialize_field("nev_max", &self.coarse.nev_max)?;
        st.serialize_field("pou", &self.pou)?;
        st.serialize_field("schur", &self.schur)?;
        st.serialize_field("variant", &self.variant.to_string())?;
        st.serialize_field("nested_variant", &self.nested_variant.to_string())?;
        st.serialize_field("inner", &self.inner)?;
        st.serialize_field("coarse_direct_max", &self.coarse_direct_max)?;
        st.end()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HierarchyConfig {
    /// Total number of levels; 1 means one-level Schwarz.
    pub levels: usize,
    /// Subdomain count per partitioned level (all but the coarsest); a single entry is
    /// reused at every level.
    pub subdomains: Vec<usize>,
    pub coarse: CoarseConfig,
    pub pou: PouScheme,
    pub schur: SchurMethod,
    /// Method at the finest level.
    pub variant: Variant,
    /// Method preconditioning the nested coarse solves.
    pub nested_variant: Variant,
    /// Krylov settings of nested coarse solves; the method is chosen per level.
    pub inner: SolveConfig,
    /// Coarse operators of at most this order are factored directly even when the
    /// level budget allows another level.
    pub coarse_direct_max: Option<usize>,
    pub seed: u64,
}

impl Default for HierarchyConfig {
    fn default() -> Self {
        Self {
            levels: 2,
            subdomains: vec![16],
            coarse: CoarseConfig::default(),
            pou: PouScheme::Boolean,
            schur: SchurMethod::Cholesky,
            variant: Variant::TWO_DEFLATED,
            nested_variant: Variant::TWO_DEFLATED,
            inner: SolveConfig {
                method: Method::Gmres,
                restart: 30,
                rtol: 1e-4,
                max_iter: 200,
                ..SolveConfig::default()
            },
            coarse_direct_max: None,
            seed: 0,
        }
    }
}

impl HierarchyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.levels == 0 {
            return Err(Error::Config("levels must be at least 1".into()));
        }
        if self.levels == 1 && self.variant.has_coarse() {
            return Err(Error::Config(format!(
                "variant {} needs at least two levels",
                self.variant
            )));
        }
        if self.levels > 1 && !self.variant.has_coarse() {
            return Err(Error::Config(format!(
                "one-level variant {} with {} levels",
                self.variant, self.levels
            )));
        }
        if self.levels > 2 && !self.nested_variant.has_coarse() {
            return Err(Error::Config("nested variant must be two-level".into()));
        }
        let expected = (self.levels - 1).max(1);
        if self.subdomains.len() != 1 && self.subdomains.len() != expected {
            return Err(Error::Config(format!(
                "{} subdomain counts given for {} partitioned levels",
                self.subdomains.len(),
                expected
            )));
        }
        if self.subdomains.contains(&0) {
            return Err(Error::Config("subdomain counts must be positive".into()));
        }
        if !(self.coarse.tau > 0.0) {
            return Err(Error::Config(format!("tau must be positive, got {}", self.coarse.tau)));
        }
        self.inner.validate()
    }

    fn subdomains_at(&self, depth: usize) -> usize {
        if self.subdomains.len() == 1 {
            self.subdomains[0]
        } else {
            self.subdomains[depth]
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct LevelSummary {
    pub level: usize,
    pub n: usize,
    pub nnz: usize,
    pub n_subdomains: usize,
    pub variant: String,
    pub partition: PartitionQuality,
    /// Colors needed so that intersecting subdomains differ.
    pub k_c: usize,
    pub floored_pivots: usize,
    /// `none`, `direct` or `nested`.
    pub coarse_solve: &'static str,
    pub coarse: Option<CoarseSummary>,
}

#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct LevelTimings {
    pub partition: f64,
    pub factorization: f64,
    pub splitting: f64,
    pub coarse: f64,
}

enum CoarseSolver {
    None,
    Direct,
    Nested {
        level: Box<PreconditionerLevel>,
        matrix: Arc<CsrMatrix>,
        inner: SolveConfig,
        counts: Mutex<Vec<usize>>,
    },
}

/// One level of the hierarchy, usable as a preconditioner `M ≈ A⁻¹`.
pub struct PreconditionerLevel {
    depth: usize,
    a: Arc<CsrMatrix>,
    layout: SubdomainLayout,
    factors: Vec<CholeskyFactor>,
    variant: Variant,
    coarse: Option<CoarseSpace>,
    solver: CoarseSolver,
    summary: LevelSummary,
    timings: LevelTimings,
}

/// Builds the full hierarchy for `a`.
pub fn build_hierarchy(a: Arc<CsrMatrix>, config: &HierarchyConfig) -> Result<PreconditionerLevel> {
    config.validate()?;
    let asymmetry = a.relative_asymmetry();
    if asymmetry > 1e-12 {
        return Err(Error::NotSymmetric {
            context: "system matrix".into(),
            asymmetry,
        });
    }
    build_level(a, 0, config)
}

fn build_level(a: Arc<CsrMatrix>, depth: usize, config: &HierarchyConfig) -> Result<PreconditionerLevel> {
    let start = Instant::now();
    let graph = AdjacencyGraph::from_matrix(&a)?;
    let parts = config.subdomains_at(depth).min(a.n_rows());
    let interiors = partition_graph(&graph, parts, config.seed)?;
    let layout = build_layout(&graph, interiors)?;
    let partition_time = start.elapsed().as_secs_f64();
    let variant = if depth == 0 { config.variant } else { config.nested_variant };
    let mut level = PreconditionerLevel::with_layout(a, layout, variant, depth, config)?;
    level.timings.partition = partition_time;
    Ok(level)
}

impl PreconditionerLevel {
    /// Builds a level on a given decomposition; deeper levels (if any) are partitioned
    /// automatically.
    pub fn from_layout(a: Arc<CsrMatrix>, layout: SubdomainLayout, config: &HierarchyConfig) -> Result<Self> {
        config.validate()?;
        Self::with_layout(a, layout, config.variant, 0, config)
    }

    fn with_layout(
        a: Arc<CsrMatrix>,
        layout: SubdomainLayout,
        variant: Variant,
        depth: usize,
        config: &HierarchyConfig,
    ) -> Result<Self> {
        if layout.n() != a.n_rows() {
            return Err(Error::DimensionMismatch {
                context: "layout vs matrix",
                expected: a.n_rows(),
                found: layout.n(),
            });
        }
        let mut timings = LevelTimings::default();
        let graph = AdjacencyGraph::from_matrix(&a)?;
        let interiors: Vec<Vec<usize>> = layout.subdomains().iter().map(|s| s.interior.clone()).collect();
        let partition = partition_quality(&graph, &interiors);

        let t = Instant::now();
        let factors = (0..layout.n_subdomains())
            .into_par_iter()
            .map(|i| {
                let omega = layout.subdomain(i).overlapping();
                CholeskyFactor::new(&a.extract_dense(omega, omega)?).map_err(|_| Error::NotPositiveDefinite {
                    context: format!("level {} subdomain {} block", depth + 1, i),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        timings.factorization = t.elapsed().as_secs_f64();

        let mut floored_pivots = 0;
        let mut k_c = 0;
        let mut coarse = None;
        let mut solver = CoarseSolver::None;
        if variant.has_coarse() {
            k_c = color_subdomains(&layout).n_colors;
            let t = Instant::now();
            let pou = build_partition_of_unity(&layout, config.pou);
            let splittings: Vec<_> = build_splittings(&a, &layout, config.schur)?
                .into_iter()
                .map(|(s, _)| s)
                .collect();
            floored_pivots = splittings.iter().map(|s| s.floored_pivots).sum();
            timings.splitting = t.elapsed().as_secs_f64();
            let t = Instant::now();
            let space = build_coarse_space(&a, &layout, &pou, &splittings, &config.coarse)?;
            timings.coarse = t.elapsed().as_secs_f64();
            let n_c = space.n_coarse();
            let direct = config.coarse_direct_max.is_some_and(|m| n_c <= m);
            solver = if n_c == 0 {
                CoarseSolver::None
            } else if depth + 2 < config.levels && !direct && n_c > 1 {
                let matrix = Arc::new(CsrMatrix::from_dense(&space.c00, 0.0));
                let level = build_level(matrix.clone(), depth + 1, config)?;
                let method = if level.is_inexact() { Method::Fgmres } else { Method::Gmres };
                CoarseSolver::Nested {
                    level: Box::new(level),
                    matrix,
                    inner: SolveConfig { method, ..config.inner },
                    counts: Mutex::new(Vec::new()),
                }
            } else {
                CoarseSolver::Direct
            };
            coarse = Some(space);
        }

        let summary = LevelSummary {
            level: depth + 1,
            n: a.n_rows(),
            nnz: a.nnz(),
            n_subdomains: layout.n_subdomains(),
            variant: variant.to_string(),
            partition,
            k_c,
            floored_pivots,
            coarse_solve: match solver {
                CoarseSolver::None => "none",
                CoarseSolver::Direct => "direct",
                CoarseSolver::Nested { .. } => "nested",
            },
            coarse: coarse.as_ref().map(|c| c.summary.clone()),
        };
        Ok(Self {
            depth,
            a,
            layout,
            factors,
            variant,
            coarse,
            solver,
            summary,
            timings,
        })
    }

    pub fn n(&self) -> usize {
        self.a.n_rows()
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.a
    }

    pub fn layout(&self) -> &SubdomainLayout {
        &self.layout
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn coarse(&self) -> Option<&CoarseSpace> {
        self.coarse.as_ref()
    }

    pub fn n_coarse(&self) -> usize {
        self.coarse.as_ref().map_or(0, |c| c.n_coarse())
    }

    /// True when the coarse solve is iterative, so the operator varies between applies.
    pub fn is_inexact(&self) -> bool {
        matches!(self.solver, CoarseSolver::Nested { .. })
    }

    /// Number of levels from this one down.
    pub fn depth(&self) -> usize {
        1 + match &self.solver {
            CoarseSolver::Nested { level, .. } => level.depth(),
            _ => 0,
        }
    }

    /// The next coarser level when the coarse problem is solved iteratively.
    pub fn nested(&self) -> Option<&PreconditionerLevel> {
        match &self.solver {
            CoarseSolver::Nested { level, .. } => Some(level),
            _ => None,
        }
    }

    /// Summaries of this level and all coarser ones.
    pub fn summaries(&self) -> Vec<LevelSummary> {
        let mut out = vec![self.summary.clone()];
        if let Some(next) = self.nested() {
            out.extend(next.summaries());
        }
        out
    }

    /// Orders of the operators from this level down, ending with the directly factored
    /// coarse operator when there is one.
    pub fn level_sizes(&self) -> Vec<usize> {
        let mut out = vec![self.n()];
        match self.nested() {
            Some(next) => out.extend(next.level_sizes()),
            None if self.n_coarse() > 0 => out.push(self.n_coarse()),
            None => {}
        }
        out
    }

    pub fn timings(&self) -> Vec<LevelTimings> {
        let mut out = vec![self.timings];
        if let Some(next) = self.nested() {
            out.extend(next.timings());
        }
        out
    }

    /// `Σ_i R_iᵀ C_ii⁻¹ R_i r` (ASM) or with the prolongation restricted to interiors (RAS).
    pub fn apply_one_level(&self, r: &[f64]) -> Result<Vec<f64>> {
        self.one_level(self.variant.one_level, r)
    }

    fn one_level(&self, kind: OneLevel, r: &[f64]) -> Result<Vec<f64>> {
        self.check_len(r)?;
        let locals: Vec<Vec<f64>> = self
            .factors
            .par_iter()
            .zip(self.layout.subdomains().par_iter())
            .map(|(f, s)| {
                let mut v: Vec<f64> = s.overlapping().iter().map(|&j| r[j]).collect();
                f.solve_in_place(&mut v);
                v
            })
            .collect();
        let mut out = vec![0.0; r.len()];
        for (s, v) in self.layout.subdomains().iter().zip(&locals) {
            let keep = match kind {
                OneLevel::Asm => s.n_overlapping(),
                OneLevel::Ras => s.n_interior(),
            };
            for (&j, &x) in s.overlapping()[..keep].iter().zip(v) {
                out[j] += x;
            }
        }
        Ok(out)
    }

    /// `R_0ᵀ C_00⁻¹ R_0 r`, exact or by a nested Krylov solve.
    pub fn coarse_correction(&self, r: &[f64]) -> Result<Vec<f64>> {
        self.check_len(r)?;
        let mut out = vec![0.0; r.len()];
        let Some(space) = &self.coarse else {
            return Ok(out);
        };
        match &self.solver {
            CoarseSolver::None => {}
            CoarseSolver::Direct => out = space.correction(r),
            CoarseSolver::Nested { level, matrix, inner, counts } => {
                let rhs = space.r0.spmv(r)?;
                let (y, report) = krylov::solve(matrix.as_ref(), level.as_ref(), &rhs, inner)?;
                if !report.converged {
                    return Err(Error::InnerSolveDiverged {
                        iterations: report.iterations,
                        residual: report.final_relative_residual,
                    });
                }
                counts.lock().expect("inner iteration log").push(report.iterations);
                space.prolong_add(&y, &mut out);
            }
        }
        Ok(out)
    }

    /// The two-level operator: additive `c + M_1 r` or deflated `c + M_1 (r − A c)`,
    /// with `c` the coarse correction.
    pub fn apply_two_level(&self, r: &[f64]) -> Result<Vec<f64>> {
        let c = self.coarse_correction(r)?;
        let fine = match self.variant.coupling {
            Coupling::Deflated => {
                let ac = self.a.spmv(&c)?;
                let deflated: Vec<f64> = r.iter().zip(&ac).map(|(p, q)| p - q).collect();
                self.apply_one_level(&deflated)?
            }
            _ => self.apply_one_level(r)?,
        };
        Ok(c.iter().zip(&fine).map(|(p, q)| p + q).collect())
    }

    fn check_len(&self, r: &[f64]) -> Result<()> {
        if r.len() != self.n() {
            return Err(Error::DimensionMismatch {
                context: "preconditioner apply",
                expected: self.n(),
                found: r.len(),
            });
        }
        Ok(())
    }
}

impl LinearOperator for PreconditionerLevel {
    fn dim(&self) -> usize {
        self.n()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        let out = if self.variant.has_coarse() {
            self.apply_two_level(x)?
        } else {
            self.apply_one_level(x)?
        };
        if y.len() != out.len() {
            return Err(Error::DimensionMismatch {
                context: "preconditioner output",
                expected: out.len(),
                found: y.len(),
            });
        }
        y.copy_from_slice(&out);
        Ok(())
    }

    fn take_inner_iterations(&self) -> Vec<usize> {
        match &self.solver {
            CoarseSolver::Nested { counts, .. } => std::mem::take(&mut *counts.lock().expect("inner iteration log")),
            _ => Vec::new(),
        }
    }
}

impl fmt::Debug for PreconditionerLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PreconditionerLevel")
            .field("level", &(self.depth + 1))
            .field("n", &self.n())
            .field("variant", &self.variant.to_string())
            .field("n_coarse", &self.n_coarse())
            .finish()
    }
}
