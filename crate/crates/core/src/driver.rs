//! Batch runs behind the command line tool: configuration, `solve`, `verify`, `compare`
//! and `spectrum`, and their JSON/CSV/Markdown reports.

use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::coarse::{build_coarse_space, solve_gevp, CoarseConfig};
use crate::error::{Error, Result};
use crate::gen::ProblemSpec;
use crate::krylov::{self, estimate_condition, ConditionEstimate, ConditionMode, Method, SolveConfig, StopReason};
use crate::partition::{build_layout, build_partition_of_unity, partition_graph, PouScheme, SubdomainLayout};
use crate::schwarz::{build_hierarchy, HierarchyConfig, LevelSummary, LevelTimings, Variant};
use crate::sparse::{mtx, AdjacencyGraph, CsrMatrix};
use crate::splitting::{build_splittings, LocalSplitting, SchurMethod};
use crate::verify::{bound_check, splitting_margins, sum_bound, DENSE_CHECK_LIMIT};

/// Iteration limit of the comparison table; slower runs are left blank.
pub const COMPARE_LIMIT: usize = 100;

const LANCZOS_STEPS: usize = 300;
const SPSD_TOLERANCE: f64 = 1e-8;
const LOCAL_TOLERANCE: f64 = 1e-10;
const SUM_TOLERANCE: f64 = 1e-10;
const PROBES: usize = 100;
const RAYLEIGH_PROBES: usize = 500;

#[derive(Clone, Debug, PartialEq)]
pub enum MatrixSource {
    File(PathBuf),
    Generated(ProblemSpec),
}

impl fmt::Display for MatrixSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MatrixSource::File(p) => write!(f, "{}", p.display()),
            MatrixSource::Generated(g) => write!(f, "{g}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum RhsMode {
    /// Uniform in `[−1, 1]` from the run seed.
    Random,
    Ones,
    File(PathBuf),
}

impl FromStr for RhsMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(RhsMode::Random),
            "ones" => Ok(RhsMode::Ones),
            _ => match s.strip_prefix("file:") {
                Some(p) if !p.is_empty() => Ok(RhsMode::File(PathBuf::from(p))),
                _ => Err(Error::Config(format!("unknown rhs '{s}' (random, ones, file:<path>)"))),
            },
        }
    }
}

impl fmt::Display for RhsMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RhsMode::Random => f.write_str("random"),
            RhsMode::Ones => f.write_str("ones"),
            RhsMode::File(p) => write!(f, "file:{}", p.display()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum KappaMode {
    Dense,
    Lanczos,
}

impl FromStr for KappaMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dense" => Ok(KappaMode::Dense),
            "lanczos" => Ok(KappaMode::Lanczos),
            _ => Err(Error::Config(format!("unknown kappa mode '{s}' (dense, lanczos)"))),
        }
    }
}

/// Everything a run needs. Built from defaults, then a `key = value` file, then flags.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub matrix: Option<MatrixSource>,
    pub rhs: RhsMode,
    pub seed: u64,
    pub partition_seed: u64,
    /// Derived from the variant when unset: 1 for `ras`/`asm`, 2 otherwise.
    pub levels: Option<usize>,
    pub subdomains: Vec<usize>,
    pub tau: f64,
    pub nev_max: Option<usize>,
    pub pou: PouScheme,
    pub schur: SchurMethod,
    pub variant: Variant,
    pub nested_variant: Variant,
    /// Outer method; GMRES, or FGMRES when the coarse solve is nested, when unset.
    pub method: Option<Method>,
    pub rtol: f64,
    pub inner_rtol: f64,
    pub restart: usize,
    pub max_iter: usize,
    pub inner_max_iter: usize,
    pub coarse_direct_max: Option<usize>,
    pub report: Option<PathBuf>,
    pub history: Option<PathBuf>,
    pub kappa: Option<KappaMode>,
    pub spsd_check: bool,
    pub pou_check: bool,
    pub bound_check: bool,
    pub compare_variants: Vec<Variant>,
    pub compare_taus: Vec<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            matrix: None,
            rhs: RhsMode::Random,
            seed: 42,
            partition_seed: 0,
            levels: None,
            subdomains: vec![16],
            tau: 10.0,
            nev_max: CoarseConfig::default().nev_max,
            pou: PouScheme::Boolean,
            schur: SchurMethod::Cholesky,
            variant: Variant::TWO_DEFLATED,
            nested_variant: Variant::TWO_DEFLATED,
            method: None,
            rtol: 1e-8,
            inner_rtol: 1e-4,
            restart: 30,
            max_iter: 1000,
            inner_max_iter: 200,
            coarse_direct_max: None,
            report: None,
            history: None,
            kappa: None,
            spsd_check: true,
            pou_check: true,
            bound_check: true,
            compare_variants: vec![Variant::RAS, Variant::TWO_DEFLATED],
            compare_taus: Vec::new(),
        }
    }
}

/// Keys accepted by [`RunConfig::set`] and in configuration files.
pub const CONFIG_KEYS: &[&str] = &[
    "matrix",
    "gen",
    "rhs",
    "seed",
    "partition-seed",
    "levels",
    "subdomains",
    "tau",
    "nev-max",
    "pou",
    "schur",
    "variant",
    "nested-variant",
    "method",
    "rtol",
    "inner-rtol",
    "restart",
    "max-iter",
    "inner-max-iter",
    "coarse-direct-max",
    "report",
    "history",
    "kappa",
    "spsd-check",
    "pou-check",
    "bound-check",
    "variants",
    "taus",
];

fn value<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("invalid value '{v}' for {key}")))
}

fn list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',').map(|s| value(key, s.trim())).collect()
}

fn flag(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(Error::Config(format!("invalid value '{v}' for {key} (true/false)"))),
    }
}

fn optional_count(key: &str, v: &str) -> Result<Option<usize>> {
    match v {
        "all" | "none" => Ok(None),
        _ => value(key, v).map(Some),
    }
}

impl RunConfig {
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let v = v.trim();
        match key {
            "matrix" => self.matrix = Some(MatrixSource::File(PathBuf::from(v))),
            "gen" => self.matrix = Some(MatrixSource::Generated(v.parse()?)),
            "rhs" => self.rhs = v.parse()?,
            "seed" => self.seed = value(key, v)?,
            "partition-seed" => self.partition_seed = value(key, v)?,
            "levels" => self.levels = Some(value(key, v)?),
            "subdomains" => self.subdomains = list(key, v)?,
            "tau" => self.tau = value(key, v)?,
            "nev-max" => self.nev_max = optional_count(key, v)?,
            "pou" => self.pou = v.parse()?,
            "schur" => self.schur = v.parse()?,
            "variant" => self.variant = v.parse()?,
            "nested-variant" => self.nested_variant = v.parse()?,
            "method" => self.method = Some(v.parse()?),
            "rtol" => self.rtol = value(key, v)?,
            "inner-rtol" => self.inner_rtol = value(key, v)?,
            "restart" => self.restart = value(key, v)?,
            "max-iter" => self.max_iter = value(key, v)?,
            "inner-max-iter" => self.inner_max_iter = value(key, v)?,
            "coarse-direct-max" => self.coarse_direct_max = optional_count(key, v)?,
            "report" => self.report = Some(PathBuf::from(v)),
            "history" => self.history = Some(PathBuf::from(v)),
            "kappa" => {
                self.kappa = match v {
                    "none" => None,
                    _ => Some(v.parse()?),
                }
            }
            "spsd-check" => self.spsd_check = flag(key, v)?,
            "pou-check" => self.pou_check = flag(key, v)?,
            "bound-check" => self.bound_check = flag(key, v)?,
            "variants" => self.compare_variants = list(key, v)?,
            "taus" => self.compare_taus = list(key, v)?,
            _ => return Err(Error::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str, origin: &Path) -> Result<()> {
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or_default().trim();
            if line.is_empty() {
                continue;
            }
            let (key, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: origin.to_path_buf(),
                line: idx + 1,
                msg: "expected key = value".into(),
            })?;
            self.set(key.trim(), v).map_err(|e| Error::Parse {
                path: origin.to_path_buf(),
                line: idx + 1,
                msg: e.to_string(),
            })?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        self.apply_text(&text, path)
    }

    pub fn levels(&self) -> usize {
        self.levels
            .unwrap_or(if self.variant.has_coarse() { 2 } else { 1 })
    }

    pub fn hierarchy(&self) -> Result<HierarchyConfig> {
        let base = HierarchyConfig::default();
        let cfg = HierarchyConfig {
            levels: self.levels(),
            subdomains: self.subdomains.clone(),
            coarse: CoarseConfig {
                tau: self.tau,
                nev_max: self.nev_max,
            },
            pou: self.pou,
            schur: self.schur,
            variant: self.variant,
            nested_variant: self.nested_variant,
            inner: SolveConfig {
                rtol: self.inner_rtol,
                restart: self.restart,
                max_iter: self.inner_max_iter,
                ..base.inner
            },
            coarse_direct_max: self.coarse_direct_max,
            seed: self.partition_seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn outer(&self) -> Result<SolveConfig> {
        let method = self
            .method
            .unwrap_or(if self.levels() > 2 { Method::Fgmres } else { Method::Gmres });
        if method == Method::Pcg && !self.variant.is_symmetric() {
            return Err(Error::Config(format!(
                "pcg needs a symmetric preconditioner; {} is not",
                self.variant
            )));
        }
        let cfg = SolveConfig {
            method,
            restart: self.restart,
            rtol: self.rtol,
            max_iter: self.max_iter,
            ..SolveConfig::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load_matrix(&self) -> Result<CsrMatrix> {
        match &self.matrix {
            None => Err(Error::Config("no matrix given (matrix or gen)".into())),
            Some(MatrixSource::File(p)) => mtx::read_matrix_market(p),
            Some(MatrixSource::Generated(g)) => Ok(g.build()),
        }
    }

    fn matrix_name(&self) -> String {
        self.matrix.as_ref().map(|m| m.to_string()).unwrap_or_default()
    }

    pub fn rhs_vector(&self, n: usize) -> Result<Vec<f64>> {
        match &self.rhs {
            RhsMode::Random => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                Ok((0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
            }
            RhsMode::Ones => Ok(vec![1.0; n]),
            RhsMode::File(p) => {
                let b = mtx::read_vector(p)?;
                if b.len() != n {
                    return Err(Error::DimensionMismatch {
                        context: "right-hand side length",
                        expected: n,
                        found: b.len(),
                    });
                }
                Ok(b)
            }
        }
    }
}

/// Square, symmetric to 1e−12 relative, with a positive diagonal.
pub fn precheck(a: &CsrMatrix) -> Result<()> {
    if a.n_rows() != a.n_cols() {
        return Err(Error::InvalidStructure(format!(
            "matrix is {}x{}, not square",
            a.n_rows(),
            a.n_cols()
        )));
    }
    let asymmetry = a.relative_asymmetry();
    if asymmetry > 1e-12 {
        return Err(Error::NotSymmetric {
            context: "system matrix".into(),
            asymmetry,
        });
    }
    if let Some((i, d)) = a.diagonal().into_iter().enumerate().find(|(_, d)| !(*d > 0.0)) {
        return Err(Error::NotPositiveDefinite {
            context: format!("diagonal entry {} is {d:e}", i + 1),
        });
    }
    Ok(())
}

/// Process exit status for a failed run: 2 for bad input or configuration, 1 for
/// numerical failure during the solve.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::InnerSolveDiverged { .. }
        | Error::Indefinite { .. }
        | Error::NonFinite(_)
        | Error::SchurBreakdown { .. }
        | Error::Decomposition { .. } => 1,
        _ => 2,
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Config(format!("serializing report: {e}")))?;
    text.push('\n');
    write_text(path, &text)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// `report.json` → `report.timings.json`
pub fn timings_path(report: &Path) -> PathBuf {
    report.with_extension("timings.json")
}

#[derive(Clone, Debug, Serialize)]
pub struct KappaReport {
    /// Operator whose spectrum was estimated.
    pub operator: String,
    pub mode: KappaMode,
    #[serde(flatten)]
    pub estimate: ConditionEstimate,
}

/// Deterministic part of a solve run.
#[derive(Clone, Debug, Serialize)]
pub struct SolveSummary {
    pub matrix: String,
    pub n: usize,
    pub nnz: usize,
    pub rhs: String,
    pub seed: u64,
    pub hierarchy: HierarchyConfig,
    pub solver: SolveConfig,
    pub level_sizes: Vec<usize>,
    /// `Σ_l n_l / n`
    pub grid_complexity: f64,
    pub levels: Vec<LevelSummary>,
    pub converged: bool,
    pub stop_reason: StopReason,
    pub iterations: usize,
    pub average_inner_iterations: Option<f64>,
    pub max_inner_iterations: Option<usize>,
    pub final_relative_residual: f64,
    pub residual_history: Vec<f64>,
    pub kappa: Option<KappaReport>,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct SolveTimings {
    pub load: f64,
    pub setup: f64,
    pub levels: Vec<LevelTimings>,
    pub solve: f64,
    pub kappa: f64,
}

#[derive(Clone, Debug)]
pub struct SolveOutcome {
    pub summary: SolveSummary,
    pub timings: SolveTimings,
    pub solution: Vec<f64>,
}

fn kappa_estimate(
    a: &Arc<CsrMatrix>,
    m: &crate::schwarz::PreconditionerLevel,
    hierarchy: &HierarchyConfig,
    mode: KappaMode,
    seed: u64,
) -> Result<KappaReport> {
    let cm = match mode {
        KappaMode::Dense => ConditionMode::Dense,
        KappaMode::Lanczos => ConditionMode::Lanczos { steps: LANCZOS_STEPS, seed },
    };
    if m.variant().is_symmetric() && !m.is_inexact() {
        return Ok(KappaReport {
            operator: m.variant().to_string(),
            mode,
            estimate: estimate_condition(a.as_ref(), m, cm)?,
        });
    }
    // the nonsymmetric or inexact operator has no real spectrum bound; use its additive twin
    let twin = HierarchyConfig {
        levels: if m.variant().has_coarse() { 2 } else { 1 },
        subdomains: vec![hierarchy.subdomains[0]],
        variant: if m.variant().has_coarse() { Variant::TWO_ADDITIVE } else { Variant::ASM },
        ..hierarchy.clone()
    };
    let p = build_hierarchy(a.clone(), &twin)?;
    Ok(KappaReport {
        operator: twin.variant.to_string(),
        mode,
        estimate: estimate_condition(a.as_ref(), &p, cm)?,
    })
}

/// Builds the hierarchy, solves, and writes the report (plus a timings sidecar and the
/// residual history when configured).
pub fn run_solve(cfg: &RunConfig) -> Result<SolveOutcome> {
    let hierarchy = cfg.hierarchy()?;
    let outer = cfg.outer()?;
    let mut timings = SolveTimings::default();
    let t = Instant::now();
    let a = Arc::new(cfg.load_matrix()?);
    precheck(&a)?;
    let b = cfg.rhs_vector(a.n_rows())?;
    timings.load = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let m = build_hierarchy(a.clone(), &hierarchy)?;
    timings.setup = t.elapsed().as_secs_f64();
    timings.levels = m.timings();

    let t = Instant::now();
    let (x, report) = krylov::solve(a.as_ref(), &m, &b, &outer)?;
    timings.solve = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let kappa = cfg
        .kappa
        .map(|mode| kappa_estimate(&a, &m, &hierarchy, mode, cfg.seed))
        .transpose()?;
    timings.kappa = t.elapsed().as_secs_f64();

    let level_sizes = m.level_sizes();
    let summary = SolveSummary {
        matrix: cfg.matrix_name(),
        n: a.n_rows(),
        nnz: a.nnz(),
        rhs: cfg.rhs.to_string(),
        seed: cfg.seed,
        hierarchy,
        solver: outer,
        grid_complexity: level_sizes.iter().sum::<usize>() as f64 / a.n_rows() as f64,
        level_sizes,
        levels: m.summaries(),
        converged: report.converged,
        stop_reason: report.stop_reason,
        iterations: report.iterations,
        average_inner_iterations: report.average_inner_iterations(),
        max_inner_iterations: report.inner_iterations.iter().copied().max(),
        final_relative_residual: report.final_relative_residual,
        residual_history: report.residual_history.clone(),
        kappa,
    };
    if let Some(path) = &cfg.report {
        write_json(path, &summary)?;
        write_json(&timings_path(path), &timings)?;
    }
    if let Some(path) = &cfg.history {
        write_text(path, &report.history_csv())?;
    }
    Ok(SolveOutcome {
        summary,
        timings,
        solution: x,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub measured: f64,
    pub threshold: f64,
    pub detail: String,
}

impl CheckResult {
    fn at_least(name: &str, measured: f64, threshold: f64, detail: String) -> Self {
        Self {
            name: name.into(),
            passed: measured >= threshold,
            measured,
            threshold,
            detail,
        }
    }

    fn at_most(name: &str, measured: f64, threshold: f64, detail: String) -> Self {
        Self {
            name: name.into(),
            passed: measured <= threshold,
            measured,
            threshold,
            detail,
        }
    }

    fn failed(name: &str, detail: String) -> Self {
        Self {
            name: name.into(),
            passed: false,
            measured: f64::NAN,
            threshold: f64::NAN,
            detail,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct VerifyReport {
    pub matrix: String,
    pub n: usize,
    pub n_subdomains: usize,
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    /// One `PASS`/`FAIL` line per check.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            let _ = writeln!(
                out,
                "{} {}: measured {:.3e}, threshold {:.3e}{}",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.measured,
                c.threshold,
                if c.detail.is_empty() { String::new() } else { format!(" ({})", c.detail) }
            );
        }
        out
    }
}

fn layout_for(a: &CsrMatrix, parts: usize, seed: u64) -> Result<SubdomainLayout> {
    let graph = AdjacencyGraph::from_matrix(a)?;
    let interiors = partition_graph(&graph, parts.min(a.n_rows()), seed)?;
    build_layout(&graph, interiors)
}

/// Runs the invariant suite on the first level of the configured problem. Failed checks
/// are report entries, not errors; only unreadable input is an error.
pub fn run_verify(cfg: &RunConfig) -> Result<VerifyReport> {
    let hierarchy = cfg.hierarchy()?;
    let a = Arc::new(cfg.load_matrix()?);
    let n = a.n_rows();
    let parts = hierarchy.subdomains[0].min(n);
    let mut report = VerifyReport {
        matrix: cfg.matrix_name(),
        n,
        n_subdomains: parts,
        checks: Vec::new(),
    };
    let finish = |report: VerifyReport| -> Result<VerifyReport> {
        if let Some(path) = &cfg.report {
            write_json(path, &report)?;
        }
        Ok(report)
    };
    match precheck(&a) {
        Ok(()) => report.checks.push(CheckResult::at_least("spd-precheck", 1.0, 1.0, String::new())),
        Err(e) => {
            report.checks.push(CheckResult::failed("spd-precheck", e.to_string()));
            return finish(report);
        }
    }
    let layout = layout_for(&a, parts, hierarchy.seed)?;

    if cfg.pou_check {
        for scheme in [PouScheme::Boolean, PouScheme::Multiplicity] {
            let pou = build_partition_of_unity(&layout, scheme);
            let threshold = match scheme {
                PouScheme::Boolean => 0.0,
                PouScheme::Multiplicity => 4.0 * f64::EPSILON * parts as f64,
            };
            let name = format!("pou-identity-{}", serde_json::to_value(scheme).unwrap().as_str().unwrap_or(""));
            report
                .checks
                .push(CheckResult::at_most(&name, pou.identity_defect(&layout), threshold, String::new()));
        }
    }

    let splittings: Vec<LocalSplitting> = match build_splittings(&a, &layout, hierarchy.schur) {
        Ok(s) => s.into_iter().map(|(s, _)| s).collect(),
        Err(e) => {
            report.checks.push(CheckResult::failed("splittings", e.to_string()));
            return finish(report);
        }
    };

    if cfg.spsd_check {
        let margins = splitting_margins(&a, &layout, &splittings, RAYLEIGH_PROBES, cfg.seed)?;
        let worst_gap = margins.iter().map(|m| m.lower_gap).fold(f64::INFINITY, f64::min);
        let worst_local = margins.iter().map(|m| m.local_min).fold(f64::INFINITY, f64::min);
        let how = if n <= DENSE_CHECK_LIMIT {
            "dense Schur complement".to_string()
        } else {
            format!("{RAYLEIGH_PROBES} Rayleigh quotients")
        };
        report.checks.push(CheckResult::at_least(
            "splitting-below-a",
            worst_gap,
            -SPSD_TOLERANCE,
            format!("min eigmin(A - A~_i)/|A|, {how}"),
        ));
        report.checks.push(CheckResult::at_least(
            "splitting-psd",
            worst_local,
            -LOCAL_TOLERANCE,
            "min eigmin(A~_ii)/|A~_ii|".into(),
        ));
        let sum = sum_bound(&a, &layout, &splittings, PROBES, cfg.seed);
        report.checks.push(CheckResult::at_least(
            "sum-bound",
            sum.margin(),
            -SUM_TOLERANCE,
            format!("ratio range [{:.4}, {:.4}] against N = {parts}", sum.min_ratio, sum.max_ratio),
        ));
    }

    // τ sweep on the same splittings
    let pou = build_partition_of_unity(&layout, hierarchy.pou);
    let mut sizes = Vec::new();
    for tau in [2.0, 10.0, 100.0] {
        let coarse = CoarseConfig { tau, ..hierarchy.coarse };
        sizes.push(build_coarse_space(&a, &layout, &pou, &splittings, &coarse)?.n_coarse());
    }
    let monotone = sizes.windows(2).all(|w| w[0] <= w[1]);
    report.checks.push(CheckResult {
        name: "tau-monotone".into(),
        passed: monotone,
        measured: f64::from(u8::from(monotone)),
        threshold: 1.0,
        detail: format!("n_C for tau = 2, 10, 100: {sizes:?}"),
    });

    if cfg.bound_check && n <= DENSE_CHECK_LIMIT {
        let b = bound_check(a.clone(), &hierarchy)?;
        report.checks.push(CheckResult::at_most(
            "kappa-bound",
            b.kappa_two_level,
            b.bound,
            format!("k_c = {}, n_C = {}", b.k_c, b.n_coarse),
        ));
        report.checks.push(CheckResult::at_most(
            "kappa-improves",
            b.kappa_two_level,
            b.kappa_one_level,
            "two-level additive against one-level ASM".into(),
        ));
    }
    finish(report)
}

#[derive(Clone, Debug, Serialize)]
pub struct CompareRow {
    pub variant: String,
    pub tau: Option<f64>,
    pub n_coarse: usize,
    /// `None` when not converged within the limit.
    pub iterations: Option<usize>,
}

#[derive(Clone, Debug, Serialize)]
pub struct CompareTable {
    pub matrix: String,
    pub limit: usize,
    pub rows: Vec<CompareRow>,
}

impl CompareTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("variant,tau,n_coarse,iterations\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                r.variant,
                r.tau.map(|t| t.to_string()).unwrap_or_default(),
                r.n_coarse,
                r.iterations.map(|k| k.to_string()).unwrap_or_default()
            );
        }
        out
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::from("| variant | tau | n_C | iterations |\n|---|---|---|---|\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} |",
                r.variant,
                r.tau.map(|t| t.to_string()).unwrap_or_default(),
                r.n_coarse,
                r.iterations.map(|k| k.to_string()).unwrap_or_default()
            );
        }
        out
    }
}

/// Iteration counts per variant (and per τ for two-level variants); blank past
/// [`COMPARE_LIMIT`] iterations.
pub fn run_compare(cfg: &RunConfig) -> Result<CompareTable> {
    let a = Arc::new(cfg.load_matrix()?);
    precheck(&a)?;
    let b = cfg.rhs_vector(a.n_rows())?;
    let taus = if cfg.compare_taus.is_empty() { vec![cfg.tau] } else { cfg.compare_taus.clone() };
    let mut rows = Vec::new();
    for &variant in &cfg.compare_variants {
        let sweep: Vec<Option<f64>> = if variant.has_coarse() {
            taus.iter().copied().map(Some).collect()
        } else {
            vec![None]
        };
        for tau in sweep {
            let mut run = cfg.clone();
            run.variant = variant;
            run.levels = Some(if variant.has_coarse() { cfg.levels().max(2) } else { 1 });
            run.tau = tau.unwrap_or(cfg.tau);
            run.max_iter = COMPARE_LIMIT;
            if run.method == Some(Method::Pcg) && !variant.is_symmetric() {
                run.method = None;
            }
            let m = build_hierarchy(a.clone(), &run.hierarchy()?)?;
            let (_, report) = krylov::solve(a.as_ref(), &m, &b, &run.outer()?)?;
            rows.push(CompareRow {
                variant: variant.to_string(),
                tau,
                n_coarse: m.n_coarse(),
                iterations: report.converged.then_some(report.iterations),
            });
        }
    }
    let table = CompareTable {
        matrix: cfg.matrix_name(),
        limit: COMPARE_LIMIT,
        rows,
    };
    if let Some(path) = &cfg.report {
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => write_json(path, &table)?,
            Some("md") => write_text(path, &table.to_markdown())?,
            _ => write_text(path, &table.to_csv())?,
        }
    }
    Ok(table)
}

#[derive(Clone, Debug, Serialize)]
pub struct SpectrumRow {
    pub subdomain: usize,
    pub index: usize,
    pub lambda: f64,
    pub selected: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct SpectrumReport {
    pub matrix: String,
    pub tau: f64,
    pub rows: Vec<SpectrumRow>,
    pub kappa: Option<KappaReport>,
}

impl SpectrumReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("subdomain,index,lambda,selected\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{:e},{}", r.subdomain, r.index, r.lambda, u8::from(r.selected));
        }
        out
    }
}

/// Local eigenvalues of every subdomain pencil, and optionally the condition number of
/// the preconditioned operator.
pub fn run_spectrum(cfg: &RunConfig) -> Result<SpectrumReport> {
    let hierarchy = cfg.hierarchy()?;
    let a = Arc::new(cfg.load_matrix()?);
    precheck(&a)?;
    let layout = layout_for(&a, hierarchy.subdomains[0], hierarchy.seed)?;
    let pou = build_partition_of_unity(&layout, hierarchy.pou);
    let splittings = build_splittings(&a, &layout, hierarchy.schur)?;
    let mut rows = Vec::new();
    for (i, (split, _)) in splittings.iter().enumerate() {
        let omega = layout.subdomain(i).overlapping();
        let a_ii = a.extract_dense(omega, omega)?;
        let basis = solve_gevp(i, &a_ii, pou.weights(i), split, &hierarchy.coarse)?;
        let p = basis.n_selected();
        rows.extend(basis.eigenvalues.iter().enumerate().map(|(k, &lambda)| SpectrumRow {
            subdomain: i,
            index: k,
            lambda,
            selected: k < p,
        }));
    }
    let kappa = match cfg.kappa {
        Some(mode) => {
            let m = build_hierarchy(a.clone(), &hierarchy)?;
            Some(kappa_estimate(&a, &m, &hierarchy, mode, cfg.seed)?)
        }
        None => None,
    };
    let report = SpectrumReport {
        matrix: cfg.matrix_name(),
        tau: hierarchy.coarse.tau,
        rows,
        kappa,
    };
    if let Some(path) = &cfg.report {
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => write_json(path, &report)?,
            _ => write_text(path, &report.to_csv())?,
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(pairs: &[(&str, &str)]) -> RunConfig {
        let mut cfg = RunConfig::default();
        for (k, v) in pairs {
            cfg.set(k, v).unwrap();
        }
        cfg
    }

    #[test]
    fn file_then_overrides() {
        let mut cfg = RunConfig::default();
        cfg.apply_text(
            "# run\ngen = laplace2d:8x8\nsubdomains = 4\ntau=2 # inline\nvariant = two-additive\n",
            Path::new("run.cfg"),
        )
        .unwrap();
        cfg.set("tau", "100").unwrap();
        assert_eq!(cfg.tau, 100.0);
        assert_eq!(cfg.subdomains, vec![4]);
        assert_eq!(cfg.variant, Variant::TWO_ADDITIVE);
        assert_eq!(cfg.levels(), 2);
        assert!(matches!(
            RunConfig::default().apply_text("bogus = 1\n", Path::new("x")),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(RunConfig::default().set("tau", "ten").is_err());
    }

    #[test]
    fn every_key_is_accepted() {
        let samples = [
            ("matrix", "a.mtx"),
            ("gen", "laplace1d:8"),
            ("rhs", "ones"),
            ("seed", "1"),
            ("partition-seed", "2"),
            ("levels", "2"),
            ("subdomains", "4,2"),
            ("tau", "5"),
            ("nev-max", "all"),
            ("pou", "multiplicity"),
            ("schur", "orthogonal"),
            ("variant", "asm"),
            ("nested-variant", "two-deflated"),
            ("method", "pcg"),
            ("rtol", "1e-6"),
            ("inner-rtol", "1e-3"),
            ("restart", "10"),
            ("max-iter", "50"),
            ("inner-max-iter", "20"),
            ("coarse-direct-max", "100"),
            ("report", "r.json"),
            ("history", "h.csv"),
            ("kappa", "dense"),
            ("spsd-check", "false"),
            ("pou-check", "no"),
            ("bound-check", "0"),
            ("variants", "ras,two-deflated"),
            ("taus", "2,10"),
        ];
        assert_eq!(samples.len(), CONFIG_KEYS.len());
        let mut cfg = RunConfig::default();
        for ((k, v), key) in samples.iter().zip(CONFIG_KEYS) {
            assert_eq!(k, key);
            cfg.set(k, v).unwrap();
        }
    }

    #[test]
    fn list_length_must_match_levels() {
        let cfg = config(&[("levels", "3"), ("subdomains", "4,2,1")]);
        assert!(cfg.hierarchy().is_err());
        let cfg = config(&[("levels", "3"), ("subdomains", "4,2")]);
        assert!(cfg.hierarchy().is_ok());
        assert_eq!(cfg.outer().unwrap().method, Method::Fgmres);
    }

    #[test]
    fn pcg_rejects_deflated() {
        let cfg = config(&[("method", "pcg")]);
        assert!(cfg.outer().is_err());
        let cfg = config(&[("method", "pcg"), ("variant", "two-additive")]);
        assert!(cfg.outer().is_ok());
    }

    #[test]
    fn identity_solves_in_one_iteration() {
        let cfg = config(&[("gen", "identity:50"), ("tau", "0.5"), ("subdomains", "4")]);
        let out = run_solve(&cfg).unwrap();
        assert!(out.summary.converged);
        assert_eq!(out.summary.iterations, 1);
        assert_eq!(out.summary.level_sizes, vec![50]);
    }

    #[test]
    fn tridiagonal_two_level_converges() {
        let cfg = config(&[("gen", "laplace1d:1024"), ("subdomains", "16")]);
        let out = run_solve(&cfg).unwrap();
        assert!(out.summary.converged && out.summary.iterations <= 100);
        assert!(out.summary.final_relative_residual <= 1e-8);
    }

    #[test]
    fn negative_diagonal_fails_precheck() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.mtx");
        std::fs::write(
            &path,
            "%%MatrixMarket matrix coordinate real symmetric\n3 3 4\n1 1 2\n2 2 -1\n3 3 2\n2 1 -0.5\n",
        )
        .unwrap();
        let cfg = config(&[("matrix", path.to_str().unwrap()), ("subdomains", "2")]);
        let v = run_verify(&cfg).unwrap();
        assert!(!v.passed());
        assert_eq!(v.checks[0].name, "spd-precheck");
        let err = run_solve(&cfg).unwrap_err();
        assert_eq!(exit_code(&err), 2);
    }

    #[test]
    fn verify_passes_on_small_laplacian() {
        let cfg = config(&[("gen", "laplace2d:32x32"), ("subdomains", "8")]);
        let v = run_verify(&cfg).unwrap();
        assert!(v.passed(), "{}", v.to_text());
        assert!(v.checks.len() >= 8);
    }

    #[test]
    fn compare_rows_and_rendering() {
        let cfg = config(&[
            ("gen", "laplace2d:16x16"),
            ("subdomains", "4"),
            ("variants", "ras,two-deflated"),
            ("taus", "2,100"),
        ]);
        let t = run_compare(&cfg).unwrap();
        assert_eq!(t.rows.len(), 3);
        assert!(t.rows[0].tau.is_none());
        assert!(t.rows[1].n_coarse <= t.rows[2].n_coarse);
        let again = run_compare(&cfg).unwrap();
        assert_eq!(t.to_csv(), again.to_csv());
        assert_eq!(t.to_markdown().lines().count(), 5);
        let blank = CompareTable {
            matrix: String::new(),
            limit: 100,
            rows: vec![CompareRow { variant: "ras".into(), tau: None, n_coarse: 0, iterations: None }],
        };
        assert_eq!(blank.to_csv().lines().nth(1), Some("ras,,0,"));
    }

    #[test]
    fn spectrum_marks_selection() {
        let cfg = config(&[("gen", "laplace2d:12x12"), ("subdomains", "4"), ("tau", "10")]);
        let s = run_spectrum(&cfg).unwrap();
        for r in &s.rows {
            if r.selected {
                assert!(r.lambda > 0.1);
            }
        }
        assert!(s.to_csv().starts_with("subdomain,index,lambda,selected\n"));
    }
}
