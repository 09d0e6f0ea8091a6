use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use aschwarz::driver::{self, RunConfig};
use aschwarz::Error;

/// Algebraic multilevel overlapping Schwarz preconditioned solves of sparse SPD systems.
///
/// Settings come from defaults, then `--config`, then the flags below. Exit status: 0
/// converged or all checks passed, 1 not converged, 2 input error, 3 failed check.
#[derive(Parser, Debug)]
#[command(name = "aschwarz", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build the preconditioner and solve with a Krylov method
    Solve(Settings),
    /// Run the invariant checks on the configured problem
    Verify(Settings),
    /// Tabulate iteration counts for several variants and thresholds
    Compare(Settings),
    /// Print local generalized eigenvalues (and optionally the condition number)
    Spectrum(Settings),
}

#[derive(Args, Debug)]
struct Settings {
    /// Flat `key = value` file; keys are the long flag names
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Matrix Market file
    #[arg(long, value_name = "PATH")]
    matrix: Option<String>,
    /// Generated problem: laplace1d:<n>, laplace2d:<nx>x<ny>[:jump=<v>], laplace3d:<nx>x<ny>x<nz>,
    /// identity:<n>, diag:<n>
    #[arg(long, value_name = "SPEC")]
    gen: Option<String>,
    /// random, ones or file:<path>
    #[arg(long)]
    rhs: Option<String>,
    /// Seed of the random right-hand side (default 42)
    #[arg(long)]
    seed: Option<String>,
    /// Seed of the graph partitioner (default 0)
    #[arg(long)]
    partition_seed: Option<String>,
    /// Total levels (default 1 for ras/asm, 2 otherwise)
    #[arg(long)]
    levels: Option<String>,
    /// Subdomains per partitioned level, comma separated (default 16)
    #[arg(long, value_name = "N[,N...]")]
    subdomains: Option<String>,
    /// Eigenvalue threshold: keep λ > 1/τ (default 10)
    #[arg(long)]
    tau: Option<String>,
    /// Cap on eigenvectors per subdomain, or `all` (default 20)
    #[arg(long)]
    nev_max: Option<String>,
    /// Partition of unity: boolean or multiplicity
    #[arg(long)]
    pou: Option<String>,
    /// Halo elimination: cholesky or orthogonal
    #[arg(long)]
    schur: Option<String>,
    /// ras, asm, two-additive or two-deflated
    #[arg(long)]
    variant: Option<String>,
    /// Variant preconditioning nested coarse solves (default two-deflated)
    #[arg(long)]
    nested_variant: Option<String>,
    /// Outer method: pcg, gmres or fgmres
    #[arg(long)]
    method: Option<String>,
    /// Outer relative residual tolerance (default 1e-8)
    #[arg(long)]
    rtol: Option<String>,
    /// Nested coarse solve tolerance (default 1e-4)
    #[arg(long)]
    inner_rtol: Option<String>,
    /// GMRES restart length (default 30)
    #[arg(long)]
    restart: Option<String>,
    /// Outer iteration budget (default 1000)
    #[arg(long)]
    max_iter: Option<String>,
    /// Nested iteration budget (default 200)
    #[arg(long)]
    inner_max_iter: Option<String>,
    /// Factor coarse operators up to this order directly, or `none`
    #[arg(long)]
    coarse_direct_max: Option<String>,
    /// Report file (JSON for solve and verify; CSV, Markdown or JSON by extension otherwise)
    #[arg(long, value_name = "PATH")]
    report: Option<String>,
    /// Residual history CSV (solve)
    #[arg(long, value_name = "PATH")]
    history: Option<String>,
    /// Condition number estimate: dense, lanczos or none
    #[arg(long)]
    kappa: Option<String>,
    /// Check 0 ≤ Ã_i ≤ A and the sum bound (verify)
    #[arg(long)]
    spsd_check: Option<String>,
    /// Check the partition of unity (verify)
    #[arg(long)]
    pou_check: Option<String>,
    /// Check the condition number bound (verify)
    #[arg(long)]
    bound_check: Option<String>,
    /// Variants to compare, comma separated
    #[arg(long)]
    variants: Option<String>,
    /// Thresholds to compare, comma separated
    #[arg(long)]
    taus: Option<String>,
}

impl Settings {
    fn run_config(&self) -> Result<RunConfig, Error> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &self.config {
            cfg.apply_file(path)?;
        }
        let flags = [
            ("matrix", &self.matrix),
            ("gen", &self.gen),
            ("rhs", &self.rhs),
            ("seed", &self.seed),
            ("partition-seed", &self.partition_seed),
            ("levels", &self.levels),
            ("subdomains", &self.subdomains),
            ("tau", &self.tau),
            ("nev-max", &self.nev_max),
            ("pou", &self.pou),
            ("schur", &self.schur),
            ("variant", &self.variant),
            ("nested-variant", &self.nested_variant),
            ("method", &self.method),
            ("rtol", &self.rtol),
            ("inner-rtol", &self.inner_rtol),
            ("restart", &self.restart),
            ("max-iter", &self.max_iter),
            ("inner-max-iter", &self.inner_max_iter),
            ("coarse-direct-max", &self.coarse_direct_max),
            ("report", &self.report),
            ("history", &self.history),
            ("kappa", &self.kappa),
            ("spsd-check", &self.spsd_check),
            ("pou-check", &self.pou_check),
            ("bound-check", &self.bound_check),
            ("variants", &self.variants),
            ("taus", &self.taus),
        ];
        for (key, v) in flags {
            if let Some(v) = v {
                cfg.set(key, v)?;
            }
        }
        Ok(cfg)
    }
}

fn run(command: &Command) -> Result<u8, Error> {
    match command {
        Command::Solve(s) => {
            let cfg = s.run_config()?;
            let out = driver::run_solve(&cfg)?;
            let r = &out.summary;
            if cfg.report.is_none() {
                let json = serde_json::to_string_pretty(r).expect("report serializes");
                println!("{json}");
            } else {
                println!(
                    "{} after {} iterations, relative residual {:.3e}, levels {:?}",
                    if r.converged { "converged" } else { "not converged" },
                    r.iterations,
                    r.final_relative_residual,
                    r.level_sizes
                );
            }
            Ok(if r.converged { 0 } else { 1 })
        }
        Command::Verify(s) => {
            let report = driver::run_verify(&s.run_config()?)?;
            print!("{}", report.to_text());
            Ok(if report.passed() { 0 } else { 3 })
        }
        Command::Compare(s) => {
            let table = driver::run_compare(&s.run_config()?)?;
            print!("{}", table.to_markdown());
            Ok(0)
        }
        Command::Spectrum(s) => {
            let cfg = s.run_config()?;
            let report = driver::run_spectrum(&cfg)?;
            if cfg.report.is_none() {
                print!("{}", report.to_csv());
            }
            if let Some(k) = &report.kappa {
                eprintln!(
                    "kappa({}) = {:.6e} [{:.6e}, {:.6e}]",
                    k.operator, k.estimate.kappa, k.estimate.lambda_min, k.estimate.lambda_max
                );
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(driver::exit_code(&e) as u8)
        }
    }
}
