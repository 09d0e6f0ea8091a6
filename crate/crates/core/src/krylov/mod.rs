//! Krylov solvers (PCG, right-preconditioned GMRES(m), flexible GMRES(m)) and condition
//! number estimation for preconditioned operators.

mod condition;
mod gmres;
mod pcg;

pub use condition::{estimate_condition, ConditionEstimate, ConditionMode};
pub use gmres::{fgmres, gmres};
pub use pcg::pcg;

use std::fmt::Write as _;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::sparse::{CsrMatrix, DenseMatrix};

/// A square linear map `y = A x`.
pub trait LinearOperator: Sync {
    fn dim(&self) -> usize;

    fn apply(&self, x: &[f64], y: &mut [f64]) -> Result<()>;

    /// Inner Krylov iteration counts recorded since the last call (nested solves only).
    fn take_inner_iterations(&self) -> Vec<usize> {
        Vec::new()
    }
}

impl LinearOperator for CsrMatrix {
    fn dim(&self) -> usize {
        self.n_rows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        if x.len() != self.n_cols() || y.len() != self.n_rows() {
            return Err(Error::DimensionMismatch {
                context: "sparse operator apply",
                expected: self.n_cols(),
                found: x.len(),
            });
        }
        self.spmv_into(x, y);
        Ok(())
    }
}

impl LinearOperator for DenseMatrix {
    fn dim(&self) -> usize {
        self.n_rows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        let r = self.matvec(x)?;
        y.copy_from_slice(&r);
        Ok(())
    }
}

impl<T: LinearOperator + ?Sized> LinearOperator for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        (**self).apply(x, y)
    }

    fn take_inner_iterations(&self) -> Vec<usize> {
        (**self).take_inner_iterations()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Identity(pub usize);

impl LinearOperator for Identity {
    fn dim(&self) -> usize {
        self.0
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        y.copy_from_slice(x);
        Ok(())
    }
}

/// Wraps a closure as an operator.
pub struct FnOperator<F> {
    n: usize,
    f: F,
}

impl<F: Fn(&[f64], &mut [f64]) + Sync> FnOperator<F> {
    pub fn new(n: usize, f: F) -> Self {
        Self { n, f }
    }
}

impl<F: Fn(&[f64], &mut [f64]) + Sync> LinearOperator for FnOperator<F> {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        (self.f)(x, y);
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Pcg,
    Gmres,
    Fgmres,
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pcg" => Ok(Method::Pcg),
            "gmres" => Ok(Method::Gmres),
            "fgmres" => Ok(Method::Fgmres),
            _ => Err(Error::Config(format!("unknown method '{s}' (pcg, gmres, fgmres)"))),
        }
    }
}

/// Which residual the PCG stopping test measures.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ResidualNorm {
    /// `‖b − Ax‖ / ‖b‖`
    #[default]
    True,
    /// `√(rᵀMr) / √(bᵀMb)`
    Preconditioned,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SolveConfig {
    pub method: Method,
    pub restart: usize,
    pub rtol: f64,
    pub max_iter: usize,
    pub residual: ResidualNorm,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            method: Method::Gmres,
            restart: 30,
            rtol: 1e-8,
            max_iter: 1000,
            residual: ResidualNorm::True,
        }
    }
}

impl SolveConfig {
    pub fn validate(&self) -> Result<()> {
        if self.restart == 0 {
            return Err(Error::Config("restart must be at least 1".into()));
        }
        if !(self.rtol > 0.0 && self.rtol < 1.0) {
            return Err(Error::Config(format!("rtol must lie in (0, 1), got {}", self.rtol)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    MaxIterations,
    /// A whole restart cycle made no progress.
    Stagnation,
}

#[derive(Clone, Debug, Serialize)]
pub struct SolveReport {
    pub method: Method,
    pub converged: bool,
    pub stop_reason: StopReason,
    pub iterations: usize,
    /// Relative residual before the first iteration and after each one.
    pub residual_history: Vec<f64>,
    /// True relative residual `‖b − Ax‖ / ‖b‖` of the returned iterate.
    pub final_relative_residual: f64,
    /// Iterations of each nested coarse solve, in call order.
    pub inner_iterations: Vec<usize>,
}

impl SolveReport {
    pub fn average_inner_iterations(&self) -> Option<f64> {
        if self.inner_iterations.is_empty() {
            None
        } else {
            Some(self.inner_iterations.iter().sum::<usize>() as f64 / self.inner_iterations.len() as f64)
        }
    }

    /// `iteration,relative_residual` lines.
    pub fn history_csv(&self) -> String {
        let mut out = String::from("iteration,relative_residual\n");
        for (k, r) in self.residual_history.iter().enumerate() {
            let _ = writeln!(out, "{k},{r:e}");
        }
        out
    }
}

/// Dispatches on `config.method`.
pub fn solve(
    a: &dyn LinearOperator,
    m: &dyn LinearOperator,
    b: &[f64],
    config: &SolveConfig,
) -> Result<(Vec<f64>, SolveReport)> {
    match config.method {
        Method::Pcg => pcg(a, m, b, config),
        Method::Gmres => gmres(a, m, b, config),
        Method::Fgmres => fgmres(a, m, b, config),
    }
}

fn check_dims(a: &dyn LinearOperator, m: &dyn LinearOperator, b: &[f64]) -> Result<()> {
    if a.dim() != b.len() || m.dim() != b.len() {
        return Err(Error::DimensionMismatch {
            context: "solver operands",
            expected: a.dim(),
            found: if m.dim() != a.dim() { m.dim() } else { b.len() },
        });
    }
    Ok(())
}

fn true_residual(a: &dyn LinearOperator, b: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    let mut r = vec![0.0; b.len()];
    a.apply(x, &mut r)?;
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    Ok(r)
}

fn check_finite(v: &[f64], what: &'static str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}
