//! Built-in SPD test problems, so nothing needs to be downloaded to exercise the solver.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// `tridiag(-1, 2, -1)` of order `n`.
pub fn laplace_1d(n: usize) -> CsrMatrix {
    let mut t = Vec::with_capacity(3 * n);
    for i in 0..n {
        if i > 0 {
            t.push((i, i - 1, -1.0));
        }
        t.push((i, i, 2.0));
        if i + 1 < n {
            t.push((i, i + 1, -1.0));
        }
    }
    CsrMatrix::from_triplets(n, n, &t).expect("valid stencil")
}

/// 5-point Laplacian on an `nx × ny` grid with Dirichlet boundary; index `i + nx·j`.
pub fn laplace_2d(nx: usize, ny: usize) -> CsrMatrix {
    diffusion_2d(nx, ny, |_, _| 1.0)
}

/// 7-point Laplacian on an `nx × ny × nz` grid with Dirichlet boundary.
pub fn laplace_3d(nx: usize, ny: usize, nz: usize) -> CsrMatrix {
    let n = nx * ny * nz;
    let id = |i: usize, j: usize, k: usize| i + nx * (j + ny * k);
    let mut t = Vec::with_capacity(7 * n);
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let p = id(i, j, k);
                t.push((p, p, 6.0));
                let mut link = |q: usize| t.push((p, q, -1.0));
                if i > 0 {
                    link(id(i - 1, j, k));
                }
                if i + 1 < nx {
                    link(id(i + 1, j, k));
                }
                if j > 0 {
                    link(id(i, j - 1, k));
                }
                if j + 1 < ny {
                    link(id(i, j + 1, k));
                }
                if k > 0 {
                    link(id(i, j, k - 1));
                }
                if k + 1 < nz {
                    link(id(i, j, k + 1));
                }
            }
        }
    }
    CsrMatrix::from_triplets(n, n, &t).expect("valid stencil")
}

/// Cell-centred finite-volume discretization of `-div(κ grad u)` on an `nx × ny` grid,
/// harmonic face averaging, homogeneous Dirichlet boundary. With `κ ≡ 1` this is exactly
/// [`laplace_2d`].
pub fn diffusion_2d(nx: usize, ny: usize, kappa: impl Fn(usize, usize) -> f64) -> CsrMatrix {
    let n = nx * ny;
    let id = |i: usize, j: usize| i + nx * j;
    let face = |a: f64, b: f64| 2.0 * a * b / (a + b);
    let mut t = Vec::with_capacity(5 * n);
    for j in 0..ny {
        for i in 0..nx {
            let p = id(i, j);
            let kp = kappa(i, j);
            let mut diag = 0.0;
            let mut neighbors = Vec::with_capacity(4);
            if i > 0 {
                neighbors.push(id(i - 1, j));
            }
            if i + 1 < nx {
                neighbors.push(id(i + 1, j));
            }
            if j > 0 {
                neighbors.push(id(i, j - 1));
            }
            if j + 1 < ny {
                neighbors.push(id(i, j + 1));
            }
            // Faces on the Dirichlet boundary contribute κ of the cell itself.
            diag += (4 - neighbors.len()) as f64 * kp;
            for q in neighbors {
                let kf = face(kp, kappa(q % nx, q / nx));
                diag += kf;
                t.push((p, q, -kf));
            }
            t.push((p, p, diag));
        }
    }
    CsrMatrix::from_triplets(n, n, &t).expect("valid stencil")
}

/// Coefficient field with floating high-conductivity channels: horizontal strips with
/// `κ = jump`, kept away from the boundary, that cut across subdomain interfaces.
pub fn channel_coefficient(nx: usize, ny: usize, jump: f64) -> impl Fn(usize, usize) -> f64 {
    let period = (ny / 8).max(4);
    let width = (period / 8).max(1);
    let x0 = nx / 8;
    let x1 = nx - nx / 8;
    move |i, j| {
        let in_strip = (j % period) >= period / 2 && (j % period) < period / 2 + width;
        if in_strip && i >= x0 && i < x1 && j > 0 && j + 1 < ny {
            jump
        } else {
            1.0
        }
    }
}

pub fn heterogeneous_2d(nx: usize, ny: usize, jump: f64) -> CsrMatrix {
    diffusion_2d(nx, ny, channel_coefficient(nx, ny, jump))
}

/// A named generated problem, parsed from strings such as `laplace2d:64x64:jump=1e6`.
#[derive(Clone, Debug, PartialEq)]
pub enum ProblemSpec {
    Identity(usize),
    /// `diag(1, 2, ..., n)`
    Diagonal(usize),
    Laplace1d(usize),
    Laplace2d { nx: usize, ny: usize, jump: Option<f64> },
    Laplace3d { nx: usize, ny: usize, nz: usize },
}

impl ProblemSpec {
    pub fn build(&self) -> CsrMatrix {
        match *self {
            ProblemSpec::Identity(n) => CsrMatrix::identity(n),
            ProblemSpec::Diagonal(n) => {
                CsrMatrix::from_diagonal(&(1..=n).map(|i| i as f64).collect::<Vec<_>>())
            }
            ProblemSpec::Laplace1d(n) => laplace_1d(n),
            ProblemSpec::Laplace2d { nx, ny, jump: None } => laplace_2d(nx, ny),
            ProblemSpec::Laplace2d {
                nx,
                ny,
                jump: Some(j),
            } => heterogeneous_2d(nx, ny, j),
            ProblemSpec::Laplace3d { nx, ny, nz } => laplace_3d(nx, ny, nz),
        }
    }
}

impl fmt::Display for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProblemSpec::Identity(n) => write!(f, "identity:{n}"),
            ProblemSpec::Diagonal(n) => write!(f, "diag:{n}"),
            ProblemSpec::Laplace1d(n) => write!(f, "laplace1d:{n}"),
            ProblemSpec::Laplace2d { nx, ny, jump: None } => write!(f, "laplace2d:{nx}x{ny}"),
            ProblemSpec::Laplace2d {
                nx,
                ny,
                jump: Some(j),
            } => write!(f, "laplace2d:{nx}x{ny}:jump={j:e}"),
            ProblemSpec::Laplace3d { nx, ny, nz } => write!(f, "laplace3d:{nx}x{ny}x{nz}"),
        }
    }
}

impl FromStr for ProblemSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |why: &str| Error::Config(format!("generator '{s}': {why}"));
        let mut parts = s.split(':');
        let kind = parts.next().unwrap_or_default();
        let dims = parts.next().ok_or_else(|| bad("missing size"))?;
        let sizes: Vec<usize> = dims
            .split('x')
            .map(|d| d.parse::<usize>().map_err(|_| bad("sizes must be positive integers")))
            .collect::<Result<_>>()?;
        if sizes.iter().any(|&d| d == 0) {
            return Err(bad("sizes must be positive integers"));
        }
        let mut jump = None;
        for opt in parts {
            match opt.split_once('=') {
                Some(("jump", v)) => {
                    let v: f64 = v.parse().map_err(|_| bad("jump must be a number"))?;
                    if !(v.is_finite() && v > 0.0) {
                        return Err(bad("jump must be positive"));
                    }
                    jump = Some(v);
                }
                _ => return Err(bad("unknown option")),
            }
        }
        let spec = match (kind, sizes.as_slice()) {
            ("identity", [n]) => ProblemSpec::Identity(*n),
            ("diag", [n]) => ProblemSpec::Diagonal(*n),
            ("laplace1d", [n]) => ProblemSpec::Laplace1d(*n),
            ("laplace2d", [nx, ny]) => ProblemSpec::Laplace2d {
                nx: *nx,
                ny: *ny,
                jump,
            },
            ("laplace3d", [nx, ny, nz]) => ProblemSpec::Laplace3d {
                nx: *nx,
                ny: *ny,
                nz: *nz,
            },
            _ => return Err(bad("unknown generator or wrong number of sizes")),
        };
        if jump.is_some() && !matches!(spec, ProblemSpec::Laplace2d { .. }) {
            return Err(bad("jump is only supported for laplace2d"));
        }
        Ok(spec)
    }
}
