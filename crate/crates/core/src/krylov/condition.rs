use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::LinearOperator;
use crate::error::{Error, Result};
use crate::sparse::{dot, symmetric_eigenvalues, CholeskyFactor, DenseMatrix};

/// Largest order accepted by the dense mode.
pub const DENSE_LIMIT: usize = 4096;

/// Relative asymmetry above which a preconditioner is rejected.
const SYMMETRY_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ConditionMode {
    /// Exact spectrum of `MA` through `Lᵀ M L` with `A = L Lᵀ`.
    Dense,
    /// Ritz values from the conjugate gradient coefficients (M-inner-product Lanczos).
    Lanczos { steps: usize, seed: u64 },
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ConditionEstimate {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub kappa: f64,
}

impl ConditionEstimate {
    fn from_extremes(lambda_min: f64, lambda_max: f64) -> Self {
        Self {
            lambda_min,
            lambda_max,
            kappa: lambda_max / lambda_min,
        }
    }
}

fn columns(op: &dyn LinearOperator) -> Result<DenseMatrix> {
    let n = op.dim();
    let mut out = DenseMatrix::zeros(n, n);
    let mut e = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        op.apply(&e, out.col_mut(j))?;
        e[j] = 0.0;
    }
    Ok(out)
}

/// Spectrum bounds of `M A` for SPD `A` and symmetric positive `M`.
pub fn estimate_condition(
    a: &dyn LinearOperator,
    m: &dyn LinearOperator,
    mode: ConditionMode,
) -> Result<ConditionEstimate> {
    let n = a.dim();
    if m.dim() != n {
        return Err(Error::DimensionMismatch {
            context: "preconditioner order",
            expected: n,
            found: m.dim(),
        });
    }
    match mode {
        ConditionMode::Dense => dense(a, m),
        ConditionMode::Lanczos { steps, seed } => lanczos(a, m, steps, seed),
    }
}

fn dense(a: &dyn LinearOperator, m: &dyn LinearOperator) -> Result<ConditionEstimate> {
    let n = a.dim();
    if n > DENSE_LIMIT {
        return Err(Error::InvalidArgument(format!(
            "dense condition estimate limited to n <= {DENSE_LIMIT}, got {n}"
        )));
    }
    let mut md = columns(m)?;
    let asym = md.relative_asymmetry();
    if asym > SYMMETRY_TOLERANCE {
        return Err(Error::NotSymmetric {
            context: "preconditioner".into(),
            asymmetry: asym,
        });
    }
    md.symmetrize();
    let mut ad = columns(a)?;
    ad.symmetrize();
    let l = CholeskyFactor::new(&ad)?.lower();
    let mut k = l.tr_matmul(&md.matmul(&l)?)?;
    k.symmetrize();
    let values = symmetric_eigenvalues(&k)?;
    Ok(ConditionEstimate::from_extremes(values[0], values[n - 1]))
}

fn lanczos(
    a: &dyn LinearOperator,
    m: &dyn LinearOperator,
    steps: usize,
    seed: u64,
) -> Result<ConditionEstimate> {
    let n = a.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut mu = vec![0.0; n];
    let mut mv = vec![0.0; n];
    m.apply(&u, &mut mu)?;
    m.apply(&v, &mut mv)?;
    let (p, q) = (dot(&mu, &v), dot(&u, &mv));
    let scale = (dot(&mu, &mu) * dot(&v, &v)).sqrt().max(f64::MIN_POSITIVE);
    let asym = (p - q).abs() / scale;
    if asym > SYMMETRY_TOLERANCE {
        return Err(Error::NotSymmetric {
            context: "preconditioner".into(),
            asymmetry: asym,
        });
    }

    let mut r = u;
    let mut z = vec![0.0; n];
    m.apply(&r, &mut z)?;
    let mut rz = dot(&r, &z);
    let rz0 = rz;
    let mut pdir = z.clone();
    let mut qv = vec![0.0; n];
    let mut alphas = Vec::new();
    let mut betas = Vec::new();
    for _ in 0..steps.min(n).max(1) {
        a.apply(&pdir, &mut qv)?;
        let curvature = dot(&pdir, &qv);
        if !(curvature > 0.0) {
            return Err(Error::Indefinite {
                iteration: alphas.len() + 1,
                curvature,
            });
        }
        let alpha = rz / curvature;
        alphas.push(alpha);
        r.iter_mut().zip(&qv).for_each(|(ri, qi)| *ri -= alpha * qi);
        m.apply(&r, &mut z)?;
        let rz_next = dot(&r, &z);
        if rz_next <= 1e-28 * rz0 {
            break;
        }
        let beta = rz_next / rz;
        betas.push(beta);
        pdir.iter_mut().zip(&z).for_each(|(pi, zi)| *pi = zi + beta * *pi);
        rz = rz_next;
    }
    let k = alphas.len();
    let mut t = DenseMatrix::zeros(k, k);
    for j in 0..k {
        t[(j, j)] = 1.0 / alphas[j] + if j > 0 { betas[j - 1] / alphas[j - 1] } else { 0.0 };
        if j + 1 < k {
            let off = betas[j].sqrt() / alphas[j];
            t[(j, j + 1)] = off;
            t[(j + 1, j)] = off;
        }
    }
    let values = symmetric_eigenvalues(&t)?;
    Ok(ConditionEstimate::from_extremes(values[0], values[k - 1]))
}
