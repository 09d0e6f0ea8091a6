use super::{check_dims, check_finite, true_residual, LinearOperator, ResidualNorm, SolveConfig, SolveReport, StopReason};
use crate::error::{Error, Result};
use crate::sparse::{dot, norm2};

/// Preconditioned conjugate gradients from a zero initial guess.
///
/// With the true-residual test, a recursively updated residual that passes is confirmed
/// against `b − Ax` and replaced by it if the two disagree.
pub fn pcg(
    a: &dyn LinearOperator,
    m: &dyn LinearOperator,
    b: &[f64],
    config: &SolveConfig,
) -> Result<(Vec<f64>, SolveReport)> {
    config.validate()?;
    check_dims(a, m, b)?;
    let n = b.len();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut z = vec![0.0; n];
    m.apply(&r, &mut z)?;
    let mut rz = dot(&r, &z);
    let b_norm = match config.residual {
        ResidualNorm::True => norm2(b),
        ResidualNorm::Preconditioned => rz.max(0.0).sqrt(),
    };
    let mut report = SolveReport {
        method: super::Method::Pcg,
        converged: false,
        stop_reason: StopReason::MaxIterations,
        iterations: 0,
        residual_history: vec![if b_norm == 0.0 { 0.0 } else { 1.0 }],
        final_relative_residual: 0.0,
        inner_iterations: Vec::new(),
    };
    if b_norm == 0.0 {
        report.converged = true;
        report.stop_reason = StopReason::Converged;
        report.inner_iterations = m.take_inner_iterations();
        return Ok((x, report));
    }
    let measure = |r: &[f64], rz: f64| match config.residual {
        ResidualNorm::True => norm2(r) / b_norm,
        ResidualNorm::Preconditioned => rz.max(0.0).sqrt() / b_norm,
    };

    let mut p = z.clone();
    let mut q = vec![0.0; n];
    while report.iterations < config.max_iter {
        a.apply(&p, &mut q)?;
        let curvature = dot(&p, &q);
        if !(curvature > 0.0) {
            return Err(Error::Indefinite {
                iteration: report.iterations + 1,
                curvature,
            });
        }
        let alpha = rz / curvature;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        check_finite(&x, "conjugate gradient iterate")?;
        report.iterations += 1;
        m.apply(&r, &mut z)?;
        let rz_next = dot(&r, &z);
        let mut rel = measure(&r, rz_next);
        if rel <= config.rtol && config.residual == ResidualNorm::True {
            r = true_residual(a, b, &x)?;
            rel = norm2(&r) / b_norm;
            if rel > config.rtol {
                // residual replacement; the search direction is kept
                m.apply(&r, &mut z)?;
                let replaced = dot(&r, &z);
                report.residual_history.push(rel);
                let beta = replaced / rz;
                for i in 0..n {
                    p[i] = z[i] + beta * p[i];
                }
                rz = replaced;
                continue;
            }
        }
        report.residual_history.push(rel);
        if rel <= config.rtol {
            report.converged = true;
            report.stop_reason = StopReason::Converged;
            break;
        }
        let beta = rz_next / rz;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        rz = rz_next;
    }
    report.final_relative_residual = norm2(&true_residual(a, b, &x)?) / norm2(b);
    report.inner_iterations = m.take_inner_iterations();
    Ok((x, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::krylov::{Identity, Method};
    use crate::sparse::CsrMatrix;

    fn cfg() -> SolveConfig {
        SolveConfig {
            method: Method::Pcg,
            rtol: 1e-10,
            ..SolveConfig::default()
        }
    }

    #[test]
    fn identity_converges_in_one_step() {
        let a = CsrMatrix::identity(5);
        let b = [1.0, -2.0, 3.0, 0.5, 4.0];
        let (x, rep) = pcg(&a, &Identity(5), &b, &cfg()).unwrap();
        assert_eq!(rep.iterations, 1);
        assert_eq!(x, b.to_vec());
    }

    #[test]
    fn finite_termination_on_three_eigenvalues() {
        let a = CsrMatrix::from_diagonal(&[1.0, 2.0, 3.0]);
        let (x, rep) = pcg(&a, &Identity(3), &[0.3, -0.7, 0.2], &cfg()).unwrap();
        assert!(rep.converged && rep.iterations <= 3);
        assert!((x[1] + 0.35).abs() < 1e-12);
    }

    #[test]
    fn zero_rhs() {
        let a = CsrMatrix::identity(3);
        let (x, rep) = pcg(&a, &Identity(3), &[0.0; 3], &cfg()).unwrap();
        assert_eq!(rep.iterations, 0);
        assert!(rep.converged);
        assert_eq!(x, vec![0.0; 3]);
    }

    #[test]
    fn indefinite_matrix_is_flagged() {
        let a = CsrMatrix::from_diagonal(&[1.0, -1.0]);
        assert!(matches!(
            pcg(&a, &Identity(2), &[0.0, 1.0], &cfg()),
            Err(Error::Indefinite { iteration: 1, .. })
        ));
    }

    #[test]
    fn a_norm_error_decreases() {
        let a = crate::gen::laplace_1d(100);
        let dense = a.to_dense();
        let b: Vec<f64> = (0..100).map(|i| ((i * 37 % 11) as f64) - 5.0).collect();
        let exact = {
            let f = dense.cholesky().unwrap();
            let mut x = b.clone();
            f.solve_in_place(&mut x);
            x
        };
        let mut last = f64::INFINITY;
        for k in 1..60 {
            let c = SolveConfig {
                max_iter: k,
                ..cfg()
            };
            let (x, _) = pcg(&a, &Identity(100), &b, &c).unwrap();
            let e: Vec<f64> = x.iter().zip(&exact).map(|(p, q)| p - q).collect();
            let err = dot(&e, &dense.matvec(&e).unwrap()).sqrt();
            assert!(err <= last * (1.0 + 1e-12), "iteration {k}");
            last = err;
        }
    }
}
