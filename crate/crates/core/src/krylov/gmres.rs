use super::{check_dims, check_finite, true_residual, LinearOperator, Method, SolveConfig, SolveReport, StopReason};
use crate::error::Result;
use crate::sparse::{dot, norm2};

/// Breakdown test: `h_{j+1,j} ≤ HAPPY_BREAKDOWN · ‖H‖_F`.
const HAPPY_BREAKDOWN: f64 = 1e-14;
/// A second Gram–Schmidt pass runs when any `|v_iᵀw| / ‖w‖` exceeds this.
const REORTHOGONALIZE: f64 = 1e-8;

/// Right-preconditioned restarted GMRES: solves `A M y = b`, `x = M y`, zero initial guess.
pub fn gmres(
    a: &dyn LinearOperator,
    m: &dyn LinearOperator,
    b: &[f64],
    config: &SolveConfig,
) -> Result<(Vec<f64>, SolveReport)> {
    arnoldi_solve(a, m, b, config, false)
}

/// Flexible GMRES: keeps every preconditioned direction, so `M` may change between
/// applications.
pub fn fgmres(
    a: &dyn LinearOperator,
    m: &dyn LinearOperator,
    b: &[f64],
    config: &SolveConfig,
) -> Result<(Vec<f64>, SolveReport)> {
    arnoldi_solve(a, m, b, config, true)
}

fn givens(a: f64, b: f64) -> (f64, f64) {
    if b == 0.0 {
        (1.0, 0.0)
    } else {
        let r = a.hypot(b);
        (a / r, b / r)
    }
}

fn arnoldi_solve(
    a: &dyn LinearOperator,
    m: &dyn LinearOperator,
    b: &[f64],
    config: &SolveConfig,
    flexible: bool,
) -> Result<(Vec<f64>, SolveReport)> {
    config.validate()?;
    check_dims(a, m, b)?;
    let n = b.len();
    let restart = config.restart;
    let b_norm = norm2(b);
    let mut x = vec![0.0; n];
    let mut report = SolveReport {
        method: if flexible { Method::Fgmres } else { Method::Gmres },
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
        return Ok((x, report));
    }

    let mut r = b.to_vec();
    let mut beta = b_norm;
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(restart + 1);
    let mut directions: Vec<Vec<f64>> = Vec::with_capacity(if flexible { restart } else { 0 });
    let mut w = vec![0.0; n];
    let mut z = vec![0.0; n];
    'outer: while report.iterations < config.max_iter {
        basis.clear();
        directions.clear();
        basis.push(r.iter().map(|v| v / beta).collect());
        // column-major Hessenberg, already rotated to upper triangular
        let mut h: Vec<Vec<f64>> = Vec::with_capacity(restart);
        let mut rotations: Vec<(f64, f64)> = Vec::with_capacity(restart);
        let mut g = vec![beta];
        let mut h_norm_sq = 0.0;
        let cycle_start = beta;
        let mut done = false;
        for j in 0..restart {
            if report.iterations >= config.max_iter {
                break;
            }
            m.apply(&basis[j], &mut z)?;
            a.apply(&z, &mut w)?;
            if flexible {
                directions.push(z.clone());
            }
            let mut col = vec![0.0; j + 2];
            for (i, v) in basis.iter().enumerate() {
                let c = dot(v, &w);
                col[i] = c;
                w.iter_mut().zip(v).for_each(|(wi, vi)| *wi -= c * vi);
            }
            let mut w_norm = norm2(&w);
            let loss = basis
                .iter()
                .map(|v| dot(v, &w).abs())
                .fold(0.0, f64::max);
            if w_norm > 0.0 && loss > REORTHOGONALIZE * w_norm {
                for (i, v) in basis.iter().enumerate() {
                    let c = dot(v, &w);
                    col[i] += c;
                    w.iter_mut().zip(v).for_each(|(wi, vi)| *wi -= c * vi);
                }
                w_norm = norm2(&w);
            }
            col[j + 1] = w_norm;
            check_finite(&col, "Arnoldi coefficients")?;
            h_norm_sq += col.iter().map(|c| c * c).sum::<f64>();
            let breakdown = w_norm <= HAPPY_BREAKDOWN * h_norm_sq.sqrt();

            for (i, &(c, s)) in rotations.iter().enumerate() {
                let (p, q) = (col[i], col[i + 1]);
                col[i] = c * p + s * q;
                col[i + 1] = -s * p + c * q;
            }
            let (c, s) = givens(col[j], col[j + 1]);
            col[j] = c * col[j] + s * col[j + 1];
            col[j + 1] = 0.0;
            rotations.push((c, s));
            let gj = g[j];
            g[j] = c * gj;
            g.push(-s * gj);
            h.push(col);
            report.iterations += 1;
            let estimate = g[j + 1].abs() / b_norm;
            report.residual_history.push(estimate);

            if estimate <= config.rtol || breakdown {
                done = true;
                break;
            }
            basis.push(w.iter().map(|v| v / w_norm).collect());
        }

        // y = H⁻¹ g, then x += M V y (or Z y)
        let k = h.len();
        let mut y = g[..k].to_vec();
        for i in (0..k).rev() {
            let mut s = y[i];
            for l in i + 1..k {
                s -= h[l][i] * y[l];
            }
            y[i] = s / h[i][i];
        }
        check_finite(&y, "least-squares update")?;
        if flexible {
            for (zi, yi) in directions.iter().zip(&y) {
                x.iter_mut().zip(zi).for_each(|(xv, zv)| *xv += yi * zv);
            }
        } else {
            let mut u = vec![0.0; n];
            for (vi, yi) in basis.iter().zip(&y) {
                u.iter_mut().zip(vi).for_each(|(uv, vv)| *uv += yi * vv);
            }
            m.apply(&u, &mut z)?;
            x.iter_mut().zip(&z).for_each(|(xv, zv)| *xv += zv);
        }
        r = true_residual(a, b, &x)?;
        beta = norm2(&r);
        let rel = beta / b_norm;
        if rel <= config.rtol {
            report.converged = true;
            report.stop_reason = StopReason::Converged;
            break 'outer;
        }
        if done || k == restart {
            if beta >= cycle_start {
                report.stop_reason = StopReason::Stagnation;
                break 'outer;
            }
        }
        if beta == 0.0 {
            break;
        }
    }
    report.final_relative_residual = beta / b_norm;
    report.inner_iterations = m.take_inner_iterations();
    Ok((x, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::krylov::{FnOperator, Identity};
    use crate::sparse::{CsrMatrix, DenseMatrix};
    use rand::{Rng, SeedableRng};

    fn cfg(method: Method) -> SolveConfig {
        SolveConfig {
            method,
            rtol: 1e-10,
            ..SolveConfig::default()
        }
    }

    #[test]
    fn identity_in_one_iteration() {
        let a = CsrMatrix::identity(4);
        let (x, rep) = gmres(&a, &Identity(4), &[1.0, 2.0, 3.0, 4.0], &cfg(Method::Gmres)).unwrap();
        assert_eq!(rep.iterations, 1);
        assert!(rep.converged);
        for (p, q) in x.iter().zip([1.0, 2.0, 3.0, 4.0]) {
            assert!((p - q).abs() <= 1e-15 * q);
        }
    }

    #[test]
    fn rotation_in_two_iterations() {
        let a = DenseMatrix::from_rows(&[&[0.0, -1.0], &[1.0, 0.0]]);
        let (x, rep) = gmres(&a, &Identity(2), &[1.0, 0.5], &cfg(Method::Gmres)).unwrap();
        assert!(rep.converged && rep.iterations <= 2);
        assert!((x[0] - 0.5).abs() < 1e-12 && (x[1] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn history_decreases_within_cycles() {
        let a = crate::gen::laplace_2d(20, 20);
        let b: Vec<f64> = (0..400).map(|i| (i as f64).sin()).collect();
        let c = SolveConfig {
            restart: 10,
            max_iter: 200,
            ..cfg(Method::Gmres)
        };
        let (_, rep) = gmres(&a, &Identity(400), &b, &c).unwrap();
        for cycle in rep.residual_history[1..].chunks(10) {
            for w in cycle.windows(2) {
                assert!(w[1] <= w[0] * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn flexible_matches_standard_for_fixed_preconditioner() {
        let a = crate::gen::laplace_2d(32, 32);
        let d = a.diagonal();
        let jacobi = FnOperator::new(1024, move |x: &[f64], y: &mut [f64]| {
            for i in 0..x.len() {
                y[i] = x[i] / d[i];
            }
        });
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let b: Vec<f64> = (0..1024).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let c = SolveConfig {
            max_iter: 25,
            ..cfg(Method::Gmres)
        };
        let (x1, r1) = gmres(&a, &jacobi, &b, &c).unwrap();
        let (x2, r2) = fgmres(&a, &jacobi, &b, &c).unwrap();
        assert_eq!(r1.iterations, r2.iterations);
        for (p, q) in r1.residual_history.iter().zip(&r2.residual_history) {
            assert!((p - q).abs() <= 1e-12);
        }
        let scale = x1.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (p, q) in x1.iter().zip(&x2) {
            assert!((p - q).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn stagnation_is_reported() {
        // GMRES(1) cannot make progress on a 90-degree rotation
        let a = DenseMatrix::from_rows(&[&[0.0, -1.0], &[1.0, 0.0]]);
        let c = SolveConfig {
            restart: 1,
            ..cfg(Method::Gmres)
        };
        let (_, rep) = gmres(&a, &Identity(2), &[1.0, 0.0], &c).unwrap();
        assert!(!rep.converged);
        assert_eq!(rep.stop_reason, StopReason::Stagnation);
    }

    #[test]
    fn budget_exhaustion_is_reported() {
        let a = crate::gen::laplace_1d(200);
        let c = SolveConfig {
            max_iter: 5,
            ..cfg(Method::Gmres)
        };
        let (_, rep) = gmres(&a, &Identity(200), &vec![1.0; 200], &c).unwrap();
        assert_eq!(rep.stop_reason, StopReason::MaxIterations);
        assert_eq!(rep.iterations, 5);
    }
}
