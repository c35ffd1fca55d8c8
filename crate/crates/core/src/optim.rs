//! Small dense optimizers for the few-parameter calibration fit.

#![allow(clippy::needless_range_loop)]

use alloc::vec::Vec;

pub(crate) type Matrix<const N: usize> = [[f64; N]; N];

/// Nelder-Mead simplex minimization. Returns the best vertex, its value and
/// the number of iterations used.
pub(crate) fn nelder_mead<const N: usize, F: Fn(&[f64; N]) -> f64>(
    f: F,
    start: [f64; N],
    step: f64,
    max_iter: usize,
    tol: f64,
) -> ([f64; N], f64, usize) {
    let mut simplex: Vec<([f64; N], f64)> = Vec::with_capacity(N + 1);
    simplex.push((start, f(&start)));
    for i in 0..N {
        let mut x = start;
        x[i] += step;
        simplex.push((x, f(&x)));
    }
    let mut iter = 0;
    while iter < max_iter {
        iter += 1;
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0].1;
        let worst = simplex[N].1;
        if (worst - best).abs() <= tol * (best.abs() + tol) {
            break;
        }
        let mut centroid = [0.0; N];
        for (x, _) in &simplex[..N] {
            for j in 0..N {
                centroid[j] += x[j] / N as f64;
            }
        }
        let along = |t: f64| {
            let mut y = [0.0; N];
            for j in 0..N {
                y[j] = centroid[j] + t * (simplex[N].0[j] - centroid[j]);
            }
            y
        };
        let reflected = along(-1.0);
        let fr = f(&reflected);
        if fr < simplex[0].1 {
            let expanded = along(-2.0);
            let fe = f(&expanded);
            simplex[N] = if fe < fr { (expanded, fe) } else { (reflected, fr) };
        } else if fr < simplex[N - 1].1 {
            simplex[N] = (reflected, fr);
        } else {
            let contracted = if fr < worst { along(-0.5) } else { along(0.5) };
            let fc = f(&contracted);
            if fc < worst.min(fr) {
                simplex[N] = (contracted, fc);
            } else {
                let x0 = simplex[0].0;
                for v in simplex.iter_mut().skip(1) {
                    for j in 0..N {
                        v.0[j] = x0[j] + 0.5 * (v.0[j] - x0[j]);
                    }
                    v.1 = f(&v.0);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    (simplex[0].0, simplex[0].1, iter)
}

/// Weighted residuals and their Jacobian at a parameter point.
pub(crate) trait LeastSquares<const N: usize> {
    /// `None` when the model cannot be evaluated at `x`.
    fn residuals(&self, x: &[f64; N]) -> Option<Vec<f64>>;
    fn jacobian(&self, x: &[f64; N]) -> Option<Vec<[f64; N]>>;
}

#[derive(Debug, Clone)]
pub(crate) struct LmOutcome<const N: usize> {
    pub x: [f64; N],
    pub chi_square: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Gauss-Newton curvature `J^T J` at the solution.
    pub curvature: Matrix<N>,
}

fn chi_square(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

fn normal_equations<const N: usize>(jac: &[[f64; N]], r: &[f64]) -> (Matrix<N>, [f64; N]) {
    let mut a = [[0.0; N]; N];
    let mut g = [0.0; N];
    for (row, &ri) in jac.iter().zip(r) {
        for i in 0..N {
            g[i] += row[i] * ri;
            for j in 0..N {
                a[i][j] += row[i] * row[j];
            }
        }
    }
    (a, g)
}

/// Damped Gauss-Newton (Levenberg-Marquardt with Marquardt scaling).
pub(crate) fn levenberg_marquardt<const N: usize, P: LeastSquares<N>>(
    problem: &P,
    start: [f64; N],
    max_iter: usize,
) -> Option<LmOutcome<N>> {
    let mut x = start;
    let mut r = problem.residuals(&x)?;
    let mut chi2 = chi_square(&r);
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let jac = problem.jacobian(&x)?;
        let (a, g) = normal_equations(&jac, &r);
        let mut damped = a;
        for i in 0..N {
            damped[i][i] += lambda * a[i][i].max(1e-300);
        }
        let neg_g = g.map(|v| -v);
        let Some(step) = cholesky_solve(&damped, &neg_g) else {
            lambda *= 10.0;
            if lambda > 1e16 {
                break;
            }
            continue;
        };
        let mut trial = x;
        for i in 0..N {
            trial[i] += step[i];
        }
        let step_size = step.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        match problem.residuals(&trial) {
            Some(rt) if chi_square(&rt) <= chi2 => {
                let new_chi2 = chi_square(&rt);
                let decrease = chi2 - new_chi2;
                x = trial;
                r = rt;
                chi2 = new_chi2;
                lambda = (lambda / 10.0).max(1e-12);
                if step_size < 1e-11 || decrease <= 1e-14 * chi2 || chi2 == 0.0 {
                    converged = true;
                    break;
                }
            }
            _ => {
                lambda *= 10.0;
                if lambda > 1e10 {
                    // No descent left at working precision.
                    converged = true;
                    break;
                }
            }
        }
    }
    let jac = problem.jacobian(&x)?;
    let (curvature, _) = normal_equations(&jac, &r);
    Some(LmOutcome {
        x,
        chi_square: chi2,
        iterations,
        converged,
        curvature,
    })
}

/// Solves `a x = b` for symmetric positive definite `a`.
pub(crate) fn cholesky_solve<const N: usize>(a: &Matrix<N>, b: &[f64; N]) -> Option<[f64; N]> {
    let l = cholesky(a)?;
    let mut y = [0.0; N];
    for i in 0..N {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i][k] * y[k];
        }
        y[i] = s / l[i][i];
    }
    let mut x = [0.0; N];
    for i in (0..N).rev() {
        let mut s = y[i];
        for k in i + 1..N {
            s -= l[k][i] * x[k];
        }
        x[i] = s / l[i][i];
    }
    Some(x)
}

fn cholesky<const N: usize>(a: &Matrix<N>) -> Option<Matrix<N>> {
    let mut l = [[0.0; N]; N];
    for i in 0..N {
        for j in 0..=i {
            let mut s = a[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            if i == j {
                if !(s > 0.0) || !s.is_finite() {
                    return None;
                }
                l[i][i] = libm::sqrt(s);
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    Some(l)
}

/// Inverse of a symmetric positive definite matrix.
pub(crate) fn spd_inverse<const N: usize>(a: &Matrix<N>) -> Option<Matrix<N>> {
    let mut inv = [[0.0; N]; N];
    for j in 0..N {
        let mut e = [0.0; N];
        e[j] = 1.0;
        let col = cholesky_solve(a, &e)?;
        for i in 0..N {
            inv[i][j] = col[i];
        }
    }
    Some(inv)
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
pub(crate) fn symmetric_eigenvalues<const N: usize>(a: &Matrix<N>) -> [f64; N] {
    let mut m = *a;
    for _ in 0..100 {
        let mut off = 0.0;
        for i in 0..N {
            for j in i + 1..N {
                off += m[i][j] * m[i][j];
            }
        }
        let scale: f64 = (0..N).map(|i| m[i][i] * m[i][i]).sum();
        if off <= 1e-30 * scale || off == 0.0 {
            break;
        }
        for p in 0..N {
            for q in p + 1..N {
                if m[p][q] == 0.0 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + libm::sqrt(theta * theta + 1.0));
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / libm::sqrt(t * t + 1.0);
                let s = t * c;
                for k in 0..N {
                    let mkp = m[k][p];
                    let mkq = m[k][q];
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..N {
                    let mpk = m[p][k];
                    let mqk = m[q][k];
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
            }
        }
    }
    core::array::from_fn(|i| m[i][i])
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn nelder_mead_finds_rosenbrock_minimum() {
        let f = |x: &[f64; 2]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let (x, fx, _) = nelder_mead(f, [-1.2, 1.0], 0.5, 5000, 1e-16);
        assert!(fx < 1e-10, "{fx}");
        assert!((x[0] - 1.0).abs() < 1e-4 && (x[1] - 1.0).abs() < 1e-4);
    }

    struct Line {
        xs: Vec<f64>,
        ys: Vec<f64>,
    }

    impl LeastSquares<2> for Line {
        fn residuals(&self, p: &[f64; 2]) -> Option<Vec<f64>> {
            Some(self.xs.iter().zip(&self.ys).map(|(x, y)| y - (p[0] + p[1] * x)).collect())
        }
        fn jacobian(&self, _: &[f64; 2]) -> Option<Vec<[f64; 2]>> {
            Some(self.xs.iter().map(|x| [-1.0, -x]).collect())
        }
    }

    #[test]
    fn lm_solves_linear_least_squares() {
        let line = Line {
            xs: vec![0.0, 1.0, 2.0, 3.0],
            ys: vec![1.0, 3.1, 4.9, 7.0],
        };
        let out = levenberg_marquardt(&line, [0.0, 0.0], 100).unwrap();
        assert!(out.converged);
        // Ordinary least squares: slope 1.98, intercept 1.03.
        assert!((out.x[1] - 1.98).abs() < 1e-9 && (out.x[0] - 1.03).abs() < 1e-9);
    }

    #[test]
    fn small_linear_algebra() {
        let a = [[4.0, 1.0, 0.0], [1.0, 3.0, 0.5], [0.0, 0.5, 2.0]];
        let inv = spd_inverse(&a).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let v: f64 = (0..3).map(|k| a[i][k] * inv[k][j]).sum();
                assert!((v - if i == j { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
        }
        let mut ev = symmetric_eigenvalues(&[[2.0, 1.0], [1.0, 2.0]]);
        ev.sort_by(f64::total_cmp);
        assert!((ev[0] - 1.0).abs() < 1e-12 && (ev[1] - 3.0).abs() < 1e-12);
        assert!(cholesky_solve(&[[1.0, 2.0], [2.0, 1.0]], &[1.0, 1.0]).is_none());
    }
}
