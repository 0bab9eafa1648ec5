//! Limited-memory quasi-Newton descent with an optional preconditioner,
//! used by the discretized-action minimizations and the dissipation
//! level-set estimator.

/// Options for [`lbfgs`].
#[derive(Debug, Clone)]
pub struct LbfgsOptions {
    pub memory: usize,
    pub max_iter: usize,
    /// Convergence tolerance on the max-norm of the gradient.
    pub grad_tol: f64,
    /// Armijo sufficient-decrease constant.
    pub c1: f64,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        LbfgsOptions {
            memory: 10,
            max_iter: 4000,
            grad_tol: 1e-9,
            c1: 1e-4,
        }
    }
}

/// Outcome of a descent run; `converged` is false when the iteration budget
/// ran out first.
#[derive(Debug, Clone)]
pub struct LbfgsResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad_norm_inf: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Minimize a smooth objective. `fg` fills the gradient and returns the
/// value; `precond` applies an approximate inverse Hessian to the gradient
/// (pass `|g| g.to_vec()` for the identity).
pub fn lbfgs(
    x0: Vec<f64>,
    mut fg: impl FnMut(&[f64], &mut [f64]) -> f64,
    mut precond: impl FnMut(&[f64]) -> Vec<f64>,
    opts: &LbfgsOptions,
) -> LbfgsResult {
    let n = x0.len();
    let mut x = x0;
    let mut g = vec![0.0; n];
    let mut f = fg(&x, &mut g);
    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();
    let mut rho_hist: Vec<f64> = Vec::new();
    let mut iterations = 0;

    while iterations < opts.max_iter {
        let gnorm = norm_inf(&g);
        if gnorm <= opts.grad_tol {
            return LbfgsResult {
                x,
                value: f,
                grad_norm_inf: gnorm,
                iterations,
                converged: true,
            };
        }
        // Two-loop recursion.
        let mut q = g.clone();
        let k = s_hist.len();
        let mut alpha = vec![0.0; k];
        for i in (0..k).rev() {
            alpha[i] = rho_hist[i] * dot(&s_hist[i], &q);
            for (qj, yj) in q.iter_mut().zip(&y_hist[i]) {
                *qj -= alpha[i] * yj;
            }
        }
        let mut r = precond(&q);
        for i in 0..k {
            let beta = rho_hist[i] * dot(&y_hist[i], &r);
            for (rj, sj) in r.iter_mut().zip(&s_hist[i]) {
                *rj += (alpha[i] - beta) * sj;
            }
        }
        let mut descent = -dot(&g, &r);
        if !(descent < 0.0) {
            // Fall back to the preconditioned gradient.
            r = precond(&g);
            descent = -dot(&g, &r);
            if !(descent < 0.0) {
                r = g.clone();
                descent = -dot(&g, &g);
            }
        }

        // Backtracking Armijo line search along d = -r.
        let mut t = 1.0;
        let mut x_new = vec![0.0; n];
        let mut g_new = vec![0.0; n];
        let mut f_new;
        loop {
            for i in 0..n {
                x_new[i] = x[i] - t * r[i];
            }
            f_new = fg(&x_new, &mut g_new);
            if f_new <= f + opts.c1 * t * descent || t < 1e-18 {
                break;
            }
            t *= 0.5;
        }
        if t < 1e-18 && f_new >= f {
            // No further progress representable.
            return LbfgsResult {
                x,
                value: f,
                grad_norm_inf: norm_inf(&g),
                iterations,
                converged: norm_inf(&g) <= opts.grad_tol,
            };
        }

        let s: Vec<f64> = (0..n).map(|i| x_new[i] - x[i]).collect();
        let y: Vec<f64> = (0..n).map(|i| g_new[i] - g[i]).collect();
        let sy = dot(&s, &y);
        if sy > 1e-14 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            s_hist.push(s);
            y_hist.push(y);
            rho_hist.push(1.0 / sy);
            if s_hist.len() > opts.memory {
                s_hist.remove(0);
                y_hist.remove(0);
                rho_hist.remove(0);
            }
        }
        x = x_new;
        g = g_new;
        f = f_new;
        iterations += 1;
    }
    let gnorm = norm_inf(&g);
    LbfgsResult {
        x,
        value: f,
        grad_norm_inf: gnorm,
        iterations,
        converged: gnorm <= opts.grad_tol,
    }
}

/// Solve the symmetric positive-definite tridiagonal system with constant
/// sub/super-diagonal `off` and node-wise diagonal `diag`.
pub fn tridiag_solve(diag: &[f64], off: f64, b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut cp = vec![0.0; n];
    let mut dp = vec![0.0; n];
    cp[0] = off / diag[0];
    dp[0] = b[0] / diag[0];
    for i in 1..n {
        let m = diag[i] - off * cp[i - 1];
        cp[i] = off / m;
        dp[i] = (b[i] - off * dp[i - 1]) / m;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = dp[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = dp[i] - cp[i] * x[i + 1];
    }
    x
}
