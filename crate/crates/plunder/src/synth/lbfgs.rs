//! Limited-memory BFGS minimizer with box projection and a monotone
//! backtracking (Armijo) line search. Small and deterministic; the fitting
//! problems here have at most a handful of parameters, so a compact
//! implementation beats pulling in a framework.

use std::collections::VecDeque;

#[derive(Clone, Debug)]
pub struct LbfgsOptions {
    pub memory: usize,
    pub max_iters: usize,
    /// Converged when the infinity norm of the projected gradient step
    /// drops below this.
    pub grad_tol: f64,
    /// Armijo sufficient-decrease constant.
    pub c1: f64,
    pub max_backtracks: usize,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        LbfgsOptions { memory: 6, max_iters: 60, grad_tol: 1e-6, c1: 1e-4, max_backtracks: 40 }
    }
}

#[derive(Clone, Debug)]
pub struct MinimizeResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub converged: bool,
    /// Objective value after every accepted step, starting with the
    /// initial point. Non-increasing by construction.
    pub accepted_f: Vec<f64>,
}

fn project(x: &mut [f64], lower: &[f64], upper: &[f64]) {
    for i in 0..x.len() {
        x[i] = x[i].clamp(lower[i], upper[i]);
    }
}

fn projected_gradient_norm(x: &[f64], g: &[f64], lower: &[f64], upper: &[f64]) -> f64 {
    let mut norm: f64 = 0.0;
    for i in 0..x.len() {
        let step = (x[i] - g[i]).clamp(lower[i], upper[i]) - x[i];
        norm = norm.max(step.abs());
    }
    norm
}

/// Minimizes `f` over the box `[lower, upper]`. The objective returns the
/// value and gradient at a point.
pub fn minimize(
    mut objective: impl FnMut(&[f64]) -> (f64, Vec<f64>),
    x0: &[f64],
    lower: &[f64],
    upper: &[f64],
    opts: &LbfgsOptions,
) -> MinimizeResult {
    let n = x0.len();
    let mut x = x0.to_vec();
    project(&mut x, lower, upper);
    let (mut fx, mut gx) = objective(&x);
    let mut accepted_f = vec![fx];

    let mut s_hist: VecDeque<Vec<f64>> = VecDeque::new();
    let mut y_hist: VecDeque<Vec<f64>> = VecDeque::new();
    let mut rho_hist: VecDeque<f64> = VecDeque::new();

    let mut converged = false;
    for _ in 0..opts.max_iters {
        if !fx.is_finite() {
            break;
        }
        if projected_gradient_norm(&x, &gx, lower, upper) <= opts.grad_tol * (1.0 + fx.abs()) {
            converged = true;
            break;
        }

        // Two-loop recursion for the quasi-Newton direction.
        let mut d: Vec<f64> = gx.iter().map(|g| -g).collect();
        if !s_hist.is_empty() {
            let m = s_hist.len();
            let mut alpha = vec![0.0; m];
            for i in (0..m).rev() {
                let a = rho_hist[i] * dot(&s_hist[i], &d);
                alpha[i] = a;
                axpy(&mut d, -a, &y_hist[i]);
            }
            let last = m - 1;
            let gamma = dot(&s_hist[last], &y_hist[last]) / dot(&y_hist[last], &y_hist[last]);
            d.iter_mut().for_each(|v| *v *= gamma);
            for i in 0..m {
                let beta = rho_hist[i] * dot(&y_hist[i], &d);
                axpy(&mut d, alpha[i] - beta, &s_hist[i]);
            }
        }
        if dot(&gx, &d) >= 0.0 {
            // Not a descent direction; fall back to steepest descent.
            d = gx.iter().map(|g| -g).collect();
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
        }

        // Backtracking over the projected arc: accept only a sufficient
        // decrease, so accepted values never increase.
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..opts.max_backtracks {
            let mut x_new: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + step * di).collect();
            project(&mut x_new, lower, upper);
            let dir_dot: f64 = (0..n).map(|i| gx[i] * (x_new[i] - x[i])).sum();
            if dir_dot >= 0.0 {
                // Projection removed all progress along this direction.
                step *= 0.5;
                continue;
            }
            let (f_new, g_new) = objective(&x_new);
            if f_new.is_finite() && f_new <= fx + opts.c1 * dir_dot {
                let s: Vec<f64> = (0..n).map(|i| x_new[i] - x[i]).collect();
                let y: Vec<f64> = (0..n).map(|i| g_new[i] - gx[i]).collect();
                let sy = dot(&s, &y);
                if sy > 1e-10 * norm2(&s) * norm2(&y) {
                    if s_hist.len() == opts.memory {
                        s_hist.pop_front();
                        y_hist.pop_front();
                        rho_hist.pop_front();
                    }
                    rho_hist.push_back(1.0 / sy);
                    s_hist.push_back(s);
                    y_hist.push_back(y);
                }
                x = x_new;
                fx = f_new;
                gx = g_new;
                accepted_f.push(fx);
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // Line search stalled; report the best point found.
            break;
        }
    }

    MinimizeResult { x, f: fx, converged, accepted_f }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}
