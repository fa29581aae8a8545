use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

const MEMORY: usize = 10;
const ARMIJO_C1: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 60;

/// Outcome of [`minimize`].
#[derive(Clone, Debug, PartialEq)]
pub struct LbfgsReport {
    pub iterations: usize,
    /// Gradient infinity-norm reached the tolerance.
    pub converged: bool,
    /// Objective after every accepted step, starting with the initial value.
    pub history: Vec<f64>,
    pub grad_norm: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Limited-memory BFGS with Armijo backtracking. `f` writes the gradient
/// into its second argument and returns the objective. Every accepted step
/// strictly decreases the objective.
pub fn minimize<F>(mut f: F, x: &mut [f64], max_iter: usize, tol: f64) -> LbfgsReport
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x.len();
    let mut g = vec![0.0; n];
    let mut fx = f(x, &mut g);
    let mut history = vec![fx];
    let mut memory: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(MEMORY);
    let mut g_new = vec![0.0; n];
    let mut x_new = vec![0.0; n];
    let mut iterations = 0;

    while iterations < max_iter && inf_norm(&g) > tol {
        // Two-loop recursion for d = -H g.
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(memory.len());
        for (s, y, rho) in memory.iter().rev() {
            let a = rho * dot(s, &q);
            q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
            alphas.push(a);
        }
        if let Some((s, y, _)) = memory.back() {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|v| *v *= gamma);
        } else {
            let scale = 1.0 / inf_norm(&g).max(1.0);
            q.iter_mut().for_each(|v| *v *= scale);
        }
        for ((s, y, rho), a) in memory.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
        }
        let mut d: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut slope = dot(&g, &d);
        if slope >= 0.0 {
            memory.clear();
            let scale = 1.0 / inf_norm(&g).max(1.0);
            d = g.iter().map(|v| -v * scale).collect();
            slope = dot(&g, &d);
        }

        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..MAX_BACKTRACKS {
            x_new.iter_mut().zip(x.iter()).zip(&d).for_each(|((xn, xi), di)| *xn = xi + step * di);
            let f_new = f(&x_new, &mut g_new);
            if f_new.is_finite() && f_new <= fx + ARMIJO_C1 * step * slope && f_new < fx {
                accepted = true;
                let s: Vec<f64> = d.iter().map(|v| v * step).collect();
                let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
                let sy = dot(&s, &y);
                if sy > 1e-12 {
                    if memory.len() == MEMORY {
                        memory.pop_front();
                    }
                    memory.push_back((s, y, 1.0 / sy));
                }
                x.copy_from_slice(&x_new);
                g.copy_from_slice(&g_new);
                fx = f_new;
                history.push(fx);
                break;
            }
            step *= 0.5;
        }
        iterations += 1;
        if !accepted {
            break;
        }
    }
    let grad_norm = inf_norm(&g);
    LbfgsReport {
        iterations,
        converged: grad_norm <= tol,
        history,
        grad_norm,
    }
}
