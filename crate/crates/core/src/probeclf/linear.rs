use alloc::vec;
use alloc::vec::Vec;

use super::lbfgs::{minimize, LbfgsReport};
use crate::math;

/// `C` in the usual `C Σ loss + ½‖W‖²` form; the objective is divided by
/// `C n` so its scale does not grow with the data.
pub const INVERSE_REGULARIZATION: f64 = 1.0;
pub const MAX_ITER: usize = 250;
pub const GRAD_TOL: f64 = 1e-4;

/// Softmax classifier, weights `k x d` row-major, one bias per class.
#[derive(Clone, Debug, PartialEq)]
pub struct Softmax {
    pub classes: usize,
    pub dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Softmax {
    pub fn scores(&self, x: &[f64]) -> Vec<f64> {
        (0..self.classes)
            .map(|c| self.bias[c] + dot(&self.weights[c * self.dim..(c + 1) * self.dim], x))
            .collect()
    }

    /// Lowest class index wins ties.
    pub fn predict(&self, x: &[f64]) -> usize {
        let s = self.scores(x);
        let mut best = 0;
        for (i, v) in s.iter().enumerate() {
            if *v > s[best] {
                best = i;
            }
        }
        best
    }
}

/// Single logistic unit.
#[derive(Clone, Debug, PartialEq)]
pub struct Logistic {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl Logistic {
    pub fn probability(&self, x: &[f64]) -> f64 {
        math::sigmoid(self.bias + dot(&self.weights, x))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Regularized multinomial objective and its gradient at `p = [W | b]`.
pub fn softmax_objective(p: &[f64], grad: &mut [f64], xs: &[Vec<f64>], ys: &[usize], k: usize, d: usize) -> f64 {
    let n = xs.len() as f64;
    let (w, b) = p.split_at(k * d);
    grad.iter_mut().for_each(|g| *g = 0.0);
    let (gw, gb) = grad.split_at_mut(k * d);
    let mut loss = 0.0;
    let mut z = vec![0.0; k];
    for (x, &y) in xs.iter().zip(ys) {
        for c in 0..k {
            z[c] = b[c] + dot(&w[c * d..(c + 1) * d], x);
        }
        let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = z.iter().map(|v| math::exp(v - m)).sum();
        let lse = m + math::ln(sum);
        loss += lse - z[y];
        for c in 0..k {
            let pc = math::exp(z[c] - lse) - if c == y { 1.0 } else { 0.0 };
            gb[c] += pc / n;
            for (g, xi) in gw[c * d..(c + 1) * d].iter_mut().zip(x) {
                *g += pc * xi / n;
            }
        }
    }
    let reg = 1.0 / (INVERSE_REGULARIZATION * n);
    let mut penalty = 0.0;
    for (g, wi) in gw.iter_mut().zip(w) {
        *g += reg * wi;
        penalty += wi * wi;
    }
    loss / n + 0.5 * reg * penalty
}

/// Regularized binary logistic objective at `p = [w | b]`, targets in {0, 1}.
pub fn logistic_objective(p: &[f64], grad: &mut [f64], xs: &[Vec<f64>], ys: &[bool]) -> f64 {
    let n = xs.len() as f64;
    let d = p.len() - 1;
    let (w, b) = (&p[..d], p[d]);
    grad.iter_mut().for_each(|g| *g = 0.0);
    let mut loss = 0.0;
    for (x, &y) in xs.iter().zip(ys) {
        let z = b + dot(w, x);
        let s = if y { 1.0 } else { -1.0 };
        // log(1 + exp(-s z)), stable for large |z|
        let m = -s * z;
        loss += if m > 0.0 { m + math::ln(1.0 + math::exp(-m)) } else { math::ln(1.0 + math::exp(m)) };
        let r = math::sigmoid(z) - if y { 1.0 } else { 0.0 };
        for (g, xi) in grad[..d].iter_mut().zip(x) {
            *g += r * xi / n;
        }
        grad[d] += r / n;
    }
    let reg = 1.0 / (INVERSE_REGULARIZATION * n);
    let mut penalty = 0.0;
    for (g, wi) in grad[..d].iter_mut().zip(w) {
        *g += reg * wi;
        penalty += wi * wi;
    }
    loss / n + 0.5 * reg * penalty
}

pub fn fit_softmax(xs: &[Vec<f64>], ys: &[usize], k: usize) -> (Softmax, LbfgsReport) {
    let d = xs.first().map_or(0, Vec::len);
    let mut p = vec![0.0; k * d + k];
    let report = minimize(|p, g| softmax_objective(p, g, xs, ys, k, d), &mut p, MAX_ITER, GRAD_TOL);
    let bias = p.split_off(k * d);
    (
        Softmax {
            classes: k,
            dim: d,
            weights: p,
            bias,
        },
        report,
    )
}

pub fn fit_logistic(xs: &[Vec<f64>], ys: &[bool]) -> (Logistic, LbfgsReport) {
    let d = xs.first().map_or(0, Vec::len);
    let mut p = vec![0.0; d + 1];
    let report = minimize(|p, g| logistic_objective(p, g, xs, ys), &mut p, MAX_ITER, GRAD_TOL);
    let bias = p[d];
    p.truncate(d);
    (Logistic { weights: p, bias }, report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn numeric_grad(f: &mut dyn FnMut(&[f64], &mut [f64]) -> f64, p: &[f64]) -> Vec<f64> {
        let h = 1e-6;
        let mut scratch = vec![0.0; p.len()];
        (0..p.len())
            .map(|i| {
                let mut a = p.to_vec();
                let mut b = p.to_vec();
                a[i] += h;
                b[i] -= h;
                (f(&a, &mut scratch) - f(&b, &mut scratch)) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn softmax_gradient_matches_finite_differences() {
        let xs = vec![vec![0.5, -1.0], vec![1.5, 0.2], vec![-0.3, 0.7]];
        let ys = vec![0, 2, 1];
        let p: Vec<f64> = (0..9).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut f = |p: &[f64], g: &mut [f64]| softmax_objective(p, g, &xs, &ys, 3, 2);
        let mut g = vec![0.0; 9];
        f(&p, &mut g);
        for (a, n) in g.iter().zip(numeric_grad(&mut f, &p)) {
            assert!((a - n).abs() < 1e-7);
        }
    }

    #[test]
    fn logistic_gradient_matches_finite_differences() {
        let xs = vec![vec![0.5, -1.0], vec![1.5, 0.2], vec![-0.3, 0.7]];
        let ys = vec![true, false, true];
        let p = vec![0.3, -0.2, 0.1];
        let mut f = |p: &[f64], g: &mut [f64]| logistic_objective(p, g, &xs, &ys);
        let mut g = vec![0.0; 3];
        f(&p, &mut g);
        for (a, n) in g.iter().zip(numeric_grad(&mut f, &p)) {
            assert!((a - n).abs() < 1e-7);
        }
    }

    #[test]
    fn uniform_start_has_log_k_loss() {
        let xs = vec![vec![1.0], vec![2.0]];
        let mut g = vec![0.0; 8];
        let v = softmax_objective(&[0.0; 8], &mut g, &xs, &[0, 1], 4, 1);
        assert!((v - 4f64.ln()).abs() < 1e-12);
    }
}
