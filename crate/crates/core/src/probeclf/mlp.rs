use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::math;
use crate::seed::rng_for;

pub const HIDDEN: usize = 100;
const LEARNING_RATE: f64 = 1e-2;
const L2: f64 = 1e-4;
const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

/// One ReLU hidden layer. Outputs are softmax logits (single-label) or
/// independent sigmoid logits (multi-label).
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub dim: usize,
    pub outputs: usize,
    pub multi_label: bool,
    w1: Vec<f64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: Vec<f64>,
}

/// Targets for [`Mlp::fit`].
pub enum Targets<'a> {
    Classes(&'a [usize]),
    /// Row-major `n x outputs` 0/1 matrix.
    Multi(&'a [f64]),
}

impl Mlp {
    fn hidden(&self, x: &[f64]) -> Vec<f64> {
        (0..HIDDEN)
            .map(|j| {
                let z = self.b1[j] + (0..self.dim).map(|i| x[i] * self.w1[i * HIDDEN + j]).sum::<f64>();
                z.max(0.0)
            })
            .collect()
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        let h = self.hidden(x);
        (0..self.outputs)
            .map(|k| self.b2[k] + (0..HIDDEN).map(|j| h[j] * self.w2[j * self.outputs + k]).sum::<f64>())
            .collect()
    }

    /// Full-batch Adam for `iterations` steps from a seeded Glorot-uniform
    /// start.
    pub fn fit(xs: &[Vec<f64>], targets: Targets<'_>, outputs: usize, iterations: usize, seed: u64) -> Mlp {
        let dim = xs.first().map_or(0, Vec::len);
        let mut rng = rng_for(seed, "mlp-probe");
        let mut glorot = |fan_in: usize, fan_out: usize| -> Vec<f64> {
            let a = math::sqrt(6.0 / (fan_in + fan_out) as f64);
            (0..fan_in * fan_out).map(|_| rng.gen_range(-a..a)).collect()
        };
        let mut m = Mlp {
            dim,
            outputs,
            multi_label: matches!(targets, Targets::Multi(_)),
            w1: glorot(dim, HIDDEN),
            b1: vec![0.0; HIDDEN],
            w2: glorot(HIDDEN, outputs),
            b2: vec![0.0; outputs],
        };
        let sizes = [m.w1.len(), m.b1.len(), m.w2.len(), m.b2.len()];
        let total: usize = sizes.iter().sum();
        let mut mom = vec![0.0; total];
        let mut vel = vec![0.0; total];
        let n = xs.len() as f64;
        for t in 1..=iterations {
            let mut g = vec![0.0; total];
            let (gw1, rest) = g.split_at_mut(sizes[0]);
            let (gb1, rest) = rest.split_at_mut(sizes[1]);
            let (gw2, gb2) = rest.split_at_mut(sizes[2]);
            for (row, x) in xs.iter().enumerate() {
                let h = m.hidden(x);
                let z: Vec<f64> = (0..outputs)
                    .map(|k| m.b2[k] + (0..HIDDEN).map(|j| h[j] * m.w2[j * outputs + k]).sum::<f64>())
                    .collect();
                let dz: Vec<f64> = match &targets {
                    Targets::Classes(ys) => {
                        let mx = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                        let s: f64 = z.iter().map(|v| math::exp(v - mx)).sum();
                        (0..outputs)
                            .map(|k| math::exp(z[k] - mx) / s - if k == ys[row] { 1.0 } else { 0.0 })
                            .collect()
                    }
                    Targets::Multi(ys) => (0..outputs).map(|k| math::sigmoid(z[k]) - ys[row * outputs + k]).collect(),
                };
                for k in 0..outputs {
                    gb2[k] += dz[k] / n;
                }
                for j in 0..HIDDEN {
                    if h[j] <= 0.0 {
                        continue;
                    }
                    let mut dh = 0.0;
                    for k in 0..outputs {
                        gw2[j * outputs + k] += h[j] * dz[k] / n;
                        dh += m.w2[j * outputs + k] * dz[k];
                    }
                    gb1[j] += dh / n;
                    for i in 0..dim {
                        gw1[i * HIDDEN + j] += x[i] * dh / n;
                    }
                }
            }
            for (gi, wi) in gw1.iter_mut().zip(&m.w1) {
                *gi += L2 * wi / n;
            }
            for (gi, wi) in gw2.iter_mut().zip(&m.w2) {
                *gi += L2 * wi / n;
            }
            let c1 = 1.0 - math::pow(BETA1, t as f64);
            let c2 = 1.0 - math::pow(BETA2, t as f64);
            let params = m.w1.iter_mut().chain(m.b1.iter_mut()).chain(m.w2.iter_mut()).chain(m.b2.iter_mut());
            for (((p, gi), mi), vi) in params.zip(&g).zip(mom.iter_mut()).zip(vel.iter_mut()) {
                *mi = BETA1 * *mi + (1.0 - BETA1) * gi;
                *vi = BETA2 * *vi + (1.0 - BETA2) * gi * gi;
                *p -= LEARNING_RATE * (*mi / c1) / (math::sqrt(*vi / c2) + EPS);
            }
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn learns_xor() {
        let xs = vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]];
        let ys = [0usize, 1, 1, 0];
        let m = Mlp::fit(&xs, Targets::Classes(&ys), 2, 250, 3);
        for (x, y) in xs.iter().zip(ys) {
            let l = m.logits(x);
            assert_eq!(usize::from(l[1] > l[0]), y);
        }
    }
}
