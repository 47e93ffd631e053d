use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::dataset::Example;

/// Multinomial softmax regression with an optional L2 term folded into the
/// per-example loss:
/// `L(z, θ) = −log softmax(Wx + b)_y + (l2/2)·‖θ‖²`.
///
/// `θ` is laid out class-major: for class `c`, `dim` weights then the bias.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToyModel {
    pub dim: usize,
    pub classes: usize,
    pub l2: f64,
}

impl ToyModel {
    pub fn param_count(&self) -> usize {
        self.classes * (self.dim + 1)
    }

    pub fn zeros(&self) -> Vec<f64> {
        vec![0.0; self.param_count()]
    }

    fn row(&self) -> usize {
        self.dim + 1
    }

    pub fn probabilities(&self, theta: &[f64], x: &[f64]) -> Vec<f64> {
        let r = self.row();
        let logits: Vec<f64> = (0..self.classes)
            .map(|c| {
                let w = &theta[c * r..(c + 1) * r];
                w[..self.dim].iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + w[self.dim]
            })
            .collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        exps.into_iter().map(|e| e / total).collect()
    }

    fn l2_term(&self, theta: &[f64]) -> f64 {
        if self.l2 == 0.0 {
            0.0
        } else {
            0.5 * self.l2 * theta.iter().map(|t| t * t).sum::<f64>()
        }
    }

    pub fn loss(&self, theta: &[f64], ex: &Example) -> f64 {
        let r = self.row();
        let logits: Vec<f64> = (0..self.classes)
            .map(|c| {
                let w = &theta[c * r..(c + 1) * r];
                w[..self.dim].iter().zip(&ex.features).map(|(a, b)| a * b).sum::<f64>() + w[self.dim]
            })
            .collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let log_sum = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
        log_sum - logits[ex.label] + self.l2_term(theta)
    }

    pub fn gradient(&self, theta: &[f64], ex: &Example) -> Vec<f64> {
        let r = self.row();
        let p = self.probabilities(theta, &ex.features);
        let mut g = vec![0.0; self.param_count()];
        for c in 0..self.classes {
            let coef = p[c] - if c == ex.label { 1.0 } else { 0.0 };
            let block = &mut g[c * r..(c + 1) * r];
            for (gj, xj) in block.iter_mut().zip(&ex.features) {
                *gj = coef * xj;
            }
            block[self.dim] = coef;
        }
        if self.l2 != 0.0 {
            for (gj, tj) in g.iter_mut().zip(theta) {
                *gj += self.l2 * tj;
            }
        }
        g
    }

    /// `(diag(p) − ppᵀ) ⊗ x̃x̃ᵀ + l2·I`, with `x̃ = (x, 1)`.
    pub fn hessian(&self, theta: &[f64], ex: &Example) -> DMatrix<f64> {
        let r = self.row();
        let p = self.probabilities(theta, &ex.features);
        let mut xt = ex.features.clone();
        xt.push(1.0);
        let size = self.param_count();
        let mut h = DMatrix::zeros(size, size);
        for c in 0..self.classes {
            for d in 0..self.classes {
                let s = if c == d { p[c] - p[c] * p[d] } else { -p[c] * p[d] };
                for a in 0..r {
                    for b in 0..r {
                        h[(c * r + a, d * r + b)] = s * xt[a] * xt[b];
                    }
                }
            }
        }
        for i in 0..size {
            h[(i, i)] += self.l2;
        }
        h
    }

    pub fn mean_gradient(&self, theta: &[f64], batch: &[&Example]) -> Vec<f64> {
        let mut g = vec![0.0; self.param_count()];
        for ex in batch {
            for (a, b) in g.iter_mut().zip(self.gradient(theta, ex)) {
                *a += b;
            }
        }
        let k = batch.len() as f64;
        g.iter_mut().for_each(|v| *v /= k);
        g
    }

    pub fn mean_hessian(&self, theta: &[f64], examples: &[&Example]) -> DMatrix<f64> {
        let size = self.param_count();
        let mut h = DMatrix::zeros(size, size);
        for ex in examples {
            h += self.hessian(theta, ex);
        }
        h / examples.len() as f64
    }

    /// One vanilla SGD step on the mean batch gradient.
    pub fn sgd_step(&self, theta: &[f64], batch: &[&Example], eta: f64) -> Vec<f64> {
        let g = self.mean_gradient(theta, batch);
        theta.iter().zip(g).map(|(t, g)| t - eta * g).collect()
    }

    /// Minimizes the mean loss over `examples` with damped Newton steps.
    /// Requires `l2 > 0` for a unique minimizer.
    pub fn minimize(&self, examples: &[&Example], start: &[f64], tol: f64, max_iter: usize) -> Vec<f64> {
        let mean_loss =
            |theta: &[f64]| examples.iter().map(|e| self.loss(theta, e)).sum::<f64>() / examples.len() as f64;
        let mut theta = start.to_vec();
        for _ in 0..max_iter {
            let g = DVector::from_vec(self.mean_gradient(&theta, examples));
            if g.norm() < tol {
                break;
            }
            let h = self.mean_hessian(&theta, examples);
            let Some(chol) = h.cholesky() else { break };
            let step = chol.solve(&g);
            let current = mean_loss(&theta);
            let mut scale = 1.0;
            loop {
                let candidate: Vec<f64> = theta.iter().zip(step.iter()).map(|(t, s)| t - scale * s).collect();
                if mean_loss(&candidate) <= current || scale < 1e-8 {
                    theta = candidate;
                    break;
                }
                scale *= 0.5;
            }
        }
        theta
    }
}
