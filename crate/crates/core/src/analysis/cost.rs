use serde::Serialize;

use crate::error::{Error, Result};

/// Cost of producing additive influence for every (train, test) pair.
///
/// * actual-loss additive fit: one loss reduction (two loss evaluations) per
///   training example per test example, `2·n·m·V_L`;
/// * TracIn-CP: one cached gradient per train and test example per
///   checkpoint, `(n + m)·K·V_G`;
/// * linear fit: twice the additive cost (two weights per example).
///
/// With `V_G = 2·V_L` the two additive routes cost the same at
/// `K = C* = n·m/(n + m)` checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostReport {
    pub n: f64,
    pub m: f64,
    pub checkpoints: f64,
    pub loss_cost: f64,
    pub gradient_cost: f64,
    pub additive_cost: f64,
    pub multiplicative_cost: f64,
    pub linear_cost: f64,
    pub tracin_cp_cost: f64,
    pub crossover_checkpoints: f64,
}

pub fn cost_model(n: f64, m: f64, checkpoints: f64, loss_cost: f64, gradient_cost: f64) -> Result<CostReport> {
    for (name, v) in [("n", n), ("m", m), ("K", checkpoints), ("V_L", loss_cost), ("V_G", gradient_cost)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::Config(format!("{name} must be positive, got {v}")));
        }
    }
    let additive_cost = 2.0 * n * m * loss_cost;
    Ok(CostReport {
        n,
        m,
        checkpoints,
        loss_cost,
        gradient_cost,
        additive_cost,
        multiplicative_cost: additive_cost,
        linear_cost: 2.0 * additive_cost,
        tracin_cp_cost: (n + m) * checkpoints * gradient_cost,
        crossover_checkpoints: n * m / (n + m),
    })
}

impl CostReport {
    pub fn to_table(&self) -> String {
        format!(
            "n = {}, m = {}, K = {}, V_L = {}, V_G = {}\n\
             additive (actual losses)  {:>14.4}\n\
             multiplicative            {:>14.4}\n\
             linear                    {:>14.4}\n\
             tracin-cp                 {:>14.4}\n\
             crossover C* = nm/(n+m)   {:>14.4}\n",
            self.n,
            self.m,
            self.checkpoints,
            self.loss_cost,
            self.gradient_cost,
            self.additive_cost,
            self.multiplicative_cost,
            self.linear_cost,
            self.tracin_cp_cost,
            self.crossover_checkpoints
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crossover_examples() {
        assert_eq!(cost_model(8.0, 8.0, 1.0, 1.0, 2.0).unwrap().crossover_checkpoints, 4.0);
        let r = cost_model(10_000.0, 10.0, 1.0, 1.0, 2.0).unwrap();
        assert!((r.crossover_checkpoints - 9.99).abs() < 1e-3);
        assert!(cost_model(0.0, 1.0, 1.0, 1.0, 1.0).is_err());
    }
}
