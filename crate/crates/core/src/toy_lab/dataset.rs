use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use super::rng::stream_rng;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub features: Vec<f64>,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub train: usize,
    pub test: usize,
    pub dim: usize,
    pub classes: usize,
    /// Standard deviation of the class means around the origin.
    pub separation: f64,
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig { train: 100, test: 20, dim: 8, classes: 3, separation: 1.0, seed: 0 }
    }
}

/// Gaussian-mixture classification data: class means drawn once from
/// `N(0, separation²·I)`, each example `x = μ_y + N(0, I)` with a uniform
/// label.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyDataset {
    pub config: DatasetConfig,
    pub train: Vec<Example>,
    pub test: Vec<Example>,
}

impl ToyDataset {
    pub fn generate(config: &DatasetConfig) -> Result<Self> {
        if config.dim == 0 || config.classes < 2 {
            return Err(Error::Config("dataset needs dim ≥ 1 and at least 2 classes".into()));
        }
        if !(config.separation.is_finite() && config.separation >= 0.0) {
            return Err(Error::Config("separation must be finite and nonnegative".into()));
        }
        let mut rng = stream_rng(config.seed, 0);
        let unit = Normal::new(0.0, 1.0).expect("unit normal");
        let means: Vec<Vec<f64>> = (0..config.classes)
            .map(|_| (0..config.dim).map(|_| config.separation * unit.sample(&mut rng)).collect())
            .collect();
        let labels = Uniform::new(0, config.classes).expect("nonempty label range");
        let mut draw = |count: usize| -> Vec<Example> {
            (0..count)
                .map(|_| {
                    let label = labels.sample(&mut rng);
                    let features = means[label].iter().map(|m| m + unit.sample(&mut rng)).collect();
                    Example { features, label }
                })
                .collect()
        };
        let train = draw(config.train);
        let test = draw(config.test);
        Ok(ToyDataset { config: config.clone(), train, test })
    }
}
