use crate::error::{Error, Result};

/// The scalar `σ = Σ L̂_t·L_t / Σ L̂_t²` minimizing `Σ (σ·L̂_t − L_t)²`, and
/// the rescaled prediction.
pub fn optimal_rescale(predicted: &[f64], actual: &[f64]) -> Result<(f64, Vec<f64>)> {
    if predicted.len() != actual.len() {
        return Err(Error::DimensionMismatch { expected: actual.len(), found: predicted.len() });
    }
    let denom: f64 = predicted.iter().map(|p| p * p).sum();
    if denom == 0.0 {
        return Err(Error::UndefinedScale);
    }
    let sigma = predicted.iter().zip(actual).map(|(p, a)| p * a).sum::<f64>() / denom;
    if !sigma.is_finite() {
        return Err(Error::Numeric("rescale factor overflowed".into()));
    }
    Ok((sigma, predicted.iter().map(|p| sigma * p).collect()))
}
