use serde::{Deserialize, Serialize};

use super::proportion::SystemProportion;
use super::EstimatorError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorComparison {
    pub n: usize,
    pub pearson_r: f64,
    pub max_abs_deviation: f64,
}

/// Pearson correlation via centered sums.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, EstimatorError> {
    if x.len() != y.len() || x.len() < 3 {
        return Err(EstimatorError::BadLengths(x.len(), y.len()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 {
        return Err(EstimatorError::ZeroVariance("first sequence"));
    }
    if syy == 0.0 {
        return Err(EstimatorError::ZeroVariance("second sequence"));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

pub fn compare_estimators(loss_based: &[SystemProportion], worklang_based: &[SystemProportion]) -> Result<EstimatorComparison, EstimatorError> {
    let x: Vec<f64> = loss_based.iter().map(|p| p.value).collect();
    let y: Vec<f64> = worklang_based.iter().map(|p| p.value).collect();
    let r = pearson(&x, &y)?;
    let dev = x.iter().zip(&y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    Ok(EstimatorComparison { n: x.len(), pearson_r: r, max_abs_deviation: dev })
}
