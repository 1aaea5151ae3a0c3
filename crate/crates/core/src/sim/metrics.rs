use serde::{Deserialize, Serialize};

/// Middle value; mean of the two middle values for even counts.
/// `+∞` sorts last, NaN is not expected.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

/// Translation-error statistics in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ErrorStats {
    pub count: usize,
    pub rmse: f64,
    pub median: f64,
    pub mean: f64,
    /// Population standard deviation.
    pub stdev: f64,
    pub max: f64,
}

impl ErrorStats {
    pub fn from_errors(errors: &[f64]) -> Option<Self> {
        let n = errors.len();
        if n == 0 {
            return None;
        }
        let nf = n as f64;
        let mean = errors.iter().sum::<f64>() / nf;
        let mean_sq = errors.iter().map(|e| e * e).sum::<f64>() / nf;
        let var = errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / nf;
        Some(Self {
            count: n,
            rmse: mean_sq.sqrt(),
            median: median(errors)?,
            mean,
            stdev: var.sqrt(),
            max: errors.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        })
    }
}
