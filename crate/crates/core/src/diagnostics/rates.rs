use crate::error::DiagnosticsError;

pub const MIN_FIT_LEN: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateModel {
    /// `c_k ≈ C k^p`
    Power,
    /// `c_k ≈ C q^k`
    Geometric,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    pub model: RateModel,
    /// Exponent `p` (power) or ratio `q` (geometric).
    pub rate: f64,
    /// Slope of the log-linear fit.
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: usize,
}

/// Least-squares fit of `ln c_k` on the last half of the series. Indices are
/// 1-based so `c_k = 1/k` fits an exponent of exactly -1.
pub fn rate_fit(series: &[f64], model: RateModel) -> Result<RateFit, DiagnosticsError> {
    if series.len() < MIN_FIT_LEN {
        return Err(DiagnosticsError::TooShort { len: series.len(), min: MIN_FIT_LEN });
    }
    if let Some((index, &value)) = series.iter().enumerate().find(|(_, v)| !(**v > 0.0) || !v.is_finite()) {
        return Err(DiagnosticsError::NonPositive { index, value });
    }
    let start = series.len() / 2;
    let pts: Vec<(f64, f64)> = (start..series.len())
        .map(|i| {
            let k = (i + 1) as f64;
            let x = match model {
                RateModel::Power => k.ln(),
                RateModel::Geometric => k,
            };
            (x, series[i].ln())
        })
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let ss_res: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let r_squared = if ss_tot <= f64::EPSILON * f64::EPSILON * n { 1.0 } else { 1.0 - ss_res / ss_tot };
    let rate = match model {
        RateModel::Power => slope,
        RateModel::Geometric => slope.exp(),
    };
    Ok(RateFit { model, rate, slope, intercept, r_squared, points: pts.len() })
}

/// `min_{j ≤ k} r_j² · (k + 1)` for every `k`.
pub fn running_best_scaled(residuals: &[f64]) -> Vec<f64> {
    let mut best = f64::INFINITY;
    residuals
        .iter()
        .enumerate()
        .map(|(k, r)| {
            best = best.min(r * r);
            best * (k + 1) as f64
        })
        .collect()
}
