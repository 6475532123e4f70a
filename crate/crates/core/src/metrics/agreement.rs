use serde::{Deserialize, Serialize};

use super::MetricError;

/// Bland–Altman agreement between paired measurements, differences `y − x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgreementStats {
    pub n: usize,
    pub bias: f64,
    /// Sample standard deviation of the differences (n − 1 denominator).
    pub sd: f64,
    pub loa_low: f64,
    pub loa_high: f64,
    /// Absent when either series has zero variance.
    pub pearson_r: Option<f64>,
}

const LOA_Z: f64 = 1.96;

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn bland_altman(x: &[f64], y: &[f64]) -> Result<AgreementStats, MetricError> {
    if x.len() != y.len() {
        return Err(MetricError::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < 3 {
        return Err(MetricError::TooFewSamples {
            needed: 3,
            found: x.len(),
        });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(MetricError::InvalidInput("non-finite value".into()));
    }
    let d: Vec<f64> = x.iter().zip(y).map(|(a, b)| b - a).collect();
    let bias = mean(&d);
    let sd = (d.iter().map(|v| (v - bias).powi(2)).sum::<f64>() / (d.len() - 1) as f64).sqrt();
    Ok(AgreementStats {
        n: d.len(),
        bias,
        sd,
        loa_low: bias - LOA_Z * sd,
        loa_high: bias + LOA_Z * sd,
        pearson_r: pearson(x, y),
    })
}

/// Pearson correlation; `None` for mismatched lengths, fewer than two
/// points, or zero variance in either series.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Cohort summary in the "mean ± SD" style.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub n: usize,
    pub mean: f64,
    /// Sample SD; absent for a single value.
    pub sd: Option<f64>,
}

pub fn mean_sd(values: &[f64]) -> Option<MeanSd> {
    if values.is_empty() {
        return None;
    }
    let m = mean(values);
    let sd = (values.len() > 1)
        .then(|| (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (values.len() - 1) as f64).sqrt());
    Some(MeanSd {
        n: values.len(),
        mean: m,
        sd,
    })
}

impl std::fmt::Display for MeanSd {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let prec = f.precision().unwrap_or(2);
        match self.sd {
            Some(sd) => write!(f, "{:.prec$} ± {:.prec$}", self.mean, sd),
            None => write!(f, "{:.prec$}", self.mean),
        }
    }
}
