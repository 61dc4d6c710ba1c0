//! Small numeric kernels: Spearman correlation, two-sample KS test,
//! nearest-rank percentiles, z-scores and EWMA.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {needed} values, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("correlation undefined: zero rank variance")]
    ZeroVariance,
    #[error("empty input")]
    Empty,
    #[error("non-finite value in input")]
    NonFinite,
}

/// Coefficient c(alpha) of the asymptotic two-sample KS critical value at alpha = 0.05.
pub const KS_C_ALPHA_05: f64 = 1.358;

/// Average (fractional) ranks, 1-based. Ties share the mean of their span.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        // positions i..j (0-based) hold ranks i+1..=j
        let avg = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = avg;
        }
        i = j;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(StatsError::ZeroVariance);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Spearman's rank correlation: Pearson correlation of average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(StatsError::TooShort {
            needed: 2,
            got: x.len(),
        });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    pearson(&average_ranks(x), &average_ranks(y))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub critical_value: f64,
    pub reject: bool,
}

/// Two-sample Kolmogorov-Smirnov statistic: sup |ECDF_a - ECDF_b|.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> Result<f64, StatsError> {
    if a.is_empty() || b.is_empty() {
        return Err(StatsError::Empty);
    }
    if a.iter().chain(b).any(|v| v.is_nan()) {
        return Err(StatsError::NonFinite);
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    Ok(d)
}

/// Asymptotic two-sample critical value `c(alpha) * sqrt((n+m)/(n*m))`.
pub fn ks_critical_value(c_alpha: f64, n: usize, m: usize) -> f64 {
    let (n, m) = (n as f64, m as f64);
    c_alpha * ((n + m) / (n * m)).sqrt()
}

/// c(alpha) = sqrt(-ln(alpha/2) / 2); at alpha = 0.05 this is the tabulated 1.358.
pub fn ks_c_alpha(alpha: f64) -> f64 {
    if (alpha - 0.05).abs() < 1e-12 {
        KS_C_ALPHA_05
    } else {
        (-(alpha / 2.0).ln() / 2.0).sqrt()
    }
}

pub fn ks_two_sample(a: &[f64], b: &[f64], alpha: f64) -> Result<KsResult, StatsError> {
    let statistic = ks_statistic(a, b)?;
    let critical_value = ks_critical_value(ks_c_alpha(alpha), a.len(), b.len());
    Ok(KsResult {
        statistic,
        critical_value,
        reject: statistic > critical_value,
    })
}

/// Nearest-rank percentile: the `ceil(p*n)`-th smallest value (at least the first).
pub fn percentile(values: &[f64], p: f64) -> Result<f64, StatsError> {
    if values.is_empty() {
        return Err(StatsError::Empty);
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    // the tolerance keeps e.g. 0.07 * 100 = 7.000000000000001 at rank 7
    let rank = (p.clamp(0.0, 1.0) * v.len() as f64 - 1e-9).ceil() as usize;
    Ok(v[rank.clamp(1, v.len()) - 1])
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZScores {
    pub values: Vec<f64>,
    /// Set when the population standard deviation is zero (all outputs are 0).
    pub degenerate: bool,
}

/// Elementwise `(v - mean) / sd` with the population standard deviation.
pub fn zscores(values: &[f64]) -> ZScores {
    let n = values.len();
    if n < 2 {
        return ZScores {
            values: vec![0.0; n],
            degenerate: true,
        };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    let sd = var.sqrt();
    if sd == 0.0 || !sd.is_finite() || sd <= f64::EPSILON * mean.abs() {
        return ZScores {
            values: vec![0.0; n],
            degenerate: true,
        };
    }
    ZScores {
        values: values.iter().map(|v| (v - mean) / sd).collect(),
        degenerate: false,
    }
}

/// Smoothing factor for a window of length `w`.
pub fn ewma_alpha(window: usize) -> f64 {
    2.0 / (window as f64 + 1.0)
}

/// Exponentially weighted moving average of `values`, seeded with the
/// first value. Returns the final smoothed value.
pub fn ewma(values: &[f64], alpha: f64) -> Option<f64> {
    let (first, rest) = values.split_first()?;
    Some(rest.iter().fold(*first, |s, x| alpha * x + (1.0 - alpha) * s))
}
