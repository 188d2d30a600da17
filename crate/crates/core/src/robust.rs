//! Out-of-distribution scoring with a median-centered Mahalanobis distance,
//! plus per-feature range-breach reports.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Result, TrustError};
use crate::linalg::{median, Cholesky, Matrix};

/// Default chi-squared quantile used for the distance cutoff.
pub const DEFAULT_OOD_QUANTILE: f64 = 0.999;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OodStats {
    pub center: Vec<f64>,
    pub covariance: Matrix,
    pub precision: Matrix,
    /// Ridge added to the covariance diagonal (zero when it was not needed).
    pub ridge: f64,
    pub quantile: f64,
    pub threshold: f64,
    pub feature_min: Vec<f64>,
    pub feature_max: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BreachDirection {
    Below,
    Above,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Breach {
    pub feature: usize,
    pub direction: BreachDirection,
    pub breach_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OodReport {
    pub distance: f64,
    pub is_ood: bool,
    pub breaches: Vec<Breach>,
}

/// Fits OOD statistics on a complete numeric matrix.
///
/// The covariance is the usual sample covariance. When it is numerically
/// singular, `1e-6 × mean diagonal` is added to its diagonal before inversion.
pub fn fit_ood_stats(x: &Matrix, quantile: f64) -> Result<OodStats> {
    let n = x.nrows();
    let p = x.ncols();
    if n < 2 {
        return Err(TrustError::invalid("OOD statistics need at least 2 rows"));
    }
    if !(quantile > 0.0 && quantile < 1.0) {
        return Err(TrustError::invalid("OOD quantile must lie in (0, 1)"));
    }
    if !x.is_finite() {
        return Err(TrustError::NonFinite("OOD training matrix"));
    }
    let cols: Vec<Vec<f64>> = (0..p).map(|j| x.column(j)).collect();
    let center: Vec<f64> = cols.iter().map(|c| median(c)).collect();
    let means: Vec<f64> = cols.iter().map(|c| c.iter().sum::<f64>() / n as f64).collect();
    let feature_min = cols
        .iter()
        .map(|c| c.iter().copied().fold(f64::INFINITY, f64::min))
        .collect();
    let feature_max = cols
        .iter()
        .map(|c| c.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect();

    let mut cov = Matrix::zeros(p, p);
    for a in 0..p {
        for b in 0..=a {
            let s: f64 = cols[a]
                .iter()
                .zip(&cols[b])
                .map(|(u, v)| (u - means[a]) * (v - means[b]))
                .sum::<f64>()
                / (n - 1) as f64;
            cov.set(a, b, s);
            cov.set(b, a, s);
        }
    }
    let mean_diag = if p == 0 {
        0.0
    } else {
        (0..p).map(|j| cov.get(j, j)).sum::<f64>() / p as f64
    };
    let scale = if mean_diag > 0.0 { mean_diag } else { 1.0 };
    let (covariance, precision, ridge) = match Cholesky::new(&cov, 1e-10 * scale) {
        Some(ch) => {
            let prec = ch.inverse();
            (cov, prec, 0.0)
        }
        None => {
            let eps = 1e-6 * scale;
            let mut reg = cov;
            for j in 0..p {
                reg.set(j, j, reg.get(j, j) + eps);
            }
            let ch = Cholesky::new(&reg, 0.0)
                .ok_or_else(|| TrustError::Degenerate("covariance not invertible after ridge".into()))?;
            let prec = ch.inverse();
            (reg, prec, eps)
        }
    };
    let threshold = if p == 0 {
        0.0
    } else {
        ChiSquared::new(p as f64)
            .map_err(|e| TrustError::invalid(e.to_string()))?
            .inverse_cdf(quantile)
            .sqrt()
    };
    Ok(OodStats {
        center,
        covariance,
        precision,
        ridge,
        quantile,
        threshold,
        feature_min,
        feature_max,
    })
}

/// `sqrt((x − center)ᵀ · precision · (x − center))`.
pub fn ood_score(x: &[f64], stats: &OodStats) -> Result<f64> {
    let p = stats.center.len();
    if x.len() != p {
        return Err(TrustError::SchemaMismatch(format!(
            "expected {p} features, got {}",
            x.len()
        )));
    }
    let d: Vec<f64> = x.iter().zip(&stats.center).map(|(a, c)| a - c).collect();
    let mut q = 0.0;
    for a in 0..p {
        let row = stats.precision.row(a);
        q += d[a] * row.iter().zip(&d).map(|(u, v)| u * v).sum::<f64>();
    }
    Ok(q.max(0.0).sqrt())
}

/// Features lying outside the training range, with the excess expressed as
/// a percentage of that range (a zero range counts as 1).
pub fn range_breach(x: &[f64], stats: &OodStats) -> Vec<Breach> {
    let mut out = Vec::new();
    for (j, &v) in x.iter().enumerate().take(stats.feature_min.len()) {
        let (lo, hi) = (stats.feature_min[j], stats.feature_max[j]);
        let width = if hi > lo { hi - lo } else { 1.0 };
        if v < lo {
            out.push(Breach {
                feature: j,
                direction: BreachDirection::Below,
                breach_pct: 100.0 * (lo - v) / width,
            });
        } else if v > hi {
            out.push(Breach {
                feature: j,
                direction: BreachDirection::Above,
                breach_pct: 100.0 * (v - hi) / width,
            });
        }
    }
    out
}

pub fn ood_report(x: &[f64], stats: &OodStats) -> Result<OodReport> {
    let distance = ood_score(x, stats)?;
    Ok(OodReport {
        distance,
        is_ood: distance > stats.threshold,
        breaches: range_breach(x, stats),
    })
}
