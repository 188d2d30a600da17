//! Ghost-variable importance, its debiasing and null bands, and Kendall's τ-b.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{ColumnKind, Dataset};
use crate::error::{Result, TrustError};
use crate::linalg::{least_squares, mean, quantile_sorted, sample_variance, Matrix};
use crate::tree::{grow, Frame, TrainConfig, TrustModel};

/// Floor applied to denominators of MSE ratios.
pub const MSE_FLOOR: f64 = 1e-12;

const GHOST_RIDGE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceConfig {
    pub replications: usize,
    /// Contaminating noise variance is `contamination / var(y)`.
    pub contamination: f64,
    /// Null-band quantile a debiased score must exceed to be significant.
    pub level: f64,
    pub seed: u64,
}

impl Default for ImportanceConfig {
    fn default() -> Self {
        ImportanceConfig {
            replications: 100,
            contamination: 1.0,
            level: 0.95,
            seed: 123,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TauSign {
    #[serde(rename = "+")]
    Positive,
    #[serde(rename = "-")]
    Negative,
    #[serde(rename = "0")]
    Zero,
}

impl TauSign {
    pub fn of(tau: f64) -> TauSign {
        if tau > 0.0 {
            TauSign::Positive
        } else if tau < 0.0 {
            TauSign::Negative
        } else {
            TauSign::Zero
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            TauSign::Positive => "+",
            TauSign::Negative => "-",
            TauSign::Zero => "0",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullQuantiles {
    pub q90: f64,
    pub q95: f64,
    pub q99: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureImportance {
    pub feature: String,
    pub raw_score: f64,
    pub debiased_score: f64,
    pub null_quantiles: NullQuantiles,
    pub significant: bool,
    pub tau: f64,
    pub tau_sign: TauSign,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub features: Vec<FeatureImportance>,
    pub replications: usize,
    pub level: f64,
    /// The model fits the data exactly, so scores are relative to the MSE floor.
    pub degenerate: bool,
}

/// Fitted values of an OLS regression of column `j` on all other columns.
///
/// With a single column this is the column mean. A tiny ridge is used only
/// when the other columns are collinear.
pub fn ghost_column(x: &Matrix, j: usize) -> Vec<f64> {
    let others: Vec<usize> = (0..x.ncols()).filter(|&k| k != j).collect();
    ghost_from(x, &x.column(j), &others)
}

fn ghost_from(x: &Matrix, target: &[f64], others: &[usize]) -> Vec<f64> {
    let n = x.nrows();
    if others.is_empty() || n == 0 {
        return vec![mean(target); n];
    }
    let z = x.select_columns(others);
    let fit = least_squares(&z, target, 0.0).or_else(|| least_squares(&z, target, GHOST_RIDGE));
    match fit {
        Some((b0, b)) => (0..n).map(|i| b0 + crate::linalg::dot(z.row(i), &b)).collect(),
        None => vec![mean(target); n],
    }
}

/// Raw features with column `j` replaced by its ghost.
fn ghost_frame(model: &TrustModel, frame: &Frame, x: &Matrix, j: usize) -> Frame {
    let offs = model.schema.offsets();
    let w = model.schema.width(j);
    let others: Vec<usize> = (0..x.ncols()).filter(|&k| k < offs[j] || k >= offs[j] + w).collect();
    let mut out = frame.clone();
    match model.schema.features[j].kind {
        ColumnKind::Numeric => {
            out.columns[j] = ghost_from(x, &x.column(offs[j]), &others);
        }
        ColumnKind::Categorical => {
            if w == 0 {
                return out;
            }
            let fitted: Vec<Vec<f64>> = (0..w).map(|l| ghost_from(x, &x.column(offs[j] + l), &others)).collect();
            out.columns[j] = (0..frame.n_rows)
                .map(|i| {
                    let mut best = 0;
                    for l in 1..w {
                        if fitted[l][i] > fitted[best][i] {
                            best = l;
                        }
                    }
                    best as f64
                })
                .collect();
        }
    }
    out
}

fn mse(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v).powi(2)).sum::<f64>() / a.len().max(1) as f64
}

/// Ghost MSE ratios plus a flag set when the base MSE hit the floor.
pub fn ghost_scores_flagged(model: &TrustModel, data: &Dataset) -> Result<(Vec<f64>, bool)> {
    let y = data.y()?;
    if data.n_rows == 0 {
        return Err(TrustError::EmptyDataset);
    }
    let frame = model.frame(data)?;
    let x = model.schema.encode(&frame, &model.impute);
    let base = mse(&model.predict_frame(&frame), y);
    let degenerate = base < MSE_FLOOR;
    if degenerate {
        log::warn!("model fits the data exactly; ghost scores use an MSE floor of {MSE_FLOOR}");
    }
    let denom = base.max(MSE_FLOOR);
    let scores = (0..model.schema.n_raw())
        .into_par_iter()
        .map(|j| {
            let g = ghost_frame(model, &frame, &x, j);
            mse(&model.predict_frame(&g), y) / denom
        })
        .collect();
    Ok((scores, degenerate))
}

/// Per-feature ratio of the MSE with the feature replaced by its ghost to the original MSE.
pub fn ghost_scores(model: &TrustModel, data: &Dataset) -> Result<Vec<f64>> {
    ghost_scores_flagged(model, data).map(|(s, _)| s)
}

/// Permutes `y` and adds N(0, c / var(y)) noise.
pub fn contaminate_response_with(y: &[f64], c: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = y.to_vec();
    out.shuffle(&mut rng);
    let var = sample_variance(y);
    if !(var > 0.0) {
        log::warn!("response has zero variance; contamination only permutes it");
        return out;
    }
    let sd = (c / var).sqrt();
    for v in &mut out {
        let z: f64 = rng.sample(StandardNormal);
        *v += sd * z;
    }
    out
}

pub fn contaminate_response(y: &[f64], seed: u64) -> Vec<f64> {
    contaminate_response_with(y, 1.0, seed)
}

/// Splits one seed into independent streams.
pub(crate) fn stream_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn contaminated_scores(config: &TrainConfig, data: &Dataset, y: &[f64], c: f64, seed: u64) -> Result<Vec<f64>> {
    let yc = contaminate_response_with(y, c, seed);
    let dc = data.with_target(yc);
    let model = grow(&dc, config)?;
    ghost_scores(&model, &dc)
}

fn divide(raw: &[f64], by: &[f64]) -> Vec<f64> {
    raw.iter().zip(by).map(|(r, c)| r / c.max(MSE_FLOOR)).collect()
}

/// Divides raw scores by those of a model retrained on a contaminated response.
pub fn debias_scores(config: &TrainConfig, data: &Dataset, raw: &[f64], seed: u64) -> Result<Vec<f64>> {
    debias_scores_with(config, data, raw, 1.0, seed)
}

pub fn debias_scores_with(config: &TrainConfig, data: &Dataset, raw: &[f64], c: f64, seed: u64) -> Result<Vec<f64>> {
    let y = data.y()?;
    let cont = contaminated_scores(config, data, y, c, seed)?;
    if cont.len() != raw.len() {
        return Err(TrustError::invalid("raw scores do not match the feature count"));
    }
    Ok(divide(raw, &cont))
}

/// Debiased scores under replicated null responses (replication `r` uses
/// seed `seed + r`).
pub fn null_scores(
    config: &TrainConfig,
    data: &Dataset,
    replications: usize,
    c: f64,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let y = data.y()?;
    (0..replications as u64)
        .into_par_iter()
        .map(|r| {
            let s = seed.wrapping_add(r);
            let y0 = contaminate_response_with(y, c, stream_seed(s, 1));
            let d0 = data.with_target(y0.clone());
            let raw = ghost_scores(&grow(&d0, config)?, &d0)?;
            let cont = contaminated_scores(config, &d0, &y0, c, stream_seed(s, 2))?;
            Ok(divide(&raw, &cont))
        })
        .collect()
}

/// Per-feature q90 / q95 / q99 of the null debiased scores.
pub fn null_band(config: &TrainConfig, data: &Dataset, replications: usize, seed: u64) -> Result<Vec<NullQuantiles>> {
    let reps = null_scores(config, data, replications, 1.0, seed)?;
    Ok(band_from(&reps, data.n_features()))
}

fn band_from(reps: &[Vec<f64>], p: usize) -> Vec<NullQuantiles> {
    (0..p)
        .map(|j| {
            let mut v: Vec<f64> = reps.iter().map(|r| r[j]).collect();
            v.sort_by(f64::total_cmp);
            NullQuantiles {
                q90: quantile_sorted(&v, 0.90),
                q95: quantile_sorted(&v, 0.95),
                q99: quantile_sorted(&v, 0.99),
            }
        })
        .collect()
}

/// Full importance pipeline for a trained model.
pub fn importance_report(model: &TrustModel, data: &Dataset, cfg: &ImportanceConfig) -> Result<ImportanceReport> {
    if cfg.replications < 1 {
        return Err(TrustError::invalid("at least one null replication is required"));
    }
    if !(cfg.level > 0.0 && cfg.level < 1.0) {
        return Err(TrustError::invalid("significance level must lie in (0, 1)"));
    }
    let y = data.y()?;
    let (raw, degenerate) = ghost_scores_flagged(model, data)?;
    let debiased = debias_scores_with(&model.config, data, &raw, cfg.contamination, stream_seed(cfg.seed, 0))?;
    let reps = null_scores(&model.config, data, cfg.replications, cfg.contamination, cfg.seed)?;
    let bands = band_from(&reps, raw.len());
    let frame = model.frame(data)?;
    let features = (0..raw.len())
        .map(|j| {
            let spec = &model.schema.features[j];
            let tau = if spec.kind == ColumnKind::Numeric {
                let (xs, ys): (Vec<f64>, Vec<f64>) = frame.columns[j]
                    .iter()
                    .zip(y)
                    .filter(|(v, _)| !v.is_nan())
                    .map(|(v, t)| (*v, *t))
                    .unzip();
                if xs.len() >= 2 {
                    kendall_tau(&xs, &ys).tau
                } else {
                    0.0
                }
            } else {
                0.0
            };
            let mut col: Vec<f64> = reps.iter().map(|r| r[j]).collect();
            col.sort_by(f64::total_cmp);
            let threshold = quantile_sorted(&col, cfg.level);
            FeatureImportance {
                feature: spec.name.clone(),
                raw_score: raw[j],
                debiased_score: debiased[j],
                null_quantiles: bands[j].clone(),
                significant: debiased[j] > threshold,
                tau,
                tau_sign: TauSign::of(tau),
            }
        })
        .collect();
    Ok(ImportanceReport {
        features,
        replications: cfg.replications,
        level: cfg.level,
        degenerate,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KendallTau {
    pub tau: f64,
    /// One of the inputs is constant, so τ-b is undefined and reported as 0.
    pub all_tied: bool,
}

/// Tie-corrected Kendall τ-b in O(n log n).
pub fn kendall_tau(x: &[f64], y: &[f64]) -> KendallTau {
    assert_eq!(x.len(), y.len(), "kendall_tau inputs differ in length");
    let n = x.len();
    let pairs = |t: u64| t * t.saturating_sub(1) / 2;
    let n0 = pairs(n as u64);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(y[a].total_cmp(&y[b])));

    let (mut n1, mut n3) = (0u64, 0u64);
    let (mut tx, mut txy) = (1u64, 1u64);
    for w in 1..=n {
        let same_x = w < n && x[idx[w]] == x[idx[w - 1]];
        let same_xy = same_x && y[idx[w]] == y[idx[w - 1]];
        if same_x {
            tx += 1;
        } else {
            n1 += pairs(tx);
            tx = 1;
        }
        if same_xy {
            txy += 1;
        } else {
            n3 += pairs(txy);
            txy = 1;
        }
    }

    let mut ys: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
    let swaps = merge_count(&mut ys);
    let mut n2 = 0u64;
    let mut ty = 1u64;
    for w in 1..=n {
        if w < n && ys[w] == ys[w - 1] {
            ty += 1;
        } else {
            n2 += pairs(ty);
            ty = 1;
        }
    }
    let denom = ((n0 - n1) as f64) * ((n0 - n2) as f64);
    if n < 2 || denom == 0.0 {
        return KendallTau {
            tau: 0.0,
            all_tied: true,
        };
    }
    let num = n0 as f64 - n1 as f64 - n2 as f64 + n3 as f64 - 2.0 * swaps as f64;
    KendallTau {
        tau: (num / denom.sqrt()).clamp(-1.0, 1.0),
        all_tied: false,
    }
}

/// Sorts in place and returns the number of inversions.
fn merge_count(v: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut count = merge_count(&mut v[..mid]) + merge_count(&mut v[mid..]);
    let mut merged = Vec::with_capacity(n);
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if v[j] < v[i] {
            merged.push(v[j]);
            count += (mid - i) as u64;
            j += 1;
        } else {
            merged.push(v[i]);
            i += 1;
        }
    }
    merged.extend_from_slice(&v[i..mid]);
    merged.extend_from_slice(&v[j..n]);
    v.copy_from_slice(&merged);
    count
}
