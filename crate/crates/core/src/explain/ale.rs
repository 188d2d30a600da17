//! First-order accumulated local effects.

use serde::{Deserialize, Serialize};

use crate::data::{ColumnKind, Dataset};
use crate::error::{Result, TrustError};
use crate::linalg::quantile_sorted;
use crate::tree::TrustModel;

pub const DEFAULT_ALE_BINS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AleCurve {
    pub feature: usize,
    pub feature_name: String,
    pub bin_edges: Vec<f64>,
    /// Centered effect at each edge.
    pub accumulated_effects: Vec<f64>,
    /// Rows falling in each bin.
    pub bin_counts: Vec<usize>,
}

impl AleCurve {
    /// Piecewise-linear effect at `v`, constant beyond the outer edges.
    pub fn effect_at(&self, v: f64) -> f64 {
        let e = &self.bin_edges;
        let a = &self.accumulated_effects;
        if e.len() == 1 || v <= e[0] {
            return a[0];
        }
        for k in 1..e.len() {
            if v <= e[k] {
                let w = (v - e[k - 1]) / (e[k] - e[k - 1]);
                return a[k - 1] + w * (a[k] - a[k - 1]);
            }
        }
        a[a.len() - 1]
    }
}

fn bin_of(edges: &[f64], v: f64) -> usize {
    // bin k covers (e[k], e[k+1]]; the first bin also takes e[0]
    let k = edges.partition_point(|&e| e < v);
    k.saturating_sub(1).min(edges.len() - 2)
}

/// ALE of a numeric feature over `bins` quantile bins.
pub fn ale_curve(model: &TrustModel, data: &Dataset, feature: usize, bins: usize) -> Result<AleCurve> {
    if bins == 0 {
        return Err(TrustError::invalid("ALE needs at least one bin"));
    }
    let spec = model
        .schema
        .features
        .get(feature)
        .ok_or_else(|| TrustError::invalid(format!("feature index {feature} out of range")))?;
    if spec.kind != ColumnKind::Numeric {
        return Err(TrustError::invalid(format!(
            "ALE needs a numeric feature; `{}` is categorical",
            spec.name
        )));
    }
    let frame = model.frame(data)?;
    let col = &frame.columns[feature];
    let mut present: Vec<usize> = (0..frame.n_rows).filter(|&i| !col[i].is_nan()).collect();
    if present.is_empty() {
        return Err(TrustError::invalid(format!(
            "feature `{}` has no observed values",
            spec.name
        )));
    }
    present.sort_by(|&a, &b| col[a].total_cmp(&col[b]));
    let sorted: Vec<f64> = present.iter().map(|&i| col[i]).collect();
    let mut edges: Vec<f64> = (0..=bins)
        .map(|k| quantile_sorted(&sorted, k as f64 / bins as f64))
        .collect();
    edges.dedup();
    if edges.len() < 2 {
        return Ok(AleCurve {
            feature,
            feature_name: spec.name.clone(),
            bin_edges: edges,
            accumulated_effects: vec![0.0],
            bin_counts: vec![present.len()],
        });
    }
    let nb = edges.len() - 1;
    let mut sums = vec![0.0; nb];
    let mut counts = vec![0usize; nb];
    for &i in &present {
        let k = bin_of(&edges, col[i]);
        let mut row = frame.row(i);
        row[feature] = edges[k + 1];
        let hi = model.predict_row(&row);
        row[feature] = edges[k];
        let lo = model.predict_row(&row);
        sums[k] += hi - lo;
        counts[k] += 1;
    }
    let mut effects = vec![0.0; nb + 1];
    for k in 0..nb {
        let step = if counts[k] > 0 { sums[k] / counts[k] as f64 } else { 0.0 };
        effects[k + 1] = effects[k] + step;
    }
    let mut curve = AleCurve {
        feature,
        feature_name: spec.name.clone(),
        bin_edges: edges,
        accumulated_effects: effects,
        bin_counts: counts,
    };
    let center = present.iter().map(|&i| curve.effect_at(col[i])).sum::<f64>() / present.len() as f64;
    curve.accumulated_effects.iter_mut().for_each(|a| *a -= center);
    Ok(curve)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bins_cover_edges() {
        let e = [0.0, 1.0, 2.0, 3.0];
        assert_eq!(bin_of(&e, 0.0), 0);
        assert_eq!(bin_of(&e, 1.0), 0);
        assert_eq!(bin_of(&e, 1.5), 1);
        assert_eq!(bin_of(&e, 3.0), 2);
    }

    #[test]
    fn interpolation() {
        let c = AleCurve {
            feature: 0,
            feature_name: "x".into(),
            bin_edges: vec![0.0, 2.0],
            accumulated_effects: vec![-1.0, 1.0],
            bin_counts: vec![2],
        };
        assert_eq!(c.effect_at(1.0), 0.0);
        assert_eq!(c.effect_at(-5.0), -1.0);
        assert_eq!(c.effect_at(5.0), 1.0);
    }
}
