//! Local explanations: leaf p-values, linear SHAP and the per-row report.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::data::{format_f64, Dataset};
use crate::error::{Result, TrustError};
use crate::linalg::{dot, mean, Cholesky, Matrix};
use crate::linmod::LinearFit;
use crate::tree::{Schema, Side, SplitRule, TrustModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientTest {
    /// Encoded feature index.
    pub feature: usize,
    pub estimate: f64,
    pub ols_estimate: f64,
    pub std_error: Option<f64>,
    pub t_stat: Option<f64>,
    pub p_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeafPValues {
    pub tests: Vec<CoefficientTest>,
    /// Residual degrees of freedom, `n − |active| − 1`.
    pub df: usize,
    /// Too few rows (or a singular refit) for the t-test; p-values omitted.
    pub insufficient: bool,
    /// Residuals are numerically zero; p-values reported as 0.
    pub degenerate: bool,
}

/// Approximate p-values for the active coefficients of a leaf model from an
/// OLS refit on the active set. No correction for the selection step.
pub fn leaf_pvalues(fit: &LinearFit, x: &Matrix, y: &[f64]) -> LeafPValues {
    let n = y.len();
    let s = &fit.active_set;
    let k = s.len();
    let blank = |insufficient: bool| LeafPValues {
        tests: s
            .iter()
            .map(|&j| CoefficientTest {
                feature: j,
                estimate: fit.coefficients[j],
                ols_estimate: fit.coefficients[j],
                std_error: None,
                t_stat: None,
                p_value: None,
            })
            .collect(),
        df: n.saturating_sub(k + 1),
        insufficient,
        degenerate: false,
    };
    if k == 0 {
        return blank(false);
    }
    if n < k + 2 {
        return blank(true);
    }
    let xs = x.select_columns(s);
    let means: Vec<f64> = (0..k).map(|a| mean(&xs.column(a))).collect();
    let ym = mean(y);
    let mut g = Matrix::zeros(k, k);
    let mut c = vec![0.0; k];
    let mut row = vec![0.0; k];
    for i in 0..n {
        for a in 0..k {
            row[a] = xs.get(i, a) - means[a];
        }
        for a in 0..k {
            c[a] += row[a] * (y[i] - ym);
            for b in 0..=a {
                g.set(a, b, g.get(a, b) + row[a] * row[b]);
            }
        }
    }
    for a in 0..k {
        for b in 0..a {
            g.set(b, a, g.get(a, b));
        }
    }
    let scale = (0..k).map(|a| g.get(a, a)).sum::<f64>() / k as f64;
    let Some(ch) = Cholesky::new(&g, 1e-12 * scale.max(f64::MIN_POSITIVE)) else {
        return blank(true);
    };
    let beta = ch.solve(&c);
    let inv = ch.inverse();
    let b0 = ym - dot(&beta, &means);
    let rss: f64 = (0..n).map(|i| (y[i] - b0 - dot(xs.row(i), &beta)).powi(2)).sum();
    let tss: f64 = y.iter().map(|v| (v - ym).powi(2)).sum();
    let df = n - k - 1;
    let degenerate = rss <= 1e-24 * tss.max(f64::MIN_POSITIVE) || rss == 0.0;
    let sigma2 = rss / df as f64;
    let dist = StudentsT::new(0.0, 1.0, df as f64).ok();
    let tests = s
        .iter()
        .enumerate()
        .map(|(a, &j)| {
            let se = (sigma2 * inv.get(a, a)).sqrt();
            let (t_stat, p_value) = if degenerate {
                (None, Some(0.0))
            } else {
                let t = beta[a] / se;
                let p = dist.as_ref().map(|d| (2.0 * (1.0 - d.cdf(t.abs()))).clamp(0.0, 1.0));
                (Some(t).filter(|t| t.is_finite()), p)
            };
            CoefficientTest {
                feature: j,
                estimate: fit.coefficients[j],
                ols_estimate: beta[a],
                std_error: Some(se).filter(|v| v.is_finite()),
                t_stat,
                p_value,
            }
        })
        .collect();
    LeafPValues {
        tests,
        df,
        insufficient: false,
        degenerate,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapValues {
    /// Mean leaf-model prediction over the background rows.
    pub base: f64,
    /// One attribution per encoded feature.
    pub values: Vec<f64>,
}

/// Exact Shapley values of a linear model under feature independence,
/// against the column means of the background rows.
pub fn shap_linear(fit: &LinearFit, x: &[f64], background: &Matrix) -> Result<ShapValues> {
    if background.nrows() == 0 {
        return Err(TrustError::invalid("SHAP background is empty"));
    }
    let means: Vec<f64> = (0..background.ncols()).map(|j| mean(&background.column(j))).collect();
    Ok(shap_from_means(fit, x, &means))
}

pub fn shap_from_means(fit: &LinearFit, x: &[f64], means: &[f64]) -> ShapValues {
    let mut values = vec![0.0; fit.coefficients.len()];
    for &j in &fit.active_set {
        values[j] = fit.coefficients[j] * (x[j] - means[j]);
    }
    ShapValues {
        base: fit.predict_row(means),
        values,
    }
}

/// Human-readable condition satisfied by rows taking `side` of `rule`.
pub fn describe_condition(schema: &Schema, rule: &SplitRule, side: Side) -> String {
    let f = &schema.features[rule.feature()];
    let name = &f.name;
    let left = side == Side::Left;
    let t = rule.threshold().map(format_f64).unwrap_or_default();
    match rule {
        SplitRule::Numeric { missing_side, .. } => {
            let base = if left {
                format!("{name} ≤ {t}")
            } else {
                format!("{name} > {t}")
            };
            if *missing_side == side {
                format!("{base} or {name} is missing")
            } else {
                base
            }
        }
        SplitRule::Categorical {
            left_levels,
            missing_side,
            ..
        } => {
            let levels: Vec<&str> = (0..f.levels.len() as u32)
                .filter(|k| left_levels.contains(k) == left)
                .map(|k| f.levels[k as usize].as_str())
                .collect();
            let base = format!("{name} in {{{}}}", levels.join(", "));
            if *missing_side == side {
                format!("{base} or {name} is missing or unseen")
            } else {
                base
            }
        }
        SplitRule::MissingOnly { .. } => {
            if left {
                format!("{name} is missing")
            } else {
                format!("{name} is present")
            }
        }
        SplitRule::NotMissingAndBelow { .. } => {
            if left {
                format!("{name} is present and {name} ≤ {t}")
            } else {
                format!("{name} is missing or {name} > {t}")
            }
        }
        SplitRule::MissingOrBelow { .. } => {
            if left {
                format!("{name} is missing or {name} ≤ {t}")
            } else {
                format!("{name} is present and {name} > {t}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathCondition {
    pub node: usize,
    pub rule: SplitRule,
    pub side: Side,
    pub feature: String,
    pub value: String,
    pub condition: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeafCoefficient {
    pub name: String,
    pub estimate: f64,
    pub p_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtremeRow {
    pub row: usize,
    pub prediction: f64,
    /// `(feature, value)` for every raw feature.
    pub values: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Extremes {
    pub highest: ExtremeRow,
    pub lowest: ExtremeRow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalExplanation {
    pub row_index: usize,
    pub leaf_id: usize,
    pub prediction: f64,
    pub raw_prediction: f64,
    pub values: Vec<(String, String)>,
    pub path: Vec<PathCondition>,
    pub intercept: f64,
    pub leaf_coefficients: Vec<LeafCoefficient>,
    pub pvalues_insufficient: bool,
    pub pvalues_degenerate: bool,
    pub shap: ShapValues,
    /// Encoded feature names aligned with `shap.values`.
    pub shap_names: Vec<String>,
    pub extremes: Extremes,
    pub summary_text: String,
}

fn row_values(model: &TrustModel, raw: &[f64]) -> Vec<(String, String)> {
    model
        .schema
        .features
        .iter()
        .enumerate()
        .map(|(j, f)| (f.name.clone(), model.schema.display_value(j, raw[j])))
        .collect()
}

fn fmt4(v: f64) -> String {
    format!("{v:.4}")
}

pub fn local_explanation(model: &TrustModel, data: &Dataset, row: usize) -> Result<LocalExplanation> {
    if row >= data.n_rows {
        return Err(TrustError::invalid(format!(
            "row {row} out of range (dataset has {} rows)",
            data.n_rows
        )));
    }
    let frame = model.frame(data)?;
    let preds = model.predict_frame(&frame);
    let raw = frame.row(row);
    let (steps, leaf_id) = model.path(&raw);
    let leaf = &model.leaves[leaf_id];
    let names = model.schema.encoded_names();

    let path = steps
        .into_iter()
        .map(|s| {
            let j = s.rule.feature();
            PathCondition {
                node: s.node,
                feature: model.schema.features[j].name.clone(),
                value: model.schema.display_value(j, raw[j]),
                condition: describe_condition(&model.schema, &s.rule, s.side),
                rule: s.rule,
                side: s.side,
            }
        })
        .collect::<Vec<_>>();

    let mut enc = vec![0.0; names.len()];
    model.schema.encode_row(&raw, &leaf.stats.feature_medians, &mut enc);
    let raw_prediction = leaf.fit.predict_row(&enc);
    let shap = shap_from_means(&leaf.fit, &enc, &leaf.stats.feature_means);
    let leaf_coefficients = leaf
        .fit
        .active_set
        .iter()
        .map(|&j| LeafCoefficient {
            name: names[j].clone(),
            estimate: leaf.fit.coefficients[j],
            p_value: leaf
                .pvalues
                .tests
                .iter()
                .find(|t| t.feature == j)
                .and_then(|t| t.p_value),
        })
        .collect();

    let argbest = |better: fn(f64, f64) -> bool| {
        let mut b = 0;
        for i in 1..preds.len() {
            if better(preds[i], preds[b]) {
                b = i;
            }
        }
        b
    };
    let hi = argbest(|a, b| a > b);
    let lo = argbest(|a, b| a < b);
    let extreme = |i: usize| ExtremeRow {
        row: i,
        prediction: preds[i],
        values: row_values(model, &frame.row(i)),
    };
    let extremes = Extremes {
        highest: extreme(hi),
        lowest: extreme(lo),
    };

    let mut expl = LocalExplanation {
        row_index: row,
        leaf_id,
        prediction: preds[row],
        raw_prediction,
        values: row_values(model, &raw),
        path,
        intercept: leaf.fit.intercept,
        leaf_coefficients,
        pvalues_insufficient: leaf.pvalues.insufficient,
        pvalues_degenerate: leaf.pvalues.degenerate,
        shap,
        shap_names: names,
        extremes,
        summary_text: String::new(),
    };
    expl.summary_text = summary_text(model, &expl, &frame.row(hi), &frame.row(lo), &raw);
    Ok(expl)
}

/// Raw feature whose standardized distance between two rows is largest.
fn most_different(model: &TrustModel, a: &[f64], b: &[f64]) -> Option<usize> {
    let ea = model.encode_row(a);
    let eb = model.encode_row(b);
    let mut best: Option<(usize, f64)> = None;
    for k in 0..ea.len() {
        let sd = model.ood.covariance.get(k, k).sqrt();
        let d = (ea[k] - eb[k]).abs() / if sd > 0.0 { sd } else { 1.0 };
        if d > 0.0 && best.is_none_or(|(_, bd)| d > bd) {
            best = Some((k, d));
        }
    }
    best.map(|(k, _)| model.schema.raw_of_encoded(k))
}

fn summary_text(model: &TrustModel, e: &LocalExplanation, hi: &[f64], lo: &[f64], raw: &[f64]) -> String {
    let mut s = format!(
        "Row {} falls in leaf {} (trained on {} rows) with prediction {}.",
        e.row_index,
        e.leaf_id,
        model.leaves[e.leaf_id].stats.n_leaf,
        fmt4(e.prediction)
    );
    if e.path.is_empty() {
        s.push_str(" The model is a single linear model, so no split conditions apply.");
    } else {
        let conds: Vec<&str> = e.path.iter().map(|p| p.condition.as_str()).collect();
        s.push_str(&format!(" It reaches the leaf because {}.", conds.join("; ")));
    }
    let mut order: Vec<usize> = (0..e.shap.values.len()).filter(|&k| e.shap.values[k] != 0.0).collect();
    order.sort_by(|&a, &b| {
        e.shap.values[b]
            .abs()
            .total_cmp(&e.shap.values[a].abs())
            .then(a.cmp(&b))
    });
    match order.as_slice() {
        [] => s.push_str(&format!(
            " No feature moves the prediction away from the leaf baseline of {}.",
            fmt4(e.shap.base)
        )),
        [a] => s.push_str(&format!(
            " Relative to the leaf baseline of {}, the main contribution comes from {} ({:+.4}).",
            fmt4(e.shap.base),
            e.shap_names[*a],
            e.shap.values[*a]
        )),
        [a, b, ..] => s.push_str(&format!(
            " Relative to the leaf baseline of {}, the main contributions come from {} ({:+.4}) and {} ({:+.4}).",
            fmt4(e.shap.base),
            e.shap_names[*a],
            e.shap.values[*a],
            e.shap_names[*b],
            e.shap.values[*b]
        )),
    }
    for (label, ex, other) in [("highest", &e.extremes.highest, hi), ("lowest", &e.extremes.lowest, lo)] {
        if ex.row == e.row_index {
            s.push_str(&format!(" This row has the {label} prediction in the data."));
            continue;
        }
        s.push_str(&format!(
            " The {label} prediction in the data is {} (row {})",
            fmt4(ex.prediction),
            ex.row
        ));
        match most_different(model, raw, other) {
            Some(j) => s.push_str(&format!(
                "; compared with it, this row differs most in {} ({} here versus {}).",
                model.schema.features[j].name,
                model.schema.display_value(j, raw[j]),
                model.schema.display_value(j, other[j])
            )),
            None => s.push_str(", with identical feature values."),
        }
    }
    s
}
