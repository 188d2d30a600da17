//! Text and SVG renderings of trees, importance scores, ALE curves and
//! local explanations.

use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::data::format_f64;
use crate::error::{Result, TrustError};
use crate::svg::{text_width, Anchor, Svg};
use crate::tree::{Node, Schema, Side, SplitRule, TrustModel};

use super::ale::AleCurve;
use super::importance::{ImportanceReport, TauSign};
use super::local::LocalExplanation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TreeFormat {
    Text,
    Svg,
}

impl std::str::FromStr for TreeFormat {
    type Err = TrustError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "text" => Ok(TreeFormat::Text),
            "svg" => Ok(TreeFormat::Svg),
            _ => Err(TrustError::invalid(format!(
                "unknown tree format `{s}` (expected text or svg)"
            ))),
        }
    }
}

/// What ancestors already establish about one feature.
#[derive(Debug, Clone, Default)]
struct Known {
    present: Option<bool>,
    lo: Option<f64>,
    hi: Option<f64>,
    levels: Option<Vec<u32>>,
}

/// Branch label with conditions implied by ancestors removed, and the
/// knowledge gained by taking the branch.
fn branch_label(schema: &Schema, rule: &SplitRule, side: Side, known: &[Known]) -> (String, Vec<Known>) {
    let j = rule.feature();
    let f = &schema.features[j];
    let name = &f.name;
    let k = &known[j];
    let mut next = known.to_vec();
    let left = side == Side::Left;
    let t = rule.threshold().unwrap_or(f64::NAN);
    let ts = format_f64(t);
    let le_implied = k.hi.is_some_and(|h| h <= t);
    let gt_implied = k.lo.is_some_and(|l| l >= t);
    let bound = |below: bool, nk: &mut Known| {
        if below {
            nk.hi = Some(nk.hi.map_or(t, |h| h.min(t)));
            if le_implied {
                None
            } else {
                Some(format!("{name} ≤ {ts}"))
            }
        } else {
            nk.lo = Some(nk.lo.map_or(t, |l| l.max(t)));
            if gt_implied {
                None
            } else {
                Some(format!("{name} > {ts}"))
            }
        }
    };
    let nk = &mut next[j];
    let label = match rule {
        SplitRule::Numeric { .. } => bound(left, nk).unwrap_or_else(|| format!("{name} (any)")),
        SplitRule::Categorical { left_levels, .. } => {
            let allowed: Vec<u32> = k.levels.clone().unwrap_or_else(|| (0..f.levels.len() as u32).collect());
            let chosen: Vec<u32> = allowed
                .iter()
                .copied()
                .filter(|l| left_levels.contains(l) == left)
                .collect();
            let rest: Vec<u32> = allowed
                .iter()
                .copied()
                .filter(|l| left_levels.contains(l) != left)
                .collect();
            let names = |v: &[u32]| {
                v.iter()
                    .map(|&l| f.levels.get(l as usize).map_or("?", String::as_str))
                    .collect::<Vec<_>>()
                    .join(", ")
            };
            nk.levels = Some(chosen.clone());
            if rest.len() < chosen.len() {
                format!("{name} not in {{{}}}", names(&rest))
            } else {
                format!("{name} in {{{}}}", names(&chosen))
            }
        }
        SplitRule::MissingOnly { .. } => {
            nk.present = Some(!left);
            if left {
                format!("{name} is missing")
            } else {
                format!("{name} is present")
            }
        }
        SplitRule::NotMissingAndBelow { .. } | SplitRule::MissingOrBelow { .. } => {
            // the branch is either "present and bound" or "missing or bound"
            let present_and = matches!(rule, SplitRule::NotMissingAndBelow { .. }) == left;
            let below = left;
            if present_and {
                let had_present = k.present == Some(true);
                nk.present = Some(true);
                let b = bound(below, nk);
                match (had_present, b) {
                    (true, Some(b)) => b,
                    (true, None) => format!("{name} (any)"),
                    (false, Some(b)) => format!("{name} is present and {b}"),
                    (false, None) => format!("{name} is present"),
                }
            } else if k.present == Some(true) {
                bound(below, nk).unwrap_or_else(|| format!("{name} (any)"))
            } else {
                let op = if below { "≤" } else { ">" };
                format!("{name} is missing or {name} {op} {ts}")
            }
        }
    };
    (label, next)
}

fn leaf_label(model: &TrustModel, leaf: usize) -> String {
    let l = &model.leaves[leaf];
    format!(
        "leaf {leaf}: n={}, active={}, mean={:.4}",
        l.stats.n_leaf,
        l.fit.active_set.len(),
        l.stats.y_mean
    )
}

pub fn render_tree(model: &TrustModel, format: TreeFormat) -> String {
    match format {
        TreeFormat::Text => render_tree_text(model),
        TreeFormat::Svg => render_tree_svg(model),
    }
}

pub fn render_tree_text(model: &TrustModel) -> String {
    let mut out = String::new();
    let known = vec![Known::default(); model.schema.n_raw()];
    match &model.nodes[0] {
        Node::Leaf { leaf, .. } => {
            let _ = writeln!(out, "{}", leaf_label(model, *leaf));
        }
        Node::Split { n_train, .. } => {
            let _ = writeln!(out, "root (n={n_train})");
            text_children(model, 0, &known, "", &mut out);
        }
    }
    out
}

fn text_children(model: &TrustModel, node: usize, known: &[Known], prefix: &str, out: &mut String) {
    let Node::Split { rule, left, right, .. } = &model.nodes[node] else {
        return;
    };
    for (child, side, last) in [(*left, Side::Left, false), (*right, Side::Right, true)] {
        let (label, next) = branch_label(&model.schema, rule, side, known);
        let branch = if last { "└─ " } else { "├─ " };
        let cont = if last { "   " } else { "│  " };
        match &model.nodes[child] {
            Node::Leaf { leaf, .. } => {
                let _ = writeln!(out, "{prefix}{branch}{label} → {}", leaf_label(model, *leaf));
            }
            Node::Split { n_train, .. } => {
                let _ = writeln!(out, "{prefix}{branch}{label} (n={n_train})");
                text_children(model, child, &next, &format!("{prefix}{cont}"), out);
            }
        }
    }
}

struct Placed {
    x: f64,
    depth: usize,
}

fn place(model: &TrustModel, node: usize, depth: usize, next_slot: &mut f64, pos: &mut Vec<Option<Placed>>) -> f64 {
    let x = match &model.nodes[node] {
        Node::Leaf { .. } => {
            let x = *next_slot;
            *next_slot += 1.0;
            x
        }
        Node::Split { left, right, .. } => {
            let a = place(model, *left, depth + 1, next_slot, pos);
            let b = place(model, *right, depth + 1, next_slot, pos);
            0.5 * (a + b)
        }
    };
    pos[node] = Some(Placed { x, depth });
    x
}

pub fn render_tree_svg(model: &TrustModel) -> String {
    const SLOT: f64 = 230.0;
    const LEVEL: f64 = 110.0;
    const BOX_H: f64 = 44.0;
    let mut pos: Vec<Option<Placed>> = (0..model.nodes.len()).map(|_| None).collect();
    let mut slots = 0.0;
    place(model, 0, 0, &mut slots, &mut pos);
    let depth = pos.iter().flatten().map(|p| p.depth).max().unwrap_or(0);
    let width = (slots * SLOT).max(SLOT) + 40.0;
    let height = (depth as f64 + 1.0) * LEVEL + 40.0;
    let mut svg = Svg::new(width, height);
    let cx = |p: &Placed| 20.0 + p.x * SLOT + SLOT / 2.0;
    let cy = |p: &Placed| 20.0 + p.depth as f64 * LEVEL;

    let mut stack = vec![(0usize, vec![Known::default(); model.schema.n_raw()])];
    while let Some((node, known)) = stack.pop() {
        let p = pos[node].as_ref().expect("every node is placed");
        let (x, y) = (cx(p), cy(p));
        match &model.nodes[node] {
            Node::Leaf { leaf, .. } => {
                let l = &model.leaves[*leaf];
                svg.rect(x - SLOT / 2.0 + 8.0, y, SLOT - 16.0, BOX_H, "#e8f4e8", "#2e7d32");
                svg.text(
                    x,
                    y + 17.0,
                    12.0,
                    Anchor::Middle,
                    &format!("leaf {leaf} · n={}", l.stats.n_leaf),
                );
                svg.text(
                    x,
                    y + 34.0,
                    11.0,
                    Anchor::Middle,
                    &format!("active={} · mean={:.4}", l.fit.active_set.len(), l.stats.y_mean),
                );
            }
            Node::Split {
                rule,
                left,
                right,
                n_train,
            } => {
                let name = &model.schema.features[rule.feature()].name;
                svg.rect(x - SLOT / 2.0 + 8.0, y, SLOT - 16.0, BOX_H, "#eef3fb", "#1f4e9c");
                svg.text(x, y + 17.0, 12.0, Anchor::Middle, &format!("split on {name}"));
                svg.text(x, y + 34.0, 11.0, Anchor::Middle, &format!("n={n_train}"));
                for (child, side) in [(*left, Side::Left), (*right, Side::Right)] {
                    let (label, next) = branch_label(&model.schema, rule, side, &known);
                    let c = pos[child].as_ref().expect("every node is placed");
                    let (x2, y2) = (cx(c), cy(c));
                    svg.line(x, y + BOX_H, x2, y2, "#555");
                    let (mx, my) = (0.5 * (x + x2), 0.5 * (y + BOX_H + y2));
                    let w = text_width(&label, 11.0) + 8.0;
                    svg.rect(mx - w / 2.0, my - 10.0, w, 15.0, "white", "none");
                    svg.text(mx, my + 1.0, 11.0, Anchor::Middle, &label);
                    stack.push((child, next));
                }
            }
        }
    }
    svg.finish()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImportancePlot {
    /// Debiased scores with the null band.
    Basic,
    /// Bars colored by the sign of Kendall's τ.
    Signed,
    None,
}

impl std::str::FromStr for ImportancePlot {
    type Err = TrustError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "basic" => Ok(ImportancePlot::Basic),
            "signed" => Ok(ImportancePlot::Signed),
            "none" => Ok(ImportancePlot::None),
            _ => Err(TrustError::invalid(format!(
                "unknown plot `{s}` (expected basic, signed or none)"
            ))),
        }
    }
}

pub fn importance_csv(report: &ImportanceReport) -> String {
    let mut out = String::from("feature,raw,debiased,q90,q95,q99,significant,tau\n");
    for f in &report.features {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            csv_field(&f.feature),
            format_f64(f.raw_score),
            format_f64(f.debiased_score),
            format_f64(f.null_quantiles.q90),
            format_f64(f.null_quantiles.q95),
            format_f64(f.null_quantiles.q99),
            f.significant,
            format_f64(f.tau)
        );
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn importance_svg(report: &ImportanceReport, plot: ImportancePlot) -> Option<String> {
    if plot == ImportancePlot::None {
        return None;
    }
    const ROW: f64 = 26.0;
    const LEFT: f64 = 160.0;
    const PLOT_W: f64 = 460.0;
    let n = report.features.len();
    let max = report
        .features
        .iter()
        .flat_map(|f| [f.debiased_score, f.null_quantiles.q99])
        .filter(|v| v.is_finite())
        .fold(1.0f64, f64::max);
    let sx = |v: f64| LEFT + PLOT_W * (v.max(0.0) / max);
    let height = 60.0 + n as f64 * ROW;
    let mut svg = Svg::new(LEFT + PLOT_W + 40.0, height);
    let title = match plot {
        ImportancePlot::Basic => "Debiased ghost importance with null band (q90–q99)",
        _ => "Debiased ghost importance, colored by association sign",
    };
    svg.text(LEFT, 20.0, 13.0, Anchor::Start, title);
    for (i, f) in report.features.iter().enumerate() {
        let y = 35.0 + i as f64 * ROW;
        svg.text(LEFT - 8.0, y + 14.0, 12.0, Anchor::End, &f.feature);
        let color = match plot {
            ImportancePlot::Signed => match f.tau_sign {
                TauSign::Positive => "#2e7d32",
                TauSign::Negative => "#c62828",
                TauSign::Zero => "#757575",
            },
            _ => {
                if f.significant {
                    "#1f4e9c"
                } else {
                    "#9fb3d9"
                }
            }
        };
        svg.rect(LEFT, y + 3.0, sx(f.debiased_score) - LEFT, ROW - 8.0, color, "none");
        if plot == ImportancePlot::Basic {
            let (a, b) = (sx(f.null_quantiles.q90), sx(f.null_quantiles.q99));
            svg.rect(a, y + 1.0, (b - a).max(1.0), ROW - 4.0, "none", "#ff8f00");
            let q = sx(f.null_quantiles.q95);
            svg.line(q, y + 1.0, q, y + ROW - 3.0, "#ff8f00");
        }
    }
    let base = sx(1.0);
    svg.dashed_line(base, 30.0, base, height - 20.0, "#333");
    svg.text(base, height - 6.0, 11.0, Anchor::Middle, "1");
    Some(svg.finish())
}

pub fn ale_csv(curve: &AleCurve) -> String {
    let mut out = String::from("edge,effect\n");
    for (e, a) in curve.bin_edges.iter().zip(&curve.accumulated_effects) {
        let _ = writeln!(out, "{},{}", format_f64(*e), format_f64(*a));
    }
    out
}

pub fn ale_svg(curve: &AleCurve) -> String {
    const W: f64 = 520.0;
    const H: f64 = 320.0;
    const M: f64 = 50.0;
    let mut svg = Svg::new(W, H);
    let e = &curve.bin_edges;
    let a = &curve.accumulated_effects;
    let (x0, x1) = (e[0], e[e.len() - 1]);
    let (y0, y1) = a.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(*v), hi.max(*v))
    });
    let span = |lo: f64, hi: f64| if hi > lo { hi - lo } else { 1.0 };
    let sx = |v: f64| M + (W - 2.0 * M) * (v - x0) / span(x0, x1);
    let sy = |v: f64| H - M - (H - 2.0 * M) * (v - y0) / span(y0, y1);
    svg.text(
        W / 2.0,
        22.0,
        13.0,
        Anchor::Middle,
        &format!("ALE of {}", curve.feature_name),
    );
    svg.line(M, H - M, W - M, H - M, "#333");
    svg.line(M, M, M, H - M, "#333");
    let pts: Vec<(f64, f64)> = e.iter().zip(a).map(|(x, y)| (sx(*x), sy(*y))).collect();
    if pts.len() == 1 {
        svg.circle(pts[0].0, pts[0].1, 3.0, "#1f4e9c");
    } else {
        svg.polyline(&pts, "#1f4e9c");
    }
    svg.text(M, H - M + 18.0, 11.0, Anchor::Middle, &format!("{x0:.3}"));
    svg.text(W - M, H - M + 18.0, 11.0, Anchor::Middle, &format!("{x1:.3}"));
    svg.text(M - 6.0, sy(y0) + 4.0, 11.0, Anchor::End, &format!("{y0:.3}"));
    svg.text(M - 6.0, sy(y1) + 4.0, 11.0, Anchor::End, &format!("{y1:.3}"));
    svg.finish()
}

fn pvalue_text(p: Option<f64>) -> String {
    match p {
        Some(p) if p < 1e-4 => format!("{p:.2e}"),
        Some(p) => format!("{p:.4}"),
        None => "n/a".into(),
    }
}

/// Plain-text explanation report.
pub fn explanation_report(model: &TrustModel, e: &LocalExplanation) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "Explanation for row {}", e.row_index);
    let _ = writeln!(out, "{}", "=".repeat(24 + e.row_index.to_string().len()));
    let _ = writeln!(out);
    let _ = writeln!(out, "{}", e.summary_text);
    let _ = writeln!(out);
    let _ = writeln!(
        out,
        "Prediction: {:.6} (leaf model output {:.6}, t = {})",
        e.prediction,
        e.raw_prediction,
        t_text(model.t)
    );
    let _ = writeln!(out);
    let _ = writeln!(out, "Path from the root:");
    if e.path.is_empty() {
        let _ = writeln!(out, "  (single leaf)");
    }
    for (i, p) in e.path.iter().enumerate() {
        let _ = writeln!(out, "  {}. {}   [{} = {}]", i + 1, p.condition, p.feature, p.value);
    }
    let _ = writeln!(out);
    let _ = writeln!(
        out,
        "Leaf {} model (approximate p-values, no selection correction):",
        e.leaf_id
    );
    let _ = writeln!(out, "  {:<24} {:>14} {:>10}", "term", "estimate", "p-value");
    let _ = writeln!(out, "  {:<24} {:>14.6} {:>10}", "(intercept)", e.intercept, "");
    for c in &e.leaf_coefficients {
        let _ = writeln!(
            out,
            "  {:<24} {:>14.6} {:>10}",
            c.name,
            c.estimate,
            pvalue_text(c.p_value)
        );
    }
    if e.pvalues_insufficient {
        let _ = writeln!(out, "  note: too few leaf rows for p-values");
    }
    if e.pvalues_degenerate {
        let _ = writeln!(
            out,
            "  note: the leaf fits its rows exactly; p-values are reported as 0"
        );
    }
    let _ = writeln!(out);
    let _ = writeln!(out, "SHAP attributions (base {:.6}):", e.shap.base);
    for (name, v) in e.shap_names.iter().zip(&e.shap.values) {
        if *v != 0.0 {
            let _ = writeln!(out, "  {name:<24} {v:>+14.6}");
        }
    }
    let _ = writeln!(out);
    let _ = writeln!(out, "Feature values:");
    let _ = writeln!(
        out,
        "  {:<24} {:>14} {:>14} {:>14}",
        "feature",
        "this row",
        format!("highest (#{})", e.extremes.highest.row),
        format!("lowest (#{})", e.extremes.lowest.row)
    );
    for (i, (name, v)) in e.values.iter().enumerate() {
        let _ = writeln!(
            out,
            "  {:<24} {:>14} {:>14} {:>14}",
            name, v, e.extremes.highest.values[i].1, e.extremes.lowest.values[i].1
        );
    }
    let _ = writeln!(
        out,
        "  {:<24} {:>14.6} {:>14.6} {:>14.6}",
        "prediction", e.prediction, e.extremes.highest.prediction, e.extremes.lowest.prediction
    );
    out
}

pub(crate) fn t_text(t: f64) -> String {
    if t == f64::INFINITY {
        "inf".into()
    } else {
        format_f64(t)
    }
}

/// Root-to-leaf path of one explanation as an SVG chain.
pub fn path_svg(e: &LocalExplanation) -> String {
    const W: f64 = 520.0;
    const BOX_H: f64 = 30.0;
    const GAP: f64 = 22.0;
    let coef_lines = e.leaf_coefficients.len() + 2;
    let leaf_h = 20.0 + coef_lines as f64 * 16.0;
    let height = 30.0 + (e.path.len() as f64) * (BOX_H + GAP) + leaf_h + 20.0;
    let mut svg = Svg::new(W, height);
    svg.text(
        W / 2.0,
        20.0,
        13.0,
        Anchor::Middle,
        &format!("Row {}: root-to-leaf path", e.row_index),
    );
    let mut y = 34.0;
    for p in &e.path {
        svg.rect(30.0, y, W - 60.0, BOX_H, "#eef3fb", "#1f4e9c");
        svg.text(
            W / 2.0,
            y + 19.0,
            12.0,
            Anchor::Middle,
            &format!("{}   ({} = {})", p.condition, p.feature, p.value),
        );
        svg.line(W / 2.0, y + BOX_H, W / 2.0, y + BOX_H + GAP, "#555");
        y += BOX_H + GAP;
    }
    svg.rect(30.0, y, W - 60.0, leaf_h, "#e8f4e8", "#2e7d32");
    svg.text(
        W / 2.0,
        y + 18.0,
        12.0,
        Anchor::Middle,
        &format!("leaf {} · prediction {:.4}", e.leaf_id, e.prediction),
    );
    svg.text(
        44.0,
        y + 36.0,
        11.0,
        Anchor::Start,
        &format!("intercept {:.4}", e.intercept),
    );
    for (i, c) in e.leaf_coefficients.iter().enumerate() {
        svg.text(
            44.0,
            y + 52.0 + i as f64 * 16.0,
            11.0,
            Anchor::Start,
            &format!("{}: {:.4} (p = {})", c.name, c.estimate, pvalue_text(c.p_value)),
        );
    }
    svg.finish()
}
