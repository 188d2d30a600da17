//! TRUST tree: best-first growth with missing-aware splits, relaxed-Lasso
//! leaves, truncation of leaf predictions and model (de)serialization.

mod schema;
mod split;

pub use schema::{FeatureSpec, Frame, Schema};
pub use split::{Side, SplitCandidate, SplitProxy, SplitRule};

use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{ColumnKind, Dataset};
use crate::error::{Result, TrustError};
use crate::explain::{leaf_pvalues, LeafPValues};
use crate::linalg::{mean, median, sample_sd, sample_variance, Matrix};
use crate::linmod::{cv_elastic_net, cv_relaxed_lasso_with, CvOptions, LinearFit, ELASTIC_NET_L2, THETA_GRID};
use crate::robust::{fit_ood_stats, ood_report, OodReport, OodStats, DEFAULT_OOD_QUANTILE};

use split::{find_best_split, route_categorical, SearchData, SearchParams};

pub const MODEL_FORMAT: &str = "trust-model/1";

pub const DEFAULT_T_GRID: [f64; 9] = [-1.0, -0.5, 0.0, 0.5, 1.0, 2.0, 4.0, 8.0, f64::INFINITY];

/// Serializes reals that may be infinite as the strings `"inf"` / `"-inf"`.
pub(crate) mod ext_real {
    use serde::{de::Error, Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    fn to_repr(v: f64) -> Repr {
        if v == f64::INFINITY {
            Repr::Text("inf".into())
        } else if v == f64::NEG_INFINITY {
            Repr::Text("-inf".into())
        } else {
            Repr::Num(v)
        }
    }

    fn from_repr<E: Error>(r: Repr) -> Result<f64, E> {
        match r {
            Repr::Num(v) => Ok(v),
            Repr::Text(s) => match s.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                other => Err(E::custom(format!("expected a number, got `{other}`"))),
            },
        }
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        to_repr(*v).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        from_repr(Repr::deserialize(d)?)
    }

    pub mod vec {
        use super::*;

        pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
            v.iter().map(|x| to_repr(*x)).collect::<Vec<_>>().serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
            Vec::<Repr>::deserialize(d)?.into_iter().map(from_repr).collect()
        }
    }
}

/// Model family fitted in the leaves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeafModel {
    RelaxedLasso,
    /// Intercept only; together with [`SplitProxy::Mean`] this is a CART-style tree.
    Constant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub max_leaves: usize,
    pub cv_folds: usize,
    pub seed: u64,
    #[serde(with = "ext_real::vec")]
    pub truncation_t_grid: Vec<f64>,
    /// Minimum SSE reduction of a split, relative to the parent's proxy SSE.
    pub min_split_gain: f64,
    pub leaf_model: LeafModel,
    pub split_proxy: SplitProxy,
    pub theta_grid: Vec<f64>,
    pub ood_quantile: f64,
    pub max_thresholds: usize,
    /// Above this encoded width the split proxy uses child means only.
    pub proxy_max_features: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            max_leaves: 16,
            cv_folds: 5,
            seed: 123,
            truncation_t_grid: DEFAULT_T_GRID.to_vec(),
            min_split_gain: 0.01,
            leaf_model: LeafModel::RelaxedLasso,
            split_proxy: SplitProxy::Auto,
            theta_grid: THETA_GRID.to_vec(),
            ood_quantile: DEFAULT_OOD_QUANTILE,
            max_thresholds: 32,
            proxy_max_features: 25,
        }
    }
}

impl TrainConfig {
    /// Constant leaves with a mean-SSE split search.
    pub fn cart(self) -> Self {
        TrainConfig {
            leaf_model: LeafModel::Constant,
            split_proxy: SplitProxy::Mean,
            ..self
        }
    }

    /// A single Lasso leaf (`theta` fixed to 1).
    pub fn lasso(self) -> Self {
        TrainConfig {
            max_leaves: 1,
            theta_grid: vec![1.0],
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_leaves < 1 {
            return Err(TrustError::invalid("max_leaves must be at least 1"));
        }
        if self.cv_folds < 2 {
            return Err(TrustError::invalid("cv_folds must be at least 2"));
        }
        if self.truncation_t_grid.is_empty() {
            return Err(TrustError::invalid("truncation grid is empty"));
        }
        if self
            .truncation_t_grid
            .iter()
            .any(|t| t.is_nan() || *t == f64::NEG_INFINITY)
        {
            return Err(TrustError::invalid("truncation grid values must be finite or +inf"));
        }
        if !(self.min_split_gain >= 0.0 && self.min_split_gain.is_finite()) {
            return Err(TrustError::invalid("min_split_gain must be a nonnegative number"));
        }
        if self.theta_grid.is_empty() || self.theta_grid.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return Err(TrustError::invalid("theta grid values must lie in [0, 1]"));
        }
        if !(self.ood_quantile > 0.0 && self.ood_quantile < 1.0) {
            return Err(TrustError::invalid("ood_quantile must lie in (0, 1)"));
        }
        if self.max_thresholds < 1 {
            return Err(TrustError::invalid("max_thresholds must be at least 1"));
        }
        Ok(())
    }
}

/// Response and feature summaries of one leaf's training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeafStats {
    pub y_min: f64,
    pub y_max: f64,
    pub y_mean: f64,
    /// Sample SD of responses below the leaf median (0 with fewer than 2 such rows).
    pub s_lower: f64,
    /// Sample SD of responses at or above the leaf median.
    pub s_upper: f64,
    pub n_leaf: usize,
    /// Encoded values used to fill missing cells (global training medians).
    pub feature_medians: Vec<f64>,
    /// Column means of the leaf's encoded training rows (SHAP background).
    pub feature_means: Vec<f64>,
}

impl LeafStats {
    pub fn from_leaf(x: &Matrix, y: &[f64], feature_medians: Vec<f64>) -> LeafStats {
        let med = median(y);
        let below: Vec<f64> = y.iter().copied().filter(|&v| v < med).collect();
        let above: Vec<f64> = y.iter().copied().filter(|&v| v >= med).collect();
        let sd = |v: &[f64]| if v.len() < 2 { 0.0 } else { sample_sd(v) };
        LeafStats {
            y_min: y.iter().copied().fold(f64::INFINITY, f64::min),
            y_max: y.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            y_mean: mean(y),
            s_lower: sd(&below),
            s_upper: sd(&above),
            n_leaf: y.len(),
            feature_medians,
            feature_means: (0..x.ncols()).map(|j| mean(&x.column(j))).collect(),
        }
    }
}

/// `max[min(raw, y_max + t·s_upper), y_min − t·s_lower]`; `t = +∞` disables the clamp.
pub fn truncate(raw: f64, stats: &LeafStats, t: f64) -> f64 {
    if t == f64::INFINITY {
        return raw;
    }
    let upper = stats.y_max + t * stats.s_upper;
    let lower = stats.y_min - t * stats.s_lower;
    raw.min(upper).max(lower)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Leaf {
    pub fit: LinearFit,
    pub stats: LeafStats,
    pub pvalues: LeafPValues,
    /// Set when the leaf had too few rows for the full k-fold penalty search.
    pub cv_fallback: bool,
    pub depth: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    Split {
        rule: SplitRule,
        left: usize,
        right: usize,
        n_train: usize,
    },
    Leaf {
        leaf: usize,
        n_train: usize,
    },
}

/// One step of a root-to-leaf path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathStep {
    pub node: usize,
    pub rule: SplitRule,
    pub side: Side,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub value: f64,
    pub raw: f64,
    pub leaf: usize,
    pub ood: Option<OodReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrustModel {
    pub format: String,
    pub schema: Schema,
    /// Encoded global imputation vector.
    pub impute: Vec<f64>,
    /// Node arena; index 0 is the root.
    pub nodes: Vec<Node>,
    pub leaves: Vec<Leaf>,
    #[serde(with = "ext_real")]
    pub t: f64,
    pub ood: OodStats,
    pub config: TrainConfig,
    pub n_train: usize,
    /// The single root leaf is an elastic net because n ≤ p+1.
    pub elastic_net_root: bool,
}

/// Grows a TRUST model on `train`.
pub fn grow(train: &Dataset, config: &TrainConfig) -> Result<TrustModel> {
    config.validate()?;
    if train.n_rows == 0 {
        return Err(TrustError::EmptyDataset);
    }
    let y = train.y()?;
    if train.n_rows < 3 {
        return Err(TrustError::invalid("training needs at least 3 rows"));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(TrustError::NonFinite("target"));
    }
    let schema = Schema::fit(train);
    let frame = schema.frame(train)?;
    let impute = schema.impute_vector();
    let x = schema.encode(&frame, &impute);
    let n = x.nrows();
    let p = x.ncols();
    let ood = fit_ood_stats(&x, config.ood_quantile)?;

    let mut nodes = Vec::new();
    let mut leaf_rows: Vec<(usize, Vec<usize>, usize)> = Vec::new(); // (node, rows, depth)
    let elastic_net_root = n <= p + 1;
    if elastic_net_root || config.max_leaves == 1 {
        nodes.push(Node::Leaf { leaf: 0, n_train: n });
        leaf_rows.push((0, (0..n).collect(), 0));
    } else {
        let params = SearchParams {
            min_child: p + 2,
            max_thresholds: config.max_thresholds,
            min_split_gain: config.min_split_gain,
            linear_proxy: config.split_proxy == SplitProxy::Auto
                && config.leaf_model == LeafModel::RelaxedLasso
                && p <= config.proxy_max_features,
        };
        let data = SearchData {
            schema: &schema,
            frame: &frame,
            x: &x,
            y,
        };
        grow_best_first(&data, &params, config.max_leaves, &mut nodes, &mut leaf_rows);
    }

    let folds = config.cv_folds;
    let fitted: Vec<Result<(LinearFit, bool)>> = leaf_rows
        .par_iter()
        .map(|(_, rows, _)| {
            let xl = x.select_rows(rows);
            let yl: Vec<f64> = rows.iter().map(|&r| y[r]).collect();
            fit_leaf(&xl, &yl, config, folds, elastic_net_root)
        })
        .collect();

    let mut leaves = Vec::with_capacity(leaf_rows.len());
    let mut raw_train = vec![0.0; n];
    let mut leaf_of_row = vec![0usize; n];
    for (li, ((node, rows, depth), fitted)) in leaf_rows.iter().zip(fitted).enumerate() {
        let (fit, cv_fallback) = fitted?;
        let xl = x.select_rows(rows);
        let yl: Vec<f64> = rows.iter().map(|&r| y[r]).collect();
        for (k, &r) in rows.iter().enumerate() {
            raw_train[r] = fit.predict_row(xl.row(k));
            leaf_of_row[r] = li;
        }
        let stats = LeafStats::from_leaf(&xl, &yl, impute.clone());
        let pvalues = leaf_pvalues(&fit, &xl, &yl);
        if let Node::Leaf { leaf, .. } = &mut nodes[*node] {
            *leaf = li;
        }
        leaves.push(Leaf {
            fit,
            stats,
            pvalues,
            cv_fallback,
            depth: *depth,
        });
    }
    let t = calibrate_raw(&raw_train, &leaf_of_row, y, &leaves, &config.truncation_t_grid)?;
    Ok(TrustModel {
        format: MODEL_FORMAT.into(),
        schema,
        impute,
        nodes,
        leaves,
        t,
        ood,
        config: config.clone(),
        n_train: n,
        elastic_net_root,
    })
}

fn grow_best_first(
    data: &SearchData<'_>,
    params: &SearchParams,
    max_leaves: usize,
    nodes: &mut Vec<Node>,
    out: &mut Vec<(usize, Vec<usize>, usize)>,
) {
    struct Frontier {
        node: usize,
        rows: Vec<usize>,
        depth: usize,
        cand: Option<SplitCandidate>,
    }
    let n = data.y.len();
    nodes.push(Node::Leaf { leaf: 0, n_train: n });
    let root_rows: Vec<usize> = (0..n).collect();
    let mut frontier = vec![Frontier {
        node: 0,
        cand: find_best_split(data, &root_rows, params),
        rows: root_rows,
        depth: 0,
    }];
    while frontier.len() < max_leaves {
        let pick = frontier
            .iter()
            .enumerate()
            .filter_map(|(i, f)| f.cand.as_ref().map(|c| (i, c.gain())))
            .fold(None, |best: Option<(usize, f64)>, (i, g)| match best {
                Some((_, bg)) if bg >= g => best,
                _ => Some((i, g)),
            });
        let Some((i, _)) = pick else { break };
        let f = frontier.remove(i);
        let cand = f.cand.expect("picked a frontier node with a candidate");
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = f.rows.iter().partition(|&&r| {
            route_frame(data.schema, &cand.rule, data.frame.columns[cand.rule.feature()][r]) == Side::Left
        });
        let left = nodes.len();
        let right = left + 1;
        nodes.push(Node::Leaf {
            leaf: 0,
            n_train: left_rows.len(),
        });
        nodes.push(Node::Leaf {
            leaf: 0,
            n_train: right_rows.len(),
        });
        nodes[f.node] = Node::Split {
            rule: cand.rule,
            left,
            right,
            n_train: f.rows.len(),
        };
        for (node, rows) in [(left, left_rows), (right, right_rows)] {
            let cand = find_best_split(data, &rows, params);
            frontier.push(Frontier {
                node,
                rows,
                depth: f.depth + 1,
                cand,
            });
        }
    }
    frontier.sort_by_key(|f| f.node);
    out.extend(frontier.into_iter().map(|f| (f.node, f.rows, f.depth)));
}

fn route_frame(schema: &Schema, rule: &SplitRule, v: f64) -> Side {
    let f = &schema.features[rule.feature()];
    match f.kind {
        ColumnKind::Categorical => route_categorical(rule, v, f.levels.len()),
        ColumnKind::Numeric => rule.route_value(v),
    }
}

fn fit_leaf(x: &Matrix, y: &[f64], config: &TrainConfig, folds: usize, elastic_net: bool) -> Result<(LinearFit, bool)> {
    if config.leaf_model == LeafModel::Constant || sample_variance(y) == 0.0 {
        return Ok((LinearFit::constant(x, y), false));
    }
    let n = y.len();
    // shrink k rather than skip the search when the leaf is small
    let k = if n >= 2 * folds { folds } else { (n / 2).max(2) };
    let mut opts = CvOptions::new(k, config.seed);
    opts.theta_grid = config.theta_grid.clone();
    let res = if elastic_net {
        cv_elastic_net(x, y, ELASTIC_NET_L2, &opts)
    } else {
        cv_relaxed_lasso_with(x, y, &opts)
    };
    match res {
        Ok((choice, fit)) => Ok((fit, choice.fallback || k < folds)),
        Err(TrustError::Degenerate(msg)) => {
            log::warn!("leaf fit degenerate ({msg}); using an intercept-only model");
            Ok((LinearFit::constant(x, y), true))
        }
        Err(e) => Err(e),
    }
}

/// Picks the `t` in `t_grid` minimizing training MSE; ties go to the larger `t`.
fn calibrate_raw(raw: &[f64], leaf_of_row: &[usize], y: &[f64], leaves: &[Leaf], t_grid: &[f64]) -> Result<f64> {
    if t_grid.is_empty() {
        return Err(TrustError::invalid("truncation grid is empty"));
    }
    let mut grid = t_grid.to_vec();
    grid.sort_by(|a, b| b.total_cmp(a));
    let mut best = (f64::INFINITY, grid[0]);
    for &t in &grid {
        let sse: f64 = raw
            .iter()
            .zip(leaf_of_row)
            .zip(y)
            .map(|((&r, &l), &yi)| (truncate(r, &leaves[l].stats, t) - yi).powi(2))
            .sum();
        let mse = sse / y.len().max(1) as f64;
        if mse < best.0 {
            best = (mse, t);
        }
    }
    Ok(best.1)
}

/// Chooses the truncation constant for a grown model from its training data.
pub fn calibrate_truncation(model: &TrustModel, train: &Dataset, t_grid: &[f64]) -> Result<f64> {
    let y = train.y()?;
    let frame = model.schema.frame(train)?;
    let mut raw = Vec::with_capacity(frame.n_rows);
    let mut leaf_of_row = Vec::with_capacity(frame.n_rows);
    for i in 0..frame.n_rows {
        let (r, l) = model.raw_predict_row(&frame.row(i));
        raw.push(r);
        leaf_of_row.push(l);
    }
    calibrate_raw(&raw, &leaf_of_row, y, &model.leaves, t_grid)
}

impl TrustModel {
    pub fn n_leaves(&self) -> usize {
        self.leaves.len()
    }

    pub fn depth(&self) -> usize {
        self.leaves.iter().map(|l| l.depth).max().unwrap_or(0)
    }

    pub fn route(&self, rule: &SplitRule, raw_row: &[f64]) -> Side {
        route_frame(&self.schema, rule, raw_row[rule.feature()])
    }

    /// Node path from the root to the leaf reached by a raw row.
    pub fn path(&self, raw_row: &[f64]) -> (Vec<PathStep>, usize) {
        let mut steps = Vec::new();
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { leaf, .. } => return (steps, *leaf),
                Node::Split { rule, left, right, .. } => {
                    let side = self.route(rule, raw_row);
                    steps.push(PathStep {
                        node: at,
                        rule: rule.clone(),
                        side,
                    });
                    at = if side == Side::Left { *left } else { *right };
                }
            }
        }
    }

    pub fn leaf_of(&self, raw_row: &[f64]) -> usize {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { leaf, .. } => return *leaf,
                Node::Split { rule, left, right, .. } => {
                    at = if self.route(rule, raw_row) == Side::Left {
                        *left
                    } else {
                        *right
                    };
                }
            }
        }
    }

    /// Imputed one-hot encoding of a raw row.
    pub fn encode_row(&self, raw_row: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.impute.len()];
        self.schema.encode_row(raw_row, &self.impute, &mut out);
        out
    }

    /// Untruncated leaf prediction and the leaf index.
    pub fn raw_predict_row(&self, raw_row: &[f64]) -> (f64, usize) {
        let leaf = self.leaf_of(raw_row);
        let lf = &self.leaves[leaf];
        let mut enc = vec![0.0; self.impute.len()];
        self.schema.encode_row(raw_row, &lf.stats.feature_medians, &mut enc);
        (lf.fit.predict_row(&enc), leaf)
    }

    pub fn predict_row(&self, raw_row: &[f64]) -> f64 {
        let (raw, leaf) = self.raw_predict_row(raw_row);
        truncate(raw, &self.leaves[leaf].stats, self.t)
    }

    /// Truncated predictions for every row of an aligned frame.
    pub fn predict_frame(&self, frame: &Frame) -> Vec<f64> {
        let mut row = vec![0.0; frame.columns.len()];
        (0..frame.n_rows)
            .map(|i| {
                for (j, c) in frame.columns.iter().enumerate() {
                    row[j] = c[i];
                }
                self.predict_row(&row)
            })
            .collect()
    }

    pub fn frame(&self, d: &Dataset) -> Result<Frame> {
        self.schema.frame(d)
    }

    pub fn predict_values(&self, d: &Dataset) -> Result<Vec<f64>> {
        Ok(self.predict_frame(&self.frame(d)?))
    }

    /// Predictions with optional OOD reports.
    pub fn predict(&self, d: &Dataset, check_ood: bool) -> Result<Vec<Prediction>> {
        let frame = self.frame(d)?;
        (0..frame.n_rows)
            .map(|i| {
                let row = frame.row(i);
                let (raw, leaf) = self.raw_predict_row(&row);
                let ood = if check_ood {
                    Some(ood_report(&self.encode_row(&row), &self.ood)?)
                } else {
                    None
                };
                Ok(Prediction {
                    value: truncate(raw, &self.leaves[leaf].stats, self.t),
                    raw,
                    leaf,
                    ood,
                })
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| TrustError::ModelFormat(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<TrustModel> {
        let m: TrustModel = serde_json::from_str(s).map_err(|e| TrustError::ModelFormat(e.to_string()))?;
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()? + "\n").map_err(|e| TrustError::io(path, e))
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<TrustModel> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|e| TrustError::io(path, e))?;
        TrustModel::from_json(&s)
    }

    /// Structural checks run after deserialization.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(TrustError::ModelFormat(m));
        if self.format != MODEL_FORMAT {
            return bad(format!("unsupported format `{}`", self.format));
        }
        self.config
            .validate()
            .map_err(|e| TrustError::ModelFormat(e.to_string()))?;
        let raw = self.schema.n_raw();
        let p = self.schema.n_encoded();
        let mut names = HashSet::new();
        for f in &self.schema.features {
            if f.name.is_empty() || !names.insert(f.name.as_str()) {
                return bad("feature names must be unique and nonempty".into());
            }
            if f.kind == ColumnKind::Numeric && !f.levels.is_empty() {
                return bad(format!("numeric feature `{}` lists levels", f.name));
            }
            if !f.impute.is_finite() {
                return bad(format!("feature `{}` has a non-finite imputation value", f.name));
            }
        }
        if self.impute.len() != p || self.impute.iter().any(|v| !v.is_finite()) {
            return bad("imputation vector does not match the schema".into());
        }
        if self.t.is_nan() || self.t == f64::NEG_INFINITY {
            return bad("truncation constant must be a number or +inf".into());
        }
        if self.nodes.is_empty() || self.leaves.is_empty() {
            return bad("model has no nodes".into());
        }
        // every node except the root is referenced exactly once and children follow parents
        let mut seen_node = vec![false; self.nodes.len()];
        let mut seen_leaf = vec![false; self.leaves.len()];
        seen_node[0] = true;
        for (i, node) in self.nodes.iter().enumerate() {
            match node {
                Node::Split { rule, left, right, .. } => {
                    for &c in [left, right] {
                        if c <= i || c >= self.nodes.len() || seen_node[c] {
                            return bad(format!("node {i} has an invalid child {c}"));
                        }
                        seen_node[c] = true;
                    }
                    self.validate_rule(rule)?;
                }
                Node::Leaf { leaf, .. } => {
                    if *leaf >= self.leaves.len() || seen_leaf[*leaf] {
                        return bad(format!("node {i} references an invalid leaf {leaf}"));
                    }
                    seen_leaf[*leaf] = true;
                }
            }
        }
        if seen_node.iter().any(|s| !s) || seen_leaf.iter().any(|s| !s) {
            return bad("tree contains unreachable nodes or leaves".into());
        }
        for (i, l) in self.leaves.iter().enumerate() {
            let f = &l.fit;
            let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
            if f.coefficients.len() != p
                || f.std_coefficients.len() != p
                || f.scaling.mean.len() != p
                || f.scaling.sd.len() != p
                || f.active_set.iter().any(|&k| k >= p)
                || !f.intercept.is_finite()
                || !finite(&f.coefficients)
            {
                return bad(format!("leaf {i} model does not match the schema"));
            }
            let s = &l.stats;
            if s.feature_medians.len() != p
                || s.feature_means.len() != p
                || !(s.y_min <= s.y_max)
                || !(s.s_lower >= 0.0 && s.s_upper >= 0.0)
                || ![s.y_min, s.y_max, s.s_lower, s.s_upper].iter().all(|v| v.is_finite())
                || !finite(&s.feature_medians)
            {
                return bad(format!("leaf {i} statistics are malformed"));
            }
        }
        let o = &self.ood;
        if o.center.len() != p
            || o.feature_min.len() != p
            || o.feature_max.len() != p
            || o.precision.nrows() != p
            || o.precision.ncols() != p
            || o.covariance.nrows() != p
            || o.covariance.ncols() != p
            || !o.precision.is_finite()
            || o.threshold.is_nan()
        {
            return bad("OOD statistics do not match the schema".into());
        }
        let _ = raw;
        Ok(())
    }

    fn validate_rule(&self, rule: &SplitRule) -> Result<()> {
        let j = rule.feature();
        let Some(f) = self.schema.features.get(j) else {
            return Err(TrustError::ModelFormat(format!("split on unknown feature {j}")));
        };
        let ok = match rule {
            SplitRule::Categorical { left_levels, .. } => {
                f.kind == ColumnKind::Categorical
                    && !left_levels.is_empty()
                    && left_levels.len() < f.levels.len()
                    && left_levels.iter().all(|&k| (k as usize) < f.levels.len())
            }
            SplitRule::MissingOnly { .. } => true,
            _ => f.kind == ColumnKind::Numeric && !rule.threshold().is_some_and(f64::is_nan),
        };
        if ok {
            Ok(())
        } else {
            Err(TrustError::ModelFormat(format!(
                "split on `{}` does not match its kind",
                f.name
            )))
        }
    }
}
