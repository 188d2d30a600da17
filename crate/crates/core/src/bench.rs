//! Cross-validated benchmark harness: unexplained variance per fold, mean
//! ranks across datasets and table rendering.

use std::fmt::{self, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{generate_synthetic, load_csv, make_folds, Dataset, SyntheticFamily, SyntheticSpec};
use crate::error::{Result, TrustError};
use crate::linalg::{mean, population_variance, sample_sd};
use crate::tree::{grow, TrainConfig};

pub const DEFAULT_SEEDS: [u64; 2] = [123, 321];
pub const DEFAULT_FOLDS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "trust", alias = "TRUST")]
    Trust,
    /// TRUST with intercept-only leaves and a mean-SSE split search.
    #[serde(rename = "cart", alias = "CartMode")]
    CartMode,
    /// TRUST with a single leaf and `theta` fixed to 1.
    #[serde(rename = "lasso", alias = "LassoMode")]
    LassoMode,
}

impl ModelKind {
    pub fn config(self, seed: u64) -> TrainConfig {
        let base = TrainConfig {
            seed,
            ..TrainConfig::default()
        };
        match self {
            ModelKind::Trust => base,
            ModelKind::CartMode => base.cart(),
            ModelKind::LassoMode => base.lasso(),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ModelKind::Trust => "TRUST",
            ModelKind::CartMode => "CART",
            ModelKind::LassoMode => "Lasso",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Synthetic dataset entry; without a seed each benchmark seed also seeds the generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSource {
    pub family: SyntheticFamily,
    pub n: usize,
    pub noise_sd: f64,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetEntry {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticSource>,
}

fn default_seeds() -> Vec<u64> {
    DEFAULT_SEEDS.to_vec()
}

fn default_folds() -> usize {
    DEFAULT_FOLDS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchSpec {
    pub datasets: Vec<DatasetEntry>,
    pub models: Vec<ModelKind>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_folds")]
    pub folds: usize,
}

impl BenchSpec {
    /// Parses a spec; relative CSV paths resolve against `base_dir`.
    pub fn from_json(s: &str, base_dir: Option<&Path>) -> Result<BenchSpec> {
        let mut spec: BenchSpec =
            serde_json::from_str(s).map_err(|e| TrustError::invalid(format!("bench spec: {e}")))?;
        if let Some(dir) = base_dir {
            for d in &mut spec.datasets {
                if let Some(p) = &d.csv {
                    if p.is_relative() {
                        d.csv = Some(dir.join(p));
                    }
                }
            }
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<BenchSpec> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|e| TrustError::io(path, e))?;
        BenchSpec::from_json(&s, path.parent())
    }

    pub fn validate(&self) -> Result<()> {
        if self.datasets.is_empty() || self.models.is_empty() {
            return Err(TrustError::invalid(
                "bench spec needs at least one dataset and one model",
            ));
        }
        if self.seeds.is_empty() {
            return Err(TrustError::invalid("bench spec needs at least one seed"));
        }
        if self.folds < 2 {
            return Err(TrustError::invalid("bench spec needs at least 2 folds"));
        }
        for d in &self.datasets {
            match (&d.csv, &d.synthetic) {
                (Some(_), None) => {
                    if d.target.is_none() {
                        return Err(TrustError::invalid(format!(
                            "dataset `{}` needs a target column",
                            d.name
                        )));
                    }
                }
                (None, Some(s)) => {
                    if s.n < self.folds || !(s.noise_sd > 0.0) || !s.noise_sd.is_finite() {
                        return Err(TrustError::invalid(format!(
                            "dataset `{}` has an invalid synthetic spec",
                            d.name
                        )));
                    }
                }
                _ => {
                    return Err(TrustError::invalid(format!(
                        "dataset `{}` must give exactly one of `csv` or `synthetic`",
                        d.name
                    )))
                }
            }
        }
        Ok(())
    }
}

/// Test MSE over the test population variance (1 − R²); `None` for a constant test response.
pub fn unexplained_variance(predictions: &[f64], y_test: &[f64]) -> Option<f64> {
    assert_eq!(
        predictions.len(),
        y_test.len(),
        "prediction and response lengths differ"
    );
    if y_test.len() < 2 {
        return None;
    }
    let var = population_variance(y_test);
    if !(var > 0.0) {
        return None;
    }
    let mse = predictions
        .iter()
        .zip(y_test)
        .map(|(p, y)| (p - y).powi(2))
        .sum::<f64>()
        / y_test.len() as f64;
    Some(mse / var)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub mean_uv: f64,
    pub std_uv: f64,
    /// Fold × seed evaluations that entered the mean.
    pub n_evaluations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub model: ModelKind,
    pub mean_rank: Option<f64>,
    pub std_rank: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub datasets: Vec<String>,
    pub models: Vec<ModelKind>,
    /// Indexed `[dataset][model]`; `None` is N/A.
    pub cells: Vec<Vec<Option<CellResult>>>,
    /// Midranks per dataset, same indexing.
    pub ranks: Vec<Vec<Option<f64>>>,
    pub summary: Vec<ModelSummary>,
}

impl BenchResult {
    pub fn cell(&self, dataset: &str, model: ModelKind) -> Option<&CellResult> {
        let d = self.datasets.iter().position(|n| n == dataset)?;
        let m = self.models.iter().position(|&k| k == model)?;
        self.cells[d][m].as_ref()
    }
}

/// Midranks of the present values (ties share the mean of their ranks).
pub fn midranks(values: &[Option<f64>]) -> Vec<Option<f64>> {
    let mut idx: Vec<usize> = (0..values.len()).filter(|&i| values[i].is_some()).collect();
    idx.sort_by(|&a, &b| values[a].unwrap().total_cmp(&values[b].unwrap()));
    let mut out = vec![None; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = Some(r);
        }
        i = j + 1;
    }
    out
}

fn materialize(entry: &DatasetEntry, seed: u64) -> Result<Dataset> {
    match (&entry.csv, &entry.synthetic) {
        (Some(path), _) => load_csv(path, entry.target.as_deref().unwrap_or("y")),
        (None, Some(s)) => generate_synthetic(&SyntheticSpec {
            family: s.family,
            n: s.n,
            noise_sd: s.noise_sd,
            seed: s.seed.unwrap_or(seed),
        }),
        (None, None) => Err(TrustError::invalid(format!("dataset `{}` has no source", entry.name))),
    }
}

/// Unexplained variance on every fold of one dataset and seed, per model.
fn evaluate(data: &Dataset, models: &[ModelKind], folds: usize, seed: u64) -> Result<Vec<Vec<Option<f64>>>> {
    let plan = make_folds(data.n_rows, folds, seed)?;
    let y = data.y()?;
    let tasks: Vec<(usize, usize)> = (0..folds)
        .flat_map(|f| (0..models.len()).map(move |m| (f, m)))
        .collect();
    let results: Vec<Result<Option<f64>>> = tasks
        .par_iter()
        .map(|&(f, m)| {
            let train_rows = plan.train_rows(f);
            let test_rows = plan.test_rows(f);
            let model = grow(&data.subset(&train_rows), &models[m].config(seed))?;
            let pred = model.predict_values(&data.subset(&test_rows))?;
            let yt: Vec<f64> = test_rows.iter().map(|&r| y[r]).collect();
            let uv = unexplained_variance(&pred, &yt);
            if uv.is_none() {
                log::warn!("fold {f} (seed {seed}) has a constant test response; skipped");
            }
            Ok(uv)
        })
        .collect();
    let mut out = vec![vec![None; folds]; models.len()];
    for ((f, m), r) in tasks.into_iter().zip(results) {
        out[m][f] = Some(r?);
    }
    Ok(out
        .into_iter()
        .map(|v| v.into_iter().map(|x| x.flatten()).collect())
        .collect())
}

pub fn run_benchmark(spec: &BenchSpec) -> Result<BenchResult> {
    spec.validate()?;
    let nm = spec.models.len();
    let mut cells = Vec::with_capacity(spec.datasets.len());
    for entry in &spec.datasets {
        let mut values: Vec<Vec<f64>> = vec![Vec::new(); nm];
        let mut failed = vec![false; nm];
        for &seed in &spec.seeds {
            let data = materialize(entry, seed)?;
            for (m, &kind) in spec.models.iter().enumerate() {
                if failed[m] {
                    continue;
                }
                match evaluate(&data, &[kind], spec.folds, seed) {
                    Ok(v) => values[m].extend(v[0].iter().flatten()),
                    Err(e) => {
                        log::warn!("{kind} failed on `{}` (seed {seed}): {e}", entry.name);
                        failed[m] = true;
                    }
                }
            }
        }
        cells.push(
            (0..nm)
                .map(|m| {
                    if failed[m] || values[m].is_empty() {
                        None
                    } else {
                        Some(CellResult {
                            mean_uv: mean(&values[m]),
                            std_uv: sample_sd(&values[m]),
                            n_evaluations: values[m].len(),
                        })
                    }
                })
                .collect::<Vec<_>>(),
        );
    }
    let ranks: Vec<Vec<Option<f64>>> = cells
        .iter()
        .map(|row| midranks(&row.iter().map(|c| c.as_ref().map(|c| c.mean_uv)).collect::<Vec<_>>()))
        .collect();
    let summary = (0..nm)
        .map(|m| {
            let r: Vec<f64> = ranks.iter().filter_map(|row| row[m]).collect();
            ModelSummary {
                model: spec.models[m],
                mean_rank: (!r.is_empty()).then(|| mean(&r)),
                std_rank: (!r.is_empty()).then(|| sample_sd(&r)),
            }
        })
        .collect();
    Ok(BenchResult {
        datasets: spec.datasets.iter().map(|d| d.name.clone()).collect(),
        models: spec.models.clone(),
        cells,
        ranks,
        summary,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), crate::data::format_f64)
}

/// Full-precision CSV: one row per dataset, then mean-rank and rank-SD rows.
pub fn render_csv(r: &BenchResult) -> String {
    let mut out = String::from("dataset");
    for m in &r.models {
        let _ = write!(out, ",{}_mean_uv,{}_std_uv,{}_rank", m.label(), m.label(), m.label());
    }
    out.push('\n');
    for (d, name) in r.datasets.iter().enumerate() {
        out.push_str(name);
        for m in 0..r.models.len() {
            let c = r.cells[d][m].as_ref();
            let _ = write!(
                out,
                ",{},{},{}",
                opt(c.map(|c| c.mean_uv)),
                opt(c.map(|c| c.std_uv)),
                opt(r.ranks[d][m])
            );
        }
        out.push('\n');
    }
    for (label, pick) in [
        (
            "mean_rank",
            (|s: &ModelSummary| s.mean_rank) as fn(&ModelSummary) -> Option<f64>,
        ),
        ("std_rank", |s: &ModelSummary| s.std_rank),
    ] {
        out.push_str(label);
        for s in &r.summary {
            let _ = write!(out, ",,,{}", opt(pick(s)));
        }
        out.push('\n');
    }
    out
}

fn display_uv(v: f64) -> String {
    if v > 1.0 {
        ">1".into()
    } else {
        format!("{v:.2}")
    }
}

/// Aligned text table; the per-row best values (to two decimals) are wrapped in `*`.
pub fn render_text(r: &BenchResult) -> String {
    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut header = vec!["dataset".to_string()];
    header.extend(r.models.iter().map(|m| m.label().to_string()));
    rows.push(header);
    for (d, name) in r.datasets.iter().enumerate() {
        let rounded: Vec<Option<String>> = r.cells[d]
            .iter()
            .map(|c| c.as_ref().map(|c| format!("{:.2}", c.mean_uv)))
            .collect();
        let best = r.cells[d]
            .iter()
            .flatten()
            .map(|c| c.mean_uv)
            .fold(f64::INFINITY, f64::min);
        let best_txt = format!("{best:.2}");
        let mut row = vec![name.clone()];
        for (m, c) in r.cells[d].iter().enumerate() {
            row.push(match c {
                None => "N/A".into(),
                Some(c) => {
                    let txt = display_uv(c.mean_uv);
                    if rounded[m].as_deref() == Some(best_txt.as_str()) {
                        format!("*{txt}*")
                    } else {
                        txt
                    }
                }
            });
        }
        rows.push(row);
    }
    let mut mean_row = vec!["mean rank".to_string()];
    let mut sd_row = vec!["rank sd".to_string()];
    for s in &r.summary {
        mean_row.push(s.mean_rank.map_or("N/A".into(), |v| format!("{v:.2}")));
        sd_row.push(s.std_rank.map_or("N/A".into(), |v| format!("{v:.2}")));
    }
    rows.push(mean_row);
    rows.push(sd_row);
    let ncol = rows[0].len();
    let widths: Vec<usize> = (0..ncol)
        .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (i, row) in rows.iter().enumerate() {
        let cells: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(c, v)| {
                if c == 0 {
                    format!("{v:<w$}", w = widths[c])
                } else {
                    format!("{v:>w$}", w = widths[c])
                }
            })
            .collect();
        let _ = writeln!(out, "{}", cells.join("  ").trim_end());
        if i == 0 || i == r.datasets.len() {
            let total: usize = widths.iter().sum::<usize>() + 2 * (ncol - 1);
            let _ = writeln!(out, "{}", "-".repeat(total));
        }
    }
    out
}

/// CSV and aligned-text renderings.
pub fn render_table(r: &BenchResult) -> (String, String) {
    (render_csv(r), render_text(r))
}
