use serde::{Deserialize, Serialize};

use crate::data::{format_f64, ColumnKind, ColumnValues, Dataset};
use crate::error::{Result, TrustError};
use crate::linalg::{median, Matrix};

/// One raw input feature as seen at training time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub kind: ColumnKind,
    /// Level table for categorical features (empty for numeric).
    #[serde(default)]
    pub levels: Vec<String>,
    /// Training median (numeric) or modal level code (categorical) used for imputation.
    pub impute: f64,
}

/// Raw feature layout plus the derived one-hot layout used by leaf models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub features: Vec<FeatureSpec>,
    pub target_name: String,
}

/// Raw feature values aligned to a schema.
///
/// Numeric features hold their value, categorical features their level code
/// as `f64`. Missing cells are NaN; a categorical level never seen in training
/// is encoded as `levels.len()`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub n_rows: usize,
    pub columns: Vec<Vec<f64>>,
}

impl Frame {
    pub fn row(&self, i: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[i]).collect()
    }

    pub fn subset(&self, rows: &[usize]) -> Frame {
        Frame {
            n_rows: rows.len(),
            columns: self
                .columns
                .iter()
                .map(|c| rows.iter().map(|&r| c[r]).collect())
                .collect(),
        }
    }
}

impl Schema {
    /// Derives the schema and imputation statistics from training data.
    pub fn fit(d: &Dataset) -> Schema {
        let features = d
            .feature_names
            .iter()
            .zip(&d.columns)
            .map(|(name, c)| match &c.values {
                ColumnValues::Numeric(v) => {
                    let m = median(v);
                    FeatureSpec {
                        name: name.clone(),
                        kind: ColumnKind::Numeric,
                        levels: Vec::new(),
                        impute: if m.is_nan() { 0.0 } else { m },
                    }
                }
                ColumnValues::Categorical { codes, levels } => {
                    let mut counts = vec![0usize; levels.len()];
                    for (&k, &m) in codes.iter().zip(&c.missing) {
                        if !m {
                            counts[k as usize] += 1;
                        }
                    }
                    let mode = counts
                        .iter()
                        .enumerate()
                        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
                        .map_or(0, |(k, _)| k);
                    FeatureSpec {
                        name: name.clone(),
                        kind: ColumnKind::Categorical,
                        levels: levels.clone(),
                        impute: mode as f64,
                    }
                }
            })
            .collect();
        Schema {
            features,
            target_name: d.target_name.clone().unwrap_or_else(|| "y".into()),
        }
    }

    pub fn n_raw(&self) -> usize {
        self.features.len()
    }

    /// Width of a feature in the one-hot layout.
    pub fn width(&self, j: usize) -> usize {
        match self.features[j].kind {
            ColumnKind::Numeric => 1,
            ColumnKind::Categorical => self.features[j].levels.len(),
        }
    }

    pub fn n_encoded(&self) -> usize {
        (0..self.n_raw()).map(|j| self.width(j)).sum()
    }

    /// Start of each raw feature in the encoded layout.
    pub fn offsets(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.n_raw());
        let mut acc = 0;
        for j in 0..self.n_raw() {
            out.push(acc);
            acc += self.width(j);
        }
        out
    }

    pub fn encoded_names(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(self.n_encoded());
        for f in &self.features {
            match f.kind {
                ColumnKind::Numeric => out.push(f.name.clone()),
                ColumnKind::Categorical => out.extend(f.levels.iter().map(|l| format!("{}={}", f.name, l))),
            }
        }
        out
    }

    /// Raw feature that owns encoded column `k`.
    pub fn raw_of_encoded(&self, k: usize) -> usize {
        let offs = self.offsets();
        (0..self.n_raw()).rev().find(|&j| offs[j] <= k).unwrap_or(0)
    }

    /// Encoded value used in place of a missing raw cell.
    pub fn impute_vector(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_encoded());
        for f in &self.features {
            match f.kind {
                ColumnKind::Numeric => out.push(f.impute),
                ColumnKind::Categorical => {
                    out.extend((0..f.levels.len()).map(|k| if k as f64 == f.impute { 1.0 } else { 0.0 }))
                }
            }
        }
        out
    }

    /// Aligns a dataset to this schema by feature name.
    pub fn frame(&self, d: &Dataset) -> Result<Frame> {
        let mut columns = Vec::with_capacity(self.n_raw());
        for f in &self.features {
            let idx = d
                .feature_index(&f.name)
                .ok_or_else(|| TrustError::SchemaMismatch(format!("missing feature `{}`", f.name)))?;
            let col = &d.columns[idx];
            let values: Vec<f64> = match (f.kind, &col.values) {
                (ColumnKind::Numeric, ColumnValues::Numeric(v)) => v
                    .iter()
                    .zip(&col.missing)
                    .map(|(&x, &m)| if m { f64::NAN } else { x })
                    .collect(),
                (ColumnKind::Numeric, ColumnValues::Categorical { .. }) => {
                    return Err(TrustError::SchemaMismatch(format!(
                        "feature `{}` was numeric in training but is categorical here",
                        f.name
                    )))
                }
                (ColumnKind::Categorical, ColumnValues::Categorical { codes, levels }) => {
                    let map: Vec<f64> = levels.iter().map(|l| self.level_code(f, l)).collect();
                    codes
                        .iter()
                        .zip(&col.missing)
                        .map(|(&k, &m)| if m { f64::NAN } else { map[k as usize] })
                        .collect()
                }
                (ColumnKind::Categorical, ColumnValues::Numeric(v)) => v
                    .iter()
                    .zip(&col.missing)
                    .map(|(&x, &m)| {
                        if m {
                            f64::NAN
                        } else {
                            self.level_code(f, &format_f64(x))
                        }
                    })
                    .collect(),
            };
            columns.push(values);
        }
        Ok(Frame {
            n_rows: d.n_rows,
            columns,
        })
    }

    fn level_code(&self, f: &FeatureSpec, level: &str) -> f64 {
        f.levels.iter().position(|l| l == level).unwrap_or(f.levels.len()) as f64
    }

    /// One-hot encodes a raw row, filling missing cells from `impute`.
    pub fn encode_row(&self, raw: &[f64], impute: &[f64], out: &mut [f64]) {
        let mut k = 0;
        for (j, f) in self.features.iter().enumerate() {
            let v = raw[j];
            match f.kind {
                ColumnKind::Numeric => {
                    out[k] = if v.is_nan() { impute[k] } else { v };
                    k += 1;
                }
                ColumnKind::Categorical => {
                    let w = f.levels.len();
                    for l in 0..w {
                        out[k + l] = if v.is_nan() {
                            impute[k + l]
                        } else if v as usize == l {
                            1.0
                        } else {
                            0.0
                        };
                    }
                    k += w;
                }
            }
        }
    }

    /// Encoded, imputed design matrix for all rows of a frame.
    pub fn encode(&self, frame: &Frame, impute: &[f64]) -> Matrix {
        let p = self.n_encoded();
        let mut m = Matrix::zeros(frame.n_rows, p);
        let mut raw = vec![0.0; self.n_raw()];
        for i in 0..frame.n_rows {
            for (j, c) in frame.columns.iter().enumerate() {
                raw[j] = c[i];
            }
            self.encode_row(&raw, impute, m.row_mut(i));
        }
        m
    }

    /// Human-readable value of a raw cell.
    pub fn display_value(&self, j: usize, v: f64) -> String {
        if v.is_nan() {
            return "NA".into();
        }
        let f = &self.features[j];
        match f.kind {
            ColumnKind::Numeric => format_f64(v),
            ColumnKind::Categorical => f.levels.get(v as usize).cloned().unwrap_or_else(|| "<unseen>".into()),
        }
    }
}
