//! Tabular data: CSV ingestion, one-hot encoding, median imputation, fold
//! planning and the synthetic benchmark generators.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TrustError};
use crate::linalg::{median, Cholesky, Matrix};

/// Tokens (compared case-insensitively after trimming) that denote a missing cell.
pub const MISSING_TOKENS: [&str; 4] = ["", "na", "nan", "null"];

pub fn is_missing_token(token: &str) -> bool {
    let t = token.trim();
    MISSING_TOKENS.iter().any(|m| t.eq_ignore_ascii_case(m))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Numeric,
    Categorical,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ColumnValues {
    /// Missing cells hold NaN.
    Numeric(Vec<f64>),
    /// Codes index into `levels`; missing cells hold code 0 and are masked.
    Categorical { codes: Vec<u32>, levels: Vec<String> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub values: ColumnValues,
    pub missing: Vec<bool>,
}

impl Column {
    pub fn numeric(values: Vec<f64>) -> Self {
        let missing = values.iter().map(|v| v.is_nan()).collect();
        Column {
            values: ColumnValues::Numeric(values),
            missing,
        }
    }

    /// Builds a categorical column from optional tokens, indexing levels in
    /// first-appearance order.
    pub fn categorical<S: AsRef<str>>(tokens: &[Option<S>]) -> Self {
        let mut levels: Vec<String> = Vec::new();
        let mut codes = Vec::with_capacity(tokens.len());
        let mut missing = Vec::with_capacity(tokens.len());
        for t in tokens {
            match t {
                Some(s) => {
                    let s = s.as_ref();
                    let code = match levels.iter().position(|l| l == s) {
                        Some(c) => c,
                        None => {
                            levels.push(s.to_string());
                            levels.len() - 1
                        }
                    };
                    codes.push(code as u32);
                    missing.push(false);
                }
                None => {
                    codes.push(0);
                    missing.push(true);
                }
            }
        }
        Column {
            values: ColumnValues::Categorical { codes, levels },
            missing,
        }
    }

    pub fn kind(&self) -> ColumnKind {
        match self.values {
            ColumnValues::Numeric(_) => ColumnKind::Numeric,
            ColumnValues::Categorical { .. } => ColumnKind::Categorical,
        }
    }

    pub fn len(&self) -> usize {
        self.missing.len()
    }

    pub fn is_empty(&self) -> bool {
        self.missing.is_empty()
    }

    pub fn levels(&self) -> Option<&[String]> {
        match &self.values {
            ColumnValues::Categorical { levels, .. } => Some(levels),
            ColumnValues::Numeric(_) => None,
        }
    }

    /// Cell rendered as text; `None` when missing.
    pub fn cell_text(&self, row: usize) -> Option<String> {
        if self.missing[row] {
            return None;
        }
        Some(match &self.values {
            ColumnValues::Numeric(v) => format_f64(v[row]),
            ColumnValues::Categorical { codes, levels } => levels[codes[row] as usize].clone(),
        })
    }

    fn subset(&self, rows: &[usize]) -> Column {
        let missing = rows.iter().map(|&r| self.missing[r]).collect();
        let values = match &self.values {
            ColumnValues::Numeric(v) => ColumnValues::Numeric(rows.iter().map(|&r| v[r]).collect()),
            ColumnValues::Categorical { codes, levels } => ColumnValues::Categorical {
                codes: rows.iter().map(|&r| codes[r]).collect(),
                levels: levels.clone(),
            },
        };
        Column { values, missing }
    }
}

/// Shortest round-trip decimal representation.
pub fn format_f64(v: f64) -> String {
    format!("{v}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub feature_names: Vec<String>,
    pub columns: Vec<Column>,
    pub target_name: Option<String>,
    pub target: Option<Vec<f64>>,
    pub n_rows: usize,
}

impl Dataset {
    pub fn new(
        feature_names: Vec<String>,
        columns: Vec<Column>,
        target_name: Option<String>,
        target: Option<Vec<f64>>,
    ) -> Result<Self> {
        if feature_names.len() != columns.len() {
            return Err(TrustError::invalid("feature_names and columns differ in length"));
        }
        let n_rows = match (&target, columns.first()) {
            (Some(t), _) => t.len(),
            (None, Some(c)) => c.len(),
            (None, None) => 0,
        };
        for (name, c) in feature_names.iter().zip(&columns) {
            if c.len() != n_rows {
                return Err(TrustError::invalid(format!(
                    "column `{name}` has {} rows, expected {n_rows}",
                    c.len()
                )));
            }
            if let ColumnValues::Categorical { codes, levels } = &c.values {
                if codes
                    .iter()
                    .zip(&c.missing)
                    .any(|(&k, &m)| !m && k as usize >= levels.len())
                {
                    return Err(TrustError::invalid(format!(
                        "column `{name}` has a code outside its level table"
                    )));
                }
            }
        }
        let mut seen = std::collections::HashSet::new();
        for name in &feature_names {
            if name.is_empty() {
                return Err(TrustError::invalid("empty feature name"));
            }
            if !seen.insert(name.as_str()) {
                return Err(TrustError::invalid(format!("duplicate feature name `{name}`")));
            }
        }
        Ok(Dataset {
            feature_names,
            columns,
            target_name,
            target,
            n_rows,
        })
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }

    pub fn y(&self) -> Result<&[f64]> {
        self.target.as_deref().ok_or(TrustError::NoTarget)
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|n| n == name)
    }

    pub fn subset(&self, rows: &[usize]) -> Dataset {
        Dataset {
            feature_names: self.feature_names.clone(),
            columns: self.columns.iter().map(|c| c.subset(rows)).collect(),
            target_name: self.target_name.clone(),
            target: self.target.as_ref().map(|t| rows.iter().map(|&r| t[r]).collect()),
            n_rows: rows.len(),
        }
    }

    pub fn with_target(&self, target: Vec<f64>) -> Dataset {
        assert_eq!(target.len(), self.n_rows);
        Dataset {
            target: Some(target),
            target_name: self.target_name.clone().or_else(|| Some("y".into())),
            ..self.clone()
        }
    }

    pub fn has_missing(&self) -> bool {
        self.columns.iter().any(|c| c.missing.iter().any(|&m| m))
    }

    /// Numeric-only view as a dense matrix (missing → NaN). Errors on
    /// categorical columns.
    pub fn numeric_matrix(&self) -> Result<Matrix> {
        let mut cols = Vec::with_capacity(self.columns.len());
        for (name, c) in self.feature_names.iter().zip(&self.columns) {
            match &c.values {
                ColumnValues::Numeric(v) => cols.push(v.clone()),
                ColumnValues::Categorical { .. } => {
                    return Err(TrustError::SchemaMismatch(format!("column `{name}` is categorical")))
                }
            }
        }
        if cols.is_empty() {
            return Ok(Matrix::zeros(self.n_rows, 0));
        }
        Ok(Matrix::from_columns(&cols))
    }
}

/// Loads a labeled dataset; `target_name` must name a fully numeric column.
pub fn load_csv(path: impl AsRef<Path>, target_name: &str) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| TrustError::io(path, e))?;
    parse_csv(file, Some(target_name))
}

/// Loads a dataset for prediction; when `target_name` is given and present
/// it is parsed as the target, otherwise the file is treated as unlabeled.
pub fn load_csv_features(path: impl AsRef<Path>, target_name: Option<&str>) -> Result<Dataset> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| TrustError::io(path, e))?;
    match target_name {
        Some(t) => match parse_csv(bytes.as_slice(), Some(t)) {
            Err(TrustError::TargetAbsent(_)) => parse_csv(bytes.as_slice(), None),
            other => other,
        },
        None => parse_csv(bytes.as_slice(), None),
    }
}

/// Parses RFC-4180 CSV with a header row.
pub fn parse_csv<R: Read>(reader: R, target_name: Option<&str>) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| TrustError::Csv(e.to_string()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if header.is_empty() {
        return Err(TrustError::Csv("missing header row".into()));
    }
    let width = header.len();
    let target_idx = match target_name {
        Some(t) => Some(
            header
                .iter()
                .position(|h| h == t)
                .ok_or_else(|| TrustError::TargetAbsent(t.to_string()))?,
        ),
        None => None,
    };
    let mut raw: Vec<Vec<String>> = vec![Vec::new(); width];
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| TrustError::Csv(e.to_string()))?;
        if rec.len() != width {
            return Err(TrustError::RaggedRow {
                row,
                found: rec.len(),
                expected: width,
            });
        }
        for (j, field) in rec.iter().enumerate() {
            raw[j].push(field.to_string());
        }
    }

    let mut names = Vec::new();
    let mut columns = Vec::new();
    let mut target = None;
    for (j, (name, cells)) in header.into_iter().zip(raw).enumerate() {
        if Some(j) == target_idx {
            let mut t = Vec::with_capacity(cells.len());
            for (row, cell) in cells.iter().enumerate() {
                if is_missing_token(cell) {
                    return Err(TrustError::TargetMissing { column: name, row });
                }
                match parse_number(cell) {
                    Some(v) => t.push(v),
                    None => {
                        return Err(TrustError::NonNumericTarget {
                            column: name,
                            row,
                            token: cell.clone(),
                        })
                    }
                }
            }
            target = Some(t);
        } else {
            columns.push(column_from_cells(&cells));
            names.push(name);
        }
    }
    let n_rows = columns
        .first()
        .map(Column::len)
        .or_else(|| target.as_ref().map(Vec::len))
        .unwrap_or(0);
    Dataset::new(names, columns, target_name.map(str::to_string), target).map(|mut d| {
        d.n_rows = n_rows;
        d
    })
}

fn parse_number(token: &str) -> Option<f64> {
    f64::from_str(token.trim()).ok().filter(|v| v.is_finite())
}

fn column_from_cells(cells: &[String]) -> Column {
    let numeric: Option<Vec<f64>> = cells
        .iter()
        .map(|c| {
            if is_missing_token(c) {
                Some(f64::NAN)
            } else {
                parse_number(c)
            }
        })
        .collect();
    match numeric {
        Some(values) => Column::numeric(values),
        None => {
            let tokens: Vec<Option<&str>> = cells
                .iter()
                .map(|c| if is_missing_token(c) { None } else { Some(c.as_str()) })
                .collect();
            Column::categorical(&tokens)
        }
    }
}

/// Writes the dataset (features then target) as CSV; missing cells are written as `NA`.
pub fn write_csv<W: Write>(d: &Dataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = d.feature_names.clone();
    if d.target.is_some() {
        header.push(d.target_name.clone().unwrap_or_else(|| "y".into()));
    }
    w.write_record(&header).map_err(|e| TrustError::Csv(e.to_string()))?;
    for i in 0..d.n_rows {
        let mut rec: Vec<String> = d
            .columns
            .iter()
            .map(|c| c.cell_text(i).unwrap_or_else(|| "NA".into()))
            .collect();
        if let Some(t) = &d.target {
            rec.push(format_f64(t[i]));
        }
        w.write_record(&rec).map_err(|e| TrustError::Csv(e.to_string()))?;
    }
    w.flush().map_err(|e| TrustError::Csv(e.to_string()))?;
    Ok(())
}

pub fn save_csv(d: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| TrustError::io(path, e))?;
    write_csv(d, std::io::BufWriter::new(file))
}

/// Replaces each categorical column with one indicator column per level,
/// named `<feature>=<level>`.
pub fn one_hot_encode(d: &Dataset) -> Dataset {
    let mut names = Vec::new();
    let mut columns = Vec::new();
    for (name, c) in d.feature_names.iter().zip(&d.columns) {
        match &c.values {
            ColumnValues::Numeric(_) => {
                names.push(name.clone());
                columns.push(c.clone());
            }
            ColumnValues::Categorical { codes, levels } => {
                for (k, level) in levels.iter().enumerate() {
                    let values = codes
                        .iter()
                        .zip(&c.missing)
                        .map(|(&code, &m)| {
                            if m {
                                f64::NAN
                            } else if code as usize == k {
                                1.0
                            } else {
                                0.0
                            }
                        })
                        .collect();
                    names.push(format!("{name}={level}"));
                    columns.push(Column {
                        values: ColumnValues::Numeric(values),
                        missing: c.missing.clone(),
                    });
                }
            }
        }
    }
    Dataset {
        feature_names: names,
        columns,
        target_name: d.target_name.clone(),
        target: d.target.clone(),
        n_rows: d.n_rows,
    }
}

/// Per-column statistic used for imputation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ColumnStat {
    Median { value: f64 },
    Mode { level: Option<String> },
}

/// Training-set imputation statistics, one per feature column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub names: Vec<String>,
    pub stats: Vec<ColumnStat>,
}

impl ColumnStats {
    /// Medians of numeric columns (0 when fully missing) and the modal level
    /// of categorical columns (earliest level on ties).
    pub fn fit(d: &Dataset) -> ColumnStats {
        let stats = d
            .columns
            .iter()
            .map(|c| match &c.values {
                ColumnValues::Numeric(v) => {
                    let m = median(v);
                    ColumnStat::Median {
                        value: if m.is_nan() { 0.0 } else { m },
                    }
                }
                ColumnValues::Categorical { codes, levels } => {
                    let mut counts = vec![0usize; levels.len()];
                    for (&k, &m) in codes.iter().zip(&c.missing) {
                        if !m {
                            counts[k as usize] += 1;
                        }
                    }
                    let best = counts
                        .iter()
                        .enumerate()
                        .filter(|(_, &n)| n > 0)
                        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
                        .map(|(k, _)| levels[k].clone());
                    ColumnStat::Mode { level: best }
                }
            })
            .collect();
        ColumnStats {
            names: d.feature_names.clone(),
            stats,
        }
    }
}

/// Fills missing cells from training statistics and clears the missing mask.
pub fn median_impute(d: &Dataset, medians: &ColumnStats) -> Result<Dataset> {
    if medians.names != d.feature_names {
        return Err(TrustError::SchemaMismatch(
            "imputation statistics were fit on different columns".into(),
        ));
    }
    let mut columns = Vec::with_capacity(d.columns.len());
    for ((name, c), stat) in d.feature_names.iter().zip(&d.columns).zip(&medians.stats) {
        // a fully missing column parses as numeric whatever its training kind
        let placeholder;
        let c = if matches!(stat, ColumnStat::Mode { .. })
            && c.kind() == ColumnKind::Numeric
            && c.missing.iter().all(|&m| m)
        {
            placeholder = Column {
                values: ColumnValues::Categorical {
                    codes: vec![0; c.len()],
                    levels: Vec::new(),
                },
                missing: c.missing.clone(),
            };
            &placeholder
        } else {
            c
        };
        let col = match (&c.values, stat) {
            (ColumnValues::Numeric(v), ColumnStat::Median { value }) => {
                let values = v
                    .iter()
                    .zip(&c.missing)
                    .map(|(&x, &m)| if m { *value } else { x })
                    .collect();
                Column {
                    values: ColumnValues::Numeric(values),
                    missing: vec![false; c.len()],
                }
            }
            (ColumnValues::Categorical { codes, levels }, ColumnStat::Mode { level }) => {
                let mut levels = levels.clone();
                let fill = match level {
                    Some(l) => match levels.iter().position(|x| x == l) {
                        Some(k) => Some(k as u32),
                        None => {
                            levels.push(l.clone());
                            Some((levels.len() - 1) as u32)
                        }
                    },
                    None => None,
                };
                match fill {
                    Some(f) => Column {
                        values: ColumnValues::Categorical {
                            codes: codes
                                .iter()
                                .zip(&c.missing)
                                .map(|(&k, &m)| if m { f } else { k })
                                .collect(),
                            levels,
                        },
                        missing: vec![false; c.len()],
                    },
                    // no observed level in training: nothing to impute with
                    None => c.clone(),
                }
            }
            _ => return Err(TrustError::SchemaMismatch(format!("column `{name}` changed kind"))),
        };
        columns.push(col);
    }
    Ok(Dataset { columns, ..d.clone() })
}

/// Deterministic assignment of rows to cross-validation folds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    pub n_folds: usize,
    pub seed: u64,
    pub assignment: Vec<usize>,
}

impl FoldPlan {
    pub fn test_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&i| self.assignment[i] == fold)
            .collect()
    }

    pub fn train_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&i| self.assignment[i] != fold)
            .collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_folds];
        for &f in &self.assignment {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Shuffles `0..n_rows` with ChaCha8 seeded from `seed` and deals the
/// permutation round-robin into `k` folds.
pub fn make_folds(n_rows: usize, k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 || k > n_rows {
        return Err(TrustError::invalid(format!("fold count {k} must lie in [2, {n_rows}]")));
    }
    let mut order: Vec<usize> = (0..n_rows).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let mut assignment = vec![0; n_rows];
    for (pos, &row) in order.iter().enumerate() {
        assignment[row] = pos % k;
    }
    Ok(FoldPlan {
        n_folds: k,
        seed,
        assignment,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SyntheticFamily {
    Correlated,
    Friedman,
    Max,
    Sparse,
    Steps,
}

impl SyntheticFamily {
    pub const ALL: [SyntheticFamily; 5] = [
        SyntheticFamily::Correlated,
        SyntheticFamily::Friedman,
        SyntheticFamily::Max,
        SyntheticFamily::Sparse,
        SyntheticFamily::Steps,
    ];

    /// Total number of generated covariates (signal plus noise).
    pub fn n_features(self) -> usize {
        match self {
            SyntheticFamily::Correlated => 8,
            SyntheticFamily::Friedman => 10,
            SyntheticFamily::Max => 4,
            SyntheticFamily::Sparse => 50,
            SyntheticFamily::Steps => 4,
        }
    }
}

impl fmt::Display for SyntheticFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SyntheticFamily::Correlated => "correlated",
            SyntheticFamily::Friedman => "friedman",
            SyntheticFamily::Max => "max",
            SyntheticFamily::Sparse => "sparse",
            SyntheticFamily::Steps => "steps",
        };
        f.write_str(s)
    }
}

impl FromStr for SyntheticFamily {
    type Err = TrustError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "correlated" => Ok(SyntheticFamily::Correlated),
            "friedman" => Ok(SyntheticFamily::Friedman),
            "max" => Ok(SyntheticFamily::Max),
            "sparse" => Ok(SyntheticFamily::Sparse),
            "steps" => Ok(SyntheticFamily::Steps),
            other => Err(TrustError::invalid(format!("unknown synthetic family `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub family: SyntheticFamily,
    pub n: usize,
    pub noise_sd: f64,
    pub seed: u64,
}

/// Covariance of the four signal variables of the correlated family.
pub const CORRELATED_COVARIANCE: [[f64; 4]; 4] = [
    [1.0, -0.3, 0.5, 0.2],
    [-0.3, 1.0, 0.6, 0.5],
    [0.5, 0.6, 1.0, 0.8],
    [0.2, 0.5, 0.8, 1.0],
];

/// Coefficient given to each of the five active variables of the sparse family.
pub const SPARSE_ACTIVE_COEFFICIENT: f64 = 50.0;

/// Noise-free response of a family at covariate vector `x`.
pub fn family_signal(family: SyntheticFamily, x: &[f64]) -> f64 {
    match family {
        SyntheticFamily::Correlated => {
            x[0] * x[1] * x[1] + x[1] * x[2].exp() - x[2] * x[3].powi(3) + x[0].floor() * x[3].cos()
        }
        SyntheticFamily::Friedman => {
            10.0 * (std::f64::consts::PI * x[0] * x[1]).sin() + 20.0 * (x[2] - 0.5).powi(2) + 10.0 * x[3] + 5.0 * x[4]
        }
        SyntheticFamily::Max => 5.0 * (1.0 + x[0] + x[1]).max(0.0),
        SyntheticFamily::Sparse => SPARSE_ACTIVE_COEFFICIENT * x[..5].iter().sum::<f64>(),
        SyntheticFamily::Steps => 10.0 * ((x[0] + x[1]) / 2.0).ceil(),
    }
}

/// Draws a synthetic dataset.
///
/// Sampling uses `ChaCha8Rng::seed_from_u64(seed)`; rows are generated in
/// order, each drawing its covariates left to right and then its noise term.
/// Gaussian draws use the ziggurat sampler of `rand_distr::StandardNormal`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    if spec.n == 0 {
        return Err(TrustError::invalid("synthetic sample size must be at least 1"));
    }
    if !(spec.noise_sd > 0.0) || !spec.noise_sd.is_finite() {
        return Err(TrustError::invalid("noise_sd must be positive"));
    }
    let p = spec.family.n_features();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let chol = if spec.family == SyntheticFamily::Correlated {
        let cov = Matrix::from_rows(&CORRELATED_COVARIANCE.iter().map(|r| r.to_vec()).collect::<Vec<_>>());
        Some(lower_factor(&cov))
    } else {
        None
    };
    let mut cols = vec![Vec::with_capacity(spec.n); p];
    let mut y = Vec::with_capacity(spec.n);
    let mut x = vec![0.0; p];
    for _ in 0..spec.n {
        match spec.family {
            SyntheticFamily::Friedman => {
                for v in x.iter_mut() {
                    *v = rng.random::<f64>();
                }
            }
            _ => {
                for v in x.iter_mut() {
                    *v = rng.sample(StandardNormal);
                }
            }
        }
        if let Some(l) = &chol {
            let z: Vec<f64> = x[..4].to_vec();
            for i in 0..4 {
                x[i] = (0..=i).map(|k| l[i][k] * z[k]).sum();
            }
        }
        let eps: f64 = rng.sample(StandardNormal);
        y.push(family_signal(spec.family, &x) + spec.noise_sd * eps);
        for (c, v) in cols.iter_mut().zip(&x) {
            c.push(*v);
        }
    }
    let names = (1..=p).map(|j| format!("x{j}")).collect();
    let columns = cols.into_iter().map(Column::numeric).collect();
    Dataset::new(names, columns, Some("y".into()), Some(y))
}

fn lower_factor(cov: &Matrix) -> Vec<Vec<f64>> {
    let l = Cholesky::new(cov, 0.0)
        .expect("covariance is positive definite")
        .lower();
    (0..l.nrows()).map(|i| l.row(i).to_vec()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn csv(text: &str, target: &str) -> Result<Dataset> {
        parse_csv(text.as_bytes(), Some(target))
    }

    #[test]
    fn empty_cell_is_missing() {
        let d = csv("x,y\n1,2\n,3\n4,5\n", "y").unwrap();
        assert_eq!(d.columns[0].missing, vec![false, true, false]);
        assert_eq!(d.target.as_deref(), Some(&[2.0, 3.0, 5.0][..]));
    }

    #[test]
    fn missing_tokens_case_insensitive() {
        let d = csv("x,y\nNA,1\nnan,2\nNULL,3\n 7 ,4\n", "y").unwrap();
        assert_eq!(d.columns[0].missing, vec![true, true, true, false]);
        assert_eq!(d.columns[0].kind(), ColumnKind::Numeric);
    }

    #[test]
    fn categorical_first_appearance_order() {
        let d = csv("c,y\na,1\nb,2\na,3\n", "y").unwrap();
        match &d.columns[0].values {
            ColumnValues::Categorical { codes, levels } => {
                assert_eq!(levels, &vec!["a".to_string(), "b".to_string()]);
                assert_eq!(codes, &vec![0, 1, 0]);
            }
            _ => panic!("expected categorical"),
        }
    }

    #[test]
    fn target_errors() {
        assert!(matches!(csv("x,y\n1,2\n", "z"), Err(TrustError::TargetAbsent(_))));
        assert!(matches!(csv("x,y\n1,\n", "y"), Err(TrustError::TargetMissing { .. })));
        assert!(matches!(
            csv("x,y\n1,abc\n", "y"),
            Err(TrustError::NonNumericTarget { .. })
        ));
        assert!(matches!(csv("x,y\n1,2,3\n", "y"), Err(TrustError::RaggedRow { .. })));
        assert!(matches!(
            load_csv("/nonexistent/file.csv", "y"),
            Err(TrustError::Io { .. })
        ));
    }

    #[test]
    fn one_hot_basic_and_missing() {
        let d = csv("c,y\na,1\nb,2\na,3\nNA,4\n", "y").unwrap();
        let e = one_hot_encode(&d);
        assert_eq!(e.feature_names, vec!["c=a", "c=b"]);
        let m = e.numeric_matrix().unwrap();
        assert_eq!(m.column(0)[..3], [1.0, 0.0, 1.0]);
        assert_eq!(m.column(1)[..3], [0.0, 1.0, 0.0]);
        assert!(e.columns[0].missing[3] && e.columns[1].missing[3]);
    }

    #[test]
    fn one_hot_identity_without_categoricals() {
        let d = csv("x,z,y\n1,2,3\n4,5,6\n", "y").unwrap();
        assert_eq!(one_hot_encode(&d), d);
    }

    #[test]
    fn impute_median_and_mode() {
        let train = csv("x,c,y\n1,a,0\nNA,b,0\n3,a,0\n", "y").unwrap();
        let stats = ColumnStats::fit(&train);
        let out = median_impute(&train, &stats).unwrap();
        assert!(out.numeric_matrix().is_err());
        match &out.columns[0].values {
            ColumnValues::Numeric(v) => assert_eq!(v, &vec![1.0, 2.0, 3.0]),
            _ => unreachable!(),
        }
        let test = csv("x,c,y\nNA,NA,0\n", "y").unwrap();
        let filled = median_impute(&test, &stats).unwrap();
        assert_eq!(filled.columns[1].cell_text(0).as_deref(), Some("a"));
        assert!(!filled.has_missing());
    }

    #[test]
    fn impute_all_missing_column_and_schema_mismatch() {
        let train = csv("x,y\n5,0\n5,0\n", "y").unwrap();
        let stats = ColumnStats::fit(&train);
        let test = csv("x,y\nNA,0\nNA,1\n", "y").unwrap();
        let out = median_impute(&test, &stats).unwrap();
        assert_eq!(out.numeric_matrix().unwrap().column(0), vec![5.0, 5.0]);
        let other = csv("w,y\n1,0\n", "y").unwrap();
        assert!(matches!(
            median_impute(&other, &stats),
            Err(TrustError::SchemaMismatch(_))
        ));
    }

    #[test]
    fn folds_balanced_and_deterministic() {
        let plan = make_folds(10, 10, 1).unwrap();
        assert!(plan.fold_sizes().iter().all(|&s| s == 1));
        let mut sizes = make_folds(10, 3, 7).unwrap().fold_sizes();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![3, 3, 4]);
        assert_eq!(make_folds(57, 5, 9).unwrap(), make_folds(57, 5, 9).unwrap());
        assert!(make_folds(5, 1, 0).is_err());
        assert!(make_folds(5, 6, 0).is_err());
    }

    #[test]
    fn family_formulas_at_points() {
        assert_eq!(family_signal(SyntheticFamily::Max, &[0.0, 0.0, 9.0, 9.0]), 5.0);
        assert_eq!(family_signal(SyntheticFamily::Steps, &[1.0, 1.0, 0.0, 0.0]), 10.0);
    }

    #[test]
    fn synthetic_shapes_and_errors() {
        for fam in SyntheticFamily::ALL {
            let d = generate_synthetic(&SyntheticSpec {
                family: fam,
                n: 7,
                noise_sd: 1.0,
                seed: 3,
            })
            .unwrap();
            assert_eq!(d.n_features(), fam.n_features());
            assert_eq!(d.n_rows, 7);
            assert_eq!(d.feature_names[0], "x1");
        }
        assert!(generate_synthetic(&SyntheticSpec {
            family: SyntheticFamily::Max,
            n: 0,
            noise_sd: 1.0,
            seed: 0
        })
        .is_err());
        assert!(generate_synthetic(&SyntheticSpec {
            family: SyntheticFamily::Max,
            n: 5,
            noise_sd: 0.0,
            seed: 0
        })
        .is_err());
        assert!("bogus".parse::<SyntheticFamily>().is_err());
    }
}
