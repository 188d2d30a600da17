//! Penalized linear solvers: OLS, Lasso via cyclic coordinate descent,
//! relaxed Lasso and elastic net, with k-fold selection of the penalties.
//!
//! All penalized fits minimize, over standardized features and a centered
//! response,
//!
//! ```text
//! (1/n) Σ (yᵢ − xᵢᵀβ)² + λ‖β‖₁ + λ·l2·‖β‖₂²
//! ```
//!
//! and report coefficients back in the original feature units. The solver
//! works on the Gram matrix `XᵀX/n`, so a sweep costs O(p²) regardless of n.

use serde::{Deserialize, Serialize};

use crate::data::make_folds;
use crate::error::{Result, TrustError};
use crate::linalg::{dot, least_squares, mean, Cholesky, Matrix};

/// Default number of log-spaced penalty values.
pub const N_LAMBDA: usize = 50;
/// Smallest penalty on the grid relative to `λ_max`.
pub const LAMBDA_MIN_RATIO: f64 = 1e-3;
pub const THETA_GRID: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];
pub const ELASTIC_NET_L2: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-7,
            max_sweeps: 1000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitKind {
    Constant,
    Ols,
    Lasso,
    RelaxedLasso,
    ElasticNet,
}

/// Per-feature centering and scaling used during fitting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaling {
    pub mean: Vec<f64>,
    /// Population SD; zero marks a constant column that never enters a fit.
    pub sd: Vec<f64>,
}

impl Scaling {
    pub fn fit(x: &Matrix) -> Scaling {
        let n = x.nrows() as f64;
        let p = x.ncols();
        let mut m = vec![0.0; p];
        for i in 0..x.nrows() {
            for (a, v) in m.iter_mut().zip(x.row(i)) {
                *a += v;
            }
        }
        m.iter_mut().for_each(|a| *a /= n.max(1.0));
        let mut s = vec![0.0; p];
        for i in 0..x.nrows() {
            for j in 0..p {
                s[j] += (x.get(i, j) - m[j]).powi(2);
            }
        }
        let sd = s
            .iter()
            .zip(&m)
            .map(|(v, mu)| {
                let sd = (v / n.max(1.0)).sqrt();
                if sd <= 1e-12 * mu.abs().max(1.0) {
                    0.0
                } else {
                    sd
                }
            })
            .collect();
        Scaling { mean: m, sd }
    }

    fn usable(&self, j: usize) -> bool {
        self.sd[j] > 0.0
    }
}

/// A fitted linear model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub kind: FitKind,
    pub intercept: f64,
    /// Coefficients in original feature units.
    pub coefficients: Vec<f64>,
    /// Coefficients on the standardized scale (zero outside the active set).
    pub std_coefficients: Vec<f64>,
    pub active_set: Vec<usize>,
    pub lambda: f64,
    /// 0 encodes the OLS-refit limit; 1 is plain Lasso.
    pub theta: f64,
    pub l2_weight: f64,
    pub y_mean: f64,
    pub scaling: Scaling,
}

impl LinearFit {
    pub fn n_features(&self) -> usize {
        self.coefficients.len()
    }

    pub fn predict_row(&self, x: &[f64]) -> f64 {
        self.intercept
            + self
                .active_set
                .iter()
                .map(|&j| self.coefficients[j] * x[j])
                .sum::<f64>()
    }

    /// Same prediction evaluated through the standardized parameterization.
    pub fn predict_row_standardized(&self, x: &[f64]) -> f64 {
        self.y_mean
            + self
                .active_set
                .iter()
                .map(|&j| self.std_coefficients[j] * (x[j] - self.scaling.mean[j]) / self.scaling.sd[j])
                .sum::<f64>()
    }

    pub fn predict(&self, x: &Matrix) -> Vec<f64> {
        (0..x.nrows()).map(|i| self.predict_row(x.row(i))).collect()
    }

    fn from_standardized(kind: FitKind, prob: &Problem, beta: &[f64], lambda: f64, theta: f64, l2: f64) -> LinearFit {
        let p = beta.len();
        let mut coefficients = vec![0.0; p];
        let mut std_coefficients = vec![0.0; p];
        let mut active_set = Vec::new();
        let mut intercept = prob.y_mean;
        for j in 0..p {
            if beta[j] != 0.0 && prob.scaling.usable(j) {
                std_coefficients[j] = beta[j];
                coefficients[j] = beta[j] / prob.scaling.sd[j];
                intercept -= coefficients[j] * prob.scaling.mean[j];
                active_set.push(j);
            }
        }
        LinearFit {
            kind,
            intercept,
            coefficients,
            std_coefficients,
            active_set,
            lambda,
            theta,
            l2_weight: l2,
            y_mean: prob.y_mean,
            scaling: prob.scaling.clone(),
        }
    }

    /// Intercept-only model predicting the mean response.
    pub fn constant(x: &Matrix, y: &[f64]) -> LinearFit {
        let p = x.ncols();
        let y_mean = if y.is_empty() { 0.0 } else { mean(y) };
        LinearFit {
            kind: FitKind::Constant,
            intercept: y_mean,
            coefficients: vec![0.0; p],
            std_coefficients: vec![0.0; p],
            active_set: Vec::new(),
            lambda: 0.0,
            theta: 0.0,
            l2_weight: 0.0,
            y_mean,
            scaling: Scaling::fit(x),
        }
    }
}

/// Sufficient statistics of a standardized least-squares problem.
#[derive(Debug, Clone)]
struct Problem {
    p: usize,
    gram: Matrix,
    xty: Vec<f64>,
    yty: f64,
    y_mean: f64,
    scaling: Scaling,
}

impl Problem {
    fn new(x: &Matrix, y: &[f64]) -> Result<Problem> {
        if x.nrows() != y.len() {
            return Err(TrustError::invalid("X and y have different row counts"));
        }
        if x.nrows() == 0 {
            return Err(TrustError::EmptyDataset);
        }
        if !x.is_finite() {
            return Err(TrustError::NonFinite("feature matrix"));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(TrustError::NonFinite("response"));
        }
        let n = x.nrows();
        let p = x.ncols();
        let scaling = Scaling::fit(x);
        let y_mean = mean(y);
        let mut gram = Matrix::zeros(p, p);
        let mut xty = vec![0.0; p];
        let mut yty = 0.0;
        let mut z = vec![0.0; p];
        for i in 0..n {
            let row = x.row(i);
            for j in 0..p {
                z[j] = if scaling.usable(j) {
                    (row[j] - scaling.mean[j]) / scaling.sd[j]
                } else {
                    0.0
                };
            }
            let yc = y[i] - y_mean;
            yty += yc * yc;
            for a in 0..p {
                if z[a] == 0.0 {
                    continue;
                }
                xty[a] += z[a] * yc;
                let za = z[a];
                let g = gram.row_mut(a);
                for b in 0..p {
                    g[b] += za * z[b];
                }
            }
        }
        let inv_n = 1.0 / n as f64;
        for a in 0..p {
            xty[a] *= inv_n;
            for v in gram.row_mut(a) {
                *v *= inv_n;
            }
        }
        Ok(Problem {
            p,
            gram,
            xty,
            yty: yty * inv_n,
            y_mean,
            scaling,
        })
    }

    fn usable_columns(&self) -> Vec<usize> {
        (0..self.p).filter(|&j| self.scaling.usable(j)).collect()
    }

    /// `max_j |(2/n) xⱼᵀ(y − ȳ)|` on the standardized scale.
    fn lambda_max(&self) -> f64 {
        self.usable_columns()
            .iter()
            .map(|&j| 2.0 * self.xty[j].abs())
            .fold(0.0, f64::max)
    }

    fn objective(&self, beta: &[f64], l1: f64, ridge: f64) -> f64 {
        let gb = self.gram.matvec(beta);
        self.yty - 2.0 * dot(&self.xty, beta)
            + dot(beta, &gb)
            + l1 * beta.iter().map(|b| b.abs()).sum::<f64>()
            + ridge * dot(beta, beta)
    }

    /// Cyclic coordinate descent over `support`, warm-started from `beta`.
    /// Returns the number of sweeps used.
    fn coordinate_descent(
        &self,
        support: &[usize],
        l1: f64,
        ridge: f64,
        beta: &mut [f64],
        opts: SolverOptions,
        mut trace: Option<&mut Vec<f64>>,
    ) -> usize {
        let p = self.p;
        let mut gb = self.gram.matvec(beta);
        if let Some(t) = trace.as_deref_mut() {
            t.push(self.objective(beta, l1, ridge));
        }
        let half = 0.5 * l1;
        for sweep in 1..=opts.max_sweeps {
            let mut max_delta: f64 = 0.0;
            for &j in support {
                let gjj = self.gram.get(j, j);
                if gjj <= 0.0 {
                    continue;
                }
                let old = beta[j];
                let z = self.xty[j] - gb[j] + gjj * old;
                let new = soft_threshold(z, half) / (gjj + ridge);
                let delta = new - old;
                if delta != 0.0 {
                    beta[j] = new;
                    let col = self.gram.row(j);
                    for k in 0..p {
                        gb[k] += delta * col[k];
                    }
                    max_delta = max_delta.max(delta.abs());
                }
            }
            if let Some(t) = trace.as_deref_mut() {
                t.push(self.objective(beta, l1, ridge));
            }
            if max_delta < opts.tol {
                return sweep;
            }
        }
        opts.max_sweeps
    }

    /// Exact least squares restricted to `support`; `None` if singular.
    fn ols_on(&self, support: &[usize]) -> Option<Vec<f64>> {
        let mut beta = vec![0.0; self.p];
        if support.is_empty() {
            return Some(beta);
        }
        let g = self.gram.select_rows(support).select_columns(support);
        let c: Vec<f64> = support.iter().map(|&j| self.xty[j]).collect();
        let chol = Cholesky::new(&g, 1e-10)?;
        let b = chol.solve(&c);
        for (k, &j) in support.iter().enumerate() {
            beta[j] = b[k];
        }
        Some(beta)
    }

    fn lasso(&self, lambda: f64, warm: Option<&[f64]>, opts: SolverOptions) -> Vec<f64> {
        let support = self.usable_columns();
        if lambda == 0.0 {
            if let Some(b) = self.ols_on(&support) {
                return b;
            }
        }
        let mut beta = warm.map_or_else(|| vec![0.0; self.p], <[f64]>::to_vec);
        if lambda >= self.lambda_max() {
            beta.iter_mut().for_each(|b| *b = 0.0);
            return beta;
        }
        self.coordinate_descent(&support, lambda, 0.0, &mut beta, opts, None);
        beta
    }

    /// Second stage of the relaxed Lasso given the first-stage solution.
    fn relax(&self, lasso_beta: &[f64], lambda: f64, theta: f64, opts: SolverOptions) -> Vec<f64> {
        if theta >= 1.0 {
            return lasso_beta.to_vec();
        }
        let support: Vec<usize> = (0..self.p).filter(|&j| lasso_beta[j] != 0.0).collect();
        let penalty = theta * lambda;
        if penalty == 0.0 {
            if let Some(b) = self.ols_on(&support) {
                return b;
            }
        }
        let mut beta = lasso_beta.to_vec();
        self.coordinate_descent(&support, penalty, 0.0, &mut beta, opts, None);
        beta
    }

    fn elastic_net(&self, lambda: f64, l2: f64, warm: Option<&[f64]>, opts: SolverOptions) -> Vec<f64> {
        let support = self.usable_columns();
        if lambda == 0.0 {
            // pure ridge limit: solve the strictly convex system directly
            let mut g = self.gram.select_rows(&support).select_columns(&support);
            for k in 0..support.len() {
                g.set(k, k, g.get(k, k) + MIN_ELASTIC_RIDGE);
            }
            let c: Vec<f64> = support.iter().map(|&j| self.xty[j]).collect();
            let mut beta = vec![0.0; self.p];
            if let Some(chol) = Cholesky::new(&g, 0.0) {
                for (k, b) in support.iter().zip(chol.solve(&c)) {
                    beta[*k] = b;
                }
            }
            return beta;
        }
        let mut beta = warm.map_or_else(|| vec![0.0; self.p], <[f64]>::to_vec);
        let ridge = lambda * l2;
        self.coordinate_descent(&support, lambda, ridge, &mut beta, opts, None);
        beta
    }
}

/// Ridge used by the elastic net at `λ = 0`, where the stated objective
/// loses strict convexity.
const MIN_ELASTIC_RIDGE: f64 = 1e-8;

#[inline]
pub fn soft_threshold(z: f64, gamma: f64) -> f64 {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

/// Penalty at which every standardized coefficient is zero.
pub fn lambda_max(x: &Matrix, y: &[f64]) -> Result<f64> {
    Ok(Problem::new(x, y)?.lambda_max())
}

/// `n` log-spaced values from `max` down to `max·ratio`.
pub fn log_grid(max: f64, ratio: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![max];
    }
    let (hi, lo) = (max.ln(), (max * ratio).ln());
    (0..n)
        .map(|i| (hi + (lo - hi) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// Least squares on all columns. Errors when the normal system is singular.
pub fn fit_ols(x: &Matrix, y: &[f64]) -> Result<LinearFit> {
    let prob = Problem::new(x, y)?;
    let (intercept, coefs) = least_squares(x, y, 0.0)
        .ok_or_else(|| TrustError::Degenerate("rank-deficient design in least squares".into()))?;
    let active_set: Vec<usize> = (0..x.ncols()).collect();
    let std_coefficients = coefs.iter().zip(&prob.scaling.sd).map(|(b, s)| b * s).collect();
    Ok(LinearFit {
        kind: FitKind::Ols,
        intercept,
        coefficients: coefs,
        std_coefficients,
        active_set,
        lambda: 0.0,
        theta: 0.0,
        l2_weight: 0.0,
        y_mean: prob.y_mean,
        scaling: prob.scaling,
    })
}

pub fn fit_lasso(x: &Matrix, y: &[f64], lambda: f64) -> Result<LinearFit> {
    check_lambda(lambda)?;
    let prob = Problem::new(x, y)?;
    let beta = prob.lasso(lambda, None, SolverOptions::default());
    Ok(LinearFit::from_standardized(
        FitKind::Lasso,
        &prob,
        &beta,
        lambda,
        1.0,
        0.0,
    ))
}

/// Lasso fits along a descending grid with warm starts.
pub fn lasso_path(x: &Matrix, y: &[f64], lambda_grid: &[f64]) -> Result<Vec<LinearFit>> {
    for &l in lambda_grid {
        check_lambda(l)?;
    }
    if lambda_grid.windows(2).any(|w| w[1] > w[0]) {
        return Err(TrustError::invalid("lambda grid must be descending"));
    }
    let prob = Problem::new(x, y)?;
    let mut warm: Option<Vec<f64>> = None;
    let mut out = Vec::with_capacity(lambda_grid.len());
    for &lambda in lambda_grid {
        let beta = prob.lasso(lambda, warm.as_deref(), SolverOptions::default());
        out.push(LinearFit::from_standardized(
            FitKind::Lasso,
            &prob,
            &beta,
            lambda,
            1.0,
            0.0,
        ));
        warm = Some(beta);
    }
    Ok(out)
}

/// Per-sweep objective values of a Lasso solve from a zero start; used to
/// check monotone descent.
pub fn lasso_objective_trace(x: &Matrix, y: &[f64], lambda: f64, opts: SolverOptions) -> Result<Vec<f64>> {
    let prob = Problem::new(x, y)?;
    let mut beta = vec![0.0; prob.p];
    let mut trace = Vec::new();
    prob.coordinate_descent(&prob.usable_columns(), lambda, 0.0, &mut beta, opts, Some(&mut trace));
    Ok(trace)
}

/// Two-stage relaxed Lasso: Lasso at `lambda` selects the support, then the
/// support is refit with penalty `theta·lambda`.
pub fn fit_relaxed_lasso(x: &Matrix, y: &[f64], lambda: f64, theta: f64) -> Result<LinearFit> {
    check_lambda(lambda)?;
    check_theta(theta)?;
    let prob = Problem::new(x, y)?;
    let opts = SolverOptions::default();
    let stage1 = prob.lasso(lambda, None, opts);
    let beta = prob.relax(&stage1, lambda, theta, opts);
    Ok(LinearFit::from_standardized(
        FitKind::RelaxedLasso,
        &prob,
        &beta,
        lambda,
        theta,
        0.0,
    ))
}

pub fn fit_elastic_net(x: &Matrix, y: &[f64], lambda: f64, l2_weight: f64) -> Result<LinearFit> {
    check_lambda(lambda)?;
    if !(l2_weight > 0.0) || !l2_weight.is_finite() {
        return Err(TrustError::invalid("l2_weight must be positive"));
    }
    let prob = Problem::new(x, y)?;
    let beta = prob.elastic_net(lambda, l2_weight, None, SolverOptions::default());
    Ok(LinearFit::from_standardized(
        FitKind::ElasticNet,
        &prob,
        &beta,
        lambda,
        1.0,
        l2_weight,
    ))
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(TrustError::invalid(format!(
            "lambda must be finite and nonnegative, got {lambda}"
        )));
    }
    Ok(())
}

fn check_theta(theta: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&theta) {
        return Err(TrustError::invalid(format!("theta must lie in [0, 1], got {theta}")));
    }
    Ok(())
}

/// How the winning grid cell is picked from the cross-validation table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionRule {
    /// Largest lambda, then largest theta, within one standard error of the minimum.
    OneStandardError,
    Minimum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvOptions {
    pub folds: usize,
    pub seed: u64,
    pub n_lambda: usize,
    pub lambda_min_ratio: f64,
    pub theta_grid: Vec<f64>,
    pub rule: SelectionRule,
}

impl CvOptions {
    pub fn new(folds: usize, seed: u64) -> Self {
        CvOptions {
            folds,
            seed,
            n_lambda: N_LAMBDA,
            lambda_min_ratio: LAMBDA_MIN_RATIO,
            theta_grid: THETA_GRID.to_vec(),
            rule: SelectionRule::OneStandardError,
        }
    }
}

/// Outcome of the penalty search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvChoice {
    pub lambda_grid: Vec<f64>,
    pub theta_grid: Vec<f64>,
    pub k: usize,
    pub best_lambda: f64,
    pub best_theta: f64,
    /// Mean validation MSE indexed `[lambda][theta]`.
    pub cv_error_table: Vec<Vec<f64>>,
    /// Standard error of the fold MSEs, same indexing.
    pub cv_se_table: Vec<Vec<f64>>,
    /// Set when there were too few rows for k-fold search and defaults were used.
    pub fallback: bool,
}

/// Selects `(lambda, theta)` by k-fold CV and refits on all rows.
pub fn cv_relaxed_lasso(x: &Matrix, y: &[f64], k: usize, seed: u64) -> Result<(CvChoice, LinearFit)> {
    cv_relaxed_lasso_with(x, y, &CvOptions::new(k, seed))
}

pub fn cv_relaxed_lasso_with(x: &Matrix, y: &[f64], opts: &CvOptions) -> Result<(CvChoice, LinearFit)> {
    for &t in &opts.theta_grid {
        check_theta(t)?;
    }
    if opts.theta_grid.is_empty() {
        return Err(TrustError::invalid("empty theta grid"));
    }
    let full = Problem::new(x, y)?;
    let solver = SolverOptions::default();
    let lmax = full.lambda_max();
    let n = y.len();
    if lmax <= 0.0 {
        let fit = LinearFit::from_standardized(FitKind::RelaxedLasso, &full, &vec![0.0; full.p], 0.0, 1.0, 0.0);
        return Ok((degenerate_choice(opts, opts.folds, 0.0, 1.0, false), fit));
    }
    if opts.folds < 2 || n < 2 * opts.folds {
        log::warn!(
            "{n} rows are too few for {}-fold search; using lambda_max/2 and theta = 1",
            opts.folds
        );
        let lambda = lmax / 2.0;
        let stage1 = full.lasso(lambda, None, solver);
        let fit = LinearFit::from_standardized(FitKind::RelaxedLasso, &full, &stage1, lambda, 1.0, 0.0);
        return Ok((degenerate_choice(opts, opts.folds, lambda, 1.0, true), fit));
    }
    let grid = log_grid(lmax, opts.lambda_min_ratio, opts.n_lambda);
    let plan = make_folds(n, opts.folds, opts.seed)?;
    let nl = grid.len();
    let nt = opts.theta_grid.len();
    let mut fold_mse = vec![vec![Vec::with_capacity(opts.folds); nt]; nl];
    for f in 0..opts.folds {
        let train = plan.train_rows(f);
        let test = plan.test_rows(f);
        let xt = x.select_rows(&train);
        let yt: Vec<f64> = train.iter().map(|&i| y[i]).collect();
        let xv = x.select_rows(&test);
        let yv: Vec<f64> = test.iter().map(|&i| y[i]).collect();
        let prob = Problem::new(&xt, &yt)?;
        let mut warm: Option<Vec<f64>> = None;
        for (li, &lambda) in grid.iter().enumerate() {
            let stage1 = prob.lasso(lambda, warm.as_deref(), solver);
            for (ti, &theta) in opts.theta_grid.iter().enumerate() {
                let beta = prob.relax(&stage1, lambda, theta, solver);
                fold_mse[li][ti].push(validation_mse(&prob, &beta, &xv, &yv));
            }
            warm = Some(stage1);
        }
    }
    let (table, se) = summarize(&fold_mse);
    let (li, ti) = select(&table, &se, opts.rule);
    let (lambda, theta) = (grid[li], opts.theta_grid[ti]);
    let stage1 = full.lasso(lambda, None, solver);
    let beta = full.relax(&stage1, lambda, theta, solver);
    let fit = LinearFit::from_standardized(FitKind::RelaxedLasso, &full, &beta, lambda, theta, 0.0);
    let choice = CvChoice {
        lambda_grid: grid,
        theta_grid: opts.theta_grid.clone(),
        k: opts.folds,
        best_lambda: lambda,
        best_theta: theta,
        cv_error_table: table,
        cv_se_table: se,
        fallback: false,
    };
    Ok((choice, fit))
}

/// Elastic net with `l2_weight` fixed and `lambda` chosen by k-fold CV on
/// the standard grid.
pub fn cv_elastic_net(x: &Matrix, y: &[f64], l2_weight: f64, opts: &CvOptions) -> Result<(CvChoice, LinearFit)> {
    let full = Problem::new(x, y)?;
    let solver = SolverOptions::default();
    let lmax = full.lambda_max();
    let n = y.len();
    if lmax <= 0.0 {
        let fit = LinearFit::from_standardized(FitKind::ElasticNet, &full, &vec![0.0; full.p], 0.0, 1.0, l2_weight);
        return Ok((degenerate_choice(opts, opts.folds, 0.0, 1.0, false), fit));
    }
    if opts.folds < 2 || n < 2 * opts.folds {
        log::warn!(
            "{n} rows are too few for {}-fold elastic-net search; using lambda_max/2",
            opts.folds
        );
        let lambda = lmax / 2.0;
        let beta = full.elastic_net(lambda, l2_weight, None, solver);
        let fit = LinearFit::from_standardized(FitKind::ElasticNet, &full, &beta, lambda, 1.0, l2_weight);
        return Ok((degenerate_choice(opts, opts.folds, lambda, 1.0, true), fit));
    }
    let grid = log_grid(lmax, opts.lambda_min_ratio, opts.n_lambda);
    let plan = make_folds(n, opts.folds, opts.seed)?;
    let mut fold_mse = vec![vec![Vec::with_capacity(opts.folds); 1]; grid.len()];
    for f in 0..opts.folds {
        let train = plan.train_rows(f);
        let test = plan.test_rows(f);
        let yt: Vec<f64> = train.iter().map(|&i| y[i]).collect();
        let yv: Vec<f64> = test.iter().map(|&i| y[i]).collect();
        let prob = Problem::new(&x.select_rows(&train), &yt)?;
        let xv = x.select_rows(&test);
        let mut warm: Option<Vec<f64>> = None;
        for (li, &lambda) in grid.iter().enumerate() {
            let beta = prob.elastic_net(lambda, l2_weight, warm.as_deref(), solver);
            fold_mse[li][0].push(validation_mse(&prob, &beta, &xv, &yv));
            warm = Some(beta);
        }
    }
    let (table, se) = summarize(&fold_mse);
    let (li, _) = select(&table, &se, opts.rule);
    let lambda = grid[li];
    let beta = full.elastic_net(lambda, l2_weight, None, solver);
    let fit = LinearFit::from_standardized(FitKind::ElasticNet, &full, &beta, lambda, 1.0, l2_weight);
    let choice = CvChoice {
        lambda_grid: grid,
        theta_grid: vec![1.0],
        k: opts.folds,
        best_lambda: lambda,
        best_theta: 1.0,
        cv_error_table: table,
        cv_se_table: se,
        fallback: false,
    };
    Ok((choice, fit))
}

fn degenerate_choice(opts: &CvOptions, k: usize, lambda: f64, theta: f64, fallback: bool) -> CvChoice {
    CvChoice {
        lambda_grid: vec![lambda],
        theta_grid: vec![theta],
        k,
        best_lambda: lambda,
        best_theta: theta,
        cv_error_table: Vec::new(),
        cv_se_table: Vec::new(),
        fallback: fallback || opts.folds < 2,
    }
}

fn validation_mse(prob: &Problem, beta: &[f64], xv: &Matrix, yv: &[f64]) -> f64 {
    let mut sse = 0.0;
    for i in 0..xv.nrows() {
        let row = xv.row(i);
        let mut pred = prob.y_mean;
        for j in 0..prob.p {
            if beta[j] != 0.0 {
                pred += beta[j] * (row[j] - prob.scaling.mean[j]) / prob.scaling.sd[j];
            }
        }
        sse += (yv[i] - pred).powi(2);
    }
    sse / xv.nrows().max(1) as f64
}

fn summarize(fold_mse: &[Vec<Vec<f64>>]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let mut table = Vec::with_capacity(fold_mse.len());
    let mut se = Vec::with_capacity(fold_mse.len());
    for row in fold_mse {
        let mut t = Vec::with_capacity(row.len());
        let mut s = Vec::with_capacity(row.len());
        for cell in row {
            let m = mean(cell);
            let k = cell.len() as f64;
            let var = if cell.len() > 1 {
                cell.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (k - 1.0)
            } else {
                0.0
            };
            t.push(m);
            s.push((var / k).sqrt());
        }
        table.push(t);
        se.push(s);
    }
    (table, se)
}

/// Grid is descending in lambda and ascending in theta.
fn select(table: &[Vec<f64>], se: &[Vec<f64>], rule: SelectionRule) -> (usize, usize) {
    let mut best = (0, 0);
    let mut best_v = f64::INFINITY;
    for (li, row) in table.iter().enumerate() {
        for (ti, &v) in row.iter().enumerate() {
            if v < best_v {
                best_v = v;
                best = (li, ti);
            }
        }
    }
    if rule == SelectionRule::Minimum {
        return best;
    }
    let cutoff = best_v + se[best.0][best.1];
    for (li, row) in table.iter().enumerate() {
        if let Some(ti) = (0..row.len()).rev().find(|&ti| row[ti] <= cutoff) {
            return (li, ti);
        }
    }
    best
}
