//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use trust_core::bench::{run_benchmark, unexplained_variance, BenchSpec, ModelKind};
use trust_core::data::{generate_synthetic, parse_csv, write_csv, Column, Dataset, SyntheticFamily, SyntheticSpec};
use trust_core::explain::{ghost_scores, importance_csv, importance_report, shap_from_means, ImportanceConfig};
use trust_core::linalg::Matrix;
use trust_core::linmod::{fit_lasso, fit_relaxed_lasso, lambda_max, FitKind, LinearFit};
use trust_core::robust::{fit_ood_stats, ood_score, range_breach, BreachDirection};
use trust_core::tree::{grow, truncate, LeafStats, Node, SplitRule, TrainConfig, TrustModel, DEFAULT_T_GRID};

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

fn random_problem(rng: &mut ChaCha8Rng, n: usize, p: usize) -> (Matrix, Vec<f64>) {
    let x = Matrix::from_row_major(n, p, gaussian(rng, n * p));
    let beta: Vec<f64> = (0..p)
        .map(|j| if j % 3 == 0 { rng.random_range(-3.0..3.0) } else { 0.0 })
        .collect();
    let y = (0..n)
        .map(|i| {
            let s: f64 = x.row(i).iter().zip(&beta).map(|(a, b)| a * b).sum();
            s + rng.sample::<f64, _>(StandardNormal)
        })
        .collect();
    (x, y)
}

/// OLS with intercept on the chosen columns via nalgebra's SVD; returns (intercept, coefficients).
fn oracle_ols(x: &Matrix, y: &[f64], cols: &[usize]) -> (f64, Vec<f64>) {
    let n = x.nrows();
    let a = DMatrix::from_fn(
        n,
        cols.len() + 1,
        |i, j| if j == 0 { 1.0 } else { x.get(i, cols[j - 1]) },
    );
    let b = DVector::from_column_slice(y);
    let sol = a.svd(true, true).solve(&b, 1e-12).expect("oracle least squares");
    (sol[0], sol.iter().skip(1).copied().collect())
}

fn spec_for(family: &str, n: usize, sd: f64, models: &str) -> BenchSpec {
    let json = format!(
        r#"{{"datasets":[{{"name":"d","synthetic":{{"family":"{family}","n":{n},"noise_sd":{sd}}}}}],"models":[{models}]}}"#
    );
    BenchSpec::from_json(&json, None).expect("valid bench spec")
}

fn bench_uv(family: &str, n: usize, sd: f64, with_cart: bool) -> Result<(f64, Option<f64>, Duration), String> {
    let models = if with_cart { r#""trust","cart""# } else { r#""trust""# };
    let start = Instant::now();
    let r = run_benchmark(&spec_for(family, n, sd, models)).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let trust = r.cell("d", ModelKind::Trust).ok_or("TRUST cell is N/A")?.mean_uv;
    let cart = r.cell("d", ModelKind::CartMode).map(|c| c.mean_uv);
    Ok((trust, cart, elapsed))
}

fn sparse_recovery() -> Outcome {
    let (trust, cart, t) = bench_uv("sparse", 200, 5.0, true)?;
    let cart = cart.ok_or("CartMode cell is N/A")?;
    let detail = format!("TRUST {trust:.4}, CartMode {cart:.4}, {:.1}s", t.as_secs_f64());
    check(trust <= 0.05 && cart >= 0.30 && t < Duration::from_secs(120), || {
        detail.clone()
    })?;
    Ok(detail)
}

fn friedman_low_noise() -> Outcome {
    let (trust, cart, t) = bench_uv("friedman", 500, 1.0, true)?;
    let cart = cart.ok_or("CartMode cell is N/A")?;
    let detail = format!("TRUST {trust:.4}, CartMode {cart:.4}, {:.1}s", t.as_secs_f64());
    check(
        (0.08..=0.30).contains(&trust) && trust < cart && t < Duration::from_secs(120),
        || detail.clone(),
    )?;
    Ok(detail)
}

fn max_low_noise() -> Outcome {
    let (trust, _, t) = bench_uv("max", 500, 1.0, false)?;
    let detail = format!("TRUST {trust:.4}, {:.1}s", t.as_secs_f64());
    check(trust <= 0.12, || detail.clone())?;
    Ok(detail)
}

fn steps_low_noise() -> Outcome {
    let (trust, _, t) = bench_uv("steps", 500, 1.0, false)?;
    let detail = format!("TRUST {trust:.4}, {:.1}s", t.as_secs_f64());
    check(trust <= 0.30, || detail.clone())?;
    Ok(detail)
}

fn max2_large_sample() -> Outcome {
    let (trust, _, t) = bench_uv("max", 5000, 1.0, false)?;
    let detail = format!("TRUST {trust:.4}, {:.1}s", t.as_secs_f64());
    check(trust <= 0.08 && t < Duration::from_secs(600), || detail.clone())?;
    Ok(detail)
}

fn linf(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max)
}

fn relaxed_reductions() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = [0.0f64; 3];
    for _ in 0..100 {
        let n = rng.random_range(30..=120);
        let p = rng.random_range(2..=10);
        let (x, y) = random_problem(&mut rng, n, p);
        let lambda = lambda_max(&x, &y).map_err(|e| e.to_string())? * rng.random_range(0.02..0.5);

        let relaxed = fit_relaxed_lasso(&x, &y, lambda, 1.0).map_err(|e| e.to_string())?;
        let lasso = fit_lasso(&x, &y, lambda).map_err(|e| e.to_string())?;
        worst[0] = worst[0].max(linf(&relaxed.coefficients, &lasso.coefficients));

        let zero = fit_relaxed_lasso(&x, &y, 0.0, rng.random_range(0.0..=1.0)).map_err(|e| e.to_string())?;
        let all: Vec<usize> = (0..p).collect();
        let (b0, b) = oracle_ols(&x, &y, &all);
        worst[1] = worst[1]
            .max(linf(&zero.coefficients, &b))
            .max((zero.intercept - b0).abs());

        let refit = fit_relaxed_lasso(&x, &y, lambda, 0.0).map_err(|e| e.to_string())?;
        let support = &lasso.active_set;
        let (c0, c) = oracle_ols(&x, &y, support);
        let mut full = vec![0.0; p];
        for (k, &j) in support.iter().enumerate() {
            full[j] = c[k];
        }
        worst[2] = worst[2]
            .max(linf(&refit.coefficients, &full))
            .max((refit.intercept - c0).abs());
    }
    let detail = format!(
        "max L∞: θ=1 vs Lasso {:.1e}, λ=0 vs OLS {:.1e}, θ=0 vs support OLS {:.1e}",
        worst[0], worst[1], worst[2]
    );
    check(worst.iter().all(|&w| w < 1e-6), || detail.clone())?;
    Ok(detail)
}

/// Largest violation of the Lasso optimality conditions on the standardized scale,
/// recomputed from the raw data.
fn kkt_residual(x: &Matrix, y: &[f64], fit: &LinearFit, lambda: f64) -> f64 {
    let (n, p) = (x.nrows(), x.ncols());
    let nf = n as f64;
    let y_mean = y.iter().sum::<f64>() / nf;
    let mut cols = Vec::with_capacity(p);
    for j in 0..p {
        let c = x.column(j);
        let m = c.iter().sum::<f64>() / nf;
        let sd = (c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / nf).sqrt();
        cols.push(c.iter().map(|v| (v - m) / sd).collect::<Vec<f64>>());
    }
    let r: Vec<f64> = (0..n)
        .map(|i| y[i] - y_mean - (0..p).map(|j| cols[j][i] * fit.std_coefficients[j]).sum::<f64>())
        .collect();
    (0..p)
        .map(|j| {
            let g = 2.0 / nf * cols[j].iter().zip(&r).map(|(a, b)| a * b).sum::<f64>();
            let b = fit.std_coefficients[j];
            if b != 0.0 {
                (g - lambda * b.signum()).abs()
            } else {
                (g.abs() - lambda).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

fn lasso_kkt() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = rng.random_range(20..=200);
        let p = rng.random_range(2..=50);
        let (x, y) = random_problem(&mut rng, n, p);
        let lambda = lambda_max(&x, &y).map_err(|e| e.to_string())? * rng.random_range(0.01..0.9);
        let fit = fit_lasso(&x, &y, lambda).map_err(|e| e.to_string())?;
        worst = worst.max(kkt_residual(&x, &y, &fit, lambda));
    }
    let detail = format!("max KKT residual {worst:.2e}");
    check(worst < 1e-6, || detail.clone())?;
    Ok(detail)
}

fn truncation() -> Outcome {
    let y = [0.0, 1.0, 2.0, 3.0, 4.0];
    let x = Matrix::from_row_major(5, 1, y.to_vec());
    let stats = LeafStats::from_leaf(&x, &y, vec![2.0]);
    check(
        (stats.s_upper - 1.0).abs() < 1e-12 && (stats.s_lower - 0.5f64.sqrt()).abs() < 1e-12,
        || format!("leaf dispersion {} / {}", stats.s_lower, stats.s_upper),
    )?;
    let hand = truncate(6.0, &stats, 1.0);
    check(hand == 5.0, || format!("hand example gave {hand}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut violations = 0;
    for _ in 0..10_000 {
        let n = rng.random_range(1..=30);
        let ys: Vec<f64> = (0..n).map(|_| rng.random_range(-50.0..50.0)).collect();
        let xs = Matrix::from_row_major(n, 1, ys.clone());
        let s = LeafStats::from_leaf(&xs, &ys, vec![0.0]);
        let t = DEFAULT_T_GRID[rng.random_range(0..DEFAULT_T_GRID.len())];
        let raw = rng.random_range(-200.0..200.0);
        let v = truncate(raw, &s, t);
        let (lo, hi) = if t.is_infinite() {
            (f64::NEG_INFINITY, f64::INFINITY)
        } else {
            (s.y_min - t * s.s_lower, s.y_max + t * s.s_upper)
        };
        let inside = if lo <= hi { v >= lo && v <= hi } else { v == lo };
        if !inside || (lo <= raw && raw <= hi && v != raw) {
            violations += 1;
        }
    }
    check(violations == 0, || format!("{violations} bound violations"))?;
    Ok("hand example 6 → 5; 10000 random cases within bounds".into())
}

fn shapley_brute_force(fit: &LinearFit, x: &[f64], means: &[f64]) -> Vec<f64> {
    let p = x.len();
    let value = |mask: usize| {
        let z: Vec<f64> = (0..p)
            .map(|j| if mask >> j & 1 == 1 { x[j] } else { means[j] })
            .collect();
        fit.predict_row(&z)
    };
    let fact = |k: usize| (1..=k).product::<usize>() as f64;
    (0..p)
        .map(|j| {
            (0..1usize << p)
                .filter(|m| m >> j & 1 == 0)
                .map(|m| {
                    let s = m.count_ones() as usize;
                    fact(s) * fact(p - s - 1) / fact(p) * (value(m | 1 << j) - value(m))
                })
                .sum()
        })
        .collect()
}

fn local_accuracy_gap(model: &TrustModel, data: &Dataset) -> Result<f64, String> {
    let frame = model.frame(data).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for i in 0..frame.n_rows {
        let raw = frame.row(i);
        let (pred, leaf) = model.raw_predict_row(&raw);
        let lf = &model.leaves[leaf];
        let mut enc = vec![0.0; model.impute.len()];
        model.schema.encode_row(&raw, &lf.stats.feature_medians, &mut enc);
        let s = shap_from_means(&lf.fit, &enc, &lf.stats.feature_means);
        worst = worst.max((s.base + s.values.iter().sum::<f64>() - pred).abs());
    }
    Ok(worst)
}

fn synth(family: SyntheticFamily, n: usize, sd: f64, seed: u64) -> Dataset {
    generate_synthetic(&SyntheticSpec {
        family,
        n,
        noise_sd: sd,
        seed,
    })
    .expect("synthetic data")
}

fn shap() -> Outcome {
    let mut models = Vec::new();
    for (fam, n) in [
        (SyntheticFamily::Max, 500),
        (SyntheticFamily::Friedman, 300),
        (SyntheticFamily::Steps, 500),
        (SyntheticFamily::Correlated, 300),
    ] {
        let d = synth(fam, n, 1.0, 9);
        let m = grow(&d, &TrainConfig::default()).map_err(|e| e.to_string())?;
        models.push((m, d));
    }
    let md = missing_dataset(300, 9);
    models.push((grow(&md, &TrainConfig::default()).map_err(|e| e.to_string())?, md));
    let hd = high_dim_dataset(9);
    models.push((grow(&hd, &TrainConfig::default()).map_err(|e| e.to_string())?, hd));
    let mut acc = 0.0f64;
    for (m, d) in &models {
        acc = acc.max(local_accuracy_gap(m, d)?);
    }
    check(acc < 1e-8, || format!("local accuracy gap {acc:.2e}"))?;

    // Three-feature data: every leaf holds a three-coefficient model.
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let n = 400;
    let cols: Vec<Vec<f64>> = (0..3).map(|_| gaussian(&mut rng, n)).collect();
    let y: Vec<f64> = (0..n)
        .map(|i| {
            5.0 * (1.0 + cols[0][i] + cols[1][i]).max(0.0) + 2.0 * cols[2][i] + rng.sample::<f64, _>(StandardNormal)
        })
        .collect();
    let d = Dataset::new(
        vec!["a".into(), "b".into(), "c".into()],
        cols.into_iter().map(Column::numeric).collect(),
        Some("y".into()),
        Some(y),
    )
    .map_err(|e| e.to_string())?;
    let m = grow(&d, &TrainConfig::default()).map_err(|e| e.to_string())?;
    let frame = m.frame(&d).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for i in 0..frame.n_rows {
        let raw = frame.row(i);
        let lf = &m.leaves[m.leaf_of(&raw)];
        let mut enc = vec![0.0; 3];
        m.schema.encode_row(&raw, &lf.stats.feature_medians, &mut enc);
        let fast = shap_from_means(&lf.fit, &enc, &lf.stats.feature_means);
        let brute = shapley_brute_force(&lf.fit, &enc, &lf.stats.feature_means);
        worst = worst.max(linf(&fast.values, &brute));
    }
    let detail = format!(
        "local accuracy gap {acc:.1e} over {} models; brute-force gap {worst:.1e} on {} leaves",
        models.len(),
        m.n_leaves()
    );
    check(worst < 1e-10, || detail.clone())?;
    Ok(detail)
}

fn used_features(model: &TrustModel) -> Vec<bool> {
    let mut used = vec![false; model.schema.n_raw()];
    for node in &model.nodes {
        if let Node::Split { rule, .. } = node {
            used[rule.feature()] = true;
        }
    }
    for leaf in &model.leaves {
        for &j in &leaf.fit.active_set {
            used[model.schema.raw_of_encoded(j)] = true;
        }
    }
    used
}

fn ghost_importance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let n = 300;
    let x1 = gaussian(&mut rng, n);
    let x2 = gaussian(&mut rng, n);
    let y: Vec<f64> = x1
        .iter()
        .map(|v| 3.0 * v + 0.1 * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let d = Dataset::new(
        vec!["x1".into(), "x2".into()],
        vec![Column::numeric(x1), Column::numeric(x2)],
        Some("y".into()),
        Some(y),
    )
    .map_err(|e| e.to_string())?;
    let m = grow(&d, &TrainConfig::default().lasso()).map_err(|e| e.to_string())?;
    let used = used_features(&m);
    check(!used[1], || "x2 entered the model; no unused feature to test".into())?;
    let scores = ghost_scores(&m, &d).map_err(|e| e.to_string())?;
    check(scores[1] == 1.0, || format!("unused-feature score {}", scores[1]))?;

    let mut good_runs = 0;
    let mut notes = Vec::new();
    for seed in 1..=10u64 {
        let d = synth(SyntheticFamily::Friedman, 500, 1.0, seed);
        let cfg = TrainConfig {
            seed,
            ..TrainConfig::default()
        };
        let m = grow(&d, &cfg).map_err(|e| e.to_string())?;
        let report = importance_report(
            &m,
            &d,
            &ImportanceConfig {
                seed,
                ..ImportanceConfig::default()
            },
        )
        .map_err(|e| e.to_string())?;
        let above = |f: &trust_core::explain::FeatureImportance| f.debiased_score > f.null_quantiles.q95;
        let signal = report.features[..5].iter().filter(|f| above(f)).count();
        let noise_below = report.features[5..].iter().filter(|f| !above(f)).count();
        if signal == 5 && noise_below >= 4 {
            good_runs += 1;
        }
        notes.push(format!("{signal}/{noise_below}"));
    }
    let detail = format!(
        "unused score 1.0; Friedman runs passing {good_runs}/10 (signal above q95 / noise below q95: {})",
        notes.join(" ")
    );
    check(good_runs >= 8, || detail.clone())?;
    Ok(detail)
}

fn ood() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (n, p) = (200, 4);
    let x = Matrix::from_row_major(n, p, gaussian(&mut rng, n * p));
    let stats = fit_ood_stats(&x, 0.999).map_err(|e| e.to_string())?;
    let d0 = ood_score(&stats.center, &stats).map_err(|e| e.to_string())?;
    check(d0 == 0.0, || format!("center distance {d0}"))?;

    let mut worst = 0.0f64;
    for _ in 0..20 {
        let a = DMatrix::from_fn(p, p, |_, _| rng.sample::<f64, _>(StandardNormal));
        if a.determinant().abs() < 0.1 {
            continue;
        }
        let b: Vec<f64> = gaussian(&mut rng, p);
        let map = |v: &[f64]| -> Vec<f64> {
            (0..p)
                .map(|i| (0..p).map(|k| a[(i, k)] * v[k]).sum::<f64>() + b[i])
                .collect()
        };
        let mut xt = Matrix::zeros(n, p);
        for i in 0..n {
            xt.row_mut(i).copy_from_slice(&map(x.row(i)));
        }
        let mut st = fit_ood_stats(&xt, 0.999).map_err(|e| e.to_string())?;
        st.center = map(&stats.center);
        for _ in 0..10 {
            let z: Vec<f64> = gaussian(&mut rng, p).iter().map(|v| 3.0 * v).collect();
            let d1 = ood_score(&z, &stats).map_err(|e| e.to_string())?;
            let d2 = ood_score(&map(&z), &st).map_err(|e| e.to_string())?;
            worst = worst.max((d1 - d2).abs());
        }
    }
    check(worst < 1e-6, || format!("affine gap {worst:.2e}"))?;

    let col: Vec<f64> = (0..=10).map(f64::from).collect();
    let r = fit_ood_stats(&Matrix::from_row_major(11, 1, col), 0.999).map_err(|e| e.to_string())?;
    let br = range_breach(&[12.0], &r);
    check(
        br.len() == 1 && br[0].direction == BreachDirection::Above && (br[0].breach_pct - 20.0).abs() < 1e-12,
        || format!("breach {br:?}"),
    )?;
    Ok(format!("center 0; affine gap {worst:.1e}; breach above 20%"))
}

fn pipeline_bytes(seed: u64) -> Result<(Vec<u8>, Vec<u8>, Vec<u8>), String> {
    let d = synth(SyntheticFamily::Friedman, 300, 1.0, seed);
    let mut data_csv = Vec::new();
    write_csv(&d, &mut data_csv).map_err(|e| e.to_string())?;
    let d = parse_csv(data_csv.as_slice(), Some("y")).map_err(|e| e.to_string())?;
    let cfg = TrainConfig {
        seed,
        ..TrainConfig::default()
    };
    let m = grow(&d, &cfg).map_err(|e| e.to_string())?;
    let m = TrustModel::from_json(&m.to_json().map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let preds = m.predict_values(&d).map_err(|e| e.to_string())?;
    let mut pred_csv = String::from("prediction\n");
    for p in preds {
        pred_csv.push_str(&format!("{p}\n"));
    }
    let report = importance_report(
        &m,
        &d,
        &ImportanceConfig {
            replications: 20,
            seed,
            ..ImportanceConfig::default()
        },
    )
    .map_err(|e| e.to_string())?;
    Ok((data_csv, pred_csv.into_bytes(), importance_csv(&report).into_bytes()))
}

fn determinism() -> Outcome {
    let a = pipeline_bytes(123)?;
    let b = pipeline_bytes(123)?;
    check(a == b, || "outputs differ between runs".into())?;
    Ok(format!(
        "data {} B, predictions {} B, importance {} B identical",
        a.0.len(),
        a.1.len(),
        a.2.len()
    ))
}

fn high_dim_dataset(seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, p) = (20, 40);
    let cols: Vec<Vec<f64>> = (0..p).map(|_| gaussian(&mut rng, n)).collect();
    let y: Vec<f64> = (0..n)
        .map(|i| 2.0 * cols[0][i] - cols[1][i] + 0.5 * rng.sample::<f64, _>(StandardNormal))
        .collect();
    Dataset::new(
        (1..=p).map(|j| format!("x{j}")).collect(),
        cols.into_iter().map(Column::numeric).collect(),
        Some("y".into()),
        Some(y),
    )
    .expect("valid dataset")
}

fn high_dim_root() -> Outcome {
    let d = high_dim_dataset(13);
    let m = grow(&d, &TrainConfig::default()).map_err(|e| e.to_string())?;
    check(m.depth() == 0 && m.n_leaves() == 1, || format!("depth {}", m.depth()))?;
    let kind = m.leaves[0].fit.kind;
    check(m.elastic_net_root && kind == FitKind::ElasticNet, || {
        format!("root fit {kind:?}")
    })?;
    let preds = m.predict_values(&d).map_err(|e| e.to_string())?;
    check(preds.iter().all(|v| v.is_finite()), || "non-finite prediction".into())?;
    let mut sorted = preds.clone();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    check(sorted.len() == preds.len(), || {
        format!("{} distinct of {}", sorted.len(), preds.len())
    })?;
    Ok(format!(
        "depth 0 elastic net, {} distinct finite predictions",
        preds.len()
    ))
}

/// y = 10·1[x1 missing] + ε with a third of x1 missing and one noise column.
fn missing_dataset(n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x1 = gaussian(&mut rng, n);
    let x2 = gaussian(&mut rng, n);
    let mut y = Vec::with_capacity(n);
    for v in x1.iter_mut() {
        let miss = rng.random_bool(1.0 / 3.0);
        if miss {
            *v = f64::NAN;
        }
        y.push(if miss { 10.0 } else { 0.0 } + rng.sample::<f64, _>(StandardNormal));
    }
    Dataset::new(
        vec!["x1".into(), "x2".into()],
        vec![Column::numeric(x1), Column::numeric(x2)],
        Some("y".into()),
        Some(y),
    )
    .expect("valid dataset")
}

fn missing_splits() -> Outcome {
    let train = missing_dataset(500, 14);
    let test = missing_dataset(500, 1014);
    let m = grow(&train, &TrainConfig::default()).map_err(|e| e.to_string())?;
    let found = m.nodes.iter().any(|n| {
        matches!(
            n,
            Node::Split {
                rule: SplitRule::MissingOnly { feature: 0 } | SplitRule::MissingOrBelow { feature: 0, .. },
                ..
            }
        )
    });
    check(found, || "no missing-value split on x1".into())?;
    let preds = m.predict_values(&test).map_err(|e| e.to_string())?;
    let uv = unexplained_variance(&preds, test.y().map_err(|e| e.to_string())?).ok_or("constant test response")?;
    let detail = format!("missing split on x1 present, test UV {uv:.4}");
    check(uv <= 0.2, || detail.clone())?;
    Ok(detail)
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 14] = [
        ("sparse recovery", sparse_recovery),
        ("Friedman low noise", friedman_low_noise),
        ("Max low noise", max_low_noise),
        ("Steps low noise", steps_low_noise),
        ("Max2 larger sample", max2_large_sample),
        ("relaxed Lasso reductions", relaxed_reductions),
        ("Lasso KKT conditions", lasso_kkt),
        ("truncation", truncation),
        ("SHAP identities", shap),
        ("ghost importance", ghost_importance),
        ("OOD distance and breaches", ood),
        ("pipeline determinism", determinism),
        ("high-dimensional root", high_dim_root),
        ("missing-value splits", missing_splits),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {:>2}. {name}: {detail} [{secs:.1}s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2}. {name}: {detail} [{secs:.1}s]", i + 1);
            }
        }
    }
    println!(
        "{} of {} acceptance criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
