use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use trust_core::linalg::Matrix;
use trust_core::robust::{fit_ood_stats, ood_report, ood_score, BreachDirection};

fn sample(n: usize, p: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n);
    for _ in 0..n {
        let z: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
        rows.push((0..p).map(|j| z[j] + 0.5 * z[(j + 1) % p] + j as f64).collect());
    }
    Matrix::from_rows(&rows)
}

#[test]
fn distance_matches_independent_mahalanobis() {
    let x = sample(300, 4, 1);
    let stats = fit_ood_stats(&x, 0.99).unwrap();
    assert_eq!(stats.ridge, 0.0);
    let n = x.nrows();
    let m = DMatrix::from_fn(n, 4, |i, j| x.get(i, j));
    let means = m.row_mean();
    let centred = DMatrix::from_fn(n, 4, |i, j| m[(i, j)] - means[j]);
    let cov = centred.transpose() * &centred / (n as f64 - 1.0);
    let inv = cov.try_inverse().unwrap();
    for probe in [[0.0, 1.0, 2.0, 3.0], [3.0, -1.0, 0.5, 9.0]] {
        let d = DVector::from_iterator(4, probe.iter().zip(&stats.center).map(|(a, c)| a - c));
        let oracle = (d.transpose() * &inv * &d)[(0, 0)].sqrt();
        let got = ood_score(&probe, &stats).unwrap();
        assert!((got - oracle).abs() < 1e-9 * (1.0 + oracle), "{got} vs {oracle}");
    }
}

proptest! {
    #[test]
    fn distance_scales_linearly_along_rays(
        dir in prop::collection::vec(-3.0f64..3.0, 4),
        c in 1.0f64..50.0,
    ) {
        let x = sample(200, 4, 2);
        let stats = fit_ood_stats(&x, 0.99).unwrap();
        let at = |s: f64| -> Vec<f64> { stats.center.iter().zip(&dir).map(|(m, d)| m + s * d).collect() };
        let d1 = ood_score(&at(1.0), &stats).unwrap();
        let dc = ood_score(&at(c), &stats).unwrap();
        prop_assert!((dc - c * d1).abs() <= 1e-9 * (1.0 + dc));
    }
}

#[test]
fn range_breach_example_and_flag() {
    let rows: Vec<Vec<f64>> = (0..=10).map(|i| vec![i as f64, (i * i % 7) as f64]).collect();
    let stats = fit_ood_stats(&Matrix::from_rows(&rows), 0.99).unwrap();
    let r = ood_report(&[12.0, 3.0], &stats).unwrap();
    assert_eq!(r.breaches.len(), 1);
    assert_eq!(r.breaches[0].feature, 0);
    assert_eq!(r.breaches[0].direction, BreachDirection::Above);
    assert!((r.breaches[0].breach_pct - 20.0).abs() < 1e-12);
    let low = ood_report(&[-5.0, 3.0], &stats).unwrap();
    assert_eq!(low.breaches[0].direction, BreachDirection::Below);
    assert!((low.breaches[0].breach_pct - 50.0).abs() < 1e-12);
    let far = ood_report(&[500.0, 3.0], &stats).unwrap();
    assert!(far.is_ood && far.distance > stats.threshold);
    assert!(ood_score(&[1.0], &stats).is_err());
}
