//! Independent oracles for the metric and statistics modules: brute-force
//! pairwise AUC, exhaustive F1 grids, numerical integration of the
//! chi-square density, and Monte Carlo agreement.

mod common;

use hypobench_core::metrics::{
    max_f1_bruteforce, optimize_threshold, roc_auc, roc_auc_bruteforce,
};
use hypobench_core::stats::chi2_sf_df1;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

fn random_instance(seed: u64, max_n: usize) -> (Vec<f64>, Vec<u8>) {
    let mut rng = common::rng(seed);
    let n = rng.gen_range(4..=max_n);
    // Quantized scores so ties actually occur.
    let levels = rng.gen_range(2..=12);
    let scores: Vec<f64> = (0..n)
        .map(|_| rng.gen_range(0..levels) as f64 / (levels - 1) as f64)
        .collect();
    let mut labels: Vec<u8> = (0..n).map(|_| u8::from(rng.gen_bool(0.3))).collect();
    // force both classes
    labels[0] = 0;
    labels[1] = 1;
    (scores, labels)
}

#[test]
fn sweep_auc_equals_bruteforce_on_random_instances() {
    for seed in 0..300u64 {
        let (scores, labels) = random_instance(seed, 200);
        let (_, auc) = roc_auc(&scores, &labels).unwrap();
        let oracle = roc_auc_bruteforce(&scores, &labels);
        assert_eq!(auc, oracle, "seed {seed}: {auc} vs {oracle}");
    }
}

#[test]
fn optimized_f1_equals_exhaustive_grid() {
    for seed in 0..300u64 {
        let (scores, labels) = random_instance(seed, 200);
        let (_, f1) = optimize_threshold(&scores, &labels).unwrap();
        let oracle = max_f1_bruteforce(&scores, &labels);
        assert_eq!(f1, oracle, "seed {seed}");
    }
}

proptest! {
    #[test]
    fn auc_is_invariant_under_monotone_transforms(seed in 0u64..500) {
        let (scores, labels) = random_instance(seed, 60);
        let (_, base) = roc_auc(&scores, &labels).unwrap();
        // strictly increasing maps preserve the ranking
        let exp_scores: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp()).collect();
        let affine_scores: Vec<f64> = scores.iter().map(|s| 7.5 * s - 2.0).collect();
        let (_, auc_exp) = roc_auc(&exp_scores, &labels).unwrap();
        let (_, auc_aff) = roc_auc(&affine_scores, &labels).unwrap();
        prop_assert!((base - auc_exp).abs() < 1e-12);
        prop_assert!((base - auc_aff).abs() < 1e-12);
    }
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let x = a + i as f64 * h;
        s += f(x) * if i % 2 == 0 { 2.0 } else { 4.0 };
    }
    s * h / 3.0
}

/// Survival function by numerical integration of the chi-square density.
///
/// The density `exp(-t/2)/sqrt(2 pi t)` has an integrable spike toward
/// t = 0, so integrate after substituting `t = u^2`, which turns the
/// integrand into the smooth `2 * phi(u)` on `[sqrt(x), inf)`. The tail
/// beyond u = 40 is ~1e-348 and ignored.
fn sf_by_integration(x: f64) -> f64 {
    assert!(x > 0.0);
    let phi = |u: f64| (-u * u / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
    2.0 * simpson(phi, x.sqrt(), 40.0, 200_000)
}

#[test]
fn chi2_sf_matches_numerical_integration() {
    for x in [0.1, 0.5, 1.0, 2.0, 3.841459, 5.0, 10.0, 20.0, 50.0, 100.0] {
        let sf = chi2_sf_df1(x).unwrap();
        let oracle = sf_by_integration(x);
        assert!(
            (sf - oracle).abs() < 1e-12,
            "x={x}: sf {sf} vs integral {oracle} (diff {:.2e})",
            (sf - oracle).abs()
        );
    }
}

#[test]
fn chi2_sf_matches_monte_carlo() {
    // 1e6 squared standard normals; agreement within 3 standard errors.
    let mut rng = common::rng(424242);
    let n = 1_000_000usize;
    let draws: Vec<f64> = (0..n)
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            z * z
        })
        .collect();
    for x in [1.0, 4.0, 10.0] {
        let p_hat = draws.iter().filter(|&&d| d > x).count() as f64 / n as f64;
        let p = chi2_sf_df1(x).unwrap();
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!(
            (p_hat - p).abs() <= 3.0 * se,
            "x={x}: mc {p_hat} vs sf {p} (3se {:.2e})",
            3.0 * se
        );
    }
}
