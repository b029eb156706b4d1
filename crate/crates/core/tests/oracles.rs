use approx::assert_abs_diff_eq;
use ivbma_core::bma::{exact_bma, log_marginal_likelihood, ExactOptions, PriorConfig};
use ivbma_core::synthetic::{brute_force_pips, generate_linear, SyntheticConfig};
use nalgebra::{DMatrix, DVector};

fn r_squared(y: &DVector<f64>, x: &DMatrix<f64>) -> f64 {
    let n = y.len() as f64;
    let xc = x.column(0).add_scalar(-x.column(0).sum() / n);
    let yc = y.add_scalar(-y.mean());
    let sxy = xc.dot(&yc);
    sxy * sxy / (xc.norm_squared() * yc.norm_squared())
}

/// `((n-1-k)/2)·ln(1+g) - ((n-1)/2)·ln(1+g(1-R²))` with `k = 1`.
fn one_variable_log_bf(n: usize, r2: f64, g: f64) -> f64 {
    let n = n as f64;
    0.5 * (n - 2.0) * g.ln_1p() - 0.5 * (n - 1.0) * (g * (1.0 - r2)).ln_1p()
}

fn single_regressor(n: usize, slope: f64, seed: u64) -> (DVector<f64>, DMatrix<f64>) {
    let stage = generate_linear(&SyntheticConfig::linear(n, 1, &[0], &[slope], 1.0, seed)).unwrap();
    (stage.y, stage.columns)
}

#[test]
fn equal_likelihood_g_gives_even_odds() {
    let n = 40;
    let (y, x) = single_regressor(n, 0.35, 8);
    let r2 = r_squared(&y, &x);
    assert!(r2 > 1.0 / (n as f64 - 1.0), "need a root; R² = {r2}");

    // the log Bayes factor is positive near g = 0 and tends to -inf, so bisect on ln g
    let (mut lo, mut hi) = (1e-6f64.ln(), 1e12f64.ln());
    assert!(one_variable_log_bf(n, r2, lo.exp()) > 0.0);
    assert!(one_variable_log_bf(n, r2, hi.exp()) < 0.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if one_variable_log_bf(n, r2, mid.exp()) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let g = (0.5 * (lo + hi)).exp();
    let prior = PriorConfig::fixed(g);

    assert_abs_diff_eq!(log_marginal_likelihood(&y, &x, &prior).unwrap(), 0.0, epsilon = 1e-9);
    let stage = ivbma_core::bma::SingleStage::unnamed(y.clone(), x.clone()).unwrap();
    let exact = exact_bma(&stage, &prior, ExactOptions::default()).unwrap();
    assert_abs_diff_eq!(exact.summary.variables[0].pip, 0.5, epsilon = 1e-9);
    let brute = brute_force_pips(&y, &x, &prior).unwrap();
    assert_abs_diff_eq!(brute.variables[0].pip, 0.5, epsilon = 1e-9);
}

#[test]
fn closed_form_log_bayes_factor_matches_library() {
    for seed in 0..10 {
        let (y, x) = single_regressor(30 + seed as usize, 0.2 * seed as f64, seed);
        let r2 = r_squared(&y, &x);
        for g in [0.5, 30.0, 1e4] {
            let lib = log_marginal_likelihood(&y, &x, &PriorConfig::fixed(g)).unwrap();
            assert_abs_diff_eq!(lib, one_variable_log_bf(y.len(), r2, g), epsilon = 1e-10);
        }
    }
}

#[test]
fn exact_and_brute_force_agree_at_k_ten() {
    let cfg = SyntheticConfig::linear(80, 10, &[1, 4, 7], &[0.6, -0.4, 0.25], 1.0, 123);
    let stage = generate_linear(&cfg).unwrap();
    for prior in [PriorConfig::default(), PriorConfig::fixed(5.0)] {
        let exact = exact_bma(&stage, &prior, ExactOptions::default()).unwrap().summary;
        let brute = brute_force_pips(&stage.y, &stage.columns, &prior).unwrap();
        for (a, b) in exact.variables.iter().zip(&brute.variables) {
            assert_eq!(a.name, b.name);
            assert_abs_diff_eq!(a.pip, b.pip, epsilon = 1e-8);
            assert_abs_diff_eq!(a.post_mean, b.post_mean, epsilon = 1e-8);
            assert_abs_diff_eq!(a.post_sd, b.post_sd, epsilon = 1e-8);
        }
    }
}

#[test]
fn parallel_and_serial_enumeration_are_bit_identical() {
    let cfg = SyntheticConfig::linear(60, 14, &[0, 5], &[0.5, 0.5], 1.0, 4);
    let stage = generate_linear(&cfg).unwrap();
    let prior = PriorConfig::default();
    let par = exact_bma(&stage, &prior, ExactOptions::default()).unwrap();
    let ser = exact_bma(
        &stage,
        &prior,
        ExactOptions {
            parallel: false,
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(par.pmps(), ser.pmps());
    assert_eq!(par.summary, ser.summary);
}
