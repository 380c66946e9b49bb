//! Monte-Carlo calibration of the weak-instrument and specification tests.

mod common;

use common::{iv_design, share, IvConfig};
use growthiv::diagnostics::{hansen_j, hausman, kp_wald_f, underid_test};
use growthiv::estimators::{fit_liml, fit_ols};
use rayon::prelude::*;

/// Under irrelevance F ≈ χ²_m/m, so P(F < 2) = P(χ²_m < 2m): about 0.97 with
/// the ten instruments of the largest Philippines family.
#[test]
fn kp_f_small_with_irrelevant_instruments() {
    let below: usize = (0..100u64)
        .into_par_iter()
        .filter(|&s| {
            let d = iv_design(IvConfig { n: 5000, m: 10, pi: 0.0, ..Default::default() }, 10_000 + s);
            kp_wald_f(&d).unwrap() < 2.0
        })
        .count();
    assert!(share(below, 100) >= 0.95, "F < 2 in {below}/100");
}

#[test]
fn underid_rejects_strong_instruments() {
    for s in 0..5 {
        let d = iv_design(IvConfig { n: 5000, pi: 0.3, ..Default::default() }, 20_000 + s);
        assert!(underid_test(&d).unwrap().p < 0.01);
    }
}

#[test]
fn underid_size_with_irrelevant_instruments() {
    let rejections: usize = (0..200u64)
        .into_par_iter()
        .filter(|&s| {
            let d = iv_design(IvConfig { pi: 0.0, ..Default::default() }, 30_000 + s);
            underid_test(&d).unwrap().p < 0.05
        })
        .count();
    let r = share(rejections, 200);
    assert!((0.01..=0.12).contains(&r), "rejection rate {r}");
}

#[test]
fn hansen_j_detects_invalid_instrument() {
    let rejections: usize = (0..200u64)
        .into_par_iter()
        .filter(|&s| {
            let d = iv_design(IvConfig { invalid: 0.15, rho: 0.3, ..Default::default() }, 40_000 + s);
            let fit = fit_liml(&d).unwrap();
            hansen_j(&fit, &d).unwrap().p.unwrap() < 0.05
        })
        .count();
    assert!(share(rejections, 200) > 0.5, "power {rejections}/200");
}

#[test]
fn hausman_power_under_strong_endogeneity() {
    let rejections: usize = (0..100u64)
        .into_par_iter()
        .filter(|&s| {
            let d = iv_design(IvConfig { rho: 0.5, ..Default::default() }, 50_000 + s);
            let iv = fit_liml(&d).unwrap();
            let ols = fit_ols(&d).unwrap();
            hausman(&ols, &iv).unwrap().test.p < 0.05
        })
        .count();
    assert!(share(rejections, 100) >= 0.9, "power {rejections}/100");
}

#[test]
fn hausman_size_without_endogeneity() {
    let rejections: usize = (0..200u64)
        .into_par_iter()
        .filter(|&s| {
            let d = iv_design(IvConfig::default(), 60_000 + s);
            let iv = fit_liml(&d).unwrap();
            let ols = fit_ols(&d).unwrap();
            hausman(&ols, &iv).unwrap().test.p < 0.05
        })
        .count();
    assert!(share(rejections, 200) <= 0.12, "size {rejections}/200");
}
