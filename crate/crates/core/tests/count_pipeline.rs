//! Count-model battery on synthetic diarrhea windows.

use std::collections::BTreeMap;

use growthiv::count_models::*;
use growthiv::synth::generate_count_windows;
use proptest::prelude::*;

fn theta(fit: &CountFit) -> Vec<f64> {
    let mut t = fit.coef.clone();
    t.extend(fit.alpha.map(f64::ln));
    t.extend(fit.inflation);
    t
}

fn loglik_theta(data: &CountDataset, family: CountFamily, t: &[f64]) -> f64 {
    let k = data.x.ncols();
    let mut rest = t[k..].iter();
    let alpha = family.has_dispersion().then(|| rest.next().unwrap().exp());
    let infl = family.inflated().then(|| *rest.next().unwrap());
    loglik_at(data, family, &t[..k], alpha, infl)
}

#[test]
fn battery_has_twelve_converged_windows() {
    let windows = generate_count_windows(400, 11).unwrap();
    let battery = fit_window_battery(&windows, SelectBy::Bic);
    assert_eq!(battery.windows.len(), 12);
    for (w, d) in battery.windows.iter().zip(&windows) {
        assert_eq!(w.window, d.window_label);
        let f = w.fit.as_ref().expect("window fitted");
        assert!(f.converged && !f.degenerate, "{}: {:?}", w.window, w.flag);
        assert_eq!(f.names, vec!["const", "recall_days", "female"]);
    }
}

#[test]
fn optimum_gradient_checked_by_finite_differences() {
    let windows = generate_count_windows(400, 12).unwrap();
    let data = &windows[6];
    for family in CountFamily::ALL {
        let fit = fit_count(data, family).unwrap();
        assert!(fit.converged, "{family}");
        let t = theta(&fit);
        let analytic = score_at(data, &fit);
        assert!(analytic.iter().all(|g| g.abs() < 1e-6), "{family}: {analytic:?}");
        for j in 0..t.len() {
            let h = 1e-5;
            let (mut up, mut dn) = (t.clone(), t.clone());
            up[j] += h;
            dn[j] -= h;
            let fd = (loglik_theta(data, family, &up) - loglik_theta(data, family, &dn)) / (2.0 * h);
            assert!((fd - analytic[j]).abs() <= 1e-3 * analytic[j].abs().max(1.0), "{family} param {j}: fd {fd} vs {}", analytic[j]);
        }
    }
}

#[test]
fn bic_identity_for_every_family_and_window() {
    for data in generate_count_windows(200, 13).unwrap() {
        for family in CountFamily::ALL {
            let Ok(f) = fit_count(&data, family) else { continue };
            assert_eq!(f.bic, -2.0 * f.loglik + f.n_params() as f64 * (f.n as f64).ln());
            if let Some(a) = f.alpha {
                assert!(a > 0.0);
            }
        }
    }
}

#[test]
fn battery_file_round_trip_preserves_predictions() {
    let windows = generate_count_windows(300, 14).unwrap();
    let battery = fit_window_battery(&windows, SelectBy::R2);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("battery.json");
    std::fs::write(&path, battery.to_json().unwrap()).unwrap();
    let back = CountBattery::from_json(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(back, battery);
    let cov = BTreeMap::from([("recall_days".to_string(), 2.0), ("female".to_string(), 1.0)]);
    for w in &battery.windows {
        let (a, b) = (w.fit.as_ref().unwrap(), back.get(&w.window).unwrap());
        assert_eq!(predict_days(a, &cov, 61).unwrap().to_bits(), predict_days(b, &cov, 61).unwrap().to_bits());
    }
}

#[test]
fn prediction_matches_direct_evaluation() {
    let windows = generate_count_windows(300, 15).unwrap();
    let fit = fit_count(&windows[5], CountFamily::Zinb).unwrap();
    let cov = BTreeMap::from([("recall_days".to_string(), 3.0), ("female".to_string(), 0.0)]);
    let eta = fit.coef[0] + 3.0 * fit.coef[1];
    let direct = (1.0 - 1.0 / (1.0 + (-fit.inflation.unwrap()).exp())) * eta.exp();
    let got = predict_days(&fit, &cov, 61).unwrap();
    assert!((got - direct.min(61.0)).abs() <= 1e-12 * direct.max(1.0));
    let partial = BTreeMap::from([("recall_days".to_string(), 3.0)]);
    assert!(predict_days(&fit, &partial, 61).is_err());
}

proptest! {
    #[test]
    fn pmf_sums_to_one(mu in 1e-6..50.0f64) {
        let s: f64 = (0..=200).map(|y| poisson_pmf(y, mu)).sum();
        prop_assert!(s >= 1.0 - 1e-8 && s <= 1.0 + 1e-12);
    }

    #[test]
    fn negbin_lnpmf_approaches_poisson(y in 0u32..60, mu in 0.01..30.0f64) {
        let d = negbin_lnpmf(y, mu, 1e-9) - poisson_pmf(y, mu).ln();
        prop_assert!(d.abs() < 1e-5 * (1.0 + (y as f64)));
    }
}
