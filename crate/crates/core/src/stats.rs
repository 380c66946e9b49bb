//! Distribution tails and order statistics used by the diagnostics and summaries.

use statrs::function::gamma::gamma_ur;

/// Two-sided 5% normal critical value used for significance flags and intervals.
pub const Z_CRIT_5PCT: f64 = 1.96;

/// Upper tail of the chi-square distribution, `P(X > stat)` with `df` degrees of freedom.
pub fn chi2_sf(stat: f64, df: usize) -> f64 {
    if df == 0 || stat.is_nan() {
        return f64::NAN;
    }
    if stat <= 0.0 {
        return 1.0;
    }
    if stat.is_infinite() {
        return 0.0;
    }
    gamma_ur(df as f64 / 2.0, stat / 2.0).clamp(0.0, 1.0)
}

/// Percentile of an ascending slice with linear interpolation at rank `(n-1)p`.
pub fn percentile_sorted(sorted: &[f64], p: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let rank = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let w = rank - lo as f64;
    Some(sorted[lo] + w * (sorted[hi] - sorted[lo]))
}

/// Median with the same interpolation as [`percentile_sorted`]; sorts a copy.
pub fn median(values: &[f64]) -> Option<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    percentile_sorted(&v, 0.5)
}

/// Squared Pearson correlation; `None` when either series is constant.
pub fn squared_correlation(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return None;
    }
    Some((sab * sab / (saa * sbb)).min(1.0))
}
