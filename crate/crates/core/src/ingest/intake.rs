use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};

use super::panel::{ChildObservation, IntakeFlag};
use crate::error::{Error, Result};
use crate::linalg;

const DAYS_PER_MONTH: f64 = 30.4375;

/// Period intake: mean of the two endpoint daily intakes times the gap, plus supplements.
/// Arguments and result are `(protein, nonprotein)` pairs in kcal.
pub fn aggregate_intakes(
    start_daily: (f64, f64),
    end_daily: (f64, f64),
    gap_days: f64,
    supplement: (f64, f64),
) -> Result<(f64, f64)> {
    if !(gap_days > 0.0) {
        return Err(Error::Invalid(format!("gap must be positive, found {gap_days}")));
    }
    Ok((
        0.5 * (start_daily.0 + end_daily.0) * gap_days + supplement.0,
        0.5 * (start_daily.1 + end_daily.1) * gap_days + supplement.1,
    ))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ImputationSummary {
    pub observed: usize,
    pub imputed: usize,
    pub missing: usize,
}

/// Age in whole months, rounded.
pub fn age_month(age_days: i64) -> i64 {
    (age_days as f64 / DAYS_PER_MONTH).round() as i64
}

/// Contiguous `(start, end)` index ranges of each child in a panel sorted by child.
pub(crate) fn child_ranges(panel: &[ChildObservation]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=panel.len() {
        if i == panel.len() || panel[i].child_id != panel[start].child_id {
            if i > start {
                out.push((start, i));
            }
            start = i;
        }
    }
    out
}

/// Fill missing daily intakes from a child fixed-effects regression on age-month
/// dummies. Birth-year dummies are constant within child and absorbed by the
/// fixed effect. A value is filled only when the neighbouring measurement of the
/// same child has an observed value; imputed values are floored at zero.
pub fn impute_intakes_fe(panel: &mut [ChildObservation]) -> Result<ImputationSummary> {
    panel.sort_by(|a, b| (&a.child_id, a.age_days).cmp(&(&b.child_id, b.age_days)));
    let ranges = child_ranges(panel);
    let protein: Vec<Option<f64>> = panel.iter().map(|o| o.protein_kcal_day).collect();
    let nonprotein: Vec<Option<f64>> = panel.iter().map(|o| o.nonprotein_kcal_day).collect();
    let filled_p = impute_one(panel, &ranges, &protein)?;
    let filled_np = impute_one(panel, &ranges, &nonprotein)?;
    let mut summary = ImputationSummary::default();
    for (i, o) in panel.iter_mut().enumerate() {
        o.protein_kcal_day = filled_p[i];
        o.nonprotein_kcal_day = filled_np[i];
        o.intake_flag = if protein[i].is_some() && nonprotein[i].is_some() {
            summary.observed += 1;
            IntakeFlag::Observed
        } else if filled_p[i].is_some() && filled_np[i].is_some() {
            summary.imputed += 1;
            IntakeFlag::Imputed
        } else {
            summary.missing += 1;
            IntakeFlag::Missing
        };
    }
    Ok(summary)
}

fn impute_one(
    panel: &[ChildObservation],
    ranges: &[(usize, usize)],
    values: &[Option<f64>],
) -> Result<Vec<Option<f64>>> {
    let mut out = values.to_vec();
    let needs_fill = ranges.iter().any(|&(s, e)| {
        (s..e).any(|i| values[i].is_none())
            && (s..e).any(|i| values[i].is_some())
    });
    if !needs_fill {
        return Ok(out);
    }
    let buckets: Vec<i64> = panel
        .iter()
        .zip(values)
        .filter(|(_, v)| v.is_some())
        .map(|(o, _)| age_month(o.age_days))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    // first bucket is the reference level
    let dummy_of = |age_days: i64| buckets.binary_search(&age_month(age_days)).ok().filter(|&b| b > 0);
    let k = buckets.len().saturating_sub(1);

    let mut rows = Vec::new();
    let mut ys = Vec::new();
    for &(s, e) in ranges {
        let obs: Vec<usize> = (s..e).filter(|&i| values[i].is_some()).collect();
        if obs.is_empty() {
            continue;
        }
        let nobs = obs.len() as f64;
        let ybar = obs.iter().map(|&i| values[i].unwrap()).sum::<f64>() / nobs;
        let mut dbar = vec![0.0; k];
        for &i in &obs {
            if let Some(b) = dummy_of(panel[i].age_days) {
                dbar[b - 1] += 1.0 / nobs;
            }
        }
        for &i in &obs {
            let mut row = dbar.iter().map(|v| -v).collect::<Vec<_>>();
            if let Some(b) = dummy_of(panel[i].age_days) {
                row[b - 1] += 1.0;
            }
            rows.push(row);
            ys.push(values[i].unwrap() - ybar);
        }
    }
    let beta = if k == 0 || rows.is_empty() {
        DVector::zeros(k)
    } else {
        let x = DMatrix::from_fn(rows.len(), k, |i, j| rows[i][j]);
        linalg::lstsq(&x, &DVector::from_vec(ys))?
    };
    let effect = |age_days: i64| dummy_of(age_days).map(|b| beta[b - 1]).unwrap_or(0.0);

    for &(s, e) in ranges {
        let obs: Vec<usize> = (s..e).filter(|&i| values[i].is_some()).collect();
        if obs.is_empty() {
            continue;
        }
        let fe = obs
            .iter()
            .map(|&i| values[i].unwrap() - effect(panel[i].age_days))
            .sum::<f64>()
            / obs.len() as f64;
        for i in s..e {
            if values[i].is_some() {
                continue;
            }
            let adjacent = (i > s && values[i - 1].is_some()) || (i + 1 < e && values[i + 1].is_some());
            if adjacent {
                out[i] = Some((fe + effect(panel[i].age_days)).max(0.0));
            }
        }
    }
    Ok(out)
}
