use serde::{Deserialize, Serialize};

use super::SpecView;
use crate::error::{Error, Result};
use crate::stats::{percentile_sorted, Z_CRIT_5PCT};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterCriteria {
    pub overidentified_only: bool,
    /// Keep specs with KP F strictly above this; non-positive disables the check.
    pub min_cd: f64,
    /// Keep specs with Hansen J p-value strictly above this; positive values
    /// also exclude exactly identified specs.
    pub min_hj_p: f64,
}

impl FilterCriteria {
    pub const ALL: FilterCriteria = FilterCriteria {
        overidentified_only: false,
        min_cd: 0.0,
        min_hj_p: 0.0,
    };

    /// Table row label, e.g. `CD>3 P-val HJ>5`.
    pub fn label(&self) -> String {
        match (self.min_cd > 0.0, self.min_hj_p > 0.0) {
            (false, false) if self.overidentified_only => "All Over-Identified IV".into(),
            (false, false) => "All IV".into(),
            (true, false) => format!("CD>{}", self.min_cd),
            (false, true) => format!("P-val HJ>{}", self.min_hj_p * 100.0),
            (true, true) => format!("CD>{} P-val HJ>{}", self.min_cd, self.min_hj_p * 100.0),
        }
    }

    pub fn accepts<S: SpecView>(&self, s: &S) -> bool {
        if !s.is_ok() {
            return false;
        }
        let Some(kp) = s.kp_wald_f() else { return false };
        if self.min_cd > 0.0 && !(kp > self.min_cd) {
            return false;
        }
        let hj = s.hj_p();
        if (self.overidentified_only || self.min_hj_p > 0.0) && hj.is_none() {
            return false;
        }
        if self.min_hj_p > 0.0 && !hj.is_some_and(|p| p > self.min_hj_p) {
            return false;
        }
        true
    }
}

/// The table rows: all specs, over-identified specs, then CD thresholds 1, 3 and 7
/// with Hansen J p-value above 5%.
pub fn standard_filters() -> Vec<FilterCriteria> {
    let mut v = vec![
        FilterCriteria::ALL,
        FilterCriteria {
            overidentified_only: true,
            ..FilterCriteria::ALL
        },
    ];
    for cd in [1.0, 3.0, 7.0] {
        v.push(FilterCriteria {
            overidentified_only: true,
            min_cd: cd,
            min_hj_p: 0.05,
        });
    }
    v
}

pub fn filter_specs<'a, S: SpecView>(results: &'a [S], criteria: &FilterCriteria) -> Vec<&'a S> {
    results.iter().filter(|s| criteria.accepts(*s)).collect()
}

/// Percentiles and significance shares of one coefficient, in natural units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub filter_label: String,
    pub n_specs: usize,
    pub p25: Option<f64>,
    pub p50: Option<f64>,
    pub p75: Option<f64>,
    pub pct_sig_pos: Option<f64>,
    pub pct_sig_neg: Option<f64>,
    /// Fewer than `min_count + 1` specifications.
    pub suppressed: bool,
}

pub fn summarize<S: SpecView>(filtered: &[S], coef: &str, min_count: usize) -> Result<SweepSummary> {
    let mut values = Vec::with_capacity(filtered.len());
    let (mut pos, mut neg) = (0usize, 0usize);
    for s in filtered {
        let (b, se) = match (s.coef(coef), s.se(coef)) {
            (Some(b), Some(se)) => (b, se),
            _ => {
                return Err(Error::Invalid(format!(
                    "spec {} has no coefficient `{coef}`",
                    s.set_id()
                )))
            }
        };
        values.push(b);
        let t = b / se;
        if t > Z_CRIT_5PCT {
            pos += 1;
        } else if t < -Z_CRIT_5PCT {
            neg += 1;
        }
    }
    let n = values.len();
    let suppressed = n <= min_count;
    values.sort_by(f64::total_cmp);
    let pct = |k: usize| (n > 0).then(|| 100.0 * k as f64 / n as f64);
    Ok(SweepSummary {
        filter_label: String::new(),
        n_specs: n,
        p25: percentile_sorted(&values, 0.25),
        p50: percentile_sorted(&values, 0.5),
        p75: percentile_sorted(&values, 0.75),
        pct_sig_pos: pct(pos),
        pct_sig_neg: pct(neg),
        suppressed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FigureRow {
    pub set_id: usize,
    pub ln_cd: f64,
    pub coef: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// One row per spec with a positive KP F, ordered by set id; also returns the
/// number of specs dropped for a non-positive or missing statistic.
pub fn figure_data<S: SpecView>(filtered: &[S], coef: &str) -> (Vec<FigureRow>, usize) {
    let mut rows = Vec::new();
    let mut dropped = 0;
    for s in filtered {
        match (s.kp_wald_f(), s.coef(coef), s.se(coef)) {
            (Some(cd), Some(b), Some(se)) if cd > 0.0 => rows.push(FigureRow {
                set_id: s.set_id(),
                ln_cd: cd.ln(),
                coef: b,
                ci_low: b - Z_CRIT_5PCT * se,
                ci_high: b + Z_CRIT_5PCT * se,
            }),
            _ => dropped += 1,
        }
    }
    rows.sort_by_key(|r| r.set_id);
    (rows, dropped)
}
