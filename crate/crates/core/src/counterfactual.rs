//! Median predictions over filtered sweeps and dynamic dietary interventions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::median;
use crate::sweep::{FilterCriteria, SpecView};

pub const KCAL_PER_GRAM_PROTEIN: f64 = 4.0;
/// Protein in one egg, grams.
pub const EGG_PROTEIN_G: f64 = 5.5;
/// Non-protein energy in one egg, kcal.
pub const EGG_NONPROTEIN_KCAL: f64 = 40.9;

pub fn protein_grams_to_kcal(grams: f64) -> f64 {
    grams * KCAL_PER_GRAM_PROTEIN
}

/// Specs used for median predictions: KP F above 7 with Hansen J p-value above
/// 0.05, relaxed to KP F above 3 when fewer than ten specs survive.
pub fn median_prediction_subset<S: SpecView>(results: &[S]) -> (Vec<&S>, FilterCriteria) {
    let strict = FilterCriteria {
        overidentified_only: true,
        min_cd: 7.0,
        min_hj_p: 0.05,
    };
    let kept = crate::sweep::filter_specs(results, &strict);
    if kept.len() >= 10 {
        return (kept, strict);
    }
    let relaxed = FilterCriteria { min_cd: 3.0, ..strict };
    (crate::sweep::filter_specs(results, &relaxed), relaxed)
}

/// `median(coef) × increment_per_day × days_per_period`, with the coefficient in
/// natural units (cm or g per kcal) and the increment in kcal per day.
pub fn median_prediction<S: SpecView>(
    filtered: &[S],
    coef: &str,
    increment_per_day_kcal: f64,
    days_per_period: f64,
) -> Result<f64> {
    let values: Vec<f64> = filtered.iter().filter_map(|s| s.coef(coef)).collect();
    if values.len() != filtered.len() {
        return Err(Error::Invalid(format!("coefficient `{coef}` missing from some specs")));
    }
    let m = median(&values).ok_or_else(|| Error::NoQualifyingSpec("no specification for median prediction".into()))?;
    Ok(m * increment_per_day_kcal * days_per_period)
}

/// Among specs with Hansen J p-value above 0.05, the one with the largest KP F;
/// ties go to the lowest set id.
pub fn select_best_spec<S: SpecView>(results: &[S]) -> Result<&S> {
    let mut best: Option<&S> = None;
    for s in results {
        let (Some(kp), Some(p)) = (s.kp_wald_f(), s.hj_p()) else { continue };
        if !s.is_ok() || !(p > 0.05) {
            continue;
        }
        best = match best {
            Some(b) => {
                let bk = b.kp_wald_f().unwrap();
                if kp > bk || (kp == bk && s.set_id() < b.set_id()) {
                    Some(s)
                } else {
                    Some(b)
                }
            }
            None => Some(s),
        };
    }
    best.ok_or_else(|| Error::NoQualifyingSpec("no specification with Hansen J p-value above 0.05".into()))
}

/// Nutrient and lag coefficients of one growth equation of the protein-split model.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GrowthEquation {
    pub protein: f64,
    pub nonprotein: f64,
    pub lag_weight: f64,
    pub lag_height: f64,
}

impl GrowthEquation {
    pub fn from_spec<S: SpecView>(s: &S) -> Result<Self> {
        let get = |n: &str| {
            s.coef(n)
                .ok_or_else(|| Error::Invalid(format!("spec {} lacks coefficient `{n}`", s.set_id())))
        };
        Ok(GrowthEquation {
            protein: get("protein")?,
            nonprotein: get("nonprotein")?,
            lag_weight: get("lag_weight")?,
            lag_height: get("lag_height")?,
        })
    }

    pub fn from_fit<T: crate::Real>(fit: &crate::estimators::FitResult<T>) -> Result<Self> {
        let get = |n: &str| {
            fit.coef_of(n)
                .map(|v| v.as_f64())
                .ok_or_else(|| Error::Invalid(format!("fit lacks coefficient `{n}`; protein_split model required")))
        };
        Ok(GrowthEquation {
            protein: get("protein")?,
            nonprotein: get("nonprotein")?,
            lag_weight: get("lag_weight")?,
            lag_height: get("lag_height")?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterventionScenario {
    pub protein_kcal_per_day: f64,
    pub nonprotein_kcal_per_day: f64,
    pub days_per_period: u32,
    pub n_periods: usize,
    /// Per-period daily increments `(protein, nonprotein)` overriding the constant ones.
    #[serde(default)]
    pub schedule: Option<Vec<(f64, f64)>>,
    #[serde(default)]
    pub allow_negative: bool,
}

impl InterventionScenario {
    /// One egg per week.
    pub fn egg_per_week(days_per_period: u32, n_periods: usize) -> Self {
        InterventionScenario {
            protein_kcal_per_day: protein_grams_to_kcal(EGG_PROTEIN_G) / 7.0,
            nonprotein_kcal_per_day: EGG_NONPROTEIN_KCAL / 7.0,
            days_per_period,
            n_periods,
            schedule: None,
            allow_negative: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_periods == 0 || self.days_per_period == 0 {
            return Err(Error::Invalid("scenario needs at least one period of positive length".into()));
        }
        if let Some(s) = &self.schedule {
            if s.len() < self.n_periods {
                return Err(Error::Invalid(format!(
                    "schedule has {} entries for {} periods",
                    s.len(),
                    self.n_periods
                )));
            }
        }
        let all_finite = (0..self.n_periods).all(|t| {
            let (p, n) = self.daily(t);
            p.is_finite() && n.is_finite()
        });
        if !all_finite {
            return Err(Error::Invalid("scenario increments must be finite".into()));
        }
        if !self.allow_negative && (0..self.n_periods).any(|t| self.daily(t).0 < 0.0 || self.daily(t).1 < 0.0) {
            return Err(Error::Invalid("negative increments need allow_negative".into()));
        }
        Ok(())
    }

    fn daily(&self, t: usize) -> (f64, f64) {
        match &self.schedule {
            Some(s) => s[t],
            None => (self.protein_kcal_per_day, self.nonprotein_kcal_per_day),
        }
    }

    /// Period totals `(protein, nonprotein)` in kcal for period `t` (0-based).
    pub fn period_increment(&self, t: usize) -> (f64, f64) {
        let (p, n) = self.daily(t);
        let d = self.days_per_period as f64;
        (p * d, n * d)
    }

    pub fn scaled(&self, a: f64) -> Self {
        let mut s = self.clone();
        s.protein_kcal_per_day *= a;
        s.nonprotein_kcal_per_day *= a;
        if let Some(sch) = &mut s.schedule {
            for x in sch.iter_mut() {
                *x = (x.0 * a, x.1 * a);
            }
        }
        s.allow_negative |= a < 0.0;
        s
    }
}

/// Baseline inputs and starting anthropometrics; `*_other` hold every remaining
/// term of each equation (intercept and controls) per period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    pub height0_cm: f64,
    pub weight0_g: f64,
    pub protein_kcal: Vec<f64>,
    pub nonprotein_kcal: Vec<f64>,
    pub height_other: Vec<f64>,
    pub weight_other: Vec<f64>,
}

impl Baseline {
    pub fn periods(&self) -> usize {
        [
            self.protein_kcal.len(),
            self.nonprotein_kcal.len(),
            self.height_other.len(),
            self.weight_other.len(),
        ]
        .into_iter()
        .min()
        .unwrap_or(0)
    }

    /// Constant-input baseline over `n` periods.
    pub fn constant(height0_cm: f64, weight0_g: f64, protein_kcal: f64, nonprotein_kcal: f64, n: usize) -> Self {
        Baseline {
            height0_cm,
            weight0_g,
            protein_kcal: vec![protein_kcal; n],
            nonprotein_kcal: vec![nonprotein_kcal; n],
            height_other: vec![0.0; n],
            weight_other: vec![0.0; n],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeriodDelta {
    pub period: usize,
    pub delta_growth_height_cm: f64,
    pub delta_growth_weight_g: f64,
    pub cumulative_height_cm: f64,
    pub cumulative_weight_g: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryDelta {
    pub periods: Vec<PeriodDelta>,
}

impl TrajectoryDelta {
    pub fn total_height_cm(&self) -> f64 {
        self.periods.last().map_or(0.0, |p| p.cumulative_height_cm)
    }
    pub fn total_weight_g(&self) -> f64 {
        self.periods.last().map_or(0.0, |p| p.cumulative_weight_g)
    }
}

/// Levels `(height, weight)` at the end of each period from iterating both equations.
pub fn forward_pass(
    height: &GrowthEquation,
    weight: &GrowthEquation,
    baseline: &Baseline,
    increments: &[(f64, f64)],
    cross_feedback: bool,
) -> Vec<(f64, f64)> {
    let cross = if cross_feedback { 1.0 } else { 0.0 };
    let (mut h, mut w) = (baseline.height0_cm, baseline.weight0_g);
    let mut out = Vec::with_capacity(increments.len());
    for (t, &(dp, dn)) in increments.iter().enumerate() {
        let p = baseline.protein_kcal[t] + dp;
        let n = baseline.nonprotein_kcal[t] + dn;
        let gh = height.protein * p + height.nonprotein * n + cross * height.lag_weight * w
            + height.lag_height * h
            + baseline.height_other[t];
        let gw = weight.protein * p + weight.nonprotein * n + weight.lag_weight * w
            + cross * weight.lag_height * h
            + baseline.weight_other[t];
        h += gh;
        w += gw;
        out.push((h, w));
    }
    out
}

/// Difference between the intervention and baseline trajectories.
///
/// Both equations are linear, so the difference obeys the same recursion driven
/// by the increments alone; it is evaluated directly to avoid cancellation
/// between two large weight levels. `cross_feedback = false` drops the lagged
/// weight term of the height equation and the lagged height term of the weight equation.
pub fn simulate_intervention(
    height: &GrowthEquation,
    weight: &GrowthEquation,
    baseline: &Baseline,
    scenario: &InterventionScenario,
    cross_feedback: bool,
) -> Result<TrajectoryDelta> {
    scenario.validate()?;
    if scenario.n_periods > baseline.periods() {
        return Err(Error::Invalid(format!(
            "scenario spans {} periods but the baseline has {}",
            scenario.n_periods,
            baseline.periods()
        )));
    }
    let cross = if cross_feedback { 1.0 } else { 0.0 };
    let (mut dh, mut dw) = (0.0, 0.0);
    let mut periods = Vec::with_capacity(scenario.n_periods);
    for t in 0..scenario.n_periods {
        let (ip, inp) = scenario.period_increment(t);
        let gh = height.protein * ip + height.nonprotein * inp + cross * height.lag_weight * dw + height.lag_height * dh;
        let gw = weight.protein * ip + weight.nonprotein * inp + weight.lag_weight * dw + cross * weight.lag_height * dh;
        dh += gh;
        dw += gw;
        periods.push(PeriodDelta {
            period: t + 1,
            delta_growth_height_cm: gh,
            delta_growth_weight_g: gw,
            cumulative_height_cm: dh,
            cumulative_weight_g: dw,
        });
    }
    Ok(TrajectoryDelta { periods })
}
