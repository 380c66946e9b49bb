use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::intake::{age_month, aggregate_intakes, child_ranges};
use super::panel::ChildObservation;
use super::prices::PriceTable;
use crate::domain::Country;
use crate::error::{Error, Result};

pub const GUATEMALA_PRICE_ITEMS: [&str; 7] = ["eggs", "chicken", "pork", "beef", "rice", "beans", "corn"];
pub const PHILIPPINES_PRICE_ITEMS: [&str; 4] = ["eggs", "dried_fish", "tomatoes", "corn"];

/// Candidate excluded instruments of a country, in canonical order:
/// design instruments, second lags, then prices.
pub fn instrument_catalog(country: Country) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    match country {
        Country::Guatemala => {
            out.extend(["atole", "atole_x_distance", "lag2_weight", "lag2_height"].map(String::from));
            out.extend(GUATEMALA_PRICE_ITEMS.iter().map(|i| format!("p_{i}_lag")));
        }
        Country::Philippines => {
            out.extend(["lag2_weight", "lag2_height"].map(String::from));
            out.extend(PHILIPPINES_PRICE_ITEMS.iter().map(|i| format!("p_{i}")));
            out.extend(PHILIPPINES_PRICE_ITEMS.iter().map(|i| format!("p_{i}_lag")));
        }
    }
    out
}

/// Exogenous controls of a country in column order.
pub fn control_names(country: Country) -> Vec<String> {
    let mut v: Vec<String> = ["const", "days_no_diar", "bf", "age", "age2", "female", "gap_msmt"]
        .map(String::from)
        .to_vec();
    if country == Country::Philippines {
        v.push("season".into());
    }
    v
}

/// How days with diarrhea over a growth period are obtained.
#[derive(Debug, Clone, Default)]
pub enum DiarrheaSource {
    /// Scale the reported recall windows of the period-end row to the period length.
    #[default]
    ScaleReported,
    /// Predicted days keyed by `(child_id, age_days)` of the period-end measurement.
    Predicted(BTreeMap<(String, i64), f64>),
}

#[derive(Debug, Clone)]
pub struct BuildOptions {
    /// Calendar month of birth assumed for every child (the panel has birth year only).
    pub birth_month: u32,
    /// Calendar months flagged by the seasonal dummy.
    pub season_months: Vec<u32>,
    /// Inclusive analysis band in age-months.
    pub band_months: (i64, i64),
    /// Offset of the lagged community price, in months.
    pub lag_months: i64,
    pub diarrhea: DiarrheaSource,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions {
            birth_month: 1,
            season_months: (6..=11).collect(),
            band_months: (6, 24),
            lag_months: 2,
            diarrhea: DiarrheaSource::ScaleReported,
        }
    }
}

/// One differenced regression row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthObservation {
    pub child_id: String,
    pub community_id: String,
    /// 1-based index of the period within the child's band.
    pub period_index: usize,
    pub delta_height_cm: f64,
    pub delta_weight_g: f64,
    pub energy_period_kcal: f64,
    pub protein_period_kcal: f64,
    pub nonprotein_period_kcal: f64,
    pub lag_height_cm: f64,
    pub lag_weight_g: f64,
    pub lag2_height_cm: Option<f64>,
    pub lag2_weight_g: Option<f64>,
    pub days_no_diar: f64,
    pub days_with_diar: f64,
    pub bf: f64,
    pub age_days: f64,
    pub female: f64,
    pub gap_msmt: f64,
    pub season: Option<f64>,
    /// Excluded-instrument values; `None` marks a missing value for this row.
    pub instruments: BTreeMap<String, Option<f64>>,
}

impl GrowthObservation {
    /// Any modelling variable by name: outcomes, regressors, controls or instruments.
    pub fn value(&self, name: &str) -> Option<f64> {
        match name {
            "delta_height" => Some(self.delta_height_cm),
            "delta_weight" => Some(self.delta_weight_g),
            "energy" => Some(self.energy_period_kcal),
            "protein" => Some(self.protein_period_kcal),
            "nonprotein" => Some(self.nonprotein_period_kcal),
            "lag_height" => Some(self.lag_height_cm),
            "lag_weight" => Some(self.lag_weight_g),
            "const" => Some(1.0),
            "days_no_diar" => Some(self.days_no_diar),
            "bf" => Some(self.bf),
            "age" => Some(self.age_days),
            "age2" => Some(self.age_days * self.age_days),
            "female" => Some(self.female),
            "gap_msmt" => Some(self.gap_msmt),
            "season" => self.season,
            other => self.instruments.get(other).copied().flatten(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Exclusion {
    pub child_id: String,
    pub age_days: i64,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct BuildReport {
    pub rows: Vec<GrowthObservation>,
    pub excluded: Vec<Exclusion>,
}

/// Month index (`year * 12 + month - 1`) of a measurement.
pub fn calendar_month(birth_year: i32, birth_month: u32, age_days: i64) -> i64 {
    birth_year as i64 * 12 + birth_month as i64 - 1 + age_month(age_days)
}

/// Days with diarrhea over a period: the pooled daily rate over the observed
/// `(days, window_length)` recall windows times the gap, clamped to `[0, gap]`.
pub fn scale_diarrhea(windows: &[(f64, f64)], gap_days: f64) -> Option<f64> {
    let days: f64 = windows.iter().map(|w| w.0).sum();
    let len: f64 = windows.iter().map(|w| w.1).sum();
    if windows.is_empty() || !(len > 0.0) {
        return None;
    }
    Some((days / len * gap_days).clamp(0.0, gap_days))
}

fn price_instruments(
    country: Country,
    end: &ChildObservation,
    prices: &PriceTable,
    opts: &BuildOptions,
) -> Vec<(String, Option<f64>)> {
    let month = calendar_month(end.birth_year, opts.birth_month, end.age_days);
    match country {
        Country::Guatemala => {
            let year = month.div_euclid(12) as i32;
            GUATEMALA_PRICE_ITEMS
                .iter()
                .map(|item| (format!("p_{item}_lag"), prices.national_real(item, year - 1)))
                .collect()
        }
        Country::Philippines => PHILIPPINES_PRICE_ITEMS
            .iter()
            .map(|item| (format!("p_{item}"), prices.get(item, &end.community_id, month)))
            .chain(PHILIPPINES_PRICE_ITEMS.iter().map(|item| {
                (
                    format!("p_{item}_lag"),
                    prices.get(item, &end.community_id, month - opts.lag_months),
                )
            }))
            .collect(),
    }
}

/// Differenced rows for every consecutive pair of measurements inside the age band.
///
/// The panel must be imputed already. Rows whose endpoint intakes or diarrhea
/// information are missing are excluded and listed in the report.
pub fn build_growth_observations(
    panel: &[ChildObservation],
    prices: &PriceTable,
    country: Country,
    opts: &BuildOptions,
) -> Result<BuildReport> {
    if !(1..=12).contains(&opts.birth_month) {
        return Err(Error::Invalid(format!("birth month {} out of range", opts.birth_month)));
    }
    let mut sorted = panel.to_vec();
    sorted.sort_by(|a, b| (&a.child_id, a.age_days).cmp(&(&b.child_id, b.age_days)));
    let mut report = BuildReport::default();
    let (lo, hi) = opts.band_months;
    for (s, e) in child_ranges(&sorted) {
        let rows = &sorted[s..e];
        let mut period = 0;
        for t in 1..rows.len() {
            let (prev, cur) = (&rows[t - 1], &rows[t]);
            let in_band = |o: &ChildObservation| (lo..=hi).contains(&age_month(o.age_days));
            if !(in_band(prev) && in_band(cur)) {
                continue;
            }
            period += 1;
            let exclude = |reason: &str| Exclusion {
                child_id: cur.child_id.clone(),
                age_days: cur.age_days,
                reason: reason.to_string(),
            };
            let gap = (cur.age_days - prev.age_days) as f64;
            let intakes = match (
                prev.protein_kcal_day,
                prev.nonprotein_kcal_day,
                cur.protein_kcal_day,
                cur.nonprotein_kcal_day,
            ) {
                (Some(a), Some(b), Some(c), Some(d)) => aggregate_intakes(
                    (a, b),
                    (c, d),
                    gap,
                    (cur.supplement_protein_kcal, cur.supplement_nonprotein_kcal),
                )?,
                _ => {
                    report.excluded.push(exclude("missing endpoint intake after imputation"));
                    continue;
                }
            };
            let days_with = match &opts.diarrhea {
                DiarrheaSource::ScaleReported => cur
                    .diarrhea_days_reported
                    .and_then(|d| scale_diarrhea(&[(d, cur.reporting_window_days as f64)], gap)),
                DiarrheaSource::Predicted(map) => map
                    .get(&(cur.child_id.clone(), cur.age_days))
                    .map(|d| d.clamp(0.0, gap)),
            };
            let Some(days_with) = days_with else {
                report.excluded.push(exclude("no diarrhea information for the period"));
                continue;
            };
            let lag2 = (t >= 2).then(|| &rows[t - 2]);
            let mut instruments = BTreeMap::new();
            if country == Country::Guatemala {
                let atole = if cur.atole_village { 1.0 } else { 0.0 };
                instruments.insert("atole".to_string(), Some(atole));
                instruments.insert(
                    "atole_x_distance".to_string(),
                    cur.distance_to_center.map(|d| atole * d),
                );
            }
            instruments.insert("lag2_height".to_string(), lag2.map(|o| o.height_cm));
            instruments.insert("lag2_weight".to_string(), lag2.map(|o| o.weight_g));
            instruments.extend(price_instruments(country, cur, prices, opts));
            let month = calendar_month(cur.birth_year, opts.birth_month, cur.age_days);
            let calendar = (month.rem_euclid(12) + 1) as u32;
            report.rows.push(GrowthObservation {
                child_id: cur.child_id.clone(),
                community_id: cur.community_id.clone(),
                period_index: period,
                delta_height_cm: cur.height_cm - prev.height_cm,
                delta_weight_g: cur.weight_g - prev.weight_g,
                energy_period_kcal: intakes.0 + intakes.1,
                protein_period_kcal: intakes.0,
                nonprotein_period_kcal: intakes.1,
                lag_height_cm: prev.height_cm,
                lag_weight_g: prev.weight_g,
                lag2_height_cm: lag2.map(|o| o.height_cm),
                lag2_weight_g: lag2.map(|o| o.weight_g),
                days_no_diar: gap - days_with,
                days_with_diar: days_with,
                bf: if cur.breastfed_last_month { 1.0 } else { 0.0 },
                age_days: cur.age_days as f64,
                female: if cur.female { 1.0 } else { 0.0 },
                gap_msmt: gap,
                season: (country == Country::Philippines)
                    .then(|| if opts.season_months.contains(&calendar) { 1.0 } else { 0.0 }),
                instruments,
            });
        }
    }
    Ok(report)
}
