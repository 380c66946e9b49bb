//! Synthetic panels from the structural height/weight model.
//!
//! Levels follow `h_t = h0 + αμ + Σ_j γ^{t-j} β₀·x_j + ε^h_t` and the weight
//! analogue with σ and δ₀. Daily intakes are drawn at every measurement from a
//! price-driven rule with optional fixed-effect loading and a compensatory
//! response to the previous height shock; period inputs are then aggregated
//! exactly as the ingest pipeline does, so the differenced rows built from the
//! exported panel obey the implied growth equations.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Gamma, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::count_models::{window_label, CountDataset, FEMALE, RECALL_DAYS};
use crate::counterfactual::GrowthEquation;
use crate::domain::{Country, Model, Outcome};
use crate::error::{Error, Result};
use crate::estimators::{fit_liml, fit_ols};
use crate::ingest::{
    build_growth_observations, calendar_month, instrument_catalog, preprocess_prices, write_deflator, write_panel,
    write_quotes, BuildOptions, ChildObservation, GrowthObservation, IntakeFlag, PriceTable, RawQuote,
    GUATEMALA_PRICE_ITEMS, PHILIPPINES_PRICE_ITEMS,
};
use crate::sweep::design_for;

/// Daily intake rule, in kcal per day:
/// `a0 + Σ a_price[item]·(z_item / mean_item − 1) + a_mu·μ + a_comp·ε^h_{prev} + noise`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputRule {
    pub a0: f64,
    /// Response to the relative deviation of each price instrument from its mean.
    pub a_price: BTreeMap<String, f64>,
    pub a_mu: f64,
    /// Response to the previous measurement's height shock; negative is compensatory.
    pub a_comp: f64,
    pub noise_sd: f64,
    /// Classical noise added to the reported daily intake.
    pub meas_err_sd: f64,
}

/// Monthly log-AR(1) around `mean` (currency per 100 g, real terms).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceProcess {
    pub item: String,
    pub mean: f64,
    pub ar: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuralParams {
    pub country: Country,
    pub alpha: f64,
    pub sigma: f64,
    pub gamma: f64,
    /// cm per kcal.
    pub beta0_prot: f64,
    pub beta0_nonprot: f64,
    /// g per kcal; replaced by `((1+σ)/α)·β₀` when `strict_assumption2` is set.
    pub delta0_prot: f64,
    pub delta0_nonprot: f64,
    pub strict_assumption2: bool,
    pub height0_cm: f64,
    pub weight0_g: f64,
    pub mu_sd: f64,
    pub eps_h_sd: f64,
    pub eps_w_sd: f64,
    pub protein: InputRule,
    pub nonprotein: InputRule,
    pub prices: Vec<PriceProcess>,
    pub n_children: usize,
    /// Growth periods inside the analysis band; one earlier measurement supplies second lags.
    pub n_periods: usize,
    pub n_communities: usize,
    pub first_age_days: i64,
    pub spacing_days: i64,
    pub jitter_days: i64,
    pub birth_years: (i32, i32),
    /// Yearly inflation of the nominal Guatemala price series.
    pub inflation: f64,
    /// Probability that a reported intake is blanked.
    pub missing_intake_prob: f64,
    /// Daily supplement in atole villages at zero distance: (protein, nonprotein) kcal.
    pub atole_kcal_day: (f64, f64),
    /// Daily non-protein supplement in fresco villages.
    pub fresco_kcal_day: f64,
    /// Distance in km at which atole uptake falls by a factor e.
    pub atole_distance_decay_km: f64,
    pub mean_diarrhea_rate: f64,
    pub seed: u64,
}

fn rule(a0: f64, price: &[(&str, f64)], a_comp: f64, noise_sd: f64, meas_err_sd: f64) -> InputRule {
    InputRule {
        a0,
        a_price: price.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        a_mu: 0.0,
        a_comp,
        noise_sd,
        meas_err_sd,
    }
}

impl StructuralParams {
    /// Cebu-shaped defaults: community-month prices, two-month spacing, no supplements.
    pub fn philippines() -> Self {
        StructuralParams {
            country: Country::Philippines,
            alpha: 0.01,
            sigma: 1.5,
            gamma: 0.8,
            beta0_prot: 2e-4,
            beta0_nonprot: 2e-5,
            delta0_prot: 0.05,
            delta0_nonprot: 5e-3,
            strict_assumption2: true,
            height0_cm: 60.0,
            weight0_g: 6000.0,
            mu_sd: 300.0,
            eps_h_sd: 0.3,
            eps_w_sd: 100.0,
            protein: rule(60.0, &[("p_eggs", -20.0), ("p_dried_fish", -15.0)], -45.0, 10.0, 10.0),
            nonprotein: rule(500.0, &[("p_corn", -150.0), ("p_tomatoes", -60.0)], -100.0, 60.0, 60.0),
            prices: vec![
                PriceProcess { item: "eggs".into(), mean: 80.0, ar: 0.8, sd: 0.15 },
                PriceProcess { item: "dried_fish".into(), mean: 120.0, ar: 0.8, sd: 0.15 },
                PriceProcess { item: "tomatoes".into(), mean: 30.0, ar: 0.7, sd: 0.2 },
                PriceProcess { item: "corn".into(), mean: 15.0, ar: 0.8, sd: 0.15 },
            ],
            n_children: 2000,
            n_periods: 7,
            n_communities: 33,
            first_age_days: 122,
            spacing_days: 60,
            jitter_days: 3,
            birth_years: (1983, 1984),
            inflation: 0.0,
            missing_intake_prob: 0.0,
            atole_kcal_day: (0.0, 0.0),
            fresco_kcal_day: 0.0,
            atole_distance_decay_km: 1.0,
            mean_diarrhea_rate: 0.08,
            seed: 1,
        }
    }

    /// INCAP-shaped defaults: four villages, quarterly spacing, atole and
    /// fresco supplements, national annual prices with inflation.
    pub fn guatemala() -> Self {
        let items: Vec<PriceProcess> = GUATEMALA_PRICE_ITEMS
            .iter()
            .enumerate()
            .map(|(i, item)| PriceProcess { item: item.to_string(), mean: 20.0 + 10.0 * i as f64, ar: 0.95, sd: 0.08 })
            .collect();
        StructuralParams {
            country: Country::Guatemala,
            protein: rule(60.0, &[("p_eggs_lag", -20.0), ("p_beef_lag", -15.0), ("p_beans_lag", -10.0)], -45.0, 10.0, 10.0),
            nonprotein: rule(600.0, &[("p_corn_lag", -200.0), ("p_rice_lag", -80.0)], -100.0, 60.0, 60.0),
            prices: items,
            n_periods: 6,
            n_communities: 4,
            first_age_days: 91,
            spacing_days: 90,
            birth_years: (1969, 1977),
            inflation: 0.05,
            atole_kcal_day: (40.0, 60.0),
            fresco_kcal_day: 20.0,
            ..Self::philippines()
        }
    }

    pub fn for_country(country: Country) -> Self {
        match country {
            Country::Guatemala => Self::guatemala(),
            Country::Philippines => Self::philippines(),
        }
    }

    /// Switches off every source of endogeneity in the intake rules.
    pub fn without_endogeneity(mut self) -> Self {
        for r in [&mut self.protein, &mut self.nonprotein] {
            r.a_mu = 0.0;
            r.a_comp = 0.0;
            r.meas_err_sd = 0.0;
        }
        self
    }

    /// Effective current-input effects on weight.
    pub fn delta0(&self) -> (f64, f64) {
        if self.strict_assumption2 {
            let f = (1.0 + self.sigma) / self.alpha;
            (f * self.beta0_prot, f * self.beta0_nonprot)
        } else {
            (self.delta0_prot, self.delta0_nonprot)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let named = [
            ("alpha", self.alpha),
            ("sigma", self.sigma),
            ("gamma", self.gamma),
            ("beta0_prot", self.beta0_prot),
            ("beta0_nonprot", self.beta0_nonprot),
            ("delta0_prot", self.delta0_prot),
            ("delta0_nonprot", self.delta0_nonprot),
            ("height0_cm", self.height0_cm),
            ("weight0_g", self.weight0_g),
            ("mu_sd", self.mu_sd),
            ("eps_h_sd", self.eps_h_sd),
            ("eps_w_sd", self.eps_w_sd),
            ("inflation", self.inflation),
        ];
        for (name, v) in named {
            if !v.is_finite() {
                return Err(Error::Invalid(format!("parameter `{name}` is not finite")));
            }
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Invalid(format!("gamma must lie in (0, 1), got {}", self.gamma)));
        }
        if self.alpha == 0.0 {
            return Err(Error::Invalid("alpha must be nonzero".into()));
        }
        for (name, v) in [("mu_sd", self.mu_sd), ("eps_h_sd", self.eps_h_sd), ("eps_w_sd", self.eps_w_sd)] {
            if v < 0.0 {
                return Err(Error::Invalid(format!("`{name}` must be non-negative")));
            }
        }
        for (which, r) in [("protein", &self.protein), ("nonprotein", &self.nonprotein)] {
            let vals = [r.a0, r.a_mu, r.a_comp, r.noise_sd, r.meas_err_sd];
            if vals.iter().chain(r.a_price.values()).any(|v| !v.is_finite()) || r.noise_sd < 0.0 || r.meas_err_sd < 0.0 {
                return Err(Error::Invalid(format!("invalid `{which}` intake rule")));
            }
            let catalog = instrument_catalog(self.country);
            if let Some(k) = r.a_price.keys().find(|k| !catalog.contains(k)) {
                return Err(Error::Invalid(format!("`{which}` rule refers to unknown instrument `{k}`")));
            }
        }
        for p in &self.prices {
            if !(p.mean > 0.0 && p.ar.abs() < 1.0 && p.sd >= 0.0) {
                return Err(Error::Invalid(format!("invalid price process for `{}`", p.item)));
            }
        }
        if self.n_children < 2 || self.n_periods == 0 || self.n_communities == 0 {
            return Err(Error::Invalid("need at least 2 children, 1 period and 1 community".into()));
        }
        if self.spacing_days <= 2 * self.jitter_days || self.jitter_days < 0 {
            return Err(Error::Invalid("spacing must exceed twice the jitter".into()));
        }
        if self.birth_years.0 > self.birth_years.1 {
            return Err(Error::Invalid("empty birth-year range".into()));
        }
        if !(0.0..1.0).contains(&self.missing_intake_prob) || !(0.0..1.0).contains(&self.mean_diarrhea_rate) {
            return Err(Error::Invalid("probabilities must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Geometric input weights `β₀·γ^j`, j = 0..n.
pub fn input_weights(beta0: f64, gamma: f64, n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    let mut w = beta0;
    for _ in 0..n {
        out.push(w);
        w *= gamma;
    }
    out
}

/// Weight-equation input weights: the height weights scaled by `(1+σ)/α`
/// under the proportionality restriction, otherwise geometric in δ₀.
pub fn weight_input_weights(params: &StructuralParams, n: usize) -> (Vec<f64>, Vec<f64>) {
    if params.strict_assumption2 {
        let f = (1.0 + params.sigma) / params.alpha;
        let scale = |v: Vec<f64>| v.into_iter().map(|b| f * b).collect();
        (
            scale(input_weights(params.beta0_prot, params.gamma, n)),
            scale(input_weights(params.beta0_nonprot, params.gamma, n)),
        )
    } else {
        (
            input_weights(params.delta0_prot, params.gamma, n),
            input_weights(params.delta0_nonprot, params.gamma, n),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImpliedCoefficients {
    pub height: GrowthEquation,
    pub weight: GrowthEquation,
}

impl ImpliedCoefficients {
    pub fn equation(&self, outcome: Outcome) -> &GrowthEquation {
        match outcome {
            Outcome::Height => &self.height,
            Outcome::Weight => &self.weight,
        }
    }
}

/// Coefficients of the differenced height and weight equations implied by the
/// structural parameters. No validation, so the static case γ = 1 is allowed.
pub fn implied_growth_coefficients(params: &StructuralParams) -> ImpliedCoefficients {
    let (a, s, g) = (params.alpha, params.sigma, params.gamma);
    let (d_prot, d_non) = params.delta0();
    ImpliedCoefficients {
        height: GrowthEquation {
            protein: params.beta0_prot,
            nonprotein: params.beta0_nonprot,
            lag_weight: a * (g - 1.0),
            lag_height: -s * (g - 1.0),
        },
        weight: GrowthEquation {
            protein: d_prot,
            nonprotein: d_non,
            lag_weight: (g - 1.0) * (1.0 + s),
            lag_height: -s * (g - 1.0) * (1.0 + s) / a,
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementTruth {
    pub age_days: i64,
    pub eps_h: f64,
    pub eps_w: f64,
    /// True daily intakes at the measurement.
    pub protein_kcal_day: f64,
    pub nonprotein_kcal_day: f64,
    /// True period inputs ending at this measurement, supplements included.
    pub protein_period_kcal: f64,
    pub nonprotein_period_kcal: f64,
    pub height_cm: f64,
    pub weight_g: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChildTruth {
    pub child_id: String,
    pub mu: f64,
    pub measurements: Vec<MeasurementTruth>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub params: StructuralParams,
    pub implied: ImpliedCoefficients,
    pub children: Vec<ChildTruth>,
}

#[derive(Debug, Clone)]
pub struct SyntheticPanel {
    pub country: Country,
    pub panel: Vec<ChildObservation>,
    pub quotes: Vec<RawQuote>,
    pub deflator: BTreeMap<i32, f64>,
    pub truth: Truth,
}

impl SyntheticPanel {
    pub fn price_table(&self) -> Result<PriceTable> {
        let pre = preprocess_prices(&self.quotes)?;
        Ok(PriceTable::new(&pre.series, self.deflator.clone()))
    }

    /// Differenced rows built through the ingest pipeline with default options.
    pub fn growth_rows(&self) -> Result<Vec<GrowthObservation>> {
        let table = self.price_table()?;
        Ok(build_growth_observations(&self.panel, &table, self.country, &BuildOptions::default())?.rows)
    }

    /// Writes `panel.csv`, `prices.csv`, `deflator.csv` and `truth.json` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_panel(dir.join("panel.csv"), &self.panel)?;
        write_quotes(dir.join("prices.csv"), &self.quotes)?;
        write_deflator(dir.join("deflator.csv"), &self.deflator)?;
        let truth = serde_json::to_string_pretty(&self.truth)?;
        let p = dir.join("truth.json");
        std::fs::write(&p, truth).map_err(|e| Error::io(&p, e))?;
        Ok(())
    }
}

fn normal(sd: f64) -> Normal<f64> {
    Normal::new(0.0, sd).expect("validated standard deviation")
}

fn generate_prices(params: &StructuralParams, rng: &mut ChaCha8Rng) -> (Vec<RawQuote>, BTreeMap<i32, f64>) {
    let scopes: Vec<String> = match params.country {
        Country::Guatemala => vec![crate::ingest::NATIONAL.to_string()],
        Country::Philippines => (0..params.n_communities).map(community_id).collect(),
    };
    // a year of history before the first birth cohort feeds the lagged annual prices
    let (y0, y1) = (params.birth_years.0 - 1, params.birth_years.1 + 3);
    let deflator: BTreeMap<i32, f64> = match params.country {
        Country::Guatemala => (y0..=y1).map(|y| (y, (1.0 + params.inflation).powi(y - y0))).collect(),
        Country::Philippines => BTreeMap::new(),
    };
    let mut quotes = Vec::new();
    for p in &params.prices {
        let stationary = p.sd / (1.0 - p.ar * p.ar).sqrt();
        for scope in &scopes {
            let mut dev = normal(stationary).sample(rng);
            for year in y0..=y1 {
                for month in 1..=12u32 {
                    let real = p.mean * dev.exp();
                    let price = real * deflator.get(&year).copied().unwrap_or(1.0);
                    quotes.push(RawQuote {
                        item: p.item.clone(),
                        scope: scope.clone(),
                        year,
                        month: Some(month),
                        price,
                        quantity: 100.0,
                        unit: "g".into(),
                        store: "s1".into(),
                    });
                    dev = p.ar * dev + normal(p.sd).sample(rng);
                }
            }
        }
    }
    (quotes, deflator)
}

fn community_id(c: usize) -> String {
    format!("c{c:02}")
}

/// Instrument values a measurement sees, keyed like the instrument catalog.
fn price_instruments_at(
    params: &StructuralParams,
    table: &PriceTable,
    community: &str,
    birth_year: i32,
    age_days: i64,
    opts: &BuildOptions,
) -> BTreeMap<String, f64> {
    let month = calendar_month(birth_year, opts.birth_month, age_days);
    let mut out = BTreeMap::new();
    match params.country {
        Country::Guatemala => {
            let year = month.div_euclid(12) as i32;
            for item in GUATEMALA_PRICE_ITEMS {
                if let Some(v) = table.national_real(item, year - 1) {
                    out.insert(format!("p_{item}_lag"), v);
                }
            }
        }
        Country::Philippines => {
            for item in PHILIPPINES_PRICE_ITEMS {
                if let Some(v) = table.get(item, community, month) {
                    out.insert(format!("p_{item}"), v);
                }
                if let Some(v) = table.get(item, community, month - opts.lag_months) {
                    out.insert(format!("p_{item}_lag"), v);
                }
            }
        }
    }
    out
}

fn price_mean(params: &StructuralParams, instrument: &str) -> f64 {
    let item = instrument.trim_start_matches("p_").trim_end_matches("_lag");
    params.prices.iter().find(|p| p.item == item).map_or(1.0, |p| p.mean)
}

fn daily_intake(
    r: &InputRule,
    params: &StructuralParams,
    z: &BTreeMap<String, f64>,
    mu: f64,
    eps_prev: f64,
    rng: &mut ChaCha8Rng,
) -> f64 {
    let mut d = r.a0 + r.a_mu * mu + r.a_comp * eps_prev + normal(r.noise_sd).sample(rng);
    for (k, a) in &r.a_price {
        if let Some(v) = z.get(k) {
            d += a * (v / price_mean(params, k) - 1.0);
        }
    }
    d.max(0.0)
}

fn generate_child(
    params: &StructuralParams,
    table: &PriceTable,
    index: usize,
    opts: &BuildOptions,
) -> (Vec<ChildObservation>, ChildTruth) {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    rng.set_stream(index as u64 + 1);
    let child_id = format!("k{index:05}");
    let community = index % params.n_communities;
    let community_key = community_id(community);
    let birth_year = rng.random_range(params.birth_years.0..=params.birth_years.1);
    let female = rng.random_bool(0.5);
    let birth_order = 1 + Poisson::new(1.5).unwrap().sample(&mut rng) as u32;
    let mu = normal(params.mu_sd).sample(&mut rng);
    let diar_rate = (params.mean_diarrhea_rate * normal(0.5).sample(&mut rng).exp()).min(0.9);
    let atole = params.country == Country::Guatemala && community % 2 == 0;
    let distance = (params.country == Country::Guatemala).then(|| rng.random_range(0.1..3.0));
    let window = params.country.diarrhea_window_days();
    let (d_prot_w, d_non_w) = params.delta0();

    let n_meas = params.n_periods + 2;
    let mut panel = Vec::with_capacity(n_meas);
    let mut truth = Vec::with_capacity(n_meas);
    let mut eps_prev = normal(params.eps_h_sd).sample(&mut rng);
    let (mut acc_h, mut acc_w) = (0.0, 0.0);
    let mut prev_daily = (0.0, 0.0);
    let mut prev_age = 0;
    for k in 0..n_meas {
        let jitter = if params.jitter_days > 0 { rng.random_range(-params.jitter_days..=params.jitter_days) } else { 0 };
        let age = params.first_age_days + k as i64 * params.spacing_days + jitter;
        let eps_h = normal(params.eps_h_sd).sample(&mut rng);
        let eps_w = normal(params.eps_w_sd).sample(&mut rng);
        let z = price_instruments_at(params, table, &community_key, birth_year, age, opts);
        let dp = daily_intake(&params.protein, params, &z, mu, eps_prev, &mut rng);
        let dn = daily_intake(&params.nonprotein, params, &z, mu, eps_prev, &mut rng);
        let gap = (age - prev_age) as f64;
        let supplement = if k == 0 {
            (0.0, 0.0)
        } else if atole {
            let uptake = (-distance.unwrap_or(0.0) / params.atole_distance_decay_km).exp() * rng.random_range(0.5..1.5);
            (params.atole_kcal_day.0 * uptake * gap, params.atole_kcal_day.1 * uptake * gap)
        } else if params.country == Country::Guatemala {
            (0.0, params.fresco_kcal_day * rng.random_range(0.5..1.5) * gap)
        } else {
            (0.0, 0.0)
        };
        let (xp, xn) = if k == 0 {
            (0.0, 0.0)
        } else {
            (
                0.5 * (prev_daily.0 + dp) * gap + supplement.0,
                0.5 * (prev_daily.1 + dn) * gap + supplement.1,
            )
        };
        acc_h = params.gamma * acc_h + params.beta0_prot * xp + params.beta0_nonprot * xn;
        acc_w = params.gamma * acc_w + d_prot_w * xp + d_non_w * xn;
        let h = params.height0_cm + params.alpha * mu + acc_h + eps_h;
        let w = params.weight0_g + params.sigma * mu + acc_w + eps_w;

        let report = |d: f64, sd: f64, rng: &mut ChaCha8Rng| {
            let v = (d + normal(sd).sample(rng)).max(0.0);
            (!rng.random_bool(params.missing_intake_prob)).then_some(v)
        };
        let rp = report(dp, params.protein.meas_err_sd, &mut rng);
        let rn = report(dn, params.nonprotein.meas_err_sd, &mut rng);
        let intake_flag = if rp.is_some() && rn.is_some() { IntakeFlag::Observed } else { IntakeFlag::Missing };
        let age_months = age as f64 / 30.4375;
        let bf = rng.random_bool((0.95 - 0.03 * age_months).clamp(0.05, 0.95));
        let diar = Binomial::new(window as u64, diar_rate).unwrap().sample(&mut rng) as f64;
        panel.push(ChildObservation {
            child_id: child_id.clone(),
            community_id: community_key.clone(),
            age_days: age,
            height_cm: h,
            weight_g: w,
            protein_kcal_day: rp,
            nonprotein_kcal_day: rn,
            supplement_protein_kcal: supplement.0,
            supplement_nonprotein_kcal: supplement.1,
            breastfed_last_month: bf,
            diarrhea_days_reported: Some(diar),
            reporting_window_days: window,
            female,
            birth_order,
            birth_year,
            atole_village: atole,
            distance_to_center: distance,
            intake_flag,
        });
        truth.push(MeasurementTruth {
            age_days: age,
            eps_h,
            eps_w,
            protein_kcal_day: dp,
            nonprotein_kcal_day: dn,
            protein_period_kcal: xp,
            nonprotein_period_kcal: xn,
            height_cm: h,
            weight_g: w,
        });
        eps_prev = eps_h;
        prev_daily = (dp, dn);
        prev_age = age;
    }
    (panel, ChildTruth { child_id, mu, measurements: truth })
}

fn first_non_finite(params: &StructuralParams, children: &[ChildTruth]) -> Option<&'static str> {
    let bad = children.iter().flat_map(|c| &c.measurements).find(|m| {
        ![m.height_cm, m.weight_g, m.protein_period_kcal, m.nonprotein_period_kcal]
            .iter()
            .all(|v| v.is_finite())
    })?;
    // blame the largest contributor to the broken level
    let h_bad = !bad.height_cm.is_finite();
    let cands: Vec<(&'static str, f64)> = if h_bad {
        vec![("beta0_prot", params.beta0_prot), ("beta0_nonprot", params.beta0_nonprot), ("alpha", params.alpha), ("mu_sd", params.mu_sd)]
    } else {
        let (dp, dn) = params.delta0();
        vec![("delta0_prot", dp), ("delta0_nonprot", dn), ("sigma", params.sigma), ("mu_sd", params.mu_sd)]
    };
    cands.into_iter().max_by(|a, b| a.1.abs().total_cmp(&b.1.abs())).map(|c| c.0)
}

/// Deterministic under `params.seed` for any thread count: prices use stream 0
/// and child `i` uses stream `i + 1`.
pub fn generate_panel(params: &StructuralParams) -> Result<SyntheticPanel> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let (quotes, deflator) = generate_prices(params, &mut rng);
    let pre = preprocess_prices(&quotes)?;
    let table = PriceTable::new(&pre.series, deflator.clone());
    let opts = BuildOptions::default();
    let children: Vec<(Vec<ChildObservation>, ChildTruth)> = (0..params.n_children)
        .into_par_iter()
        .map(|i| generate_child(params, &table, i, &opts))
        .collect();
    let (panels, truths): (Vec<_>, Vec<_>) = children.into_iter().unzip();
    if let Some(name) = first_non_finite(params, &truths) {
        return Err(Error::Numerical(format!("non-finite trajectory; check parameter `{name}`")));
    }
    Ok(SyntheticPanel {
        country: params.country,
        panel: panels.into_iter().flatten().collect(),
        quotes,
        deflator,
        truth: Truth {
            params: params.clone(),
            implied: implied_growth_coefficients(params),
            children: truths,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasRow {
    pub estimator: String,
    pub outcome: Outcome,
    pub coefficient: String,
    pub truth: f64,
    pub estimate: f64,
    pub se: f64,
    pub bias: f64,
}

/// Rows with the lagged levels replaced by their noise-free values `h − ε^h`
/// and `w − ε^w`; only possible because the shocks are known.
pub fn exact_lag_rows(panel: &SyntheticPanel, rows: &[GrowthObservation]) -> Vec<GrowthObservation> {
    let shocks: BTreeMap<(&str, i64), (f64, f64)> = panel
        .truth
        .children
        .iter()
        .flat_map(|c| {
            c.measurements.windows(2).map(move |w| {
                ((c.child_id.as_str(), w[1].age_days), (w[0].eps_h, w[0].eps_w))
            })
        })
        .collect();
    rows.iter()
        .map(|r| {
            let mut r = r.clone();
            let (eh, ew) = shocks[&(r.child_id.as_str(), r.age_days as i64)];
            r.lag_height_cm -= eh;
            r.lag_weight_g -= ew;
            r
        })
        .collect()
}

/// OLS, LIML (full instrument catalog) and an infeasible OLS on exact lags
/// (`ols_exact_lags`) for both growth equations of the protein-split model,
/// with signed biases against the implied coefficients.
///
/// Feasible OLS stays biased even without intake endogeneity because the
/// lagged levels contain the previous shock, which the differenced error
/// also carries.
pub fn oracle_bias_report(panel: &SyntheticPanel, params: &StructuralParams) -> Result<Vec<BiasRow>> {
    let rows = panel.growth_rows()?;
    let exact = exact_lag_rows(panel, &rows);
    let implied = implied_growth_coefficients(params);
    let instruments = instrument_catalog(panel.country);
    let mut out = Vec::new();
    for outcome in [Outcome::Height, Outcome::Weight] {
        let (d, _) = design_for(&rows, panel.country, Model::ProteinSplit, outcome, &instruments)?;
        let (d_exact, _) = design_for(&exact, panel.country, Model::ProteinSplit, outcome, &[])?;
        let eq = implied.equation(outcome);
        let truth = [
            ("protein", eq.protein),
            ("nonprotein", eq.nonprotein),
            ("lag_weight", eq.lag_weight),
            ("lag_height", eq.lag_height),
        ];
        for (label, fit) in [("ols", fit_ols(&d)?), ("liml", fit_liml(&d)?), ("ols_exact_lags", fit_ols(&d_exact)?)] {
            for (name, t) in truth {
                let b = fit.coef_of(name).expect("endogenous regressor present");
                out.push(BiasRow {
                    estimator: label.to_string(),
                    outcome,
                    coefficient: name.to_string(),
                    truth: t,
                    estimate: b,
                    se: fit.se_of(name).unwrap_or(f64::NAN),
                    bias: b - t,
                });
            }
        }
    }
    Ok(out)
}

/// Guatemala-shaped diarrhea count windows (0-2 … 22-24 months): days with
/// diarrhea per two-month window against the 15-day recall count and sex.
pub fn generate_count_windows(n_children: usize, seed: u64) -> Result<Vec<CountDataset>> {
    if n_children < 10 {
        return Err(Error::Invalid("need at least 10 children for count windows".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kids: Vec<(f64, bool)> = (0..n_children)
        .map(|_| (0.04 * normal(0.6).sample(&mut rng).exp(), rng.random_bool(0.5)))
        .collect();
    let names = vec![RECALL_DAYS.to_string(), FEMALE.to_string()];
    (0..12u32)
        .map(|w| {
            // diarrhea peaks around weaning
            let age_mid = 2.0 * w as f64 + 1.0;
            let age_factor = 0.4 + (-(age_mid - 12.0).powi(2) / 50.0).exp();
            let mut y = Vec::with_capacity(n_children);
            let mut rows = Vec::with_capacity(n_children);
            for &(rate, female) in &kids {
                let r = (rate * age_factor).min(0.9);
                let recall = Binomial::new(15, r).unwrap().sample(&mut rng) as f64;
                let mean = 61.0 * r * if female { 0.9 } else { 1.0 };
                let lam = Gamma::new(2.0, mean / 2.0).unwrap().sample(&mut rng);
                let days = if lam > 0.0 { Poisson::new(lam).unwrap().sample(&mut rng).min(61.0) } else { 0.0 };
                y.push(days as u32);
                rows.push(vec![recall, if female { 1.0 } else { 0.0 }]);
            }
            CountDataset::with_intercept(y, &rows, &names, window_label(2 * w), Some(61))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::DesignMatrices;
    use nalgebra::{DMatrix, DVector};

    fn small(country: Country, seed: u64) -> StructuralParams {
        StructuralParams { n_children: 300, seed, ..StructuralParams::for_country(country) }
    }

    #[test]
    fn geometric_weights() {
        let w = input_weights(1.0, 0.8, 4);
        assert_eq!(w, vec![1.0, 0.8, 0.8 * 0.8, 0.8 * 0.8 * 0.8]);
    }

    #[test]
    fn implied_coefficients_arithmetic() {
        let mut p = StructuralParams::philippines();
        p.alpha = 1.0;
        p.sigma = 1.0;
        p.gamma = 1.0;
        let c = implied_growth_coefficients(&p);
        for v in [c.height.lag_weight, c.height.lag_height, c.weight.lag_weight, c.weight.lag_height] {
            assert_eq!(v, 0.0);
        }
        p.alpha = 2.0;
        p.sigma = 0.5;
        p.gamma = 0.8;
        let c = implied_growth_coefficients(&p);
        assert!((c.height.lag_weight + 0.4).abs() < 1e-15);
    }

    #[test]
    fn proportional_weight_effects() {
        let p = StructuralParams::philippines();
        let (wp, _) = weight_input_weights(&p, 6);
        let f = (1.0 + p.sigma) / p.alpha;
        for (a, b) in wp.iter().zip(input_weights(p.beta0_prot, p.gamma, 6)) {
            assert_eq!(*a, f * b);
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let p = small(Country::Philippines, 7);
        let a = generate_panel(&p).unwrap();
        let b = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(|| generate_panel(&p).unwrap());
        assert_eq!(a.panel, b.panel);
        assert_eq!(a.quotes, b.quotes);
        let c = generate_panel(&small(Country::Philippines, 8)).unwrap();
        assert_ne!(a.panel, c.panel);
    }

    #[test]
    fn invalid_params_rejected() {
        let mut p = StructuralParams::philippines();
        p.gamma = 1.2;
        assert!(generate_panel(&p).is_err());
        let mut p = StructuralParams::philippines();
        p.beta0_prot = f64::NAN;
        let e = generate_panel(&p).unwrap_err().to_string();
        assert!(e.contains("beta0_prot"), "{e}");
    }

    #[test]
    fn overflow_names_a_parameter() {
        let mut p = small(Country::Philippines, 1);
        p.strict_assumption2 = false;
        p.beta0_prot = 1e306;
        let e = generate_panel(&p).unwrap_err().to_string();
        assert!(e.contains("beta0_prot"), "{e}");
    }

    #[test]
    fn pipeline_rows_match_truth() {
        let p = small(Country::Guatemala, 3);
        let s = generate_panel(&p).unwrap();
        let rows = s.growth_rows().unwrap();
        assert_eq!(rows.len(), p.n_children * p.n_periods);
        // reported intakes differ from truth only by the measurement noise
        let exact = generate_panel(&StructuralParams { seed: 3, ..small(Country::Guatemala, 3) }.without_endogeneity()).unwrap();
        let rows = exact.growth_rows().unwrap();
        let truth: BTreeMap<(&str, i64), &MeasurementTruth> = exact
            .truth
            .children
            .iter()
            .flat_map(|c| c.measurements.iter().map(move |m| ((c.child_id.as_str(), m.age_days), m)))
            .collect();
        for r in &rows {
            let m = truth[&(r.child_id.as_str(), r.age_days as i64)];
            assert!((r.protein_period_kcal - m.protein_period_kcal).abs() < 1e-9 * m.protein_period_kcal.max(1.0));
            assert!((r.nonprotein_period_kcal - m.nonprotein_period_kcal).abs() < 1e-9 * m.nonprotein_period_kcal.max(1.0));
        }
    }

    /// Δh on true inputs and noise-free lagged levels has error ε_t − ε_{t−1},
    /// orthogonal to every regressor once the intake rule ignores shocks.
    #[test]
    fn infeasible_regression_recovers_implied_coefficients() {
        let p = StructuralParams { n_children: 2000, seed: 21, ..StructuralParams::philippines().without_endogeneity() };
        let s = generate_panel(&p).unwrap();
        let imp = implied_growth_coefficients(&p);
        let mut y_h = Vec::new();
        let mut y_w = Vec::new();
        let mut x = Vec::new();
        let mut keys = Vec::new();
        for c in &s.truth.children {
            for t in 1..c.measurements.len() {
                let (a, b) = (&c.measurements[t - 1], &c.measurements[t]);
                y_h.push(b.height_cm - a.height_cm);
                y_w.push(b.weight_g - a.weight_g);
                x.push([b.protein_period_kcal, b.nonprotein_period_kcal, a.weight_g - a.eps_w, a.height_cm - a.eps_h]);
                keys.push(c.child_id.clone());
            }
        }
        let n = x.len();
        let xe = DMatrix::from_fn(n, 4, |i, j| x[i][j]);
        let names: Vec<String> = ["protein", "nonprotein", "lag_weight", "lag_height"].map(String::from).to_vec();
        for (y, eq) in [(y_h, imp.height), (y_w, imp.weight)] {
            let d = DesignMatrices::new(
                DVector::from_vec(y),
                xe.clone(),
                names.clone(),
                DMatrix::from_element(n, 1, 1.0),
                vec!["const".into()],
                DMatrix::zeros(n, 0),
                vec![],
                &keys,
            )
            .unwrap();
            let f = fit_ols(&d).unwrap();
            for (name, t) in [("protein", eq.protein), ("nonprotein", eq.nonprotein), ("lag_weight", eq.lag_weight), ("lag_height", eq.lag_height)] {
                let (b, se) = (f.coef_of(name).unwrap(), f.se_of(name).unwrap());
                assert!((b - t).abs() < 3.0 * se, "{name}: {b} vs {t} (se {se})");
            }
        }
    }

    #[test]
    fn differencing_removes_fixed_effect() {
        let p = StructuralParams { n_children: 2000, seed: 5, ..StructuralParams::philippines().without_endogeneity() };
        let s = generate_panel(&p).unwrap();
        let mut y = Vec::new();
        let mut mu = Vec::new();
        let mut keys = Vec::new();
        for c in &s.truth.children {
            for t in 1..c.measurements.len() {
                y.push(c.measurements[t].height_cm - c.measurements[t - 1].height_cm);
                mu.push(c.mu);
                keys.push(c.child_id.clone());
            }
        }
        let n = y.len();
        let d = DesignMatrices::new(
            DVector::from_vec(y),
            DMatrix::from_column_slice(n, 1, &mu),
            vec!["mu".into()],
            DMatrix::from_element(n, 1, 1.0),
            vec!["const".into()],
            DMatrix::zeros(n, 0),
            vec![],
            &keys,
        )
        .unwrap();
        let f = fit_ols(&d).unwrap();
        assert!(f.coef_of("mu").unwrap().abs() < 3.0 * f.se_of("mu").unwrap());
    }

    #[test]
    fn count_windows_shape() {
        let w = generate_count_windows(200, 4).unwrap();
        assert_eq!(w.len(), 12);
        assert_eq!(w[0].window_label, "0-2");
        assert_eq!(w[11].window_label, "22-24");
        assert!(w.iter().all(|d| d.y.iter().all(|&v| v <= 61)));
    }

    #[test]
    fn write_produces_loadable_files() {
        let s = generate_panel(&small(Country::Philippines, 2)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        s.write(dir.path()).unwrap();
        let back = crate::ingest::load_panel(dir.path().join("panel.csv"), Country::Philippines).unwrap();
        assert_eq!(back.len(), s.panel.len());
        assert!(dir.path().join("truth.json").exists());
        let text = std::fs::read_to_string(dir.path().join("panel.csv")).unwrap();
        assert!(!text.contains("eps"));
    }
}
