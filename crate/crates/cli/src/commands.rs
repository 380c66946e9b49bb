use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use growthiv::count_models::{
    fit_window_battery, predict_panel_diarrhea, CountBattery, CountDataset,
};
use growthiv::counterfactual::{
    median_prediction, median_prediction_subset, protein_grams_to_kcal, select_best_spec, simulate_intervention,
    Baseline, GrowthEquation, InterventionScenario,
};
use growthiv::ingest::{
    build_growth_observations, impute_intakes_fe, load_deflator, load_panel, load_quotes, preprocess_prices,
    BuildOptions, DiarrheaSource, GrowthObservation, PriceTable,
};
use growthiv::sweep::{
    enumerate_sets, figure_data, filter_specs, fmt_real, read_specs, run_sweep, summarize, write_figure,
    write_specs, write_summary, FilterCriteria, InstrumentSet, SpecRecord, SpecResult, SpecView,
};
use growthiv::synth::{generate_count_windows, generate_panel, StructuralParams};
use growthiv::{Country, Model, Outcome};

use crate::config::{existing, RunConfig, ScenarioConfig};
use crate::manifest::Manifest;
use crate::Failure;

/// Upper bound on predicted days with diarrhea in a two-month window.
const MAX_WINDOW_DAYS: u32 = 61;
/// Width of the analysis band in months.
const BAND_MONTHS: f64 = 18.0;

fn io_failure(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure { code: 1, message: format!("{}: {e}", path.display()) }
}

fn write_csv<const N: usize>(path: &Path, header: &[&str; N], lines: &[[String; N]]) -> Result<(), Failure> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_failure(path, e))?;
    w.write_record(header).map_err(|e| io_failure(path, e))?;
    for l in lines {
        w.write_record(l).map_err(|e| io_failure(path, e))?;
    }
    w.flush().map_err(|e| io_failure(path, e))
}

fn output_dir(cfg: &RunConfig) -> Result<PathBuf, Failure> {
    let dir = cfg.out_dir();
    std::fs::create_dir_all(&dir).map_err(|e| io_failure(&dir, e))?;
    Ok(dir)
}

fn read_battery(path: &Path) -> Result<CountBattery, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    CountBattery::from_json(&text).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
}

/// Panel, prices and optional deflator and battery through the ingest pipeline.
fn load_rows(cfg: &RunConfig, country: Country, man: &mut Manifest) -> Result<Vec<GrowthObservation>, Failure> {
    let panel_path = existing(&cfg.data.panel, "panel")?;
    let prices_path = existing(&cfg.data.prices, "prices")?;
    let mut panel = load_panel(&panel_path, country)?;
    let imputation = impute_intakes_fe(&mut panel)?;
    let prices = preprocess_prices(&load_quotes(&prices_path)?)?;
    let deflator = match &cfg.data.deflator {
        Some(_) => load_deflator(existing(&cfg.data.deflator, "deflator")?)?,
        None => BTreeMap::new(),
    };
    let table = PriceTable::new(&prices.series, deflator);
    let mut opts = BuildOptions::default();
    if cfg.data.battery.is_some() {
        let battery = read_battery(&existing(&cfg.data.battery, "battery")?)?;
        let predicted =
            predict_panel_diarrhea(&panel, &battery, cfg.sweep.diarrhea_transfer_scale, MAX_WINDOW_DAYS)?;
        man.count("diarrhea_predictions", predicted.len());
        opts.diarrhea = DiarrheaSource::Predicted(predicted);
    }
    let report = build_growth_observations(&panel, &table, country, &opts)?;
    man.count("panel_rows", panel.len());
    man.count("intakes_imputed", imputation.imputed);
    man.count("intakes_missing", imputation.missing);
    man.count("price_quotes_dropped", prices.dropped_nonpositive + prices.dropped_outliers);
    man.count("growth_rows", report.rows.len());
    man.count("growth_rows_excluded", report.excluded.len());
    if report.rows.is_empty() {
        return Err(Failure::usage("no usable growth rows after ingestion"));
    }
    Ok(report.rows)
}

fn selected_sets(cfg: &RunConfig, country: Country, model: Model, outcome: Outcome) -> Result<Vec<InstrumentSet>, Failure> {
    let mut sets = enumerate_sets(country, model, outcome);
    let total = sets.len();
    if let Some(ids) = &cfg.sweep.set_ids {
        if let Some(bad) = ids.iter().find(|&&i| i == 0 || i > total) {
            return Err(Failure::usage(format!("set id {bad} outside 1..={total}")));
        }
        sets.retain(|s| ids.contains(&s.id));
    }
    if let Some(k) = cfg.sweep.max_sets {
        sets.truncate(k);
    }
    if sets.is_empty() {
        return Err(Failure::usage("sweep selection is empty"));
    }
    Ok(sets)
}

fn run_and_write(
    cfg: &RunConfig,
    rows: &[GrowthObservation],
    model: Model,
    outcome: Outcome,
    dir: &Path,
    specs_name: &str,
    man: &mut Manifest,
) -> Result<Vec<SpecResult>, Failure> {
    let country = cfg.country()?;
    let sets = selected_sets(cfg, country, model, outcome)?;
    let results = run_sweep(rows, &sets, cfg.workers())?;
    let ok = results.iter().filter(|r| r.is_ok()).count();
    man.count(&format!("{outcome}_sets"), results.len());
    man.count(&format!("{outcome}_estimated"), ok);
    man.failures.extend(results.iter().filter(|r| !r.is_ok()).map(|r| {
        format!("{outcome} set {}: {}: {}", r.set.id, r.status, r.message.as_deref().unwrap_or(""))
    }));
    write_specs(dir.join(specs_name), &results)?;
    man.outputs.push(specs_name.to_string());
    Ok(results)
}

pub fn sweep(cfg: &RunConfig) -> Result<(), Failure> {
    let start = Instant::now();
    let (country, model, outcome) = (cfg.country()?, cfg.model()?, cfg.outcome()?);
    let filters = cfg.filter_criteria()?;
    let mut man = Manifest::new("sweep", cfg);
    let rows = load_rows(cfg, country, &mut man)?;
    let dir = output_dir(cfg)?;
    let results = run_and_write(cfg, &rows, model, outcome, &dir, "specs.csv", &mut man)?;

    let mut summary_blocks = Vec::new();
    let mut figure_blocks = Vec::new();
    for &coef in model.nutrient_names() {
        let mut block = Vec::new();
        for f in &filters {
            let mut s = summarize(&filter_specs(&results, f), coef, cfg.sweep.min_count)?;
            s.filter_label = f.label();
            block.push(s);
        }
        summary_blocks.push((coef.to_string(), block));
        let all: Vec<&SpecResult> = results.iter().filter(|r| r.is_ok()).collect();
        let (fig, dropped) = figure_data(&all, coef);
        man.count(&format!("figure_dropped_{coef}"), dropped);
        figure_blocks.push((coef.to_string(), fig));
    }
    write_summary(dir.join("summary.csv"), &summary_blocks, outcome.display_scale())?;
    write_figure(dir.join("figure.csv"), &figure_blocks)?;
    man.outputs.extend(["summary.csv".to_string(), "figure.csv".to_string()]);
    man.finish(&dir, start.elapsed())
}

/// Periods of the analysis band at the country's measurement spacing.
fn band_periods(days_per_period: u32) -> usize {
    (BAND_MONTHS * 30.4375 / days_per_period as f64).round().max(1.0) as usize
}

fn build_scenario(sc: &ScenarioConfig, country: Country) -> Result<InterventionScenario, Failure> {
    let days = sc.days_per_period.unwrap_or_else(|| country.days_per_period());
    let n = sc.n_periods.unwrap_or_else(|| band_periods(days));
    let egg = InterventionScenario::egg_per_week(days, n);
    let eggs = sc.eggs_per_week.unwrap_or(0.0);
    let s = InterventionScenario {
        protein_kcal_per_day: sc.protein_kcal_per_day
            + protein_grams_to_kcal(sc.protein_g_per_day)
            + eggs * egg.protein_kcal_per_day,
        nonprotein_kcal_per_day: sc.nonprotein_kcal_per_day + eggs * egg.nonprotein_kcal_per_day,
        days_per_period: days,
        n_periods: n,
        schedule: sc.schedule.clone(),
        allow_negative: sc.allow_negative,
    };
    s.validate().map_err(|e| Failure::usage(format!("scenario `{}`: {e}", sc.name)))?;
    Ok(s)
}

fn scenarios(cfg: &RunConfig, country: Country, model: Model) -> Result<Vec<(String, InterventionScenario)>, Failure> {
    let configured = &cfg.counterfactual.scenario;
    if model == Model::Energy {
        if !configured.is_empty() {
            return Err(Failure::usage("intervention scenarios need the protein_split model"));
        }
        return Ok(Vec::new());
    }
    if configured.is_empty() {
        let egg = ScenarioConfig { name: "egg_per_week".into(), eggs_per_week: Some(1.0), ..Default::default() };
        return Ok(vec![(egg.name.clone(), build_scenario(&egg, country)?)]);
    }
    let mut names = std::collections::BTreeSet::new();
    configured
        .iter()
        .map(|sc| {
            if sc.name.is_empty() || !names.insert(sc.name.clone()) {
                return Err(Failure::usage(format!("scenario names must be unique and non-empty (`{}`)", sc.name)));
            }
            Ok((sc.name.clone(), build_scenario(sc, country)?))
        })
        .collect()
}

fn median_requests(cfg: &RunConfig, model: Model) -> Result<Vec<(String, f64)>, Failure> {
    if cfg.counterfactual.median.is_empty() {
        return Ok(match model {
            Model::Energy => vec![("energy".into(), 300.0)],
            Model::ProteinSplit => vec![("protein".into(), protein_grams_to_kcal(10.0))],
        });
    }
    cfg.counterfactual
        .median
        .iter()
        .map(|m| {
            if !model.nutrient_names().contains(&m.nutrient.as_str()) {
                return Err(Failure::usage(format!("nutrient `{}` is not in the {model} model", m.nutrient)));
            }
            if !m.kcal_per_day.is_finite() {
                return Err(Failure::usage("median increment must be finite"));
            }
            Ok((m.nutrient.clone(), m.kcal_per_day))
        })
        .collect()
}

pub fn counterfactual(cfg: &RunConfig) -> Result<(), Failure> {
    let start = Instant::now();
    let (country, model) = (cfg.country()?, cfg.model()?);
    let scen = scenarios(cfg, country, model)?;
    let medians = median_requests(cfg, model)?;
    let mut man = Manifest::new("counterfactual", cfg);
    let dir = output_dir(cfg)?;

    let given = [(Outcome::Height, &cfg.data.specs_height), (Outcome::Weight, &cfg.data.specs_weight)];
    let mut rows: Option<Vec<GrowthObservation>> = None;
    let mut specs: BTreeMap<Outcome, Vec<SpecRecord>> = BTreeMap::new();
    for (outcome, path) in given {
        let records = match path {
            Some(_) => read_specs(existing(path, &format!("{outcome} specs"))?)?,
            None => {
                if rows.is_none() {
                    rows = Some(load_rows(cfg, country, &mut man)?);
                }
                let name = format!("specs_{outcome}.csv");
                run_and_write(cfg, rows.as_deref().unwrap(), model, outcome, &dir, &name, &mut man)?;
                read_specs(dir.join(&name))?
            }
        };
        specs.insert(outcome, records);
    }

    let days = country.days_per_period() as f64;
    let mut lines = Vec::new();
    for (outcome, records) in &specs {
        let (subset, criteria) = median_prediction_subset(records);
        for (nutrient, kcal) in &medians {
            let unit = median_prediction(&subset, nutrient, 1.0, 1.0)?;
            let p = median_prediction(&subset, nutrient, *kcal, days)?;
            lines.push([
                outcome.to_string(),
                nutrient.clone(),
                criteria.label(),
                subset.len().to_string(),
                fmt_real(unit),
                fmt_real(*kcal),
                fmt_real(days),
                fmt_real(p),
            ]);
        }
    }
    let path = dir.join("median_prediction.csv");
    write_csv(
        &path,
        &["outcome", "nutrient", "filter", "n_specs", "median_coef", "kcal_per_day", "days_per_period", "prediction"],
        &lines,
    )?;
    man.outputs.push("median_prediction.csv".into());

    if !scen.is_empty() {
        let hb = select_best_spec(&specs[&Outcome::Height])?;
        let wb = select_best_spec(&specs[&Outcome::Weight])?;
        man.count("height_best_set", hb.set_id());
        man.count("weight_best_set", wb.set_id());
        let (h, wt) = (GrowthEquation::from_spec(hb)?, GrowthEquation::from_spec(wb)?);
        let b = &cfg.counterfactual.baseline;
        let mut lines = Vec::new();
        for (name, s) in &scen {
            let base = Baseline::constant(b.height0_cm, b.weight0_g, b.protein_kcal, b.nonprotein_kcal, s.n_periods);
            let delta = simulate_intervention(&h, &wt, &base, s, cfg.counterfactual.cross_feedback)?;
            lines.extend(delta.periods.iter().map(|p| {
                [
                    name.clone(),
                    p.period.to_string(),
                    fmt_real(p.delta_growth_height_cm),
                    fmt_real(p.delta_growth_weight_g),
                    fmt_real(p.cumulative_height_cm),
                    fmt_real(p.cumulative_weight_g),
                ]
            }));
        }
        write_csv(
            &dir.join("counterfactual.csv"),
            &[
                "scenario",
                "period",
                "delta_growth_height_cm",
                "delta_growth_weight_g",
                "cumulative_height_cm",
                "cumulative_weight_g",
            ],
            &lines,
        )?;
        man.outputs.push("counterfactual.csv".into());
    }
    man.finish(&dir, start.elapsed())
}

/// Long-format counts: `window,days,<covariates...>`; windows keep file order.
fn read_counts(path: &Path, max_count: u32) -> Result<Vec<CountDataset>, Failure> {
    let bad = |m: String| Failure::usage(format!("{}: {m}", path.display()));
    let mut rdr = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let header = rdr.headers().map_err(|e| bad(e.to_string()))?.clone();
    if header.len() < 2 || &header[0] != "window" || &header[1] != "days" {
        return Err(bad("header must start with `window,days`".into()));
    }
    let names: Vec<String> = header.iter().skip(2).map(str::to_string).collect();
    let mut order: Vec<String> = Vec::new();
    let mut data: BTreeMap<String, (Vec<u32>, Vec<Vec<f64>>)> = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let line = i + 2;
        let days: u32 = rec[1].trim().parse().map_err(|_| bad(format!("line {line}: days `{}`", &rec[1])))?;
        let x = rec
            .iter()
            .skip(2)
            .map(|v| v.trim().parse::<f64>().ok().filter(|x| x.is_finite()))
            .collect::<Option<Vec<f64>>>()
            .ok_or_else(|| bad(format!("line {line}: non-numeric covariate")))?;
        let w = rec[0].trim().to_string();
        if !data.contains_key(&w) {
            order.push(w.clone());
        }
        let e = data.entry(w).or_default();
        e.0.push(days);
        e.1.push(x);
    }
    order
        .into_iter()
        .map(|w| {
            let (y, x) = data.remove(&w).unwrap();
            CountDataset::with_intercept(y, &x, &names, w, Some(max_count)).map_err(Failure::from)
        })
        .collect()
}

pub fn countfit(cfg: &RunConfig) -> Result<(), Failure> {
    let start = Instant::now();
    let cf = &cfg.countfit;
    let datasets = match &cfg.data.counts {
        Some(_) => read_counts(&existing(&cfg.data.counts, "counts")?, cf.max_count)?,
        None => generate_count_windows(cf.n_children, cfg.seed)?,
    };
    let mut man = Manifest::new("countfit", cfg);
    let dir = output_dir(cfg)?;
    let battery = fit_window_battery(&datasets, cf.select_by);
    man.count("windows", battery.windows.len());
    man.count("fitted", battery.windows.iter().filter(|w| w.fit.is_some()).count());
    man.failures.extend(battery.windows.iter().filter_map(|w| w.flag.as_ref().map(|f| format!("{}: {f}", w.window))));
    let path = dir.join("battery.json");
    std::fs::write(&path, battery.to_json()?).map_err(|e| io_failure(&path, e))?;
    man.outputs.push("battery.json".into());
    man.finish(&dir, start.elapsed())
}

fn synth_params(cfg: &RunConfig) -> Result<StructuralParams, Failure> {
    let mut p = StructuralParams::for_country(cfg.country()?);
    if let Some(n) = cfg.synth.n_children {
        p.n_children = n;
    }
    if let Some(n) = cfg.synth.n_periods {
        p.n_periods = n;
    }
    if !cfg.synth.endogeneity {
        p = p.without_endogeneity();
    }
    p.seed = cfg.seed;
    p.validate()?;
    Ok(p)
}

pub fn synth(cfg: &RunConfig) -> Result<(), Failure> {
    let start = Instant::now();
    let params = synth_params(cfg)?;
    let mut man = Manifest::new("synth", cfg);
    let dir = output_dir(cfg)?;
    let panel = generate_panel(&params)?;
    panel.write(&dir)?;
    man.count("children", params.n_children);
    man.count("panel_rows", panel.panel.len());
    man.count("price_quotes", panel.quotes.len());
    man.outputs.extend(["panel.csv", "prices.csv", "deflator.csv", "truth.json"].map(String::from));
    man.finish(&dir, start.elapsed())
}

/// Checks everything a run would need and prints what was found.
pub fn validate(cfg: &RunConfig) -> Result<(), Failure> {
    let country = cfg.country()?;
    let mut man = Manifest::new("validate", cfg);
    if let Some(model) = cfg.model {
        scenarios(cfg, country, model)?;
        median_requests(cfg, model)?;
        if let Some(outcome) = cfg.outcome {
            man.count("sets", selected_sets(cfg, country, model, outcome)?.len());
        }
    }
    for (p, what) in [
        (&cfg.data.specs_height, "height specs"),
        (&cfg.data.specs_weight, "weight specs"),
        (&cfg.data.counts, "counts"),
    ] {
        if p.is_some() {
            existing(p, what)?;
        }
    }
    if cfg.data.panel.is_some() || cfg.data.prices.is_some() {
        load_rows(cfg, country, &mut man)?;
    }
    let filters: Vec<FilterCriteria> = cfg.filter_criteria()?;
    man.count("filters", filters.len());
    println!("{}", serde_json::to_string_pretty(&man.counts).expect("counts serialize"));
    Ok(())
}
