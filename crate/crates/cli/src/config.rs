//! Run configuration: a TOML file (or the `config` block of a manifest),
//! overridden by command-line flags.

use std::path::{Path, PathBuf};

use growthiv::count_models::SelectBy;
use growthiv::sweep::FilterCriteria;
use growthiv::{Country, Model, Outcome};
use serde::{Deserialize, Serialize};

use crate::Failure;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub country: Option<Country>,
    pub model: Option<Model>,
    pub outcome: Option<Outcome>,
    pub seed: u64,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
    /// Filter rows such as `cd>3,hjp>0.05`; empty means the standard table rows.
    pub filters: Vec<String>,
    pub data: DataPaths,
    pub sweep: SweepConfig,
    pub counterfactual: CounterfactualConfig,
    pub countfit: CountfitConfig,
    pub synth: SynthConfig,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataPaths {
    pub panel: Option<PathBuf>,
    pub prices: Option<PathBuf>,
    pub deflator: Option<PathBuf>,
    /// Count-model battery used to predict days with diarrhea.
    pub battery: Option<PathBuf>,
    /// Long-format count windows for `countfit`: `window,days,<covariates>`.
    pub counts: Option<PathBuf>,
    /// Finished sweeps for the counterfactual, one per outcome.
    pub specs_height: Option<PathBuf>,
    pub specs_weight: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// Only the first `max_sets` sets of the enumeration.
    pub max_sets: Option<usize>,
    /// Only these 1-based set ids.
    pub set_ids: Option<Vec<usize>>,
    /// Summary rows with this many specs or fewer are suppressed.
    pub min_count: usize,
    /// Multiplier on reported recall days before applying the battery.
    pub diarrhea_transfer_scale: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig { max_sets: None, set_ids: None, min_count: 10, diarrhea_transfer_scale: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CounterfactualConfig {
    pub cross_feedback: bool,
    /// Defaults to one egg per week over the analysis band.
    pub scenario: Vec<ScenarioConfig>,
    /// Defaults to 10 g of protein per day or 300 kcal of energy per day.
    pub median: Vec<MedianConfig>,
    pub baseline: BaselineConfig,
}

impl Default for CounterfactualConfig {
    fn default() -> Self {
        CounterfactualConfig { cross_feedback: true, scenario: Vec::new(), median: Vec::new(), baseline: BaselineConfig::default() }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    /// Shortcut for the egg bookkeeping; adds to the explicit increments.
    pub eggs_per_week: Option<f64>,
    pub protein_kcal_per_day: f64,
    pub nonprotein_kcal_per_day: f64,
    pub protein_g_per_day: f64,
    pub n_periods: Option<usize>,
    pub days_per_period: Option<u32>,
    pub schedule: Option<Vec<(f64, f64)>>,
    pub allow_negative: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MedianConfig {
    pub nutrient: String,
    pub kcal_per_day: f64,
}

/// Levels do not affect the deltas (both equations are linear); they are
/// carried for completeness of the baseline trajectory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    pub height0_cm: f64,
    pub weight0_g: f64,
    pub protein_kcal: f64,
    pub nonprotein_kcal: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CountfitConfig {
    /// Children per synthetic window when no count file is given.
    pub n_children: usize,
    pub select_by: SelectBy,
    pub max_count: u32,
}

impl Default for CountfitConfig {
    fn default() -> Self {
        CountfitConfig { n_children: 500, select_by: SelectBy::Bic, max_count: 61 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_children: Option<usize>,
    pub n_periods: Option<usize>,
    /// Compensatory response and measurement error in the intake rules.
    pub endogeneity: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig { n_children: None, n_periods: None, endogeneity: true }
    }
}

/// Flag values that override the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub data: Option<PathBuf>,
    pub prices: Option<PathBuf>,
    pub country: Option<Country>,
    pub model: Option<Model>,
    pub outcome: Option<Outcome>,
    pub filters: Vec<String>,
    pub workers: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    /// Reads a TOML config, or the embedded config of a `manifest.json`.
    /// Relative paths are resolved against the file's directory.
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
        let mut cfg: RunConfig = if path.extension().is_some_and(|e| e == "json") {
            #[derive(Deserialize)]
            struct Manifest {
                config: RunConfig,
            }
            serde_json::from_str::<Manifest>(&text)
                .map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?
                .config
        } else {
            toml::from_str(&text).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?
        };
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(v) = p {
                if v.is_relative() {
                    *v = base.join(&*v);
                }
            }
        };
        let d = &mut self.data;
        for p in [
            &mut d.panel,
            &mut d.prices,
            &mut d.deflator,
            &mut d.battery,
            &mut d.counts,
            &mut d.specs_height,
            &mut d.specs_weight,
            &mut self.out,
        ] {
            fix(p);
        }
    }

    pub fn apply(&mut self, o: Overrides) {
        if o.data.is_some() {
            self.data.panel = o.data;
        }
        if o.prices.is_some() {
            self.data.prices = o.prices;
        }
        self.country = o.country.or(self.country);
        self.model = o.model.or(self.model);
        self.outcome = o.outcome.or(self.outcome);
        if !o.filters.is_empty() {
            self.filters = o.filters;
        }
        self.workers = o.workers.or(self.workers);
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if o.out.is_some() {
            self.out = o.out;
        }
    }

    pub fn country(&self) -> Result<Country, Failure> {
        self.country.ok_or_else(|| Failure::usage("no country given (config `country` or --country)"))
    }

    pub fn model(&self) -> Result<Model, Failure> {
        self.model.ok_or_else(|| Failure::usage("no model given (config `model` or --model)"))
    }

    pub fn outcome(&self) -> Result<Outcome, Failure> {
        self.outcome.ok_or_else(|| Failure::usage("no outcome given (config `outcome` or --outcome)"))
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    pub fn workers(&self) -> usize {
        self.workers
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
            .max(1)
    }

    pub fn filter_criteria(&self) -> Result<Vec<FilterCriteria>, Failure> {
        if self.filters.is_empty() {
            return Ok(growthiv::sweep::standard_filters());
        }
        self.filters.iter().map(|f| parse_filter(f)).collect()
    }
}

/// A path that must exist, named in the error when it does not.
pub fn existing(path: &Option<PathBuf>, what: &str) -> Result<PathBuf, Failure> {
    let p = path.as_ref().ok_or_else(|| Failure::usage(format!("no {what} path given")))?;
    if !p.exists() {
        return Err(Failure::usage(format!("{what} file not found: {}", p.display())));
    }
    Ok(p.clone())
}

/// Parses `all`, `overid`, `cd>X` and `hjp>X` terms joined by commas.
/// A Hansen J bound implies over-identification, as in the table rows.
pub fn parse_filter(text: &str) -> Result<FilterCriteria, Failure> {
    let mut f = FilterCriteria::ALL;
    for term in text.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        let term = term.to_ascii_lowercase();
        let bound = |prefix: &str| -> Result<Option<f64>, Failure> {
            match term.strip_prefix(prefix) {
                Some(v) => v
                    .trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .map(Some)
                    .ok_or_else(|| Failure::usage(format!("bad bound in filter term `{term}`"))),
                None => Ok(None),
            }
        };
        if term == "all" {
            continue;
        } else if term == "overid" {
            f.overidentified_only = true;
        } else if let Some(v) = bound("cd>")? {
            f.min_cd = v;
        } else if let Some(v) = bound("hjp>")? {
            f.min_hj_p = v;
            f.overidentified_only = true;
        } else {
            return Err(Failure::usage(format!("unknown filter term `{term}`")));
        }
    }
    Ok(f)
}
