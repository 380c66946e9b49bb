//! Instrument-set sweeps: enumeration, parallel estimation, filtering,
//! coefficient-distribution summaries and figure data.

mod enumerate;
mod output;
mod summary;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{self, DiagnosticsReport};
use crate::domain::{Country, Model, Outcome};
use crate::error::{Error, Result};
use crate::estimators::{fit_iv_gmm, fit_liml, fit_ols};
use crate::ingest::{control_names, GrowthObservation};
use crate::{DesignMatrices, FitResult};

pub use enumerate::{
    canonical_families, enumerate_families, enumerate_sets, price_instruments, Family, InstrumentSet,
};
pub use output::{fmt_real, read_specs, write_figure, write_specs, write_summary, SpecRecord};
pub use summary::{
    figure_data, filter_specs, standard_filters, summarize, FigureRow, FilterCriteria, SweepSummary,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpecStatus {
    Ok,
    SkippedRank,
    SkippedUnderidentified,
    SkippedSample,
}

impl std::fmt::Display for SpecStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SpecStatus::Ok => "ok",
            SpecStatus::SkippedRank => "skipped_rank",
            SpecStatus::SkippedUnderidentified => "skipped_underidentified",
            SpecStatus::SkippedSample => "skipped_sample",
        })
    }
}

impl std::str::FromStr for SpecStatus {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "ok" => SpecStatus::Ok,
            "skipped_rank" => SpecStatus::SkippedRank,
            "skipped_underidentified" => SpecStatus::SkippedUnderidentified,
            "skipped_sample" => SpecStatus::SkippedSample,
            other => return Err(Error::Invalid(format!("unknown status `{other}`"))),
        })
    }
}

/// An instrument set with its fit and diagnostics; both are present iff `status` is ok.
#[derive(Debug, Clone)]
pub struct SpecResult {
    pub set: InstrumentSet,
    pub status: SpecStatus,
    pub fit: Option<FitResult>,
    pub diagnostics: Option<DiagnosticsReport>,
    pub n_used: usize,
    pub message: Option<String>,
}

/// Read access shared by in-memory results and records reloaded from `specs.csv`.
pub trait SpecView {
    fn set_id(&self) -> usize;
    fn is_ok(&self) -> bool;
    /// Number of excluded instruments in the set.
    fn m(&self) -> usize;
    fn kp_wald_f(&self) -> Option<f64>;
    /// Hansen J p-value; absent when exactly identified.
    fn hj_p(&self) -> Option<f64>;
    fn coef(&self, name: &str) -> Option<f64>;
    fn se(&self, name: &str) -> Option<f64>;
}

impl SpecView for SpecResult {
    fn set_id(&self) -> usize {
        self.set.id
    }
    fn is_ok(&self) -> bool {
        self.status == SpecStatus::Ok
    }
    fn m(&self) -> usize {
        self.set.m()
    }
    fn kp_wald_f(&self) -> Option<f64> {
        self.diagnostics.as_ref().map(|d| d.kp_wald_f)
    }
    fn hj_p(&self) -> Option<f64> {
        self.diagnostics.as_ref().and_then(|d| d.hj_p())
    }
    fn coef(&self, name: &str) -> Option<f64> {
        self.fit.as_ref().and_then(|f| f.coef_of(name))
    }
    fn se(&self, name: &str) -> Option<f64> {
        self.fit.as_ref().and_then(|f| f.se_of(name))
    }
}

impl<S: SpecView> SpecView for &S {
    fn set_id(&self) -> usize {
        (*self).set_id()
    }
    fn is_ok(&self) -> bool {
        (*self).is_ok()
    }
    fn m(&self) -> usize {
        (*self).m()
    }
    fn kp_wald_f(&self) -> Option<f64> {
        (*self).kp_wald_f()
    }
    fn hj_p(&self) -> Option<f64> {
        (*self).hj_p()
    }
    fn coef(&self, name: &str) -> Option<f64> {
        (*self).coef(name)
    }
    fn se(&self, name: &str) -> Option<f64> {
        (*self).se(name)
    }
}

pub fn outcome_variable(outcome: Outcome) -> &'static str {
    match outcome {
        Outcome::Height => "delta_height",
        Outcome::Weight => "delta_weight",
    }
}

/// Design for one instrument set on the rows where every variable it needs is present.
/// Returns the design and the indices of the rows used.
pub fn design_for(
    rows: &[GrowthObservation],
    country: Country,
    model: Model,
    outcome: Outcome,
    instruments: &[String],
) -> Result<(DesignMatrices, Vec<usize>)> {
    let y_name = outcome_variable(outcome);
    let endog = model.endogenous_names();
    let exog = control_names(country);
    let needed: Vec<&str> = std::iter::once(y_name)
        .chain(endog.iter().map(String::as_str))
        .chain(exog.iter().map(String::as_str))
        .chain(instruments.iter().map(String::as_str))
        .collect();
    let used: Vec<usize> = rows
        .iter()
        .enumerate()
        .filter(|(_, r)| needed.iter().all(|v| r.value(v).is_some_and(f64::is_finite)))
        .map(|(i, _)| i)
        .collect();
    let n = used.len();
    let column = |name: &str| DVector::from_iterator(n, used.iter().map(|&i| rows[i].value(name).unwrap()));
    let block = |names: &[String]| {
        let mut m = DMatrix::zeros(n, names.len());
        for (j, name) in names.iter().enumerate() {
            m.set_column(j, &column(name));
        }
        m
    };
    let clusters: Vec<&str> = used.iter().map(|&i| rows[i].child_id.as_str()).collect();
    let d = DesignMatrices::new(
        column(y_name),
        block(&endog),
        endog.clone(),
        block(&exog),
        exog,
        block(instruments),
        instruments.to_vec(),
        &clusters,
    )?;
    Ok((d, used))
}

fn skipped(set: &InstrumentSet, status: SpecStatus, n_used: usize, message: String) -> SpecResult {
    SpecResult {
        set: set.clone(),
        status,
        fit: None,
        diagnostics: None,
        n_used,
        message: Some(message),
    }
}

fn status_of(err: &Error) -> SpecStatus {
    match err {
        Error::Underidentified { .. } => SpecStatus::SkippedUnderidentified,
        _ => SpecStatus::SkippedRank,
    }
}

/// Estimate one instrument set: exactly identified sets by IV/GMM, others by LIML.
pub fn run_one(rows: &[GrowthObservation], set: &InstrumentSet) -> SpecResult {
    let k1 = set.model.endogenous_names().len();
    if set.m() < k1 {
        return skipped(
            set,
            SpecStatus::SkippedUnderidentified,
            0,
            format!("{} instruments for {k1} endogenous regressors", set.m()),
        );
    }
    let (d, used) = match design_for(rows, set.country, set.model, set.outcome, &set.names) {
        Ok(x) => x,
        Err(e) => return skipped(set, SpecStatus::SkippedSample, 0, e.to_string()),
    };
    let n = used.len();
    if n <= d.k1() + d.k2() + d.m() || d.n_clusters() < 2 {
        return skipped(set, SpecStatus::SkippedSample, n, format!("{n} usable rows"));
    }
    let attempt = || -> Result<(FitResult, DiagnosticsReport)> {
        let fit = if set.m() == k1 { fit_iv_gmm(&d)? } else { fit_liml(&d)? };
        let ols = fit_ols(&d)?;
        let diag = diagnostics::diagnose(&d, &fit, &ols)?;
        Ok((fit, diag))
    };
    match attempt() {
        Ok((fit, diag)) => SpecResult {
            set: set.clone(),
            status: SpecStatus::Ok,
            fit: Some(fit),
            diagnostics: Some(diag),
            n_used: n,
            message: None,
        },
        Err(e) => skipped(set, status_of(&e), n, e.to_string()),
    }
}

/// Run every set on a pool of `workers` threads; results are ordered by set id.
pub fn run_sweep(rows: &[GrowthObservation], sets: &[InstrumentSet], workers: usize) -> Result<Vec<SpecResult>> {
    if sets.is_empty() {
        return Err(Error::Invalid("empty instrument-set list".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Invalid(format!("thread pool: {e}")))?;
    let mut out: Vec<SpecResult> = pool.install(|| sets.par_iter().map(|s| run_one(rows, s)).collect());
    out.sort_by_key(|r| r.set.id);
    Ok(out)
}
