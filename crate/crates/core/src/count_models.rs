//! Count regressions for days with diarrhea: Poisson, NB2 and their
//! zero-inflated variants, fitted by Newton maximum likelihood.
//!
//! The Poisson density is the standard `exp(-μ) μ^y / y!`. Zero inflation
//! mixes a point mass at zero through an intercept-only logit.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::ingest::{age_month, ChildObservation};
use crate::stats::squared_correlation;

pub const MAX_ITER: usize = 100;
pub const GRAD_TOL: f64 = 1e-8;
/// Name of the implicit intercept column.
pub const CONST: &str = "const";
/// Covariates understood by [`predict_panel_diarrhea`].
pub const RECALL_DAYS: &str = "recall_days";
pub const FEMALE: &str = "female";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CountFamily {
    Poisson,
    Negbin,
    Zip,
    Zinb,
}

impl CountFamily {
    pub const ALL: [CountFamily; 4] = [CountFamily::Poisson, CountFamily::Negbin, CountFamily::Zip, CountFamily::Zinb];

    pub fn has_dispersion(self) -> bool {
        matches!(self, CountFamily::Negbin | CountFamily::Zinb)
    }

    pub fn inflated(self) -> bool {
        matches!(self, CountFamily::Zip | CountFamily::Zinb)
    }
}

impl fmt::Display for CountFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CountFamily::Poisson => "poisson",
            CountFamily::Negbin => "negbin",
            CountFamily::Zip => "zip",
            CountFamily::Zinb => "zinb",
        })
    }
}

impl FromStr for CountFamily {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        CountFamily::ALL
            .into_iter()
            .find(|f| f.to_string() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown count family `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CountDataset {
    pub y: Vec<u32>,
    pub x: DMatrix<f64>,
    pub names: Vec<String>,
    pub window_label: String,
}

impl CountDataset {
    /// Validates counts against `max_count` (the window length) when given.
    pub fn new(y: Vec<u32>, x: DMatrix<f64>, names: Vec<String>, window_label: impl Into<String>, max_count: Option<u32>) -> Result<Self> {
        if x.nrows() != y.len() || x.ncols() != names.len() {
            return Err(Error::Invalid(format!(
                "count data shape mismatch: {} counts, {}x{} covariates, {} names",
                y.len(),
                x.nrows(),
                x.ncols(),
                names.len()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("non-finite covariate in count data".into()));
        }
        if let Some(cap) = max_count {
            if let Some(v) = y.iter().find(|&&v| v > cap) {
                return Err(Error::Invalid(format!("count {v} exceeds window length {cap}")));
            }
        }
        Ok(CountDataset { y, x, names, window_label: window_label.into() })
    }

    /// Prepends an intercept column named `const`.
    pub fn with_intercept(y: Vec<u32>, covariates: &[Vec<f64>], names: &[String], window_label: impl Into<String>, max_count: Option<u32>) -> Result<Self> {
        let n = y.len();
        let k = names.len() + 1;
        if covariates.iter().any(|r| r.len() != names.len()) {
            return Err(Error::Invalid("ragged covariate rows".into()));
        }
        let x = DMatrix::from_fn(n, k, |i, j| if j == 0 { 1.0 } else { covariates[i][j - 1] });
        let mut all = vec![CONST.to_string()];
        all.extend(names.iter().cloned());
        CountDataset::new(y, x, all, window_label, max_count)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountFit {
    pub family: CountFamily,
    pub names: Vec<String>,
    pub coef: Vec<f64>,
    /// Observed-information standard errors of `coef`.
    pub se: Vec<f64>,
    pub alpha: Option<f64>,
    /// Logit of the zero-inflation probability.
    pub inflation: Option<f64>,
    pub loglik: f64,
    pub bic: f64,
    pub r2_pred: f64,
    pub n: usize,
    pub converged: bool,
    pub iterations: usize,
    pub grad_norm: f64,
    /// All counts were zero; predictions are zero and the fit is not a real optimum.
    pub degenerate: bool,
}

impl CountFit {
    pub fn n_params(&self) -> usize {
        self.coef.len() + self.alpha.is_some() as usize + self.inflation.is_some() as usize
    }

    pub fn inflation_prob(&self) -> f64 {
        self.inflation.map_or(0.0, logistic)
    }

    /// Expected count `(1 − π) exp(x'β)` for a covariate row in `names` order.
    pub fn mean(&self, row: &[f64]) -> f64 {
        if self.degenerate {
            return 0.0;
        }
        let eta: f64 = self.coef.iter().zip(row).map(|(b, x)| b * x).sum();
        (1.0 - self.inflation_prob()) * eta.exp()
    }

    pub fn predict_dataset(&self, data: &CountDataset) -> Result<Vec<f64>> {
        if data.names != self.names {
            return Err(Error::Invalid(format!(
                "covariates {:?} do not match fit {:?}",
                data.names, self.names
            )));
        }
        Ok((0..data.n())
            .map(|i| self.mean(&data.x.row(i).iter().copied().collect::<Vec<_>>()))
            .collect())
    }
}

pub(crate) fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn poisson_pmf(y: u32, mu: f64) -> f64 {
    poisson_lnpmf(y, mu).exp()
}

fn poisson_lnpmf(y: u32, mu: f64) -> f64 {
    let yf = y as f64;
    if y == 0 {
        -mu
    } else {
        yf * mu.ln() - mu - ln_gamma(yf + 1.0)
    }
}

/// NB2 log density with variance `μ + αμ²`, written to stay accurate as α → 0.
pub fn negbin_lnpmf(y: u32, mu: f64, alpha: f64) -> f64 {
    let yf = y as f64;
    let mut s = 0.0;
    for j in 0..y {
        s += (alpha * j as f64).ln_1p();
    }
    let tail = (yf + 1.0 / alpha) * (alpha * mu).ln_1p();
    let lm = if y == 0 { 0.0 } else { yf * mu.ln() };
    s + lm - tail - ln_gamma(yf + 1.0)
}

/// Parameter layout: β, then ln α for dispersion families, then the inflation logit.
#[derive(Debug, Clone, Copy)]
struct Layout {
    family: CountFamily,
    k: usize,
}

impl Layout {
    fn len(&self) -> usize {
        self.k + self.family.has_dispersion() as usize + self.family.inflated() as usize
    }
    fn alpha_idx(&self) -> Option<usize> {
        self.family.has_dispersion().then_some(self.k)
    }
    fn zeta_idx(&self) -> Option<usize> {
        self.family.inflated().then(|| self.len() - 1)
    }
}

/// Base density pieces for one observation: (ln f(y), ∂ln f/∂η, ∂ln f/∂lnα).
fn base_terms(y: u32, eta: f64, alpha: Option<f64>) -> (f64, f64, f64) {
    let mu = eta.exp();
    let yf = y as f64;
    match alpha {
        None => (poisson_lnpmf(y, mu), yf - mu, 0.0),
        Some(a) => {
            let l = negbin_lnpmf(y, mu, a);
            let am = a * mu;
            let d_eta = (yf - mu) / (1.0 + am);
            let mut sj = 0.0;
            for j in 0..y {
                let jf = j as f64;
                sj += jf / (1.0 + a * jf);
            }
            let d_alpha = sj + am.ln_1p() / (a * a) - (yf + 1.0 / a) * mu / (1.0 + am);
            (l, d_eta, a * d_alpha)
        }
    }
}

fn loglik_grad(data: &CountDataset, lay: Layout, theta: &DVector<f64>, want_grad: bool) -> (f64, DVector<f64>) {
    let p = lay.len();
    let alpha = lay.alpha_idx().map(|i| theta[i].exp());
    let zeta = lay.zeta_idx().map(|i| theta[i]);
    let beta = theta.rows(0, lay.k);
    let mut ll = 0.0;
    let mut g = DVector::zeros(if want_grad { p } else { 0 });
    for i in 0..data.n() {
        let eta = data.x.row(i).dot(&beta.transpose());
        let y = data.y[i];
        let (lf, de, da) = base_terms(y, eta, alpha);
        let (li, we, wz) = match zeta {
            None => (lf, 1.0, 0.0),
            Some(z) => {
                let pi = logistic(z);
                // ln(1 − π) without cancellation
                let l1mp = -(z.max(0.0) + (-z.abs()).exp().ln_1p());
                if y == 0 {
                    let lp = pi.ln();
                    let a = lp.max(l1mp + lf);
                    let lsum = a + ((lp - a).exp() + (l1mp + lf - a).exp()).ln();
                    let share = (l1mp + lf - lsum).exp();
                    // ∂/∂z of ln(π + (1−π) f0) = π(1−π)(1 − f0)/L0
                    let dz = pi * (1.0 - pi) * (1.0 - lf.exp()) / lsum.exp();
                    (lsum, share, dz)
                } else {
                    (l1mp + lf, 1.0, -pi)
                }
            }
        };
        ll += li;
        if want_grad {
            for j in 0..lay.k {
                g[j] += we * de * data.x[(i, j)];
            }
            if let Some(ai) = lay.alpha_idx() {
                g[ai] += we * da;
            }
            if let Some(zi) = lay.zeta_idx() {
                g[zi] += wz;
            }
        }
    }
    (ll, g)
}

fn numeric_hessian(data: &CountDataset, lay: Layout, theta: &DVector<f64>) -> DMatrix<f64> {
    let p = theta.len();
    let mut h = DMatrix::zeros(p, p);
    for j in 0..p {
        let step = 1e-5 * theta[j].abs().max(1.0);
        let mut tp = theta.clone();
        tp[j] += step;
        let mut tm = theta.clone();
        tm[j] -= step;
        let gp = loglik_grad(data, lay, &tp, true).1;
        let gm = loglik_grad(data, lay, &tm, true).1;
        h.set_column(j, &((gp - gm) / (2.0 * step)));
    }
    (&h + h.transpose()) * 0.5
}

fn check_separation(data: &CountDataset) -> Result<()> {
    for j in 0..data.x.ncols() {
        let col = data.x.column(j);
        if col.iter().all(|&v| v == col[0]) {
            continue;
        }
        let positive_only_at_zero = (0..data.n()).all(|i| data.y[i] == 0 || col[i] == 0.0);
        if !positive_only_at_zero {
            continue;
        }
        let zero_rows: Vec<f64> = (0..data.n()).filter(|&i| data.y[i] == 0).map(|i| col[i]).collect();
        if zero_rows.iter().all(|&v| v >= 0.0) || zero_rows.iter().all(|&v| v <= 0.0) {
            return Err(Error::Separation(format!(
                "covariate `{}` is nonzero only where the count is zero",
                data.names[j]
            )));
        }
    }
    Ok(())
}

struct Optimum {
    theta: DVector<f64>,
    loglik: f64,
    grad_norm: f64,
    hessian: DMatrix<f64>,
    iterations: usize,
    converged: bool,
}

fn newton(data: &CountDataset, lay: Layout, mut theta: DVector<f64>) -> Optimum {
    let (mut ll, mut g) = loglik_grad(data, lay, &theta, true);
    let mut iterations = 0;
    let mut converged = g.amax() < GRAD_TOL;
    while !converged && iterations < MAX_ITER {
        iterations += 1;
        let h = numeric_hessian(data, lay, &theta);
        let neg = -&h;
        // Levenberg shift until the negated Hessian factors
        let mut shift = 0.0;
        let step = loop {
            let mut m = neg.clone();
            for d in 0..m.nrows() {
                m[(d, d)] += shift;
            }
            if let Some(c) = m.cholesky() {
                break c.solve(&g);
            }
            shift = if shift == 0.0 { 1e-8 * neg.diagonal().amax().max(1.0) } else { shift * 10.0 };
            if !shift.is_finite() {
                break g.clone();
            }
        };
        let slope = g.dot(&step);
        let slack = 1e-12 * (1.0 + ll.abs());
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let cand = &theta + &step * t;
            let (lc, gc) = loglik_grad(data, lay, &cand, true);
            if lc.is_finite() && lc >= ll + 1e-4 * t * slope - slack {
                accepted = Some((cand, lc, gc));
                break;
            }
            t *= 0.5;
        }
        match accepted {
            Some((c, lc, gc)) => {
                theta = c;
                ll = lc;
                g = gc;
            }
            None => break,
        }
        converged = g.amax() < GRAD_TOL;
    }
    let hessian = numeric_hessian(data, lay, &theta);
    Optimum { grad_norm: g.amax(), theta, loglik: ll, hessian, iterations, converged }
}

fn starting_values(data: &CountDataset, lay: Layout) -> Result<DVector<f64>> {
    let mut theta = DVector::zeros(lay.len());
    let ybar = data.y.iter().map(|&v| v as f64).sum::<f64>() / data.n() as f64;
    let base = if lay.family == CountFamily::Poisson {
        None
    } else {
        fit_count(data, CountFamily::Poisson).ok().filter(|f| f.converged)
    };
    match &base {
        Some(p) => theta.rows_mut(0, lay.k).copy_from(&DVector::from_column_slice(&p.coef)),
        None => {
            if let Some(c) = data.names.iter().position(|n| n == CONST) {
                theta[c] = ybar.ln();
            }
        }
    }
    if let Some(ai) = lay.alpha_idx() {
        let mut a0 = 0.5;
        if let Some(p) = &base {
            let mut num = 0.0;
            let mut den = 0.0;
            for i in 0..data.n() {
                let row: Vec<f64> = data.x.row(i).iter().copied().collect();
                let mu = p.mean(&row);
                let y = data.y[i] as f64;
                num += (y - mu).powi(2) - y;
                den += mu * mu;
            }
            a0 = (num / den).clamp(0.05, 5.0);
        }
        theta[ai] = f64::ln(a0);
    }
    if let Some(zi) = lay.zeta_idx() {
        let zeros = data.y.iter().filter(|&&v| v == 0).count() as f64 / data.n() as f64;
        let expected = (-ybar).exp();
        let excess = ((zeros - expected) / (1.0 - expected)).clamp(0.02, 0.9);
        theta[zi] = (excess / (1.0 - excess)).ln();
    }
    Ok(theta)
}

/// Maximum-likelihood fit of one family. Non-convergence within 100 Newton
/// iterations yields `converged = false` rather than an error.
pub fn fit_count(data: &CountDataset, family: CountFamily) -> Result<CountFit> {
    let n = data.n();
    let k = data.x.ncols();
    let lay = Layout { family, k };
    if n <= lay.len() {
        return Err(Error::Invalid(format!(
            "window {}: {n} observations for {} parameters",
            data.window_label,
            lay.len()
        )));
    }
    if data.y.iter().all(|&v| v == 0) {
        return Ok(degenerate_fit(data, family));
    }
    check_separation(data)?;
    let start = starting_values(data, lay)?;
    let opt = newton(data, lay, start);
    let info = -&opt.hessian;
    let cov = info.clone().try_inverse();
    let se: Vec<f64> = (0..k)
        .map(|j| cov.as_ref().map_or(f64::NAN, |c| c[(j, j)].max(0.0).sqrt()))
        .collect();
    let p = lay.len();
    let mut fit = CountFit {
        family,
        names: data.names.clone(),
        coef: opt.theta.rows(0, k).iter().copied().collect(),
        se,
        alpha: lay.alpha_idx().map(|i| opt.theta[i].exp()),
        inflation: lay.zeta_idx().map(|i| opt.theta[i]),
        loglik: opt.loglik,
        bic: -2.0 * opt.loglik + p as f64 * (n as f64).ln(),
        r2_pred: 0.0,
        n,
        converged: opt.converged,
        iterations: opt.iterations,
        grad_norm: opt.grad_norm,
        degenerate: false,
    };
    let pred = fit.predict_dataset(data)?;
    let obs: Vec<f64> = data.y.iter().map(|&v| v as f64).collect();
    fit.r2_pred = squared_correlation(&pred, &obs).unwrap_or(0.0);
    Ok(fit)
}

fn degenerate_fit(data: &CountDataset, family: CountFamily) -> CountFit {
    let n = data.n();
    let lay = Layout { family, k: data.x.ncols() };
    CountFit {
        family,
        names: data.names.clone(),
        coef: vec![0.0; lay.k],
        se: vec![f64::NAN; lay.k],
        alpha: family.has_dispersion().then_some(1.0),
        inflation: family.inflated().then_some(0.0),
        loglik: 0.0,
        bic: lay.len() as f64 * (n as f64).ln(),
        r2_pred: 0.0,
        n,
        converged: false,
        iterations: 0,
        grad_norm: 0.0,
        degenerate: true,
    }
}

/// Log-likelihood of `data` at given parameters; used for nesting checks.
pub fn loglik_at(data: &CountDataset, family: CountFamily, coef: &[f64], alpha: Option<f64>, inflation: Option<f64>) -> f64 {
    let lay = Layout { family, k: coef.len() };
    let mut theta = DVector::zeros(lay.len());
    theta.rows_mut(0, lay.k).copy_from_slice(coef);
    if let Some(i) = lay.alpha_idx() {
        theta[i] = alpha.unwrap_or(1.0).ln();
    }
    if let Some(i) = lay.zeta_idx() {
        theta[i] = inflation.unwrap_or(0.0);
    }
    loglik_grad(data, lay, &theta, false).0
}

/// Analytic score at the fit's parameters (ln α and inflation logit scale).
pub fn score_at(data: &CountDataset, fit: &CountFit) -> Vec<f64> {
    let lay = Layout { family: fit.family, k: fit.coef.len() };
    let mut theta = DVector::zeros(lay.len());
    theta.rows_mut(0, lay.k).copy_from_slice(&fit.coef);
    if let (Some(i), Some(a)) = (lay.alpha_idx(), fit.alpha) {
        theta[i] = a.ln();
    }
    if let (Some(i), Some(z)) = (lay.zeta_idx(), fit.inflation) {
        theta[i] = z;
    }
    loglik_grad(data, lay, &theta, true).1.iter().copied().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Selection {
    pub best_by_bic: usize,
    pub best_by_r2: usize,
}

/// Indices into `fits` of the minimum-BIC and maximum-r² converged fits.
/// With a holdout, r² is recomputed there. Ties go to the earlier family.
pub fn select_model(fits: &mut [CountFit], holdout: Option<&CountDataset>) -> Result<Selection> {
    if let Some(h) = holdout {
        let obs: Vec<f64> = h.y.iter().map(|&v| v as f64).collect();
        for f in fits.iter_mut() {
            let pred = f.predict_dataset(h)?;
            f.r2_pred = squared_correlation(&pred, &obs).unwrap_or(0.0);
        }
    }
    let ok: Vec<usize> = (0..fits.len()).filter(|&i| fits[i].converged).collect();
    if ok.is_empty() {
        return Err(Error::Numerical("no converged count model".into()));
    }
    let key = |i: usize| (fits[i].family, i);
    let best_by_bic = *ok
        .iter()
        .min_by(|&&a, &&b| fits[a].bic.total_cmp(&fits[b].bic).then(key(a).cmp(&key(b))))
        .unwrap();
    let best_by_r2 = *ok
        .iter()
        .min_by(|&&a, &&b| fits[b].r2_pred.total_cmp(&fits[a].r2_pred).then(key(a).cmp(&key(b))))
        .unwrap();
    Ok(Selection { best_by_bic, best_by_r2 })
}

/// Expected days, clamped to `[0, clamp_max]`. The intercept is supplied
/// implicitly when `const` is absent from `covariates`.
pub fn predict_days(fit: &CountFit, covariates: &BTreeMap<String, f64>, clamp_max: u32) -> Result<f64> {
    let row = fit
        .names
        .iter()
        .map(|n| match covariates.get(n) {
            Some(&v) => Ok(v),
            None if n == CONST => Ok(1.0),
            None => Err(Error::Invalid(format!("missing covariate `{n}`"))),
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(fit.mean(&row).clamp(0.0, clamp_max as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectBy {
    #[default]
    Bic,
    R2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowFit {
    pub window: String,
    pub fit: Option<CountFit>,
    pub flag: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountBattery {
    pub select_by: SelectBy,
    pub windows: Vec<WindowFit>,
}

impl CountBattery {
    pub fn get(&self, window: &str) -> Option<&CountFit> {
        self.windows.iter().find(|w| w.window == window).and_then(|w| w.fit.as_ref())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Label of the two-month window containing `age_months`, e.g. `"6-8"`.
pub fn window_label(age_months: u32) -> String {
    let lo = (age_months / 2) * 2;
    format!("{lo}-{}", lo + 2)
}

fn fit_window(data: &CountDataset, select_by: SelectBy) -> WindowFit {
    let window = data.window_label.clone();
    if data.y.iter().all(|&v| v == 0) && data.n() > data.x.ncols() {
        return WindowFit {
            window,
            fit: Some(degenerate_fit(data, CountFamily::Poisson)),
            flag: Some("degenerate: all counts zero".into()),
        };
    }
    let mut fits = Vec::new();
    let mut errors = Vec::new();
    for fam in CountFamily::ALL {
        match fit_count(data, fam) {
            Ok(f) => fits.push(f),
            Err(e) => errors.push(format!("{fam}: {e}")),
        }
    }
    match select_model(&mut fits, None) {
        Ok(sel) => {
            let i = match select_by {
                SelectBy::Bic => sel.best_by_bic,
                SelectBy::R2 => sel.best_by_r2,
            };
            WindowFit { window, fit: Some(fits.swap_remove(i)), flag: None }
        }
        Err(e) => {
            errors.push(e.to_string());
            WindowFit { window, fit: None, flag: Some(errors.join("; ")) }
        }
    }
}

/// One selected fit per window; windows that cannot be fitted are flagged
/// and the rest proceed. Output order follows the input order.
pub fn fit_window_battery(windows: &[CountDataset], select_by: SelectBy) -> CountBattery {
    let windows = windows.par_iter().map(|d| fit_window(d, select_by)).collect();
    CountBattery { select_by, windows }
}

/// Predicted days with diarrhea over the two-month window ending at each panel
/// measurement, keyed by `(child_id, age_days)`.
///
/// `recall_days` is the reported recall count times `transfer_scale`, which
/// bridges recall windows of different length. Measurements without a report or
/// outside the battery's windows are skipped.
pub fn predict_panel_diarrhea(
    panel: &[ChildObservation],
    battery: &CountBattery,
    transfer_scale: f64,
    clamp_max: u32,
) -> Result<BTreeMap<(String, i64), f64>> {
    if !(transfer_scale.is_finite() && transfer_scale >= 0.0) {
        return Err(Error::Invalid(format!("transfer scale {transfer_scale} must be finite and non-negative")));
    }
    let mut out = BTreeMap::new();
    for obs in panel {
        let Some(reported) = obs.diarrhea_days_reported else { continue };
        let months = (age_month(obs.age_days) - 1).max(0) as u32;
        let Some(fit) = battery.get(&window_label(months)) else { continue };
        let cov = BTreeMap::from([
            (RECALL_DAYS.to_string(), reported * transfer_scale),
            (FEMALE.to_string(), if obs.female { 1.0 } else { 0.0 }),
        ]);
        out.insert((obs.child_id.clone(), obs.age_days), predict_days(fit, &cov, clamp_max)?);
    }
    Ok(out)
}
