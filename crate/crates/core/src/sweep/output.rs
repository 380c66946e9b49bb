use std::collections::BTreeMap;
use std::path::Path;

use super::summary::{FigureRow, SweepSummary};
use super::{SpecResult, SpecStatus, SpecView};
use crate::diagnostics::TestStat;
use crate::error::{Error, Result};

/// Reals are written with 17 significant digits so they reload bit-exactly.
pub fn fmt_real(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt_real(x: Option<f64>) -> String {
    x.map(fmt_real).unwrap_or_default()
}

fn test_fields(t: Option<TestStat>) -> [String; 3] {
    match t {
        Some(t) => [fmt_real(t.stat), t.df.to_string(), fmt_real(t.p)],
        None => Default::default(),
    }
}

/// One row per spec: identification, coefficients with standard errors, diagnostics, status.
pub fn write_specs(path: impl AsRef<Path>, results: &[SpecResult]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    let Some(first) = results.first() else {
        w.flush().map_err(|e| Error::io(path, e))?;
        return Ok(());
    };
    let endog = first.set.model.endogenous_names();
    let mut regressors = endog.clone();
    regressors.extend(crate::ingest::control_names(first.set.country));
    let mut header: Vec<String> = ["id", "status", "n_used", "m", "instruments", "method", "kappa"]
        .map(String::from)
        .to_vec();
    for r in &regressors {
        header.push(format!("coef_{r}"));
        header.push(format!("se_{r}"));
    }
    header.extend(
        ["hj_stat", "hj_df", "hj_p", "underid_stat", "underid_df", "underid_p", "kp_wald_f"].map(String::from),
    );
    header.extend(endog.iter().map(|e| format!("ap_{e}")));
    header.extend(["hausman_stat", "hausman_df", "hausman_p", "dropped_instruments", "message"].map(String::from));
    w.write_record(&header)?;
    for r in results {
        let mut row = vec![
            r.set.id.to_string(),
            r.status.to_string(),
            r.n_used.to_string(),
            r.set.m().to_string(),
            r.set.names.join(";"),
        ];
        match (&r.fit, &r.diagnostics) {
            (Some(fit), Some(d)) => {
                row.push(fit.method.to_string());
                row.push(opt_real(fit.kappa));
                for name in &regressors {
                    row.push(opt_real(fit.coef_of(name)));
                    row.push(opt_real(fit.se_of(name)));
                }
                row.extend(test_fields(d.hansen_j));
                row.extend(test_fields(Some(d.underid)));
                row.push(fmt_real(d.kp_wald_f));
                for e in &endog {
                    row.push(opt_real(d.ap_partial_f.iter().find(|(n, _)| n == e).map(|x| x.1)));
                }
                row.extend(test_fields(Some(d.hausman)));
                row.push(fit.dropped_instruments.join(";"));
            }
            _ => {
                row.resize(header.len() - 1, String::new());
            }
        }
        row.push(r.message.clone().unwrap_or_default());
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// A spec reloaded from `specs.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpecRecord {
    pub id: usize,
    pub status: SpecStatus,
    pub n_used: usize,
    pub instruments: Vec<String>,
    /// Coefficient and standard error by regressor name.
    pub coefs: BTreeMap<String, (f64, f64)>,
    pub kp_wald_f: Option<f64>,
    pub hj_p: Option<f64>,
}

impl SpecView for SpecRecord {
    fn set_id(&self) -> usize {
        self.id
    }
    fn is_ok(&self) -> bool {
        self.status == SpecStatus::Ok
    }
    fn m(&self) -> usize {
        self.instruments.len()
    }
    fn kp_wald_f(&self) -> Option<f64> {
        self.kp_wald_f
    }
    fn hj_p(&self) -> Option<f64> {
        self.hj_p
    }
    fn coef(&self, name: &str) -> Option<f64> {
        self.coefs.get(name).map(|c| c.0)
    }
    fn se(&self, name: &str) -> Option<f64> {
        self.coefs.get(name).map(|c| c.1)
    }
}

pub fn read_specs(path: impl AsRef<Path>) -> Result<Vec<SpecRecord>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(file);
    let header: Vec<String> = rdr.headers()?.iter().map(String::from).collect();
    let col = |name: &str| {
        header.iter().position(|h| h == name).ok_or_else(|| Error::Schema {
            path: path.to_path_buf(),
            expected: format!("column `{name}`"),
            found: header.join(","),
        })
    };
    let (c_id, c_status, c_n, c_inst, c_kp, c_hj) =
        (col("id")?, col("status")?, col("n_used")?, col("instruments")?, col("kp_wald_f")?, col("hj_p")?);
    let coef_cols: Vec<(String, usize, usize)> = header
        .iter()
        .enumerate()
        .filter_map(|(i, h)| h.strip_prefix("coef_").map(|n| (n.to_string(), i)))
        .map(|(n, i)| col(&format!("se_{n}")).map(|j| (n, i, j)))
        .collect::<Result<_>>()?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let get = |i: usize| rec.get(i).unwrap_or("").trim();
        let num = |i: usize| -> Result<Option<f64>> {
            let s = get(i);
            if s.is_empty() {
                return Ok(None);
            }
            s.parse().map(Some).map_err(|_| Error::Field {
                row: line,
                field: header[i].clone(),
                message: format!("cannot parse `{s}`"),
            })
        };
        let mut coefs = BTreeMap::new();
        for (name, i, j) in &coef_cols {
            if let (Some(b), Some(se)) = (num(*i)?, num(*j)?) {
                coefs.insert(name.clone(), (b, se));
            }
        }
        let int = |i: usize| {
            get(i).parse::<usize>().map_err(|_| Error::Field {
                row: line,
                field: header[i].clone(),
                message: "expected an integer".into(),
            })
        };
        out.push(SpecRecord {
            id: int(c_id)?,
            status: get(c_status).parse()?,
            n_used: int(c_n)?,
            instruments: get(c_inst).split(';').filter(|s| !s.is_empty()).map(String::from).collect(),
            coefs,
            kp_wald_f: num(c_kp)?,
            hj_p: num(c_hj)?,
        });
    }
    Ok(out)
}

/// Table blocks per coefficient in display units (`scale` times natural units).
pub fn write_summary(path: impl AsRef<Path>, blocks: &[(String, Vec<SweepSummary>)], scale: f64) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "coefficient", "filter", "n_specs", "p25", "p50", "p75", "pct_sig_pos", "pct_sig_neg", "suppressed",
    ])?;
    for (coef, rows) in blocks {
        for s in rows {
            let shown = |v: Option<f64>, k: f64| if s.suppressed { String::new() } else { opt_real(v.map(|x| x * k)) };
            w.write_record([
                coef.clone(),
                s.filter_label.clone(),
                s.n_specs.to_string(),
                shown(s.p25, scale),
                shown(s.p50, scale),
                shown(s.p75, scale),
                shown(s.pct_sig_pos, 1.0),
                shown(s.pct_sig_neg, 1.0),
                (s.suppressed as u8).to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn write_figure(path: impl AsRef<Path>, blocks: &[(String, Vec<FigureRow>)]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["coefficient", "set_id", "ln_cd", "coef", "ci_low", "ci_high"])?;
    for (coef, rows) in blocks {
        for r in rows {
            w.write_record([
                coef.clone(),
                r.set_id.to_string(),
                fmt_real(r.ln_cd),
                fmt_real(r.coef),
                fmt_real(r.ci_low),
                fmt_real(r.ci_high),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
