use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::Country;
use crate::error::{Error, Result};

pub const PANEL_HEADER: [&str; 17] = [
    "child_id",
    "community_id",
    "age_days",
    "height_cm",
    "weight_g",
    "protein_g_day",
    "nonprotein_kcal_day",
    "suppl_protein_kcal",
    "suppl_nonprotein_kcal",
    "breastfed",
    "diar_days",
    "diar_window_days",
    "female",
    "birth_order",
    "birth_year",
    "atole",
    "distance_km",
];

const KCAL_PER_GRAM_PROTEIN: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntakeFlag {
    Observed,
    Imputed,
    Missing,
}

/// One anthropometric measurement with its intakes and covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChildObservation {
    pub child_id: String,
    pub community_id: String,
    pub age_days: i64,
    pub height_cm: f64,
    pub weight_g: f64,
    /// Daily protein intake in kcal.
    pub protein_kcal_day: Option<f64>,
    pub nonprotein_kcal_day: Option<f64>,
    /// Supplement totals over the period ending at this measurement.
    pub supplement_protein_kcal: f64,
    pub supplement_nonprotein_kcal: f64,
    pub breastfed_last_month: bool,
    /// Days with diarrhea across the recall windows covered by `reporting_window_days`.
    pub diarrhea_days_reported: Option<f64>,
    pub reporting_window_days: u32,
    pub female: bool,
    pub birth_order: u32,
    pub birth_year: i32,
    pub atole_village: bool,
    pub distance_to_center: Option<f64>,
    pub intake_flag: IntakeFlag,
}

struct Row<'a> {
    rec: &'a csv::StringRecord,
    line: u64,
}

impl Row<'_> {
    fn raw(&self, i: usize) -> &str {
        self.rec.get(i).unwrap_or("").trim()
    }

    fn err(&self, i: usize, message: impl Into<String>) -> Error {
        Error::Field {
            row: self.line,
            field: PANEL_HEADER[i].to_string(),
            message: message.into(),
        }
    }

    fn opt<T: std::str::FromStr>(&self, i: usize) -> Result<Option<T>> {
        let s = self.raw(i);
        if s.is_empty() {
            return Ok(None);
        }
        s.parse()
            .map(Some)
            .map_err(|_| self.err(i, format!("cannot parse `{s}`")))
    }

    fn req<T: std::str::FromStr>(&self, i: usize) -> Result<T> {
        self.opt(i)?.ok_or_else(|| self.err(i, "missing value"))
    }

    fn real(&self, i: usize) -> Result<Option<f64>> {
        match self.opt::<f64>(i)? {
            Some(v) if !v.is_finite() => Err(self.err(i, "non-finite value")),
            v => Ok(v),
        }
    }

    fn flag(&self, i: usize) -> Result<bool> {
        match self.raw(i).to_ascii_lowercase().as_str() {
            "1" | "true" => Ok(true),
            "0" | "false" => Ok(false),
            "" => Err(self.err(i, "missing value")),
            s => Err(self.err(i, format!("expected 0/1, found `{s}`"))),
        }
    }

    fn non_negative(&self, i: usize, v: Option<f64>) -> Result<Option<f64>> {
        match v {
            Some(x) if x < 0.0 => Err(self.err(i, format!("must be non-negative, found {x}"))),
            v => Ok(v),
        }
    }
}

fn parse_row(row: &Row<'_>, country: Country) -> Result<ChildObservation> {
    let height = row.real(3)?.ok_or_else(|| row.err(3, "missing value"))?;
    if height <= 0.0 {
        return Err(row.err(3, format!("must be positive, found {height}")));
    }
    let weight = row.real(4)?.ok_or_else(|| row.err(4, "missing value"))?;
    if weight <= 0.0 {
        return Err(row.err(4, format!("must be positive, found {weight}")));
    }
    let protein = row.non_negative(5, row.real(5)?)?;
    let nonprotein = row.non_negative(6, row.real(6)?)?;
    let (sp, snp) = match country {
        Country::Guatemala => (
            row.non_negative(7, row.real(7)?)?.unwrap_or(0.0),
            row.non_negative(8, row.real(8)?)?.unwrap_or(0.0),
        ),
        Country::Philippines => (0.0, 0.0),
    };
    let window: u32 = row
        .opt(11)?
        .unwrap_or_else(|| country.diarrhea_window_days());
    if window == 0 {
        return Err(row.err(11, "must be positive"));
    }
    let diar = row.non_negative(10, row.real(10)?)?;
    if let Some(dd) = diar {
        if dd > window as f64 {
            return Err(row.err(10, format!("{dd} exceeds the {window}-day window")));
        }
    }
    let distance = row.non_negative(16, row.real(16)?)?;
    let flag = if protein.is_some() && nonprotein.is_some() {
        IntakeFlag::Observed
    } else {
        IntakeFlag::Missing
    };
    let child_id: String = row.req(0)?;
    let community_id: String = row.req(1)?;
    Ok(ChildObservation {
        child_id,
        community_id,
        age_days: row.req(2)?,
        height_cm: height,
        weight_g: weight,
        protein_kcal_day: protein.map(|g| g * KCAL_PER_GRAM_PROTEIN),
        nonprotein_kcal_day: nonprotein,
        supplement_protein_kcal: sp,
        supplement_nonprotein_kcal: snp,
        breastfed_last_month: row.flag(9)?,
        diarrhea_days_reported: diar,
        reporting_window_days: window,
        female: row.flag(12)?,
        birth_order: row.req(13)?,
        birth_year: row.req(14)?,
        atole_village: row.flag(15)?,
        distance_to_center: distance,
        intake_flag: flag,
    })
}

/// Read and validate a panel CSV. Rows are returned sorted by `(child_id, age_days)`.
pub fn load_panel(path: impl AsRef<Path>, country: Country) -> Result<Vec<ChildObservation>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().flexible(false).from_reader(file);
    let header = rdr.headers()?.clone();
    let found: Vec<&str> = header.iter().map(str::trim).collect();
    if found != PANEL_HEADER {
        return Err(Error::Schema {
            path: path.to_path_buf(),
            expected: PANEL_HEADER.join(","),
            found: found.join(","),
        });
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        out.push(parse_row(&Row { rec: &rec, line }, country)?);
    }
    out.sort_by(|a, b| (&a.child_id, a.age_days).cmp(&(&b.child_id, b.age_days)));
    let mut seen = HashSet::new();
    for o in &out {
        if !seen.insert((o.child_id.as_str(), o.age_days)) {
            return Err(Error::DuplicateObservation {
                child: o.child_id.clone(),
                age_days: o.age_days,
            });
        }
    }
    Ok(out)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

/// Write observations in the panel CSV schema (protein back in grams).
pub fn write_panel(path: impl AsRef<Path>, rows: &[ChildObservation]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(PANEL_HEADER)?;
    for o in rows {
        let b = |v: bool| if v { "1" } else { "0" }.to_string();
        w.write_record([
            o.child_id.clone(),
            o.community_id.clone(),
            o.age_days.to_string(),
            format!("{}", o.height_cm),
            format!("{}", o.weight_g),
            fmt_opt(o.protein_kcal_day.map(|k| k / KCAL_PER_GRAM_PROTEIN)),
            fmt_opt(o.nonprotein_kcal_day),
            format!("{}", o.supplement_protein_kcal),
            format!("{}", o.supplement_nonprotein_kcal),
            b(o.breastfed_last_month),
            fmt_opt(o.diarrhea_days_reported),
            o.reporting_window_days.to_string(),
            b(o.female),
            o.birth_order.to_string(),
            o.birth_year.to_string(),
            b(o.atole_village),
            fmt_opt(o.distance_to_center),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
