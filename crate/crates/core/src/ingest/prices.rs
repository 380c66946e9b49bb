use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::median;

pub const PRICE_HEADER: [&str; 8] = ["item", "scope", "year", "month", "price", "quantity", "unit", "store"];

/// Scope of national (country-wide) price series.
pub const NATIONAL: &str = "national";

/// One raw price quote. `month` is absent for annual series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawQuote {
    pub item: String,
    pub scope: String,
    pub year: i32,
    pub month: Option<u32>,
    pub price: f64,
    pub quantity: f64,
    pub unit: String,
    pub store: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSeries {
    pub item: String,
    pub scope: String,
    /// `year * 12 + month - 1`; annual series use January.
    pub month_index: i64,
    /// Currency per 100 g.
    pub unit_price: f64,
}

#[derive(Debug, Clone, Default)]
pub struct PriceOutput {
    pub series: Vec<PriceSeries>,
    pub dropped_nonpositive: usize,
    pub dropped_outliers: usize,
    pub filled_months: usize,
}

pub fn grams_per_unit(unit: &str) -> Option<f64> {
    match unit.trim().to_ascii_lowercase().as_str() {
        "g" | "gram" | "grams" => Some(1.0),
        "100g" => Some(100.0),
        "kg" | "kilo" | "kilogram" => Some(1000.0),
        "lb" | "pound" => Some(453.592_37),
        "oz" | "ounce" => Some(28.349_523_125),
        _ => None,
    }
}

pub fn month_index(year: i32, month: u32) -> i64 {
    year as i64 * 12 + month as i64 - 1
}

/// Normalize to currency per 100 g, drop non-positive quotes and outliers
/// outside `[0.1, 10]` times the item median, average across stores and fill an
/// even month from its two odd neighbours when both exist.
pub fn preprocess_prices(quotes: &[RawQuote]) -> Result<PriceOutput> {
    let mut out = PriceOutput::default();
    let mut normalized: Vec<(&RawQuote, f64)> = Vec::with_capacity(quotes.len());
    for q in quotes {
        let grams = grams_per_unit(&q.unit).ok_or_else(|| Error::UnknownUnit {
            item: q.item.clone(),
            unit: q.unit.clone(),
        })?;
        let per100 = q.price / (q.quantity * grams) * 100.0;
        if !(q.price > 0.0 && q.quantity > 0.0 && per100.is_finite()) {
            out.dropped_nonpositive += 1;
            continue;
        }
        normalized.push((q, per100));
    }
    let mut by_item: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for (q, p) in &normalized {
        by_item.entry(q.item.as_str()).or_default().push(*p);
    }
    let medians: BTreeMap<&str, f64> = by_item
        .iter()
        .map(|(k, v)| (*k, median(v).unwrap_or(f64::NAN)))
        .collect();
    let mut cells: BTreeMap<(String, String, i64), (f64, usize)> = BTreeMap::new();
    for (q, p) in normalized {
        let m = medians[q.item.as_str()];
        if p < 0.1 * m || p > 10.0 * m {
            out.dropped_outliers += 1;
            continue;
        }
        let key = (q.item.clone(), q.scope.clone(), month_index(q.year, q.month.unwrap_or(1)));
        let e = cells.entry(key).or_insert((0.0, 0));
        e.0 += p;
        e.1 += 1;
    }
    let mut averaged: BTreeMap<(String, String, i64), f64> =
        cells.into_iter().map(|(k, (s, c))| (k, s / c as f64)).collect();
    let mut fills = Vec::new();
    for ((item, scope, mi), p) in &averaged {
        // only odd calendar months seed a fill of the following even month
        if (mi.rem_euclid(12) + 1) % 2 == 0 {
            continue;
        }
        let even_key = (item.clone(), scope.clone(), mi + 1);
        if averaged.contains_key(&even_key) {
            continue;
        }
        if let Some(q) = averaged.get(&(item.clone(), scope.clone(), mi + 2)) {
            fills.push((even_key, 0.5 * (p + q)));
        }
    }
    out.filled_months = fills.len();
    averaged.extend(fills);
    out.series = averaged
        .into_iter()
        .map(|((item, scope, month_index), unit_price)| PriceSeries {
            item,
            scope,
            month_index,
            unit_price,
        })
        .collect();
    Ok(out)
}

/// Lookup of preprocessed prices by item, scope and month, plus an optional deflator.
#[derive(Debug, Clone, Default)]
pub struct PriceTable {
    cells: BTreeMap<(String, String, i64), f64>,
    deflator: BTreeMap<i32, f64>,
}

impl PriceTable {
    pub fn new(series: &[PriceSeries], deflator: BTreeMap<i32, f64>) -> Self {
        PriceTable {
            cells: series
                .iter()
                .map(|s| ((s.item.clone(), s.scope.clone(), s.month_index), s.unit_price))
                .collect(),
            deflator,
        }
    }

    pub fn get(&self, item: &str, scope: &str, month_index: i64) -> Option<f64> {
        self.cells
            .get(&(item.to_string(), scope.to_string(), month_index))
            .copied()
    }

    /// Mean national price of `item` over calendar `year`, divided by that year's deflator.
    pub fn national_real(&self, item: &str, year: i32) -> Option<f64> {
        let lo = (item.to_string(), NATIONAL.to_string(), month_index(year, 1));
        let hi = (item.to_string(), NATIONAL.to_string(), month_index(year, 12));
        let vals: Vec<f64> = self.cells.range(lo..=hi).map(|(_, v)| *v).collect();
        if vals.is_empty() {
            return None;
        }
        let nominal = vals.iter().sum::<f64>() / vals.len() as f64;
        let index = if self.deflator.is_empty() {
            1.0
        } else {
            *self.deflator.get(&year)?
        };
        Some(nominal / index)
    }
}

pub fn load_quotes(path: impl AsRef<Path>) -> Result<Vec<RawQuote>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(file);
    let found: Vec<String> = rdr.headers()?.iter().map(|s| s.trim().to_string()).collect();
    if found != PRICE_HEADER {
        return Err(Error::Schema {
            path: path.to_path_buf(),
            expected: PRICE_HEADER.join(","),
            found: found.join(","),
        });
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let field = |i: usize| rec.get(i).unwrap_or("").trim();
        let bad = |i: usize| Error::Field {
            row: line,
            field: PRICE_HEADER[i].to_string(),
            message: format!("cannot parse `{}`", field(i)),
        };
        let num = |i: usize| field(i).parse::<f64>().map_err(|_| bad(i));
        out.push(RawQuote {
            item: field(0).to_string(),
            scope: field(1).to_string(),
            year: field(2).parse().map_err(|_| bad(2))?,
            month: if field(3).is_empty() {
                None
            } else {
                let m: u32 = field(3).parse().map_err(|_| bad(3))?;
                if !(1..=12).contains(&m) {
                    return Err(bad(3));
                }
                Some(m)
            },
            price: num(4)?,
            quantity: num(5)?,
            unit: field(6).to_string(),
            store: field(7).to_string(),
        });
    }
    Ok(out)
}

pub fn write_quotes(path: impl AsRef<Path>, quotes: &[RawQuote]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(PRICE_HEADER)?;
    for q in quotes {
        w.write_record([
            q.item.clone(),
            q.scope.clone(),
            q.year.to_string(),
            q.month.map(|m| m.to_string()).unwrap_or_default(),
            format!("{}", q.price),
            format!("{}", q.quantity),
            q.unit.clone(),
            q.store.clone(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn load_deflator(path: impl AsRef<Path>) -> Result<BTreeMap<i32, f64>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(file);
    let found: Vec<String> = rdr.headers()?.iter().map(|s| s.trim().to_string()).collect();
    if found != ["year", "index"] {
        return Err(Error::Schema {
            path: path.to_path_buf(),
            expected: "year,index".into(),
            found: found.join(","),
        });
    }
    let mut out = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let bad = |f: &str| Error::Field {
            row: line,
            field: f.to_string(),
            message: "cannot parse".into(),
        };
        let year: i32 = rec.get(0).unwrap_or("").trim().parse().map_err(|_| bad("year"))?;
        let index: f64 = rec.get(1).unwrap_or("").trim().parse().map_err(|_| bad("index"))?;
        if !(index > 0.0) {
            return Err(Error::Field {
                row: line,
                field: "index".into(),
                message: "must be positive".into(),
            });
        }
        out.insert(year, index);
    }
    Ok(out)
}

pub fn write_deflator(path: impl AsRef<Path>, deflator: &BTreeMap<i32, f64>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["year", "index"])?;
    for (y, i) in deflator {
        w.write_record([y.to_string(), format!("{i}")])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
