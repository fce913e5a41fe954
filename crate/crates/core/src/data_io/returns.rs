//! Return/macro panel and its CSV form.
//!
//! Header: `date`, one column per ticker, then one `macro:<name>` column per
//! state variable. Dates are ISO-8601. Returns are daily log returns.

use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MACRO_PREFIX: &str = "macro:";

/// Longest run of missing macro values that is forward-filled.
pub const MAX_FORWARD_FILL: usize = 3;

/// Dated `T × J` log returns plus `T × m` macro states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnPanel {
    pub dates: Vec<NaiveDate>,
    pub tickers: Vec<String>,
    pub macro_names: Vec<String>,
    /// One row per date, one column per ticker.
    pub returns: Vec<Vec<f64>>,
    /// One row per date, one column per macro variable.
    pub macros: Vec<Vec<f64>>,
}

impl ReturnPanel {
    pub fn new(
        dates: Vec<NaiveDate>,
        tickers: Vec<String>,
        macro_names: Vec<String>,
        returns: Vec<Vec<f64>>,
        macros: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let panel = Self {
            dates,
            tickers,
            macro_names,
            returns,
            macros,
        };
        panel.validate()?;
        Ok(panel)
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.dates.len();
        if self.returns.len() != t || self.macros.len() != t {
            return Err(Error::InvalidArgument("panel rows do not match dates".into()));
        }
        for (i, w) in self.dates.windows(2).enumerate() {
            if w[1] <= w[0] {
                return Err(Error::NonMonotoneDates { line: i + 3 });
            }
        }
        for (r, m) in self.returns.iter().zip(&self.macros) {
            if r.len() != self.tickers.len() || m.len() != self.macro_names.len() {
                return Err(Error::InvalidArgument("ragged panel row".into()));
            }
            if r.iter().chain(m).any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("return panel"));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn ticker_index(&self, ticker: &str) -> Result<usize> {
        self.tickers
            .iter()
            .position(|t| t == ticker)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown ticker {ticker:?}")))
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.returns.iter().map(|r| r[j]).collect()
    }

    /// Returns of every institution except `j`, in ticker order.
    pub fn others(&self, t: usize, j: usize) -> Vec<f64> {
        self.returns[t]
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != j)
            .map(|(_, v)| *v)
            .collect()
    }

    /// Panel of log returns `ln(P_t / P_{t−1})` from a price panel; the first
    /// date is consumed.
    pub fn from_prices(
        dates: Vec<NaiveDate>,
        tickers: Vec<String>,
        macro_names: Vec<String>,
        prices: Vec<Vec<f64>>,
        macros: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if prices.len() < 2 {
            return Err(Error::InvalidArgument("need at least two price rows".into()));
        }
        let mut returns = Vec::with_capacity(prices.len() - 1);
        for w in prices.windows(2) {
            let row = w[0]
                .iter()
                .zip(&w[1])
                .map(|(p0, p1)| {
                    if *p0 > 0.0 && *p1 > 0.0 {
                        Ok((p1 / p0).ln())
                    } else {
                        Err(Error::InvalidArgument("prices must be positive".into()))
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            returns.push(row);
        }
        Self::new(
            dates[1..].to_vec(),
            tickers,
            macro_names,
            returns,
            macros[1..].to_vec(),
        )
    }
}

/// Panel plus the data lines that were dropped while loading.
#[derive(Debug, Clone)]
pub struct LoadedPanel {
    pub panel: ReturnPanel,
    /// 1-based file line numbers of rows dropped for missing values.
    pub dropped_lines: Vec<usize>,
}

fn parse_cell(raw: &str, row: usize, column: &str) -> Result<Option<f64>> {
    let s = raw.trim();
    if s.is_empty() || s.eq_ignore_ascii_case("na") || s.eq_ignore_ascii_case("nan") {
        return Ok(None);
    }
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(Some(v)),
        _ => Err(Error::Parse {
            row,
            column: column.to_string(),
            value: raw.to_string(),
        }),
    }
}

/// Reads a panel CSV.
///
/// Rows with a missing return are dropped. Missing macro values are carried
/// forward for up to [`MAX_FORWARD_FILL`] consecutive rows, after which the
/// row is dropped. Dropped rows are logged and listed in the result.
pub fn load_returns(path: &Path) -> Result<LoadedPanel> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)?;
    let headers = reader.headers()?.clone();
    if headers.get(0).map(str::trim) != Some("date") {
        return Err(Error::Format {
            path: path.to_path_buf(),
            reason: "first column must be `date`".into(),
        });
    }
    let mut tickers = Vec::new();
    let mut macro_names = Vec::new();
    let mut is_macro = Vec::new();
    for h in headers.iter().skip(1) {
        if let Some(name) = h.strip_prefix(MACRO_PREFIX) {
            macro_names.push(name.to_string());
            is_macro.push(true);
        } else {
            tickers.push(h.to_string());
            is_macro.push(false);
        }
    }

    let mut dates = Vec::new();
    let mut returns = Vec::new();
    let mut macros = Vec::new();
    let mut dropped_lines = Vec::new();
    let mut last_macro: Vec<Option<f64>> = vec![None; macro_names.len()];
    let mut fill_run = vec![0usize; macro_names.len()];

    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let line = i + 2;
        let raw_date = record.get(0).unwrap_or("").trim();
        let date = NaiveDate::parse_from_str(raw_date, "%Y-%m-%d").map_err(|_| Error::Parse {
            row: line,
            column: "date".into(),
            value: raw_date.to_string(),
        })?;
        if let Some(prev) = dates.last() {
            if date <= *prev {
                return Err(Error::NonMonotoneDates { line });
            }
        }
        let mut r = Vec::with_capacity(tickers.len());
        let mut m = Vec::with_capacity(macro_names.len());
        let mut drop = false;
        let mut mi = 0;
        for (c, &macro_col) in is_macro.iter().enumerate() {
            let name = &headers[c + 1];
            let cell = parse_cell(record.get(c + 1).unwrap_or(""), line, name)?;
            if macro_col {
                match cell {
                    Some(v) => {
                        last_macro[mi] = Some(v);
                        fill_run[mi] = 0;
                        m.push(v);
                    }
                    None => match last_macro[mi] {
                        Some(prev) if fill_run[mi] < MAX_FORWARD_FILL => {
                            fill_run[mi] += 1;
                            m.push(prev);
                        }
                        _ => drop = true,
                    },
                }
                mi += 1;
            } else {
                match cell {
                    Some(v) => r.push(v),
                    None => drop = true,
                }
            }
        }
        if drop {
            log::warn!("{}: dropping line {line} with missing values", path.display());
            dropped_lines.push(line);
            continue;
        }
        dates.push(date);
        returns.push(r);
        macros.push(m);
    }
    let panel = ReturnPanel::new(dates, tickers, macro_names, returns, macros)?;
    Ok(LoadedPanel {
        panel,
        dropped_lines,
    })
}

/// Writes the panel in the format read by [`load_returns`]. Values use the
/// shortest representation that parses back to the same `f64`.
pub fn save_returns(panel: &ReturnPanel, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["date".to_string()];
    header.extend(panel.tickers.iter().cloned());
    header.extend(panel.macro_names.iter().map(|m| format!("{MACRO_PREFIX}{m}")));
    w.write_record(&header)?;
    for t in 0..panel.len() {
        let mut row = vec![panel.dates[t].format("%Y-%m-%d").to_string()];
        row.extend(panel.returns[t].iter().map(|v| v.to_string()));
        row.extend(panel.macros[t].iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
