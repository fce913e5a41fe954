//! Out-of-sample scoring: average quantile (AVQ) loss, cumulative
//! three-month tables, and exceedance rates.

use std::fmt::Write as _;
use std::path::Path;

use chrono::{Months, NaiveDate};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::quantile::pinball;

/// Mean pinball loss `ρ_τ(actual − pred)`.
pub fn avq_loss(preds: &[f64], actuals: &[f64], tau: f64) -> Result<f64> {
    if preds.len() != actuals.len() {
        return Err(Error::Shape {
            op: "avq_loss",
            left: (preds.len(), 1),
            right: (actuals.len(), 1),
        });
    }
    if preds.is_empty() {
        return Err(Error::InvalidArgument("empty evaluation window".into()));
    }
    let mut total = 0.0;
    for (p, a) in preds.iter().zip(actuals) {
        total += pinball(a - p, tau)?;
    }
    Ok(total / preds.len() as f64)
}

/// Share of dates with `actual < pred`.
pub fn exceedance_rate(preds: &[f64], actuals: &[f64]) -> Result<f64> {
    if preds.len() != actuals.len() {
        return Err(Error::Shape {
            op: "exceedance_rate",
            left: (preds.len(), 1),
            right: (actuals.len(), 1),
        });
    }
    if preds.is_empty() {
        return Ok(0.0);
    }
    let hits = preds.iter().zip(actuals).filter(|(p, a)| a < p).count();
    Ok(hits as f64 / preds.len() as f64)
}

/// One model's predictions, aligned with the table's dates.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelPreds {
    pub name: String,
    pub preds: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossRow {
    /// `"3 months"`, `"6 months"`, … or `"Full Test Period"`.
    pub label: String,
    /// Exclusive calendar end of the window; `None` for the full period.
    pub end: Option<NaiveDate>,
    pub observations: usize,
    /// Unscaled AVQ per model, in model order.
    pub avq: Vec<f64>,
    pub exceedance: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossTable {
    pub tau: f64,
    pub start: NaiveDate,
    pub models: Vec<String>,
    pub rows: Vec<LossRow>,
}

pub const FULL_PERIOD: &str = "Full Test Period";

fn row(
    label: String,
    end: Option<NaiveDate>,
    k: usize,
    models: &[ModelPreds],
    actuals: &[f64],
    tau: f64,
) -> Result<LossRow> {
    let mut avq = Vec::with_capacity(models.len());
    let mut exceedance = Vec::with_capacity(models.len());
    for m in models {
        avq.push(avq_loss(&m.preds[..k], &actuals[..k], tau)?);
        exceedance.push(exceedance_rate(&m.preds[..k], &actuals[..k])?);
    }
    Ok(LossRow {
        label,
        end,
        observations: k,
        avq,
        exceedance,
    })
}

/// Cumulative AVQ over `[start, start + 3k months)` for every `k` whose
/// window lies inside the test period, followed by the full period.
///
/// `dates` must be increasing and start on or after `start`.
pub fn cumulative_table(
    dates: &[NaiveDate],
    models: &[ModelPreds],
    actuals: &[f64],
    tau: f64,
    start: NaiveDate,
    step_months: u32,
) -> Result<LossTable> {
    if dates.is_empty() || dates.len() != actuals.len() {
        return Err(Error::InvalidArgument(
            "dates and actuals must be nonempty and aligned".into(),
        ));
    }
    if models.iter().any(|m| m.preds.len() != dates.len()) {
        return Err(Error::InvalidArgument("model predictions not aligned with dates".into()));
    }
    if dates[0] < start || dates.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument(
            "dates must be increasing and not precede the start".into(),
        ));
    }
    if step_months == 0 {
        return Err(Error::InvalidArgument("step must be positive".into()));
    }
    let last = *dates.last().expect("nonempty");
    let mut rows = Vec::new();
    for k in 1.. {
        let months = step_months * k;
        let end = start
            .checked_add_months(Months::new(months))
            .ok_or_else(|| Error::InvalidArgument("date overflow".into()))?;
        if end.pred_opt().is_none_or(|d| d > last) {
            break;
        }
        let count = dates.partition_point(|d| *d < end);
        if count == 0 {
            continue;
        }
        rows.push(row(format!("{months} months"), Some(end), count, models, actuals, tau)?);
    }
    rows.push(row(FULL_PERIOD.into(), None, dates.len(), models, actuals, tau)?);
    Ok(LossTable {
        tau,
        start,
        models: models.iter().map(|m| m.name.clone()).collect(),
        rows,
    })
}

impl LossTable {
    /// CSV with unscaled values: `horizon, observations`, then
    /// `<model>_avq` and `<model>_exceedance` per model.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["horizon".to_string(), "observations".to_string()];
        for m in &self.models {
            header.push(format!("{m}_avq"));
            header.push(format!("{m}_exceedance"));
        }
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![r.label.clone(), r.observations.to_string()];
            for (a, e) in r.avq.iter().zip(&r.exceedance) {
                rec.push(a.to_string());
                rec.push(e.to_string());
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Aligned text table with AVQ in units of 10⁻² (4 decimals) and the
    /// lowest loss per row marked with `*`.
    pub fn to_text(&self) -> String {
        let label_w = self
            .rows
            .iter()
            .map(|r| r.label.len())
            .max()
            .unwrap_or(0)
            .max("Horizon".len());
        let col_w = self.models.iter().map(|m| m.len()).max().unwrap_or(0).max(9) + 2;
        let mut out = String::new();
        let _ = writeln!(
            out,
            "Cumulative average quantile loss, tau = {} (x 10^-2)",
            self.tau
        );
        let _ = write!(out, "{:<label_w$}", "Horizon");
        for m in &self.models {
            let _ = write!(out, "{m:>col_w$}");
        }
        out.push('\n');
        for r in &self.rows {
            let best = r.avq.iter().copied().fold(f64::INFINITY, f64::min);
            let _ = write!(out, "{:<label_w$}", r.label);
            for a in &r.avq {
                let mark = if *a == best && self.models.len() > 1 { "*" } else { " " };
                let cell = format!("{:.4}{mark}", a * 100.0);
                let _ = write!(out, "{cell:>col_w$}");
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn daily(start: NaiveDate, end_incl: NaiveDate) -> Vec<NaiveDate> {
        start.iter_days().take_while(|d| *d <= end_incl).collect()
    }

    #[test]
    fn avq_examples() {
        let a = [0.1, -0.2, 0.3];
        assert_eq!(avq_loss(&a, &a, 0.05).unwrap(), 0.0);
        let preds: Vec<f64> = a.iter().map(|v| v - 1.0).collect();
        assert!((avq_loss(&preds, &a, 0.05).unwrap() - 0.05).abs() < 1e-15);
        assert!(avq_loss(&[], &[], 0.05).is_err());
    }

    #[test]
    fn exceedance_extremes() {
        let a = [0.1, -0.2, 0.3];
        assert_eq!(exceedance_rate(&[-1e9; 3], &a).unwrap(), 0.0);
        assert_eq!(exceedance_rate(&[1e9; 3], &a).unwrap(), 1.0);
    }

    #[test]
    fn twelve_month_table() {
        let start = NaiveDate::from_ymd_opt(2011, 1, 21).unwrap();
        let dates = daily(start, NaiveDate::from_ymd_opt(2012, 1, 20).unwrap());
        let actuals: Vec<f64> = (0..dates.len()).map(|i| ((i * 13) % 7) as f64 * 0.01).collect();
        let models = vec![ModelPreds {
            name: "m".into(),
            preds: vec![0.0; dates.len()],
        }];
        let table = cumulative_table(&dates, &models, &actuals, 0.05, start, 3).unwrap();
        let labels: Vec<&str> = table.rows.iter().map(|r| r.label.as_str()).collect();
        assert_eq!(
            labels,
            vec!["3 months", "6 months", "9 months", "12 months", FULL_PERIOD]
        );
        assert_eq!(table.rows[3].avq, table.rows[4].avq);
        assert_eq!(
            table.rows[4].avq[0],
            avq_loss(&models[0].preds, &actuals, 0.05).unwrap()
        );
        let text = table.to_text();
        assert!(text.contains("Full Test Period"));
    }

    #[test]
    fn partial_last_quarter_not_labelled() {
        let start = NaiveDate::from_ymd_opt(2011, 1, 1).unwrap();
        let dates = daily(start, NaiveDate::from_ymd_opt(2011, 5, 15).unwrap());
        let actuals = vec![0.0; dates.len()];
        let models = vec![ModelPreds {
            name: "m".into(),
            preds: vec![0.0; dates.len()],
        }];
        let table = cumulative_table(&dates, &models, &actuals, 0.05, start, 3).unwrap();
        assert_eq!(table.rows.len(), 2);
        assert_eq!(table.rows[0].observations, 90);
    }
}
