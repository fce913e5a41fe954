//! Two-step estimation: linear quantile VaR on lagged macro states, a
//! CoVaR network trained on raw returns plus news, then VaR plugged in.
//!
//! Macro row `t` of a panel holds `M_t`; the VaR of date `t` is a function
//! of row `t − 1`. The first panel date therefore has no VaR and every
//! series here starts at panel index 1.

use std::fmt;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::data_io::{assemble_window, EmbeddingStore, ReturnPanel, WindowSpec};
use crate::error::{Error, Result};
use crate::numcore::Matrix;
use crate::quantile::{fit_linear_quantile_with_info, LinearQuantileModel, SolverOptions};
use crate::trainer::{self, split_sizes, Sample, TrainConfig, TrainReport};
use crate::transformer::{Features, QuantileNet, TextWindow};

/// Median level used for the ΔCoVaR baseline.
pub const MEDIAN_TAU: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::InvalidArgument(format!("unknown split {other:?}"))),
        }
    }
}

/// Split label of every usable date (panel indices `1..T`).
pub fn split_labels(usable: usize, split: (f64, f64, f64)) -> Result<Vec<Split>> {
    let (a, b, _) = split_sizes(usable, split)?;
    Ok((0..usable)
        .map(|i| {
            if i < a {
                Split::Train
            } else if i < a + b {
                Split::Val
            } else {
                Split::Test
            }
        })
        .collect())
}

/// Fitted VaR regression and its in- and out-of-sample path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarSeries {
    pub ticker: String,
    pub tau: f64,
    pub model: LinearQuantileModel,
    /// `values[i]` is the VaR of panel date `i + 1`.
    pub values: Vec<f64>,
}

/// Lagged macro design `M_{t−1}` for panel dates `1..T`.
pub fn lagged_design(panel: &ReturnPanel) -> Matrix {
    let m = panel.macro_names.len();
    let rows = panel.len().saturating_sub(1);
    let mut x = Matrix::zeros(rows, m);
    for t in 1..panel.len() {
        for (k, v) in panel.macros[t - 1].iter().enumerate() {
            x.set(t - 1, k, *v);
        }
    }
    x
}

/// VaR series for every (institution, τ). Each regression is fitted on the
/// training split of the usable dates and evaluated on all of them.
pub fn estimate_var_all(
    panel: &ReturnPanel,
    taus: &[f64],
    split: (f64, f64, f64),
    opts: &SolverOptions,
) -> Result<Vec<VarSeries>> {
    if panel.macro_names.is_empty() {
        return Err(Error::InvalidArgument("VaR regression needs macro columns".into()));
    }
    let usable = panel.len().saturating_sub(1);
    let (n_train, _, _) = split_sizes(usable, split)?;
    let x = lagged_design(panel);
    let x_train = Matrix::from_rows(&(0..n_train).map(|i| x.row(i).to_vec()).collect::<Vec<_>>())?;
    let mut out = Vec::with_capacity(panel.tickers.len() * taus.len());
    for (j, ticker) in panel.tickers.iter().enumerate() {
        let y: Vec<f64> = (1..panel.len()).map(|t| panel.returns[t][j]).collect();
        for &tau in taus {
            let (model, info) = fit_linear_quantile_with_info(&x_train, &y[..n_train], tau, opts)?;
            log::debug!(
                "VaR {ticker} tau={tau}: objective {:.6e} after {} iterations",
                info.objective,
                info.iterations
            );
            let values = (0..usable)
                .map(|i| model.predict_var(x.row(i)))
                .collect::<Result<Vec<_>>>()?;
            out.push(VarSeries {
                ticker: ticker.clone(),
                tau,
                model,
                values,
            });
        }
    }
    Ok(out)
}

pub fn find_var<'a>(series: &'a [VarSeries], ticker: &str, tau: f64) -> Result<&'a VarSeries> {
    series
        .iter()
        .find(|s| s.ticker == ticker && s.tau == tau)
        .ok_or_else(|| Error::InvalidArgument(format!("no VaR series for {ticker} at tau={tau}")))
}

/// Dates on which VaR at a lower level exceeds VaR at a higher level, summed
/// over institutions and adjacent level pairs.
pub fn quantile_crossings(series: &[VarSeries]) -> usize {
    let mut tickers: Vec<&str> = series.iter().map(|s| s.ticker.as_str()).collect();
    tickers.dedup();
    let mut count = 0;
    for ticker in tickers {
        let mut mine: Vec<&VarSeries> = series.iter().filter(|s| s.ticker == ticker).collect();
        mine.sort_by(|a, b| a.tau.total_cmp(&b.tau));
        for pair in mine.windows(2) {
            count += pair[0]
                .values
                .iter()
                .zip(&pair[1].values)
                .filter(|(lo, hi)| lo > hi)
                .count();
        }
    }
    count
}

/// Position-encoded news window at panel index `t`.
pub fn text_window(
    panel: &ReturnPanel,
    store: &EmbeddingStore,
    t: usize,
    spec: &WindowSpec,
) -> Result<TextWindow> {
    assemble_window(store, &panel.dates, t, spec)
        .window
        .with_positional_encoding()
}

/// Training samples `((R_{−j,t}, E_{j,t}), R_{j,t})` for panel dates `1..T`.
pub fn covar_samples(
    panel: &ReturnPanel,
    store: &EmbeddingStore,
    j: usize,
    spec: &WindowSpec,
) -> Result<Vec<Sample>> {
    (1..panel.len())
        .map(|t| {
            Ok(Sample {
                date: panel.dates[t],
                features: Features {
                    returns: panel.others(t, j),
                    text: text_window(panel, store, t, spec)?,
                    aux: Vec::new(),
                },
                target: panel.returns[t][j],
            })
        })
        .collect()
}

/// Trains the CoVaR network on the train/validation part of `samples`.
pub fn fit_covar_model<M: QuantileNet>(
    init: &M,
    samples: &[Sample],
    cfg: &TrainConfig,
) -> Result<(M, TrainReport)> {
    let (train, val, _) = trainer::split_chronological(samples, cfg.split)?;
    trainer::train(init, train, val, cfg)
}

/// `CoVaR = f̂(VaR̂_{−j,t}, E_{j,t})`.
pub fn predict_covar<M: QuantileNet>(model: &M, var_hat: &[f64], text: &TextWindow) -> Result<f64> {
    model.predict(&Features {
        returns: var_hat.to_vec(),
        text: text.clone(),
        aux: Vec::new(),
    })
}

/// `f̂(VaR^τ, E) − f̂(VaR^{0.5}, E)`.
pub fn delta_covar<M: QuantileNet>(
    model: &M,
    var_tau: &[f64],
    var_median: &[f64],
    text: &TextWindow,
) -> Result<f64> {
    if var_tau.len() != var_median.len() {
        return Err(Error::Shape {
            op: "delta_covar",
            left: (var_tau.len(), 1),
            right: (var_median.len(), 1),
        });
    }
    Ok(predict_covar(model, var_tau, text)? - predict_covar(model, var_median, text)?)
}

/// VaR of every institution except `j` at usable index `i`, in ticker order.
pub fn others_var(series: &[VarSeries], panel: &ReturnPanel, j: usize, tau: f64, i: usize) -> Result<Vec<f64>> {
    panel
        .tickers
        .iter()
        .enumerate()
        .filter(|(k, _)| *k != j)
        .map(|(_, ticker)| Ok(find_var(series, ticker, tau)?.values[i]))
        .collect()
}

/// One line of the risk-series CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskRow {
    pub date: NaiveDate,
    pub ticker: String,
    pub tau: f64,
    pub var: f64,
    pub covar: Option<f64>,
    pub delta_covar: Option<f64>,
    pub split: Split,
}

/// CoVaR and ΔCoVaR of institution `j` on every usable date, with its own
/// VaR alongside. `var_series` must contain every institution at `tau` and
/// at [`MEDIAN_TAU`].
pub fn covar_series<M: QuantileNet>(
    model: &M,
    panel: &ReturnPanel,
    store: &EmbeddingStore,
    j: usize,
    tau: f64,
    var_series: &[VarSeries],
    spec: &WindowSpec,
    split: (f64, f64, f64),
) -> Result<Vec<RiskRow>> {
    let usable = panel.len().saturating_sub(1);
    let labels = split_labels(usable, split)?;
    let own = find_var(var_series, &panel.tickers[j], tau)?;
    let mut rows = Vec::with_capacity(usable);
    for i in 0..usable {
        let t = i + 1;
        let text = text_window(panel, store, t, spec)?;
        let v_tau = others_var(var_series, panel, j, tau, i)?;
        let v_med = others_var(var_series, panel, j, MEDIAN_TAU, i)?;
        let covar = predict_covar(model, &v_tau, &text)?;
        let median = predict_covar(model, &v_med, &text)?;
        rows.push(RiskRow {
            date: panel.dates[t],
            ticker: panel.tickers[j].clone(),
            tau,
            var: own.values[i],
            covar: Some(covar),
            delta_covar: Some(covar - median),
            split: labels[i],
        });
    }
    Ok(rows)
}

/// VaR-only rows for every institution at level `tau`.
pub fn var_rows(
    panel: &ReturnPanel,
    var_series: &[VarSeries],
    tau: f64,
    split: (f64, f64, f64),
) -> Result<Vec<RiskRow>> {
    let labels = split_labels(panel.len().saturating_sub(1), split)?;
    let mut rows = Vec::new();
    for s in var_series.iter().filter(|s| s.tau == tau) {
        for (i, v) in s.values.iter().enumerate() {
            rows.push(RiskRow {
                date: panel.dates[i + 1],
                ticker: s.ticker.clone(),
                tau,
                var: *v,
                covar: None,
                delta_covar: None,
                split: labels[i],
            });
        }
    }
    Ok(rows)
}

const RISK_HEADER: [&str; 7] = ["date", "ticker", "tau", "var", "covar", "delta_covar", "split"];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn save_risk_csv(rows: &[RiskRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(RISK_HEADER)?;
    for r in rows {
        w.write_record([
            r.date.format("%Y-%m-%d").to_string(),
            r.ticker.clone(),
            r.tau.to_string(),
            r.var.to_string(),
            opt(r.covar),
            opt(r.delta_covar),
            r.split.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_risk_csv(path: &Path) -> Result<Vec<RiskRow>> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != RISK_HEADER {
        return Err(Error::Format {
            path: path.to_path_buf(),
            reason: format!("expected header {}", RISK_HEADER.join(",")),
        });
    }
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let num = |c: usize| -> Result<Option<f64>> {
            let raw = &rec[c];
            if raw.is_empty() {
                return Ok(None);
            }
            raw.parse().map(Some).map_err(|_| Error::Parse {
                row: line,
                column: RISK_HEADER[c].into(),
                value: raw.into(),
            })
        };
        let required = |c: usize| -> Result<f64> {
            num(c)?.ok_or_else(|| Error::Parse {
                row: line,
                column: RISK_HEADER[c].into(),
                value: String::new(),
            })
        };
        let date = NaiveDate::parse_from_str(&rec[0], "%Y-%m-%d").map_err(|_| Error::Parse {
            row: line,
            column: "date".into(),
            value: rec[0].into(),
        })?;
        rows.push(RiskRow {
            date,
            ticker: rec[1].to_string(),
            tau: required(2)?,
            var: required(3)?,
            covar: num(4)?,
            delta_covar: num(5)?,
            split: rec[6].parse()?,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulation::business_days;
    use crate::transformer::ReturnsMlp;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn affine(slopes: &[f64], c: f64) -> ReturnsMlp {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut m = ReturnsMlp::init(slopes.len(), 1, 0, &mut rng);
        m.mlp.weights[0] = Matrix::from_rows(&[slopes.to_vec()]).unwrap();
        m.mlp.biases[0] = Matrix::scalar(c);
        m
    }

    #[test]
    fn affine_plug_in_and_delta() {
        let s = [0.5, -1.5, 2.0];
        let model = affine(&s, 0.1);
        let text = TextWindow::empty(2, 3);
        let v = [-0.2, -0.1, -0.3];
        let m = [0.01, 0.0, -0.02];
        let expected = 0.1 + s.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>();
        assert!((predict_covar(&model, &v, &text).unwrap() - expected).abs() < 1e-15);
        let d = delta_covar(&model, &v, &m, &text).unwrap();
        let expected: f64 = s.iter().zip(v.iter().zip(&m)).map(|(a, (x, y))| a * (x - y)).sum();
        assert!((d - expected).abs() < 1e-14);
        assert_eq!(delta_covar(&model, &v, &v, &text).unwrap(), 0.0);
        assert!(predict_covar(&model, &v[..2], &text).is_err());
    }

    #[test]
    fn identical_columns_give_identical_var() {
        let dates = business_days(NaiveDate::from_ymd_opt(2020, 1, 1).unwrap(), 60);
        let returns: Vec<Vec<f64>> = (0..60)
            .map(|i| {
                let r = ((i * 17) % 13) as f64 / 100.0 - 0.06;
                vec![r, r]
            })
            .collect();
        let macros: Vec<Vec<f64>> = (0..60).map(|i| vec![((i * 7) % 5) as f64]).collect();
        let panel = ReturnPanel::new(dates, vec!["A".into(), "B".into()], vec!["m".into()], returns, macros)
            .unwrap();
        let series = estimate_var_all(&panel, &[0.05], (0.4, 0.2, 0.4), &SolverOptions::default()).unwrap();
        assert_eq!(series[0].values, series[1].values);
        assert_eq!(series[0].values.len(), 59);
    }

    #[test]
    fn split_labels_follow_floor_sizes() {
        let labels = split_labels(10, (0.4, 0.2, 0.4)).unwrap();
        assert_eq!(labels.iter().filter(|s| **s == Split::Train).count(), 4);
        assert_eq!(labels.iter().filter(|s| **s == Split::Val).count(), 2);
        assert_eq!(labels[9], Split::Test);
    }

    #[test]
    fn risk_csv_round_trip() {
        let rows = vec![
            RiskRow {
                date: NaiveDate::from_ymd_opt(2020, 1, 2).unwrap(),
                ticker: "GS".into(),
                tau: 0.05,
                var: -0.031_234_567_891_234,
                covar: Some(-0.05),
                delta_covar: Some(-0.02),
                split: Split::Test,
            },
            RiskRow {
                date: NaiveDate::from_ymd_opt(2020, 1, 2).unwrap(),
                ticker: "JPM".into(),
                tau: 0.05,
                var: -0.02,
                covar: None,
                delta_covar: None,
                split: Split::Train,
            },
        ];
        let f = tempfile::NamedTempFile::new().unwrap();
        save_risk_csv(&rows, f.path()).unwrap();
        assert_eq!(load_risk_csv(f.path()).unwrap(), rows);
    }
}
