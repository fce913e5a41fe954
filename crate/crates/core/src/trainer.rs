//! Mini-batch SGD on the pinball loss with a chronological split, a
//! learning-rate × batch-size grid, and early stopping on validation loss.

use std::io::Write;
use std::path::Path;

use chrono::NaiveDate;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::{grad, Matrix};
use crate::quantile::{check_tau, pinball};
use crate::transformer::{Features, QuantileNet};

/// Environment variable capping the worker threads of a parallel grid.
pub const THREADS_ENV: &str = "COVARLAB_THREADS";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub tau: f64,
    pub lr_grid: Vec<f64>,
    pub batch_grid: Vec<usize>,
    pub max_epochs: usize,
    pub patience: usize,
    /// Train, validation, test fractions.
    pub split: (f64, f64, f64),
    pub seed: u64,
    /// Heavy-ball coefficient; 0 is plain SGD.
    pub momentum: f64,
    /// Train grid cells concurrently.
    pub parallel: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            tau: 0.05,
            lr_grid: vec![0.00015, 0.0015, 0.015],
            batch_grid: vec![32, 64, 128],
            max_epochs: 200,
            patience: 50,
            split: (0.4, 0.2, 0.4),
            seed: 0,
            momentum: 0.0,
            parallel: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        check_tau(self.tau)?;
        let (a, b, c) = self.split;
        if [a, b, c].iter().any(|f| !(0.0..=1.0).contains(f)) || ((a + b + c) - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "split fractions must be in [0, 1] and sum to 1, got {:?}",
                self.split
            )));
        }
        if self.patience >= self.max_epochs {
            return Err(Error::InvalidArgument(
                "patience must be smaller than max_epochs".into(),
            ));
        }
        if self.lr_grid.is_empty() || self.batch_grid.is_empty() {
            return Err(Error::InvalidArgument("empty hyperparameter grid".into()));
        }
        if self.lr_grid.iter().any(|lr| !(*lr > 0.0) || !lr.is_finite())
            || self.batch_grid.contains(&0)
        {
            return Err(Error::InvalidArgument(
                "learning rates and batch sizes must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidArgument("momentum must be in [0, 1)".into()));
        }
        Ok(())
    }
}

/// One dated training example: inputs known at `date` and the return being
/// modelled.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub date: NaiveDate,
    pub features: Features,
    pub target: f64,
}

/// Sizes `(⌊a·T⌋, ⌊b·T⌋, rest)` of a chronological split.
pub fn split_sizes(t: usize, split: (f64, f64, f64)) -> Result<(usize, usize, usize)> {
    if t < 10 {
        return Err(Error::InvalidArgument(format!(
            "need at least 10 samples to split, got {t}"
        )));
    }
    let train = (split.0 * t as f64).floor() as usize;
    let val = (split.1 * t as f64).floor() as usize;
    Ok((train, val, t - train - val))
}

/// Contiguous train/validation/test segments of date-sorted items.
pub fn split_chronological<T>(items: &[T], split: (f64, f64, f64)) -> Result<(&[T], &[T], &[T])> {
    let (a, b, _) = split_sizes(items.len(), split)?;
    Ok((&items[..a], &items[a..a + b], &items[a + b..]))
}

/// Patience counter: stop once `patience` consecutive epochs fail to beat
/// the best validation loss.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: usize,
    since_best: usize,
    epoch: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            since_best: 0,
            epoch: 0,
        }
    }

    /// Records one epoch's validation loss. Returns `true` when training
    /// should stop after this epoch.
    pub fn update(&mut self, val_loss: f64) -> bool {
        self.epoch += 1;
        if val_loss < self.best {
            self.best = val_loss;
            self.best_epoch = self.epoch;
            self.since_best = 0;
        } else {
            self.since_best += 1;
        }
        self.since_best >= self.patience
    }

    pub fn improved_last(&self) -> bool {
        self.best_epoch == self.epoch
    }

    pub fn best(&self) -> f64 {
        self.best
    }

    /// 1-based epoch of the best loss so far (0 before any update).
    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub lr: f64,
    pub batch: usize,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    /// Reason the cell was abandoned, if it was.
    pub failed: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub seed: u64,
    pub tau: f64,
    pub cells: Vec<CellReport>,
    /// Index into `cells` of the selected configuration.
    pub chosen: usize,
    /// Where the selected weights were written, when they were.
    pub checkpoint: Option<String>,
}

impl TrainReport {
    pub fn chosen_cell(&self) -> &CellReport {
        &self.cells[self.chosen]
    }

    /// One JSON object per (cell, epoch, split) with fields
    /// `lr, batch, epoch, split, loss`.
    pub fn write_jsonl(&self, w: &mut impl Write) -> Result<()> {
        #[derive(Serialize)]
        struct Line<'a> {
            lr: f64,
            batch: usize,
            epoch: usize,
            split: &'a str,
            loss: f64,
        }
        for cell in &self.cells {
            for e in &cell.epochs {
                for (split, loss) in [("train", e.train_loss), ("val", e.val_loss)] {
                    let line = Line {
                        lr: cell.lr,
                        batch: cell.batch,
                        epoch: e.epoch,
                        split,
                        loss,
                    };
                    serde_json::to_writer(&mut *w, &line)?;
                    w.write_all(b"\n")?;
                }
            }
        }
        Ok(())
    }

    pub fn save_jsonl(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf)?;
        std::fs::write(path, buf)?;
        Ok(())
    }
}

/// Mean pinball loss of `model` over `samples`.
pub fn mean_loss<M: QuantileNet>(model: &M, samples: &[Sample], tau: f64) -> Result<f64> {
    let mut total = 0.0;
    for s in samples {
        total += pinball(s.target - model.predict(&s.features)?, tau)?;
    }
    Ok(total / samples.len() as f64)
}

/// Mean pinball loss over `batch` and its gradient with respect to every
/// parameter of `model`.
pub fn batch_gradient<M: QuantileNet>(
    model: &M,
    batch: &[&Sample],
    tau: f64,
) -> Result<(f64, Vec<Matrix>)> {
    let params = model.params();
    let g = grad(&params, |tape, vars| {
        let mut losses = Vec::with_capacity(batch.len());
        for s in batch {
            let pred = model.forward(tape, vars, &s.features)?;
            losses.push(tape.pinball(pred, Matrix::scalar(s.target), tau)?);
        }
        let total = tape.add_all(&losses)?;
        Ok(tape.scale(total, 1.0 / batch.len() as f64))
    })?;
    Ok((g.loss, g.grads))
}

/// One plain SGD step on `batch`; returns the loss before the step.
pub fn sgd_step<M: QuantileNet>(model: &mut M, batch: &[&Sample], tau: f64, lr: f64) -> Result<f64> {
    let (loss, grads) = batch_gradient(model, batch, tau)?;
    for (p, g) in model.params_mut().into_iter().zip(&grads) {
        p.axpy_sub(lr, g);
    }
    Ok(loss)
}

struct CellOutcome<M> {
    report: CellReport,
    model: Option<M>,
}

fn cell_seed(seed: u64, cell: usize) -> u64 {
    seed.wrapping_add((cell as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn train_cell<M: QuantileNet>(
    init: &M,
    train: &[Sample],
    val: &[Sample],
    cfg: &TrainConfig,
    lr: f64,
    batch: usize,
    seed: u64,
) -> CellOutcome<M> {
    let mut model = init.clone();
    let mut best = None;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut velocity: Vec<Matrix> = model
        .params()
        .iter()
        .map(|p| Matrix::zeros(p.rows(), p.cols()))
        .collect();
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut report = CellReport {
        lr,
        batch,
        epochs: Vec::new(),
        best_epoch: 0,
        best_val_loss: f64::INFINITY,
        failed: None,
    };

    let fail = |mut report: CellReport, reason: String| {
        log::warn!("grid cell lr={lr} batch={batch} failed: {reason}");
        report.failed = Some(reason);
        CellOutcome {
            report,
            model: None,
        }
    };

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut train_total = 0.0;
        for chunk in order.chunks(batch) {
            let samples: Vec<&Sample> = chunk.iter().map(|&i| &train[i]).collect();
            let (loss, grads) = match batch_gradient(&model, &samples, cfg.tau) {
                Ok(v) => v,
                Err(e) => return fail(report, e.to_string()),
            };
            if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
                return fail(report, format!("non-finite loss at epoch {epoch}"));
            }
            train_total += loss * chunk.len() as f64;
            for ((p, g), v) in model.params_mut().into_iter().zip(&grads).zip(&mut velocity) {
                if cfg.momentum > 0.0 {
                    *v = v.scale(cfg.momentum);
                    v.add_assign(g);
                    p.axpy_sub(lr, v);
                } else {
                    p.axpy_sub(lr, g);
                }
            }
        }
        let val_loss = match mean_loss(&model, val, cfg.tau) {
            Ok(v) if v.is_finite() => v,
            Ok(_) => return fail(report, format!("non-finite validation loss at epoch {epoch}")),
            Err(e) => return fail(report, e.to_string()),
        };
        report.epochs.push(EpochRecord {
            epoch,
            train_loss: train_total / train.len() as f64,
            val_loss,
        });
        let stop = stopper.update(val_loss);
        if stopper.improved_last() {
            best = Some(model.clone());
        }
        if stop {
            break;
        }
    }
    report.best_epoch = stopper.best_epoch();
    report.best_val_loss = stopper.best();
    log::debug!(
        "cell lr={lr} batch={batch}: best val {:.6} at epoch {} of {}",
        report.best_val_loss,
        report.best_epoch,
        report.epochs.len()
    );
    CellOutcome {
        report,
        model: best,
    }
}

fn thread_cap() -> Option<usize> {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|n| *n > 0)
}

/// Trains one copy of `init` per grid cell and keeps the weights with the
/// lowest validation loss at their best epoch. Ties go to the earlier cell
/// in `lr_grid × batch_grid` order.
pub fn train<M: QuantileNet>(
    init: &M,
    train: &[Sample],
    val: &[Sample],
    cfg: &TrainConfig,
) -> Result<(M, TrainReport)> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::InvalidArgument(
            "training and validation sets must be nonempty".into(),
        ));
    }
    let cells: Vec<(usize, f64, usize)> = cfg
        .lr_grid
        .iter()
        .flat_map(|&lr| cfg.batch_grid.iter().map(move |&b| (lr, b)))
        .enumerate()
        .map(|(i, (lr, b))| (i, lr, b))
        .collect();
    let run = |&(i, lr, b): &(usize, f64, usize)| {
        train_cell(init, train, val, cfg, lr, b, cell_seed(cfg.seed, i))
    };
    let outcomes: Vec<CellOutcome<M>> = if cfg.parallel {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(n) = thread_cap() {
            builder = builder.num_threads(n);
        }
        let pool = builder
            .build()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
        pool.install(|| cells.par_iter().map(run).collect())
    } else {
        cells.iter().map(run).collect()
    };

    let mut chosen: Option<usize> = None;
    for (i, o) in outcomes.iter().enumerate() {
        if o.model.is_none() {
            continue;
        }
        if chosen.is_none_or(|c| o.report.best_val_loss < outcomes[c].report.best_val_loss) {
            chosen = Some(i);
        }
    }
    let chosen = chosen.ok_or(Error::AllCellsFailed)?;
    let mut reports = Vec::with_capacity(outcomes.len());
    let mut model = None;
    for (i, o) in outcomes.into_iter().enumerate() {
        if i == chosen {
            model = o.model;
        }
        reports.push(o.report);
    }
    let report = TrainReport {
        seed: cfg.seed,
        tau: cfg.tau,
        cells: reports,
        chosen,
        checkpoint: None,
    };
    Ok((model.expect("chosen cell has weights"), report))
}

/// Inputs for one prediction date; `features` is `None` when something the
/// model needs is unavailable.
#[derive(Debug, Clone, PartialEq)]
pub struct DatedInput {
    pub date: NaiveDate,
    pub features: Option<Features>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Rollout {
    pub predictions: Vec<(NaiveDate, f64)>,
    pub skipped: Vec<NaiveDate>,
}

/// One-step-ahead predictions with fixed weights. Each date is evaluated
/// independently; dates without inputs are skipped and listed.
pub fn rolling_predict<M: QuantileNet>(model: &M, inputs: &[DatedInput]) -> Result<Rollout> {
    let mut out = Rollout::default();
    for input in inputs {
        match &input.features {
            Some(f) => out.predictions.push((input.date, model.predict(f)?)),
            None => {
                log::warn!("no inputs for {}; skipped", input.date);
                out.skipped.push(input.date);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transformer::{ReturnsMlp, TextWindow};

    fn date(i: usize) -> NaiveDate {
        NaiveDate::from_ymd_opt(2020, 1, 1).unwrap() + chrono::Duration::days(i as i64)
    }

    fn sample(i: usize, x: f64, y: f64) -> Sample {
        Sample {
            date: date(i),
            features: Features {
                returns: vec![x],
                text: TextWindow::empty(1, 1),
                aux: vec![],
            },
            target: y,
        }
    }

    /// Single-layer MLP: `w·x + b`.
    fn linear(w: f64, b: f64) -> ReturnsMlp {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut m = ReturnsMlp::init(1, 1, 0, &mut rng);
        m.mlp.weights[0] = Matrix::scalar(w);
        m.mlp.biases[0] = Matrix::scalar(b);
        m
    }

    #[test]
    fn split_sizes_examples() {
        let s = (0.4, 0.2, 0.4);
        assert_eq!(split_sizes(10, s).unwrap(), (4, 2, 4));
        assert_eq!(split_sizes(1776, s).unwrap(), (710, 355, 711));
        assert!(split_sizes(9, s).is_err());
        let v: Vec<usize> = (0..25).collect();
        let (a, b, c) = split_chronological(&v, s).unwrap();
        assert_eq!(a.last().unwrap() + 1, b[0]);
        assert_eq!(b.last().unwrap() + 1, c[0]);
        assert_eq!(a.len() + b.len() + c.len(), 25);
    }

    #[test]
    fn patience_counts_from_last_improvement() {
        let mut es = EarlyStopping::new(50);
        let mut stopped_at = None;
        for epoch in 1..=200 {
            let loss = if epoch <= 60 { 1.0 / epoch as f64 } else { 1.0 / 60.0 };
            if es.update(loss) {
                stopped_at = Some(epoch);
                break;
            }
        }
        assert_eq!(stopped_at, Some(110));
        assert_eq!(es.best_epoch(), 60);
    }

    #[test]
    fn constant_target_bias_fit() {
        let data: Vec<Sample> = (0..40).map(|i| sample(i, 0.0, 0.7)).collect();
        let cfg = TrainConfig {
            tau: 0.3,
            lr_grid: vec![0.015],
            batch_grid: vec![8],
            ..TrainConfig::default()
        };
        let (model, report) = train(&linear(0.0, 0.0), &data[..30], &data[30..], &cfg).unwrap();
        assert!(report.chosen_cell().best_val_loss < 1e-3);
        assert!((model.predict(&data[0].features).unwrap() - 0.7).abs() < 1e-2);
    }

    #[test]
    fn best_epoch_has_minimal_val_loss() {
        let data: Vec<Sample> = (0..60)
            .map(|i| {
                let x = ((i * 37) % 11) as f64 / 11.0 - 0.5;
                sample(i, x, 2.0 * x + 0.1 * ((i * 7) % 5) as f64)
            })
            .collect();
        let cfg = TrainConfig {
            lr_grid: vec![0.0015, 0.015],
            batch_grid: vec![4, 16],
            max_epochs: 30,
            patience: 10,
            ..TrainConfig::default()
        };
        let (_, report) = train(&linear(0.1, 0.0), &data[..40], &data[40..], &cfg).unwrap();
        for cell in &report.cells {
            let min = cell.epochs.iter().map(|e| e.val_loss).fold(f64::INFINITY, f64::min);
            assert_eq!(cell.best_val_loss, min);
            assert_eq!(cell.epochs[cell.best_epoch - 1].val_loss, min);
        }
        let chosen = report.chosen_cell().best_val_loss;
        assert!(report.cells.iter().all(|c| c.best_val_loss >= chosen));
    }

    #[test]
    fn divergent_cell_is_not_fatal() {
        let data: Vec<Sample> = (0..30).map(|i| sample(i, 1e300, 1.0)).collect();
        let cfg = TrainConfig {
            lr_grid: vec![1e10],
            batch_grid: vec![5],
            max_epochs: 5,
            patience: 2,
            ..TrainConfig::default()
        };
        assert!(matches!(
            train(&linear(1e10, 0.0), &data[..20], &data[20..], &cfg),
            Err(Error::AllCellsFailed)
        ));
    }

    #[test]
    fn parallel_grid_matches_sequential() {
        let data: Vec<Sample> = (0..50)
            .map(|i| sample(i, (i % 7) as f64 / 7.0, (i % 5) as f64 / 5.0))
            .collect();
        let mut cfg = TrainConfig {
            max_epochs: 8,
            patience: 3,
            batch_grid: vec![4, 8],
            ..TrainConfig::default()
        };
        let (m1, r1) = train(&linear(0.2, 0.0), &data[..30], &data[30..], &cfg).unwrap();
        cfg.parallel = true;
        let (m2, r2) = train(&linear(0.2, 0.0), &data[..30], &data[30..], &cfg).unwrap();
        assert_eq!(r1, r2);
        assert_eq!(m1, m2);
    }

    #[test]
    fn rollout_is_stateless_and_skips_missing() {
        let model = linear(2.0, 1.0);
        let f = sample(0, 0.5, 0.0).features;
        let inputs = vec![
            DatedInput { date: date(0), features: Some(f.clone()) },
            DatedInput { date: date(1), features: None },
            DatedInput { date: date(2), features: Some(f) },
        ];
        let out = rolling_predict(&model, &inputs).unwrap();
        assert_eq!(out.predictions.len(), 2);
        assert_eq!(out.skipped, vec![date(1)]);
        assert_eq!(out.predictions[0].1, 2.0);
        assert_eq!(out.predictions[0].1, out.predictions[1].1);
    }

    #[test]
    fn report_jsonl_lines() {
        let data: Vec<Sample> = (0..20).map(|i| sample(i, 0.0, 1.0)).collect();
        let cfg = TrainConfig {
            lr_grid: vec![0.01],
            batch_grid: vec![4],
            max_epochs: 3,
            patience: 1,
            ..TrainConfig::default()
        };
        let (_, report) = train(&linear(0.0, 0.0), &data[..12], &data[12..], &cfg).unwrap();
        let mut buf = Vec::new();
        report.write_jsonl(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 2 * report.cells[0].epochs.len());
        let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(first["split"], "train");
        assert_eq!(first["epoch"], 1);
    }
}
