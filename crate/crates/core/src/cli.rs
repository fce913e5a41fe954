//! Command-line front end: `simulate`, `fit-var`, `fit-covar`, `predict`,
//! `backtest` and `report`.
//!
//! Every command writes `manifest.<command>.json` into its output directory,
//! listing each input and output with its SHA-256. Commands that consume
//! derived artifacts check them against the manifest that produced them.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::{NaiveDate, Utc};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::backtest::{cumulative_table, ModelPreds};
use crate::data_io::{load_embeddings, load_returns, save_embeddings, save_returns, WindowSpec};
use crate::error::{Error, Result};
use crate::experiment::CovarExperiment;
use crate::pipeline::{
    covar_samples, covar_series, estimate_var_all, fit_covar_model, load_risk_csv,
    quantile_crossings, save_risk_csv, var_rows, RiskRow, Split, VarSeries, MEDIAN_TAU,
};
use crate::quantile::SolverOptions;
use crate::simulation::{simulate_crisis, simulate_dataset, CrisisConfig, NoiseTextConfig, SimConfig};
use crate::trainer::TrainConfig;
use crate::transformer::checkpoint::{load_mlp, load_transformer, save_mlp, save_transformer};
use crate::transformer::{ArchConfig, QuantileNet, ReturnsMlp, TransformerModel, Variant};

#[derive(Debug, Parser)]
#[command(name = "covarlab", version, about = "Two-step CoVaR estimation with text-aware quantile networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a dataset with closed-form risk oracles.
    Simulate(SimulateArgs),
    /// Fit linear quantile regressions for every institution's VaR.
    FitVar(FitVarArgs),
    /// Train a CoVaR network for one institution.
    FitCovar(FitCovarArgs),
    /// Produce VaR, CoVaR and ΔCoVaR series with a trained network.
    Predict(PredictArgs),
    /// Cumulative out-of-sample loss table.
    Backtest(BacktestArgs),
    /// Summary text and plot-ready CSVs for one or more risk series.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// TOML config; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    /// Coupled AR(1) pair with noise news.
    Pair,
    /// Eight institutions with a text-flagged crisis regime.
    Crisis,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, value_enum, default_value_t = Scenario::Pair)]
    pub scenario: Scenario,
    #[arg(long)]
    pub tau: Option<f64>,
}

#[derive(Debug, Args)]
pub struct FitVarArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub returns: PathBuf,
    #[arg(long)]
    pub tau: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// Transformer over returns and news embeddings.
    Transformer,
    /// Returns-only MLP baseline.
    Mlp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    Plain,
    #[value(name = "residual_layernorm")]
    ResidualLayernorm,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Plain => Variant::Plain,
            VariantArg::ResidualLayernorm => Variant::ResidualLayernorm,
        }
    }
}

#[derive(Debug, Args)]
pub struct FitCovarArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub returns: PathBuf,
    #[arg(long)]
    pub embeddings: PathBuf,
    /// Institution whose CoVaR is modelled; defaults to the last ticker.
    #[arg(long)]
    pub target_ticker: Option<String>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long, value_enum, default_value_t = ModelKind::Transformer)]
    pub kind: ModelKind,
    #[arg(long, value_enum)]
    pub variant: Option<VariantArg>,
    #[arg(long)]
    pub heads: Option<usize>,
    /// Let the news window end on the prediction date itself.
    #[arg(long)]
    pub include_day_t: bool,
    /// Train the hyperparameter grid cells concurrently.
    #[arg(long)]
    pub parallel_grid: bool,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub returns: PathBuf,
    #[arg(long)]
    pub embeddings: PathBuf,
    /// Output directory of `fit-var`.
    #[arg(long)]
    pub var_dir: PathBuf,
    /// Output directory of `fit-covar`.
    #[arg(long)]
    pub model_dir: PathBuf,
    /// Quantile level of the conditioning VaR; defaults to the trained τ.
    #[arg(long)]
    pub tau: Option<f64>,
}

/// `NAME=PATH` pair naming a risk-series CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedPath {
    pub name: String,
    pub path: PathBuf,
}

impl std::str::FromStr for NamedPath {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.split_once('=') {
            Some((name, path)) if !name.is_empty() && !path.is_empty() => Ok(Self {
                name: name.to_string(),
                path: PathBuf::from(path),
            }),
            _ => {
                let path = PathBuf::from(s);
                let name = path
                    .parent()
                    .and_then(Path::file_name)
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_else(|| "model".into());
                Ok(Self { name, path })
            }
        }
    }
}

#[derive(Debug, Args)]
pub struct BacktestArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub returns: PathBuf,
    /// `NAME=PATH` of a `predict` output; repeat to compare models.
    #[arg(long, required = true)]
    pub risk: Vec<NamedPath>,
    /// First date of the evaluation; defaults to the first test date.
    #[arg(long)]
    pub start: Option<NaiveDate>,
    #[arg(long, default_value_t = 3)]
    pub step_months: u32,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// `NAME=PATH` of a `predict` output; repeat to compare models.
    #[arg(long, required = true)]
    pub risk: Vec<NamedPath>,
}

/// Declarative run configuration. Every section is optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub sim: SimConfig,
    pub text: NoiseTextConfig,
    pub crisis: CrisisConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub window: WindowSpec,
}

/// Architecture settings not determined by the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub heads: usize,
    pub ffn_hidden: usize,
    pub layers: usize,
    pub mlp_depth: usize,
    pub mlp_width: usize,
    pub variant: Variant,
    /// Hidden width of the returns-only baseline.
    pub baseline_width: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let exp = CovarExperiment::default();
        Self {
            sim: exp.sim,
            text: exp.text,
            crisis: CrisisConfig::default(),
            model: ModelConfig {
                heads: exp.arch.heads,
                ffn_hidden: exp.arch.ffn_hidden,
                layers: exp.arch.layers,
                mlp_depth: exp.arch.mlp_depth,
                mlp_width: exp.arch.mlp_width,
                variant: exp.arch.variant,
                baseline_width: exp.mlp_width,
            },
            train: exp.train,
            window: exp.window,
        }
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        RunConfig::default().model
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = fs::read_to_string(p)?;
                toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
}

/// Record of one command invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub inputs: Vec<Artifact>,
    /// Paths relative to the output directory.
    pub outputs: Vec<Artifact>,
    pub started: String,
    pub finished: String,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn manifests_in(dir: &Path) -> Result<Vec<(PathBuf, RunManifest)>> {
    let mut out = Vec::new();
    if !dir.is_dir() {
        return Ok(out);
    }
    let mut entries: Vec<_> = fs::read_dir(dir)?.collect::<std::io::Result<_>>()?;
    entries.sort_by_key(|e| e.file_name());
    for e in entries {
        let name = e.file_name().to_string_lossy().into_owned();
        if name.starts_with("manifest.") && name.ends_with(".json") {
            let m: RunManifest = serde_json::from_slice(&fs::read(e.path())?)?;
            out.push((e.path(), m));
        }
    }
    Ok(out)
}

/// Hashes an input and, if a manifest next to it lists the file as an
/// output, checks the recorded hash. With `required`, the file must be
/// listed by some manifest.
pub fn check_upstream(path: &Path, required: bool) -> Result<Artifact> {
    if !path.is_file() {
        return Err(Error::Manifest(format!("missing upstream artifact {}", path.display())));
    }
    let hash = sha256_file(path)?;
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let mut listed = false;
    for (mpath, m) in manifests_in(dir)? {
        if let Some(a) = m.outputs.iter().find(|a| a.path == name) {
            listed = true;
            if a.sha256 != hash {
                return Err(Error::Manifest(format!(
                    "{} does not match {} (recorded sha256 {}, found {})",
                    path.display(),
                    mpath.display(),
                    a.sha256,
                    hash
                )));
            }
        }
    }
    if required && !listed {
        return Err(Error::Manifest(format!(
            "no manifest in {} lists {}",
            dir.display(),
            name
        )));
    }
    Ok(Artifact {
        path: path.display().to_string(),
        sha256: hash,
    })
}

struct Run {
    command: &'static str,
    out: PathBuf,
    started: String,
    inputs: Vec<Artifact>,
    outputs: Vec<String>,
}

impl Run {
    fn start(command: &'static str, out: &Path) -> Result<Self> {
        fs::create_dir_all(out)?;
        Ok(Self {
            command,
            out: out.to_path_buf(),
            started: Utc::now().to_rfc3339(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        })
    }

    fn input(&mut self, path: &Path, required: bool) -> Result<()> {
        self.inputs.push(check_upstream(path, required)?);
        Ok(())
    }

    fn output(&mut self, name: &str) -> PathBuf {
        self.outputs.push(name.to_string());
        self.out.join(name)
    }

    fn finish(self, config: &impl Serialize, seed: Option<u64>) -> Result<PathBuf> {
        let outputs = self
            .outputs
            .iter()
            .map(|name| {
                Ok(Artifact {
                    path: name.clone(),
                    sha256: sha256_file(&self.out.join(name))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let manifest = RunManifest {
            command: self.command.to_string(),
            config: serde_json::to_value(config)?,
            seed,
            inputs: self.inputs,
            outputs,
            started: self.started,
            finished: Utc::now().to_rfc3339(),
        };
        let path = self.out.join(format!("manifest.{}.json", self.command));
        fs::write(&path, serde_json::to_vec_pretty(&manifest)?)?;
        log::info!("wrote {}", path.display());
        Ok(path)
    }
}

fn check_tau_flag(tau: f64) -> Result<f64> {
    if tau > 0.0 && tau < 1.0 {
        Ok(tau)
    } else {
        Err(Error::InvalidTau(tau))
    }
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let mut cfg = RunConfig::load(args.common.config.as_deref())?;
    let mut run = Run::start("simulate", &args.common.out)?;
    match args.scenario {
        Scenario::Pair => {
            if let Some(seed) = args.common.seed {
                cfg.sim.seed = seed;
            }
            if let Some(tau) = args.tau {
                cfg.sim.tau = check_tau_flag(tau)?;
            }
            let data = simulate_dataset(&cfg.sim, &cfg.text)?;
            save_returns(&data.panel, &run.output("returns.csv"))?;
            save_embeddings(&data.embeddings, &run.output("embeddings.cvem"))?;
            let mut w = csv::Writer::from_path(run.output("oracle.csv"))?;
            w.write_record(["date", "var1", "var2", "covar"])?;
            for (t, date) in data.panel.dates.iter().enumerate() {
                w.write_record([
                    date.format("%Y-%m-%d").to_string(),
                    data.oracle.var1[t].to_string(),
                    data.oracle.var2[t].to_string(),
                    data.oracle.covar[t].to_string(),
                ])?;
            }
            w.flush()?;
            run.finish(&serde_json::json!({ "sim": cfg.sim, "text": cfg.text }), Some(cfg.sim.seed))?;
        }
        Scenario::Crisis => {
            if let Some(seed) = args.common.seed {
                cfg.crisis.seed = seed;
            }
            let data = simulate_crisis(&cfg.crisis)?;
            save_returns(&data.panel, &run.output("returns.csv"))?;
            save_embeddings(&data.embeddings, &run.output("embeddings.cvem"))?;
            let mut w = csv::Writer::from_path(run.output("crisis.csv"))?;
            w.write_record(["date", "crisis"])?;
            for (date, flag) in data.panel.dates.iter().zip(&data.crisis) {
                w.write_record([date.format("%Y-%m-%d").to_string(), u8::from(*flag).to_string()])?;
            }
            w.flush()?;
            run.finish(&cfg.crisis, Some(cfg.crisis.seed))?;
        }
    }
    Ok(())
}

pub const VAR_MODELS: &str = "var_models.json";
pub const COVAR_META: &str = "covar_model.json";
pub const CHECKPOINT: &str = "model.cvmp";
pub const RISK_CSV: &str = "risk.csv";

pub fn cmd_fit_var(args: &FitVarArgs) -> Result<()> {
    let cfg = RunConfig::load(args.common.config.as_deref())?;
    let tau = check_tau_flag(args.tau.unwrap_or(cfg.train.tau))?;
    let mut run = Run::start("fit-var", &args.common.out)?;
    run.input(&args.returns, false)?;
    let panel = load_returns(&args.returns)?.panel;
    let mut taus = vec![tau];
    if tau != MEDIAN_TAU {
        taus.push(MEDIAN_TAU);
    }
    let series = estimate_var_all(&panel, &taus, cfg.train.split, &SolverOptions::default())?;
    let crossings = quantile_crossings(&series);
    if crossings > 0 {
        log::warn!("{crossings} VaR quantile crossings");
    }
    fs::write(run.output(VAR_MODELS), serde_json::to_vec_pretty(&series)?)?;
    let mut rows = Vec::new();
    for t in &taus {
        rows.extend(var_rows(&panel, &series, *t, cfg.train.split)?);
    }
    save_risk_csv(&rows, &run.output("var.csv"))?;
    run.finish(&serde_json::json!({ "taus": taus, "split": cfg.train.split }), None)?;
    Ok(())
}

/// Metadata stored next to a CoVaR checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarMeta {
    pub kind: ModelKind,
    pub target: String,
    pub tau: f64,
    pub window: WindowSpec,
    pub split: (f64, f64, f64),
}

pub fn cmd_fit_covar(args: &FitCovarArgs) -> Result<()> {
    let mut cfg = RunConfig::load(args.common.config.as_deref())?;
    if let Some(seed) = args.common.seed {
        cfg.train.seed = seed;
    }
    if let Some(tau) = args.tau {
        cfg.train.tau = check_tau_flag(tau)?;
    }
    if let Some(v) = args.variant {
        cfg.model.variant = v.into();
    }
    if let Some(h) = args.heads {
        cfg.model.heads = h;
    }
    cfg.window.include_day_t |= args.include_day_t;
    cfg.train.parallel |= args.parallel_grid;

    let mut run = Run::start("fit-covar", &args.common.out)?;
    run.input(&args.returns, false)?;
    run.input(&args.embeddings, false)?;
    let panel = load_returns(&args.returns)?.panel;
    let store = load_embeddings(&args.embeddings)?;
    let target = match &args.target_ticker {
        Some(t) => t.clone(),
        None => panel
            .tickers
            .last()
            .cloned()
            .ok_or_else(|| Error::InvalidArgument("panel has no tickers".into()))?,
    };
    let j = panel.ticker_index(&target)?;
    let samples = covar_samples(&panel, &store, j, &cfg.window)?;
    let arch = ArchConfig {
        n: cfg.window.n_max,
        d_e: store.d_e(),
        institutions: panel.tickers.len(),
        heads: cfg.model.heads,
        ffn_hidden: cfg.model.ffn_hidden,
        layers: cfg.model.layers,
        mlp_depth: cfg.model.mlp_depth,
        mlp_width: cfg.model.mlp_width,
        variant: cfg.model.variant,
    };
    let report = match args.kind {
        ModelKind::Transformer => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.train.seed);
            let init = TransformerModel::init(arch.clone(), &mut rng)?;
            let (model, report) = fit_covar_model(&init, &samples, &cfg.train)?;
            save_transformer(&model, &run.output(CHECKPOINT))?;
            report
        }
        ModelKind::Mlp => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.train.seed.wrapping_add(1));
            let init = ReturnsMlp::init(panel.tickers.len() - 1, 2, cfg.model.baseline_width, &mut rng);
            let (model, report) = fit_covar_model(&init, &samples, &cfg.train)?;
            save_mlp(&model, &run.output(CHECKPOINT))?;
            report
        }
    };
    let cell = report.chosen_cell();
    log::info!(
        "chosen cell lr={} batch={} best epoch {} val loss {:.6}",
        cell.lr,
        cell.batch,
        cell.best_epoch,
        cell.best_val_loss
    );
    report.save_jsonl(&run.output("train_report.jsonl"))?;
    let meta = CovarMeta {
        kind: args.kind,
        target,
        tau: cfg.train.tau,
        window: cfg.window,
        split: cfg.train.split,
    };
    fs::write(run.output(COVAR_META), serde_json::to_vec_pretty(&meta)?)?;
    let snapshot = serde_json::json!({ "meta": meta, "arch": arch, "train": cfg.train });
    run.finish(&snapshot, Some(cfg.train.seed))?;
    Ok(())
}

pub fn cmd_predict(args: &PredictArgs) -> Result<()> {
    let mut run = Run::start("predict", &args.common.out)?;
    run.input(&args.returns, false)?;
    run.input(&args.embeddings, false)?;
    let var_path = args.var_dir.join(VAR_MODELS);
    let meta_path = args.model_dir.join(COVAR_META);
    let ckpt_path = args.model_dir.join(CHECKPOINT);
    run.input(&var_path, true)?;
    run.input(&meta_path, true)?;
    run.input(&ckpt_path, true)?;

    let panel = load_returns(&args.returns)?.panel;
    let store = load_embeddings(&args.embeddings)?;
    let series: Vec<VarSeries> = serde_json::from_slice(&fs::read(&var_path)?)?;
    let meta: CovarMeta = serde_json::from_slice(&fs::read(&meta_path)?)?;
    let tau = check_tau_flag(args.tau.unwrap_or(meta.tau))?;
    let j = panel.ticker_index(&meta.target)?;
    let rows = match meta.kind {
        ModelKind::Transformer => {
            let model = load_transformer(&ckpt_path)?;
            store.check_dim(model.config.d_e)?;
            series_for(&model, &panel, &store, j, tau, &series, &meta)?
        }
        ModelKind::Mlp => {
            let model = load_mlp(&ckpt_path)?;
            series_for(&model, &panel, &store, j, tau, &series, &meta)?
        }
    };
    save_risk_csv(&rows, &run.output(RISK_CSV))?;
    run.finish(&serde_json::json!({ "meta": meta, "tau": tau }), None)?;
    Ok(())
}

fn series_for<M: QuantileNet>(
    model: &M,
    panel: &crate::data_io::ReturnPanel,
    store: &crate::data_io::EmbeddingStore,
    j: usize,
    tau: f64,
    series: &[VarSeries],
    meta: &CovarMeta,
) -> Result<Vec<RiskRow>> {
    covar_series(model, panel, store, j, tau, series, &meta.window, meta.split)
}

fn load_named(run: &mut Run, named: &[NamedPath]) -> Result<Vec<(String, Vec<RiskRow>)>> {
    let mut out = Vec::new();
    for np in named {
        run.input(&np.path, true)?;
        let rows = load_risk_csv(&np.path)?;
        if rows.iter().any(|r| r.covar.is_none()) {
            return Err(Error::InvalidArgument(format!(
                "{} has rows without CoVaR",
                np.path.display()
            )));
        }
        out.push((np.name.clone(), rows));
    }
    let first: Vec<NaiveDate> = out[0].1.iter().map(|r| r.date).collect();
    for (name, rows) in &out[1..] {
        if rows.iter().map(|r| r.date).ne(first.iter().copied()) {
            return Err(Error::InvalidArgument(format!(
                "risk series {name} covers different dates than {}",
                out[0].0
            )));
        }
    }
    Ok(out)
}

pub fn cmd_backtest(args: &BacktestArgs) -> Result<()> {
    let mut run = Run::start("backtest", &args.common.out)?;
    run.input(&args.returns, false)?;
    let panel = load_returns(&args.returns)?.panel;
    let named = load_named(&mut run, &args.risk)?;
    let reference = &named[0].1;
    let ticker = &reference[0].ticker;
    let tau = reference[0].tau;
    let j = panel.ticker_index(ticker)?;
    let by_date: BTreeMap<NaiveDate, usize> =
        panel.dates.iter().enumerate().map(|(i, d)| (*d, i)).collect();

    let start = match args.start {
        Some(d) => d,
        None => reference
            .iter()
            .find(|r| r.split == Split::Test)
            .map(|r| r.date)
            .ok_or_else(|| Error::InvalidArgument("no test-split rows".into()))?,
    };
    let keep: Vec<usize> = (0..reference.len()).filter(|&i| reference[i].date >= start).collect();
    let dates: Vec<NaiveDate> = keep.iter().map(|&i| reference[i].date).collect();
    let actuals = dates
        .iter()
        .map(|d| {
            by_date
                .get(d)
                .map(|&t| panel.returns[t][j])
                .ok_or_else(|| Error::InvalidArgument(format!("no return for {ticker} on {d}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let models: Vec<ModelPreds> = named
        .iter()
        .map(|(name, rows)| ModelPreds {
            name: name.clone(),
            preds: keep.iter().map(|&i| rows[i].covar.expect("checked")).collect(),
        })
        .collect();
    let table = cumulative_table(&dates, &models, &actuals, tau, start, args.step_months)?;
    table.write_csv(&run.output("loss_table.csv"))?;
    let text = table.to_text();
    fs::write(run.output("loss_table.txt"), &text)?;
    print!("{text}");
    let snapshot = serde_json::json!({
        "ticker": ticker,
        "tau": tau,
        "start": start,
        "step_months": args.step_months,
        "models": table.models,
    });
    run.finish(&snapshot, None)?;
    Ok(())
}

fn stats(vals: &[f64]) -> (f64, f64, f64) {
    let mean = vals.iter().sum::<f64>() / vals.len().max(1) as f64;
    let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
    let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (mean, min, max)
}

pub fn cmd_report(args: &ReportArgs) -> Result<()> {
    let mut run = Run::start("report", &args.common.out)?;
    let named = load_named(&mut run, &args.risk)?;
    let reference = &named[0];

    let mut w = csv::Writer::from_path(run.output("series.csv"))?;
    let mut header = vec!["date".to_string(), "split".to_string(), "var".to_string()];
    for (name, _) in &named {
        header.push(format!("{name}_covar"));
        header.push(format!("{name}_delta_covar"));
    }
    for (name, _) in &named[1..] {
        header.push(format!("covar_diff_{}_minus_{name}", reference.0));
    }
    w.write_record(&header)?;
    for (i, r) in reference.1.iter().enumerate() {
        let mut rec = vec![r.date.format("%Y-%m-%d").to_string(), r.split.to_string(), r.var.to_string()];
        for (_, rows) in &named {
            rec.push(rows[i].covar.expect("checked").to_string());
            rec.push(rows[i].delta_covar.map(|v| v.to_string()).unwrap_or_default());
        }
        for (_, rows) in &named[1..] {
            let diff = r.covar.expect("checked") - rows[i].covar.expect("checked");
            rec.push(diff.to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;

    let mut text = String::new();
    let _ = writeln!(
        text,
        "Risk series for {} at tau = {} ({} dates)",
        reference.1[0].ticker,
        reference.1[0].tau,
        reference.1.len()
    );
    let _ = writeln!(
        text,
        "{:<16}{:>7}{:>7}{:>12}{:>12}{:>12}{:>14}",
        "model", "split", "n", "mean CoVaR", "min CoVaR", "max CoVaR", "mean dCoVaR"
    );
    for (name, rows) in &named {
        for split in [Split::Train, Split::Val, Split::Test] {
            let sel: Vec<&RiskRow> = rows.iter().filter(|r| r.split == split).collect();
            if sel.is_empty() {
                continue;
            }
            let covar: Vec<f64> = sel.iter().map(|r| r.covar.expect("checked")).collect();
            let delta: Vec<f64> = sel.iter().filter_map(|r| r.delta_covar).collect();
            let (mean, min, max) = stats(&covar);
            let (dmean, _, _) = stats(&delta);
            let _ = writeln!(
                text,
                "{name:<16}{:>7}{:>7}{mean:>12.5}{min:>12.5}{max:>12.5}{dmean:>14.5}",
                split.to_string(),
                sel.len()
            );
        }
    }
    fs::write(run.output("summary.txt"), &text)?;
    print!("{text}");
    let names: Vec<&str> = named.iter().map(|(n, _)| n.as_str()).collect();
    run.finish(&serde_json::json!({ "models": names }), None)?;
    Ok(())
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::FitVar(a) => cmd_fit_var(a),
        Command::FitCovar(a) => cmd_fit_covar(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Backtest(a) => cmd_backtest(a),
        Command::Report(a) => cmd_report(a),
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code: 0 on success, 1 on a runtime failure, 2 on a usage
/// error.
pub fn run_with_args<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

pub fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    ExitCode::from(run_with_args(std::env::args_os()))
}
