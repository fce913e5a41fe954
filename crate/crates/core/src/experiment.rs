//! End-to-end simulated studies: the coupled-pair CoVaR experiment scored
//! against its closed form, and the eight-institution crisis scenario.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data_io::WindowSpec;
use crate::error::Result;
use crate::pipeline::{
    covar_samples, covar_series, estimate_var_all, fit_covar_model, RiskRow, Split, MEDIAN_TAU,
};
use crate::quantile::SolverOptions;
use crate::simulation::{
    inverse_normal_cdf, mae, simulate_crisis, simulate_dataset, CrisisConfig, NoiseTextConfig,
    SimConfig,
};
use crate::trainer::{TrainConfig, TrainReport};
use crate::transformer::{ArchConfig, QuantileNet, ReturnsMlp, TransformerModel, Variant};

/// Everything the coupled-pair experiment needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CovarExperiment {
    pub sim: SimConfig,
    pub text: NoiseTextConfig,
    pub arch: ArchConfig,
    pub train: TrainConfig,
    pub window: WindowSpec,
    /// Hidden width of the one-hidden-layer returns-only baseline.
    pub mlp_width: usize,
}

impl Default for CovarExperiment {
    fn default() -> Self {
        let text = NoiseTextConfig {
            min_per_day: 1,
            max_per_day: 1,
            noise_std: 0.05,
            ..NoiseTextConfig::default()
        };
        let window = WindowSpec {
            n_max: 5 * text.max_per_day,
            ..WindowSpec::default()
        };
        Self {
            arch: ArchConfig {
                n: window.n_max,
                d_e: text.d_e,
                institutions: 2,
                heads: 1,
                ffn_hidden: 16,
                layers: 1,
                mlp_depth: 2,
                mlp_width: 32,
                variant: Variant::Plain,
            },
            sim: SimConfig::default(),
            text,
            train: TrainConfig {
                seed: 42,
                ..TrainConfig::default()
            },
            window,
            mlp_width: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelScore {
    /// MAE against the closed-form CoVaR over every scored date.
    pub mae: f64,
    /// Same, test split only.
    pub mae_test: f64,
    pub report: TrainReport,
    pub rows: Vec<RiskRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CovarOutcome {
    pub transformer: ModelScore,
    pub mlp: ModelScore,
    /// MAE of the true conditional quantile function evaluated at the
    /// estimated VaR: the error left by VaR estimation alone.
    pub plug_in_floor: f64,
    pub truth: Vec<f64>,
}

fn score<M: QuantileNet>(
    init: &M,
    exp: &CovarExperiment,
    data: &crate::simulation::SimDataset,
    vars: &[crate::pipeline::VarSeries],
) -> Result<ModelScore> {
    let train_cfg = TrainConfig {
        tau: exp.sim.tau,
        ..exp.train.clone()
    };
    let samples = covar_samples(&data.panel, &data.embeddings, 1, &exp.window)?;
    let (model, report) = fit_covar_model(init, &samples, &train_cfg)?;
    let rows = covar_series(
        &model,
        &data.panel,
        &data.embeddings,
        1,
        exp.sim.tau,
        vars,
        &exp.window,
        train_cfg.split,
    )?;
    let truth = &data.oracle.covar[1..];
    let est: Vec<f64> = rows.iter().map(|r| r.covar.expect("target row")).collect();
    let (mut p, mut t) = (Vec::new(), Vec::new());
    for ((row, e), tr) in rows.iter().zip(&est).zip(truth) {
        if row.split == Split::Test {
            p.push(*e);
            t.push(*tr);
        }
    }
    Ok(ModelScore {
        mae: mae(&est, truth)?,
        mae_test: mae(&p, &t)?,
        report,
        rows,
    })
}

/// Simulates the pair, fits VaR for both institutions, and trains the
/// Transformer (returns plus noise news) and the returns-only MLP for the
/// second institution. The first date has no lagged state and is not scored.
pub fn run_covar_experiment(exp: &CovarExperiment) -> Result<CovarOutcome> {
    exp.arch.validate()?;
    let data = simulate_dataset(&exp.sim, &exp.text)?;
    data.embeddings.check_dim(exp.arch.d_e)?;
    let vars = estimate_var_all(
        &data.panel,
        &[exp.sim.tau, MEDIAN_TAU],
        exp.train.split,
        &SolverOptions::default(),
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(exp.train.seed);
    let transformer = TransformerModel::init(exp.arch.clone(), &mut rng)?;
    let mut rng = ChaCha8Rng::seed_from_u64(exp.train.seed.wrapping_add(1));
    let mlp = ReturnsMlp::init(1, 2, exp.mlp_width, &mut rng);

    let z = inverse_normal_cdf(exp.sim.tau);
    let truth = data.oracle.covar[1..].to_vec();
    let var1 = &crate::pipeline::find_var(&vars, "SIM1", exp.sim.tau)?.values;
    let floor: Vec<f64> = var1
        .iter()
        .map(|v| exp.sim.beta * v + exp.sim.sigma2 * z)
        .collect();
    Ok(CovarOutcome {
        transformer: score(&transformer, exp, &data, &vars)?,
        mlp: score(&mlp, exp, &data, &vars)?,
        plug_in_floor: mae(&floor, &truth)?,
        truth,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CrisisExperiment {
    pub scenario: CrisisConfig,
    pub arch: ArchConfig,
    pub train: TrainConfig,
    pub window: WindowSpec,
    pub mlp_width: usize,
}

impl Default for CrisisExperiment {
    fn default() -> Self {
        let scenario = CrisisConfig::default();
        let window = WindowSpec {
            n_max: 5 * scenario.articles_per_day,
            ..WindowSpec::default()
        };
        Self {
            arch: ArchConfig {
                n: window.n_max,
                d_e: scenario.d_e,
                institutions: scenario.institutions,
                heads: 1,
                ffn_hidden: 16,
                layers: 1,
                mlp_depth: 2,
                mlp_width: 32,
                variant: Variant::Plain,
            },
            scenario,
            train: TrainConfig {
                seed: 42,
                ..TrainConfig::default()
            },
            window,
            mlp_width: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrisisOutcome {
    /// Mean CoVaR over test-split crisis dates.
    pub text_crisis_mean: f64,
    pub returns_only_crisis_mean: f64,
    /// Same over test-split calm dates.
    pub text_calm_mean: f64,
    pub returns_only_calm_mean: f64,
    pub crisis_test_dates: usize,
}

fn mean_by(rows: &[RiskRow], crisis: &[bool], want: bool) -> f64 {
    let vals: Vec<f64> = rows
        .iter()
        .enumerate()
        .filter(|(i, r)| r.split == Split::Test && crisis[i + 1] == want)
        .map(|(_, r)| r.covar.expect("target row"))
        .collect();
    vals.iter().sum::<f64>() / vals.len().max(1) as f64
}

/// Trains a text-aware and a returns-only CoVaR model for the scenario's
/// target and compares their mean CoVaR on crisis and calm test dates.
pub fn run_crisis_experiment(exp: &CrisisExperiment) -> Result<CrisisOutcome> {
    exp.arch.validate()?;
    let data = simulate_crisis(&exp.scenario)?;
    data.embeddings.check_dim(exp.arch.d_e)?;
    let j = data.panel.ticker_index(&data.target)?;
    let train_cfg = TrainConfig {
        tau: 0.05,
        ..exp.train.clone()
    };
    let vars = estimate_var_all(
        &data.panel,
        &[train_cfg.tau, MEDIAN_TAU],
        train_cfg.split,
        &SolverOptions::default(),
    )?;
    let samples = covar_samples(&data.panel, &data.embeddings, j, &exp.window)?;

    let mut rng = ChaCha8Rng::seed_from_u64(train_cfg.seed);
    let init = TransformerModel::init(exp.arch.clone(), &mut rng)?;
    let (text_model, _) = fit_covar_model(&init, &samples, &train_cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(train_cfg.seed.wrapping_add(1));
    let init = ReturnsMlp::init(data.panel.tickers.len() - 1, 2, exp.mlp_width, &mut rng);
    let (mlp_model, _) = fit_covar_model(&init, &samples, &train_cfg)?;

    let text_rows = covar_series(
        &text_model,
        &data.panel,
        &data.embeddings,
        j,
        train_cfg.tau,
        &vars,
        &exp.window,
        train_cfg.split,
    )?;
    let mlp_rows = covar_series(
        &mlp_model,
        &data.panel,
        &data.embeddings,
        j,
        train_cfg.tau,
        &vars,
        &exp.window,
        train_cfg.split,
    )?;
    let crisis_test_dates = text_rows
        .iter()
        .enumerate()
        .filter(|(i, r)| r.split == Split::Test && data.crisis[i + 1])
        .count();
    Ok(CrisisOutcome {
        text_crisis_mean: mean_by(&text_rows, &data.crisis, true),
        returns_only_crisis_mean: mean_by(&mlp_rows, &data.crisis, true),
        text_calm_mean: mean_by(&text_rows, &data.crisis, false),
        returns_only_calm_mean: mean_by(&mlp_rows, &data.crisis, false),
        crisis_test_dates,
    })
}
