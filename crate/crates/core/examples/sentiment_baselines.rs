//! Sentiment baselines on the crisis scenario. Each article gets a label
//! that leans negative on crisis days. Three CoVaR models are compared:
//! returns only, returns plus the net-sentiment index, and a Transformer
//! over label tokens (negative/neutral/positive as 1/2/3).
//!
//! Usage: cargo run --release --example sentiment_baselines

use covarlab::data_io::WindowSpec;
use covarlab::pipeline::{estimate_var_all, others_var, split_labels, Split, MEDIAN_TAU};
use covarlab::quantile::SolverOptions;
use covarlab::sentiment::{labels_to_tokens, sentiment_index, Label, LabelStore};
use covarlab::simulation::{simulate_crisis, CrisisConfig};
use covarlab::trainer::{split_chronological, train, Sample, TrainConfig};
use covarlab::transformer::{ArchConfig, Features, QuantileNet, ReturnsMlp, TextWindow, TransformerModel, Variant};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn draw_label(rng: &mut ChaCha8Rng, crisis: bool) -> Label {
    let u: f64 = rng.random();
    let (neg, neu) = if crisis { (0.7, 0.2) } else { (0.2, 0.5) };
    if u < neg {
        Label::Negative
    } else if u < neg + neu {
        Label::Neutral
    } else {
        Label::Positive
    }
}

fn fit<M: QuantileNet>(init: &M, samples: &[Sample], cfg: &TrainConfig) -> covarlab::error::Result<M> {
    let (tr, val, _) = split_chronological(samples, cfg.split)?;
    Ok(train(init, tr, val, cfg)?.0)
}

fn main() -> covarlab::error::Result<()> {
    env_logger::init();
    let scenario = CrisisConfig::default();
    let data = simulate_crisis(&scenario)?;
    let panel = &data.panel;
    let j = panel.ticker_index(&data.target)?;

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut labels = LabelStore::default();
    for (t, date) in panel.dates.iter().enumerate() {
        for k in 0..scenario.articles_per_day {
            labels.insert(*date, format!("{date}-{k}"), draw_label(&mut rng, data.crisis[t]));
        }
    }

    let spec = WindowSpec { n_max: 5 * scenario.articles_per_day, ..WindowSpec::default() };
    let window = |t: usize| -> covarlab::error::Result<(TextWindow, Option<f64>)> {
        let text = labels_to_tokens(&labels.window_labels(&panel.dates, t, &spec), spec.n_max, true)?;
        let index = sentiment_index(&labels.window_counts(&panel.dates, t, &spec)).ok();
        Ok((text, index))
    };
    let mut samples = Vec::new();
    for t in 1..panel.len() {
        let (text, index) = window(t)?;
        samples.push(Sample {
            date: panel.dates[t],
            features: Features {
                returns: panel.others(t, j),
                text,
                aux: vec![index.unwrap_or(0.0)],
            },
            target: panel.returns[t][j],
        });
    }
    let plain: Vec<Sample> = samples
        .iter()
        .map(|s| Sample {
            features: Features { aux: Vec::new(), ..s.features.clone() },
            ..s.clone()
        })
        .collect();

    let cfg = TrainConfig { lr_grid: vec![0.015], batch_grid: vec![32], seed: 5, ..TrainConfig::default() };
    let others = panel.tickers.len() - 1;
    let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let returns_only = fit(&ReturnsMlp::init(others, 2, 64, &mut init_rng), &plain, &cfg)?;
    let with_index = fit(&ReturnsMlp::init(others + 1, 2, 64, &mut init_rng), &samples, &cfg)?;
    let arch = ArchConfig {
        n: spec.n_max,
        d_e: 1,
        institutions: panel.tickers.len(),
        heads: 1,
        ffn_hidden: 16,
        layers: 1,
        mlp_depth: 2,
        mlp_width: 32,
        variant: Variant::Plain,
    };
    let label_tf = fit(&TransformerModel::init(arch, &mut init_rng)?, &plain, &cfg)?;

    let vars = estimate_var_all(panel, &[cfg.tau, MEDIAN_TAU], cfg.split, &SolverOptions::default())?;
    let splits = split_labels(panel.len() - 1, cfg.split)?;
    let mut sums = [[0.0f64; 2]; 3];
    let mut counts = [0usize; 2];
    for i in 0..panel.len() - 1 {
        if splits[i] != Split::Test {
            continue;
        }
        let t = i + 1;
        let regime = usize::from(data.crisis[t]);
        let v = others_var(&vars, panel, j, cfg.tau, i)?;
        let s = &samples[i].features;
        let f = |aux: Vec<f64>| Features { returns: v.clone(), text: s.text.clone(), aux };
        sums[0][regime] += returns_only.predict(&f(Vec::new()))?;
        sums[1][regime] += with_index.predict(&f(s.aux.clone()))?;
        sums[2][regime] += label_tf.predict(&f(Vec::new()))?;
        counts[regime] += 1;
    }
    println!("mean CoVaR on test dates ({} calm, {} crisis)", counts[0], counts[1]);
    println!("{:<24}{:>12}{:>12}", "model", "calm", "crisis");
    for (name, s) in ["returns only", "returns + index", "label Transformer"].iter().zip(&sums) {
        println!(
            "{name:<24}{:>12.5}{:>12.5}",
            s[0] / counts[0].max(1) as f64,
            s[1] / counts[1].max(1) as f64
        );
    }
    Ok(())
}
