//! Fits the CoVaR of the second simulated institution with the Transformer
//! (returns plus irrelevant news) and with a returns-only MLP, then scores
//! both against the closed-form CoVaR.
//!
//! Usage: cargo run --release --example train_covar_sim [seed]

use covarlab::experiment::{run_covar_experiment, CovarExperiment, ModelScore};

fn line(name: &str, s: &ModelScore) {
    let cell = s.report.chosen_cell();
    println!(
        "{name:<12} MAE {:.4}  test-only {:.4}  (lr {}, batch {}, best epoch {})",
        s.mae, s.mae_test, cell.lr, cell.batch, cell.best_epoch
    );
}

fn main() -> covarlab::error::Result<()> {
    env_logger::init();
    let mut exp = CovarExperiment::default();
    if let Some(seed) = std::env::args().nth(1).and_then(|s| s.parse().ok()) {
        exp.sim.seed = seed;
        exp.train.seed = seed;
    }
    exp.train.parallel = true;
    let out = run_covar_experiment(&exp)?;
    println!("VaR plug-in floor  MAE {:.4}", out.plug_in_floor);
    line("transformer", &out.transformer);
    line("mlp", &out.mlp);
    Ok(())
}
