//! Eight simulated banks share a factor; the last one suffers volatility
//! spikes that are flagged in its news. The text-aware model should assign a
//! lower CoVaR on crisis days than a returns-only model.
//!
//! Usage: cargo run --release --example crisis_regime

use covarlab::experiment::{run_crisis_experiment, CrisisExperiment};

fn main() -> covarlab::error::Result<()> {
    env_logger::init();
    let mut exp = CrisisExperiment::default();
    exp.train.parallel = true;
    let out = run_crisis_experiment(&exp)?;
    println!("crisis test dates: {}", out.crisis_test_dates);
    println!("{:<14}{:>12}{:>12}", "", "crisis", "calm");
    println!("{:<14}{:>12.5}{:>12.5}", "text", out.text_crisis_mean, out.text_calm_mean);
    println!(
        "{:<14}{:>12.5}{:>12.5}",
        "returns-only", out.returns_only_crisis_mean, out.returns_only_calm_mean
    );
    Ok(())
}
