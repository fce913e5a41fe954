//! Simulates the coupled AR(1) pair and prints the closed-form VaR and
//! CoVaR for the first few dates, plus how often the realised returns fall
//! below their theoretical VaR.
//!
//! Usage: cargo run --example simulate_oracle [seed]

use covarlab::backtest::exceedance_rate;
use covarlab::simulation::{inverse_normal_cdf, simulate_dataset, NoiseTextConfig, SimConfig};

fn main() -> covarlab::error::Result<()> {
    env_logger::init();
    let mut sim = SimConfig::default();
    if let Some(seed) = std::env::args().nth(1).and_then(|s| s.parse().ok()) {
        sim.seed = seed;
    }
    let data = simulate_dataset(&sim, &NoiseTextConfig::default())?;
    println!(
        "T = {}, tau = {}, z(tau) = {:.6}, {} articles over {} dates",
        sim.t,
        sim.tau,
        inverse_normal_cdf(sim.tau),
        data.embeddings.article_count(),
        data.embeddings.date_count()
    );
    println!("{:<12}{:>10}{:>10}{:>10}{:>10}{:>10}", "date", "y1", "y2", "VaR1", "VaR2", "CoVaR");
    for t in 0..8 {
        println!(
            "{:<12}{:>10.4}{:>10.4}{:>10.4}{:>10.4}{:>10.4}",
            data.panel.dates[t].to_string(),
            data.panel.returns[t][0],
            data.panel.returns[t][1],
            data.oracle.var1[t],
            data.oracle.var2[t],
            data.oracle.covar[t]
        );
    }
    let y1: Vec<f64> = data.panel.returns.iter().map(|r| r[0]).collect();
    let y2: Vec<f64> = data.panel.returns.iter().map(|r| r[1]).collect();
    println!(
        "exceedance rates: y1 below VaR1 {:.4}, y2 below VaR2 {:.4}",
        exceedance_rate(&data.oracle.var1, &y1)?,
        exceedance_rate(&data.oracle.var2, &y2)?
    );
    Ok(())
}
