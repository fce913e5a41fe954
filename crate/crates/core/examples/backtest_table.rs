//! Cumulative three-month loss table for two forecasters of a simulated
//! return: the true conditional quantile and a constant unconditional one.
//!
//! Usage: cargo run --example backtest_table

use covarlab::backtest::{cumulative_table, ModelPreds};
use covarlab::simulation::{simulate_dataset, NoiseTextConfig, SimConfig};

fn main() -> covarlab::error::Result<()> {
    env_logger::init();
    let sim = SimConfig::default();
    let data = simulate_dataset(&sim, &NoiseTextConfig { zero_noise: true, ..NoiseTextConfig::default() })?;
    let from = data.panel.len() * 6 / 10;
    let dates = data.panel.dates[from..].to_vec();
    let actuals: Vec<f64> = data.panel.returns[from..].iter().map(|r| r[1]).collect();

    let mut sorted: Vec<f64> = data.panel.returns[..from].iter().map(|r| r[1]).collect();
    sorted.sort_by(f64::total_cmp);
    let unconditional = sorted[(0.05 * sorted.len() as f64) as usize];
    let models = vec![
        ModelPreds {
            name: "conditional".into(),
            preds: data.oracle.var2[from..].to_vec(),
        },
        ModelPreds {
            name: "historical".into(),
            preds: vec![unconditional; dates.len()],
        },
    ];
    let table = cumulative_table(&dates, &models, &actuals, sim.tau, dates[0], 3)?;
    print!("{}", table.to_text());
    let full = table.rows.last().expect("full period row");
    println!(
        "exceedance over the full period: conditional {:.4}, historical {:.4}",
        full.exceedance[0], full.exceedance[1]
    );
    Ok(())
}
