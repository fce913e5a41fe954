//! Fits VaR by linear quantile regression on the lagged macro state for
//! both simulated institutions and compares the fitted coefficients with
//! the closed form `φ y_{t−1} + σ z(τ)`.
//!
//! Usage: cargo run --release --example var_regression

use covarlab::pipeline::{estimate_var_all, find_var, quantile_crossings};
use covarlab::quantile::SolverOptions;
use covarlab::simulation::{inverse_normal_cdf, mae, simulate_dataset, NoiseTextConfig, SimConfig};

fn main() -> covarlab::error::Result<()> {
    env_logger::init();
    let sim = SimConfig::default();
    let data = simulate_dataset(&sim, &NoiseTextConfig::default())?;
    let split = (0.4, 0.2, 0.4);
    let series = estimate_var_all(&data.panel, &[0.05, 0.5], split, &SolverOptions::default())?;

    let z = inverse_normal_cdf(0.05);
    let s2 = (sim.beta.powi(2) * sim.sigma1.powi(2) + sim.sigma2.powi(2)).sqrt();
    let truth = [
        ("SIM1", sim.sigma1 * z, sim.phi, &data.oracle.var1),
        ("SIM2", s2 * z, sim.beta * sim.phi, &data.oracle.var2),
    ];
    println!("{:<6}{:>12}{:>12}{:>12}{:>12}{:>12}", "", "alpha", "alpha*", "gamma", "gamma*", "MAE");
    for (ticker, alpha, gamma, oracle) in truth {
        let s = find_var(&series, ticker, 0.05)?;
        println!(
            "{ticker:<6}{:>12.4}{alpha:>12.4}{:>12.4}{gamma:>12.4}{:>12.4}",
            s.model.alpha,
            s.model.gamma[0],
            mae(&s.values, &oracle[1..])?
        );
    }
    println!("quantile crossings between 5% and 50%: {}", quantile_crossings(&series));
    Ok(())
}
