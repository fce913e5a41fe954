//! Pinball loss and linear quantile regression (the VaR step).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::Matrix;

pub(crate) fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidTau(tau))
    }
}

/// `τ − 1{u < 0}`, taking `τ` at the kink.
#[inline]
pub fn pinball_subgradient(u: f64, tau: f64) -> f64 {
    if u < 0.0 {
        tau - 1.0
    } else {
        tau
    }
}

/// Quantile loss `ρ_τ(u) = u (τ − 1{u < 0})`.
pub fn pinball(u: f64, tau: f64) -> Result<f64> {
    check_tau(tau)?;
    Ok(u * pinball_subgradient(u, tau))
}

/// Mean pinball loss of `actual − pred`.
pub fn mean_pinball(preds: &[f64], actuals: &[f64], tau: f64) -> Result<f64> {
    check_tau(tau)?;
    if preds.len() != actuals.len() || preds.is_empty() {
        return Err(Error::Shape {
            op: "mean_pinball",
            left: (preds.len(), 1),
            right: (actuals.len(), 1),
        });
    }
    let total: f64 = preds
        .iter()
        .zip(actuals)
        .map(|(p, a)| {
            let u = a - p;
            u * pinball_subgradient(u, tau)
        })
        .sum();
    Ok(total / preds.len() as f64)
}

/// `VaR = α + γᵀ M_{t−1}` at level `τ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearQuantileModel {
    pub tau: f64,
    pub alpha: f64,
    pub gamma: Vec<f64>,
}

impl LinearQuantileModel {
    pub fn new(tau: f64, alpha: f64, gamma: Vec<f64>) -> Result<Self> {
        check_tau(tau)?;
        Ok(Self { tau, alpha, gamma })
    }

    /// Fitted quantile at the lagged state `macro_prev`. Negative values are losses.
    pub fn predict_var(&self, macro_prev: &[f64]) -> Result<f64> {
        if macro_prev.len() != self.gamma.len() {
            return Err(Error::Shape {
                op: "predict_var",
                left: (self.gamma.len(), 1),
                right: (macro_prev.len(), 1),
            });
        }
        Ok(self.alpha
            + self
                .gamma
                .iter()
                .zip(macro_prev)
                .map(|(g, m)| g * m)
                .sum::<f64>())
    }
}

/// Solver knobs for [`fit_linear_quantile`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverOptions {
    pub max_iter: usize,
    /// Converged once the best objective improves by less than this
    /// relative amount over `window` iterations.
    pub rel_tol: f64,
    pub window: usize,
    /// Halve the step after this many iterations without a new best.
    pub stall: usize,
    /// Ridge weight used only when the design is rank deficient.
    pub ridge: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iter: 50_000,
            rel_tol: 1e-9,
            window: 200,
            stall: 20,
            ridge: 1e-6,
        }
    }
}

/// Diagnostics returned next to the fitted model.
#[derive(Debug, Clone)]
pub struct FitInfo {
    pub objective: f64,
    pub iterations: usize,
    pub ridge_damped: bool,
    /// Share of strictly negative training residuals.
    pub negative_fraction: f64,
}

/// Coverage band constant: the negative-residual share of a converged fit
/// lies within `τ ± COVERAGE_C / √T`.
pub const COVERAGE_C: f64 = 3.0;

/// Fits `y = α + γᵀx + ε` at quantile `τ`; the intercept is added internally.
pub fn fit_linear_quantile(
    x: &Matrix,
    y: &[f64],
    tau: f64,
    opts: &SolverOptions,
) -> Result<LinearQuantileModel> {
    fit_linear_quantile_with_info(x, y, tau, opts).map(|(m, _)| m)
}

/// Full-batch normalised subgradient descent on the mean pinball objective.
///
/// Columns are standardised first. The intercept starts at the empirical
/// τ-quantile of `y` with zero slopes, which makes the iterate sequence
/// equivariant to shifts of `y`. The best iterate is tracked, so a longer
/// budget can only lower the returned objective.
pub fn fit_linear_quantile_with_info(
    x: &Matrix,
    y: &[f64],
    tau: f64,
    opts: &SolverOptions,
) -> Result<(LinearQuantileModel, FitInfo)> {
    check_tau(tau)?;
    let t = y.len();
    let m = x.cols();
    if x.rows() != t {
        return Err(Error::Shape {
            op: "fit_linear_quantile",
            left: x.shape(),
            right: (t, 1),
        });
    }
    if t <= m + 1 {
        return Err(Error::InvalidArgument(format!(
            "need more than {} observations, got {t}",
            m + 1
        )));
    }
    if !x.is_finite() || y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("fit_linear_quantile input"));
    }

    let (z, means, sds) = standardise(x);
    let ridge_damped = is_rank_deficient(&z);
    let ridge = if ridge_damped {
        log::warn!("rank-deficient design; using ridge-damped solve");
        opts.ridge
    } else {
        0.0
    };

    let mut sorted = y.to_vec();
    sorted.sort_by(f64::total_cmp);
    let k = ((tau * t as f64).ceil() as usize).clamp(1, t) - 1;
    let spread = {
        let q1 = sorted[t / 4];
        let q3 = sorted[(3 * t) / 4];
        let iqr = q3 - q1;
        if iqr > 0.0 {
            iqr
        } else {
            (sorted[t - 1] - sorted[0]).max(0.0)
        }
    };

    // theta = [a, g_1..g_m]
    let mut theta = vec![0.0; m + 1];
    theta[0] = sorted[k];
    let mut residuals = vec![0.0; t];
    let objective = |theta: &[f64], residuals: &mut [f64]| -> f64 {
        let mut total = 0.0;
        for (i, r) in residuals.iter_mut().enumerate() {
            let mut fit = theta[0];
            for j in 0..m {
                fit += theta[j + 1] * z.get(i, j);
            }
            let u = y[i] - fit;
            *r = u;
            total += u * pinball_subgradient(u, tau);
        }
        let mut obj = total / t as f64;
        if ridge > 0.0 {
            obj += 0.5 * ridge * theta[1..].iter().map(|g| g * g).sum::<f64>();
        }
        obj
    };

    let mut current = objective(&theta, &mut residuals);
    let mut best = theta.clone();
    let mut best_obj = current;
    let mut history = vec![best_obj];
    let mut step = 0.25 * spread;
    let mut since_best = 0usize;
    let mut iterations = 0usize;
    let mut converged = best_obj == 0.0 || step == 0.0;

    while !converged && iterations < opts.max_iter {
        iterations += 1;
        let mut sub = vec![0.0; m + 1];
        for (i, &u) in residuals.iter().enumerate() {
            let psi = pinball_subgradient(u, tau);
            sub[0] -= psi;
            for j in 0..m {
                sub[j + 1] -= psi * z.get(i, j);
            }
        }
        for s in &mut sub {
            *s /= t as f64;
        }
        for j in 0..m {
            sub[j + 1] += ridge * theta[j + 1];
        }
        let norm = sub.iter().map(|s| s * s).sum::<f64>().sqrt();
        if norm == 0.0 {
            break;
        }
        for (th, s) in theta.iter_mut().zip(&sub) {
            *th -= step * s / norm;
        }
        current = objective(&theta, &mut residuals);
        if current < best_obj {
            best_obj = current;
            best.copy_from_slice(&theta);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= opts.stall {
                step *= 0.5;
                since_best = 0;
                // restart from the best point with the smaller step
                theta.copy_from_slice(&best);
                current = objective(&theta, &mut residuals);
            }
        }
        history.push(best_obj);
        if history.len() > opts.window {
            let old = history[history.len() - 1 - opts.window];
            if old - best_obj <= opts.rel_tol * old.abs().max(f64::MIN_POSITIVE) {
                converged = true;
            }
        }
        if step <= 1e-15 * (1.0 + spread) {
            converged = true;
        }
    }
    let _ = current;

    let gamma: Vec<f64> = (0..m).map(|j| best[j + 1] / sds[j]).collect();
    let alpha = best[0] - gamma.iter().zip(&means).map(|(g, mu)| g * mu).sum::<f64>();

    if !converged && iterations >= opts.max_iter {
        return Err(Error::NoConvergence {
            iterations,
            objective: best_obj,
            alpha,
            gamma,
        });
    }

    let model = LinearQuantileModel { tau, alpha, gamma };
    let mut negatives = 0usize;
    for i in 0..t {
        let fit = model.predict_var(x.row(i))?;
        if y[i] - fit < 0.0 {
            negatives += 1;
        }
    }
    let info = FitInfo {
        objective: best_obj,
        iterations,
        ridge_damped,
        negative_fraction: negatives as f64 / t as f64,
    };
    Ok((model, info))
}

fn standardise(x: &Matrix) -> (Matrix, Vec<f64>, Vec<f64>) {
    let (t, m) = x.shape();
    let mut z = Matrix::zeros(t, m);
    let mut means = Vec::with_capacity(m);
    let mut sds = Vec::with_capacity(m);
    for j in 0..m {
        let mean = (0..t).map(|i| x.get(i, j)).sum::<f64>() / t as f64;
        let var = (0..t).map(|i| (x.get(i, j) - mean).powi(2)).sum::<f64>() / t as f64;
        let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
        for i in 0..t {
            z.set(i, j, (x.get(i, j) - mean) / sd);
        }
        means.push(mean);
        sds.push(sd);
    }
    (z, means, sds)
}

/// Cholesky on the correlation matrix of the standardised columns.
fn is_rank_deficient(z: &Matrix) -> bool {
    let (t, m) = z.shape();
    if m == 0 {
        return false;
    }
    let mut g = vec![0.0; m * m];
    for a in 0..m {
        for b in 0..m {
            g[a * m + b] = (0..t).map(|i| z.get(i, a) * z.get(i, b)).sum::<f64>() / t as f64;
        }
    }
    for j in 0..m {
        let mut d = g[j * m + j];
        for k in 0..j {
            d -= g[j * m + k] * g[j * m + k];
        }
        if d <= 1e-10 {
            return true;
        }
        let d = d.sqrt();
        g[j * m + j] = d;
        for i in (j + 1)..m {
            let mut s = g[i * m + j];
            for k in 0..j {
                s -= g[i * m + k] * g[j * m + k];
            }
            g[i * m + j] = s / d;
        }
    }
    false
}
