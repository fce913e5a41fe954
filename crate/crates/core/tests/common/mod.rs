//! Shared oracles and criterion checks for the integration and acceptance
//! suites. Each `check_*` returns a one-line detail on success or failure.

#![allow(dead_code)]

use std::fs;
use std::path::Path;
use std::time::Instant;

use covarlab::experiment::{run_covar_experiment, run_crisis_experiment, CovarExperiment, CrisisExperiment};
use covarlab::numcore::{grad, softmax_cols, Matrix, Tape, Var};
use covarlab::pipeline::delta_covar;
use covarlab::quantile::{fit_linear_quantile, SolverOptions};
use covarlab::simulation::{
    inverse_normal_cdf, theoretical_covar, theoretical_var1, theoretical_var2, SimConfig,
};
use covarlab::transformer::{
    model_forward, ArchConfig, Features, Head, Layer, Mlp, QuantileNet, TextWindow, TokenBatch,
    TransformerModel, Variant,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};

pub type Check = Result<String, String>;

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOL: f64 = 1e-4;
pub const FD_INSTANCES: usize = 20;

pub fn rand_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.random_range(-scale..scale)).collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

/// Mask with at least one valid column.
pub fn rand_mask(rng: &mut ChaCha8Rng, n: usize) -> Vec<bool> {
    let mut mask: Vec<bool> = (0..n).map(|_| rng.random_bool(0.6)).collect();
    if !mask.iter().any(|v| *v) {
        let k = rng.random_range(0..n);
        mask[k] = true;
    }
    mask
}

/// Largest per-parameter relative error `‖analytic − numeric‖ / max(‖·‖, ‖·‖, 1e−8)`
/// between tape gradients and central differences.
pub fn fd_max_rel_error<F>(params: &[Matrix], f: F) -> Result<f64, String>
where
    F: Fn(&mut Tape, &[Var]) -> covarlab::error::Result<Var>,
{
    let refs: Vec<&Matrix> = params.iter().collect();
    let analytic = grad(&refs, &f).map_err(|e| e.to_string())?;
    let eval = |ps: &[Matrix]| -> Result<f64, String> {
        let refs: Vec<&Matrix> = ps.iter().collect();
        grad(&refs, &f).map(|g| g.loss).map_err(|e| e.to_string())
    };
    let mut worst: f64 = 0.0;
    let mut work = params.to_vec();
    for (k, g) in analytic.grads.iter().enumerate() {
        let mut diff2 = 0.0;
        let mut a2 = 0.0;
        let mut n2 = 0.0;
        for e in 0..g.data().len() {
            let orig = work[k].data()[e];
            work[k].data_mut()[e] = orig + FD_STEP;
            let up = eval(&work)?;
            work[k].data_mut()[e] = orig - FD_STEP;
            let down = eval(&work)?;
            work[k].data_mut()[e] = orig;
            let numeric = (up - down) / (2.0 * FD_STEP);
            let a = g.data()[e];
            diff2 += (a - numeric).powi(2);
            a2 += a * a;
            n2 += numeric * numeric;
        }
        let rel = diff2.sqrt() / a2.sqrt().max(n2.sqrt()).max(1e-8);
        worst = worst.max(rel);
    }
    Ok(worst)
}

/// Reduces a matrix node to a scalar through fixed random weights.
fn contract(t: &mut Tape, x: Var, left: &Matrix, right: &Matrix) -> covarlab::error::Result<Var> {
    let l = t.leaf(left.clone());
    let r = t.leaf(right.clone());
    let lx = t.matmul(l, x)?;
    t.matmul(lx, r)
}

/// Names and worst relative errors of every primitive over
/// [`FD_INSTANCES`] random instances each.
pub fn primitive_fd_errors(seed: u64) -> Result<Vec<(&'static str, f64)>, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<(&'static str, f64)> = Vec::new();
    let mut record = |name: &'static str, err: f64| match out.iter_mut().find(|(n, _)| *n == name) {
        Some((_, w)) => *w = w.max(err),
        None => out.push((name, err)),
    };
    for _ in 0..FD_INSTANCES {
        let (r, c, k) = (rng.random_range(1..4), rng.random_range(1..5), rng.random_range(1..4));
        let a = rand_matrix(&mut rng, r, k, 1.0);
        let b = rand_matrix(&mut rng, k, c, 1.0);
        let x = rand_matrix(&mut rng, r, c, 1.0);
        let y = rand_matrix(&mut rng, r, c, 1.0);
        let bias = rand_matrix(&mut rng, r, 1, 1.0);
        let left = rand_matrix(&mut rng, 1, r, 1.0);
        let right = rand_matrix(&mut rng, c, 1, 1.0);
        let left_t = rand_matrix(&mut rng, 1, c, 1.0);
        let right_t = rand_matrix(&mut rng, r, 1, 1.0);
        let factor = rng.random_range(-2.0..2.0);
        let mask = rand_mask(&mut rng, c);
        // keep relu inputs away from the kink
        let x_relu = x.map(|v| if v.abs() < 0.05 { v + 0.1f64.copysign(v) } else { v });

        record(
            "matmul",
            fd_max_rel_error(&[a.clone(), b.clone()], |t, v| {
                let m = t.matmul(v[0], v[1])?;
                contract(t, m, &left, &right)
            })?,
        );
        record(
            "add",
            fd_max_rel_error(&[x.clone(), y.clone()], |t, v| {
                let m = t.add(v[0], v[1])?;
                contract(t, m, &left, &right)
            })?,
        );
        record(
            "sub",
            fd_max_rel_error(&[x.clone(), y.clone()], |t, v| {
                let m = t.sub(v[0], v[1])?;
                contract(t, m, &left, &right)
            })?,
        );
        record(
            "add_column",
            fd_max_rel_error(&[x.clone(), bias.clone()], |t, v| {
                let m = t.add_column(v[0], v[1])?;
                contract(t, m, &left, &right)
            })?,
        );
        record(
            "scale",
            fd_max_rel_error(std::slice::from_ref(&x), |t, v| {
                let m = t.scale(v[0], factor);
                contract(t, m, &left, &right)
            })?,
        );
        record(
            "transpose",
            fd_max_rel_error(std::slice::from_ref(&x), |t, v| {
                let m = t.transpose(v[0]);
                contract(t, m, &left_t, &right_t)
            })?,
        );
        record(
            "relu",
            fd_max_rel_error(&[x_relu], |t, v| {
                let m = t.relu(v[0]);
                contract(t, m, &left, &right)
            })?,
        );
        record(
            "softmax_cols",
            fd_max_rel_error(&[rand_matrix(&mut rng, c, c, 2.0)], |t, v| {
                let m = t.softmax_cols(v[0], &mask)?;
                let l = rand_const(c, 1);
                let r = rand_const(c, 2);
                contract(t, m, &l, &r)
            })?,
        );
        record(
            "mask_cols",
            fd_max_rel_error(std::slice::from_ref(&x), |t, v| {
                let m = t.mask_cols(v[0], &mask)?;
                contract(t, m, &left, &right)
            })?,
        );
        let tall = rand_matrix(&mut rng, r + 1, c, 1.0);
        let left_tall = rand_matrix(&mut rng, 1, r + 1, 1.0);
        record(
            "layer_norm_cols",
            fd_max_rel_error(&[tall], |t, v| {
                let m = t.layer_norm_cols(v[0], 1e-5);
                contract(t, m, &left_tall, &right)
            })?,
        );
        record(
            "sum",
            fd_max_rel_error(std::slice::from_ref(&x), |t, v| {
                let l = t.leaf(left.clone());
                let m = t.matmul(l, v[0])?;
                Ok(t.sum(m))
            })?,
        );
        record(
            "add_all",
            fd_max_rel_error(&[x.clone(), y.clone(), x.map(|v| v * 0.5)], |t, v| {
                let m = t.add_all(v)?;
                contract(t, m, &left, &right)
            })?,
        );
        let pred = rand_matrix(&mut rng, 1, 1, 1.0);
        let target = Matrix::scalar(pred.item() + rng.random_range(0.05..1.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 });
        let tau = rng.random_range(0.05..0.95);
        record(
            "pinball",
            fd_max_rel_error(&[pred], |t, v| t.pinball(v[0], target.clone(), tau))?,
        );
    }
    Ok(out)
}

fn rand_const(n: usize, salt: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(1000 + n as u64 * 31 + salt);
    if salt == 1 {
        rand_matrix(&mut rng, 1, n, 1.0)
    } else {
        rand_matrix(&mut rng, n, 1, 1.0)
    }
}

/// Small architecture used for the full-model gradient check:
/// n = 3, d = 4, H = 2, d_h = 4, D = 2, d_m = 4.
pub fn fd_arch(variant: Variant) -> ArchConfig {
    ArchConfig {
        n: 3,
        d_e: 3,
        institutions: 2,
        heads: 2,
        ffn_hidden: 4,
        layers: 1,
        mlp_depth: 2,
        mlp_width: 4,
        variant,
    }
}

pub fn random_features(rng: &mut ChaCha8Rng, arch: &ArchConfig) -> Features {
    let mask = rand_mask(rng, arch.n);
    let mut emb = rand_matrix(rng, arch.d_e, arch.n, 1.0);
    for (c, valid) in mask.iter().enumerate() {
        if !valid {
            emb.set_col(c, &vec![0.0; arch.d_e]);
        }
    }
    Features {
        returns: (0..arch.return_dim()).map(|_| rng.random_range(-1.0..1.0)).collect(),
        text: TextWindow {
            embeddings: emb,
            mask,
            positions: vec![0; arch.n],
        },
        aux: Vec::new(),
    }
}

/// Worst relative error of the full mean-pinball loss gradient over
/// [`FD_INSTANCES`] random models and batches of three samples.
pub fn model_fd_error(seed: u64, variant: Variant) -> Result<f64, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    while checked < FD_INSTANCES {
        let arch = fd_arch(variant);
        let model = TransformerModel::init(arch.clone(), &mut rng).map_err(|e| e.to_string())?;
        // nonzero biases so every parameter carries signal
        let mut model = model;
        for p in model.params_mut() {
            if p.cols() == 1 && p.rows() != arch.n {
                for v in p.data_mut() {
                    *v = rng.random_range(-0.5..0.5);
                }
            }
        }
        let samples: Vec<(Features, f64)> = (0..3)
            .map(|_| (random_features(&mut rng, &arch), rng.random_range(-1.0..1.0)))
            .collect();
        let tau = 0.05;
        // residuals must stay clear of the pinball kink
        let clear = samples.iter().all(|(f, y)| {
            model
                .predict(f)
                .map(|p| (y - p).abs() > 1e-3)
                .unwrap_or(false)
        });
        if !clear {
            continue;
        }
        let params: Vec<Matrix> = model.params().into_iter().cloned().collect();
        let err = fd_max_rel_error(&params, |t, v| {
            let mut losses = Vec::new();
            for (f, y) in &samples {
                let pred = model.forward(t, v, f)?;
                losses.push(t.pinball(pred, Matrix::scalar(*y), tau)?);
            }
            let total = t.add_all(&losses)?;
            Ok(t.scale(total, 1.0 / samples.len() as f64))
        })?;
        worst = worst.max(err);
        checked += 1;
    }
    Ok(worst)
}

pub fn check_gradients() -> Check {
    let mut lines = Vec::new();
    let mut ok = true;
    for (name, err) in primitive_fd_errors(11)? {
        ok &= err < FD_TOL;
        lines.push(format!("{name}={err:.1e}"));
    }
    for (label, variant) in [("model_plain", Variant::Plain), ("model_residual", Variant::ResidualLayernorm)] {
        let err = model_fd_error(23, variant)?;
        ok &= err < FD_TOL;
        lines.push(format!("{label}={err:.1e}"));
    }
    let detail = format!("max rel error per op ({FD_INSTANCES} instances): {}", lines.join(" "));
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Standard normal quantile by bisection on an independent CDF.
pub fn bisect_inverse_normal(p: f64) -> f64 {
    let n = Normal::new(0.0, 1.0).unwrap();
    let (mut lo, mut hi) = (-40.0f64, 40.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if n.cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

pub fn check_oracle_exactness() -> Check {
    let mut worst: f64 = 0.0;
    for tau in [0.01, 0.05, 0.5, 0.95] {
        let z = bisect_inverse_normal(tau);
        let cfg = SimConfig {
            tau,
            ..SimConfig::default()
        };
        for y_prev in [-0.7, -0.1, 0.0, 0.3, 1.2] {
            let v1 = cfg.phi * y_prev + cfg.sigma1 * z;
            let cv = cfg.beta * v1 + cfg.sigma2 * z;
            let s = (cfg.beta * cfg.beta * cfg.sigma1 * cfg.sigma1 + cfg.sigma2 * cfg.sigma2).sqrt();
            let v2 = cfg.beta * cfg.phi * y_prev + s * z;
            let got1 = theoretical_var1(&cfg, y_prev).map_err(|e| e.to_string())?;
            let gotc = theoretical_covar(&cfg, got1).map_err(|e| e.to_string())?;
            let got2 = theoretical_var2(&cfg, y_prev).map_err(|e| e.to_string())?;
            worst = worst.max((got1 - v1).abs()).max((gotc - cv).abs()).max((got2 - v2).abs());
        }
        worst = worst.max((inverse_normal_cdf(tau) - z).abs());
    }
    let median_zero = inverse_normal_cdf(0.5) == 0.0;
    let detail = format!("max |error| {worst:.2e}; z(0.5) == 0: {median_zero}");
    if worst <= 1e-8 && median_zero {
        Ok(detail)
    } else {
        Err(detail)
    }
}

pub fn check_quantile_coverage() -> Check {
    let t = 20_000;
    let tau = 0.05;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let normal = rand_distr::StandardNormal;
    let y: Vec<f64> = (0..t).map(|_| rng.sample::<f64, _>(normal)).collect();
    let x = Matrix::from_vec(t, 1, (0..t).map(|_| rng.sample::<f64, _>(normal)).collect()).unwrap();
    let model = fit_linear_quantile(&x, &y, tau, &SolverOptions::default()).map_err(|e| e.to_string())?;
    let mut sorted = y.clone();
    sorted.sort_by(f64::total_cmp);
    let empirical = sorted[(tau * t as f64).ceil() as usize - 1];
    let negatives = (0..t)
        .filter(|&i| y[i] - (model.alpha + model.gamma[0] * x.get(i, 0)) < 0.0)
        .count();
    let frac = negatives as f64 / t as f64;
    let half = 2.5758 * (tau * (1.0 - tau) / t as f64).sqrt();
    let detail = format!(
        "alpha {:.4} vs empirical {empirical:.4}; negative share {frac:.4} (CI {:.4}..{:.4})",
        model.alpha,
        tau - half,
        tau + half
    );
    if (model.alpha - empirical).abs() <= 0.05 && (frac - tau).abs() <= half {
        Ok(detail)
    } else {
        Err(detail)
    }
}

pub fn random_batch(rng: &mut ChaCha8Rng, d: usize, n: usize) -> TokenBatch {
    let mask = rand_mask(rng, n);
    let mut z = rand_matrix(rng, d, n, 1.0);
    for (c, valid) in mask.iter().enumerate() {
        if !valid {
            z.set_col(c, &vec![0.0; d]);
        }
    }
    TokenBatch { z, mask }
}

pub fn check_attention_invariants() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut worst_sum: f64 = 0.0;
    let mut pad_changes = 0;
    let mut worst_perm: f64 = 0.0;
    for i in 0..50 {
        let variant = if i % 2 == 0 { Variant::Plain } else { Variant::ResidualLayernorm };
        let arch = ArchConfig {
            n: 6,
            d_e: 4,
            institutions: 3,
            heads: 2,
            ffn_hidden: 5,
            layers: 1 + i % 2,
            mlp_depth: 2,
            mlp_width: 4,
            variant,
        };
        let model = TransformerModel::init(arch.clone(), &mut rng).map_err(|e| e.to_string())?;
        let batch = random_batch(&mut rng, arch.d(), arch.n);

        let scores = rand_matrix(&mut rng, arch.n, arch.n, 3.0);
        let s = softmax_cols(&scores, &batch.mask).map_err(|e| e.to_string())?;
        for c in 0..arch.n {
            let total: f64 = (0..arch.n).filter(|&r| batch.mask[r]).map(|r| s.get(r, c)).sum();
            worst_sum = worst_sum.max((total - 1.0).abs());
        }

        let base = model_forward(&model, &batch).map_err(|e| e.to_string())?;
        let mut mutated = batch.clone();
        for c in 0..arch.n {
            if !mutated.mask[c] {
                let junk: Vec<f64> = (0..arch.d()).map(|_| rng.random_range(-50.0..50.0)).collect();
                mutated.z.set_col(c, &junk);
            }
        }
        if model_forward(&model, &mutated).map_err(|e| e.to_string())?.to_bits() != base.to_bits() {
            pad_changes += 1;
        }

        let mut perm: Vec<usize> = (0..arch.n).collect();
        for k in (1..perm.len()).rev() {
            perm.swap(k, rng.random_range(0..=k));
        }
        let mut permuted = batch.clone();
        let mut pmodel = model.clone();
        for (dst, &src) in perm.iter().enumerate() {
            permuted.z.set_col(dst, &batch.z.col(src));
            permuted.mask[dst] = batch.mask[src];
            pmodel.readout.set(dst, 0, model.readout.get(src, 0));
        }
        let out = model_forward(&pmodel, &permuted).map_err(|e| e.to_string())?;
        worst_perm = worst_perm.max((out - base).abs() / base.abs().max(1.0));
    }
    let detail = format!(
        "softmax sum error {worst_sum:.1e}; pad-dependent outputs {pad_changes}/50; permutation error {worst_perm:.1e}"
    );
    if worst_sum <= 1e-9 && pad_changes == 0 && worst_perm <= 1e-10 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Transformer whose output is affine in the returns: zero query/key
/// weights give uniform attention, and a large FFN bias keeps every ReLU
/// active. Returns the model and its return sensitivity `s`.
pub fn affine_transformer(rng: &mut ChaCha8Rng, mask: &[bool]) -> (TransformerModel, Vec<f64>) {
    let arch = ArchConfig {
        n: mask.len(),
        d_e: 2,
        institutions: 4,
        heads: 1,
        ffn_hidden: 3,
        layers: 1,
        mlp_depth: 1,
        mlp_width: 0,
        variant: Variant::Plain,
    };
    let d = arch.d();
    let head = Head {
        key: Matrix::zeros(d, d),
        query: Matrix::zeros(d, d),
        value: rand_matrix(rng, d, d, 0.5),
        output: rand_matrix(rng, d, d, 0.5),
    };
    let layer = Layer {
        heads: vec![head],
        w1: rand_matrix(rng, 3, d, 0.5),
        b1: Matrix::filled(3, 1, 100.0),
        w2: rand_matrix(rng, d, 3, 0.5),
        b2: rand_matrix(rng, d, 1, 0.5),
    };
    let readout = rand_matrix(rng, arch.n, 1, 1.0);
    let mut init_rng = ChaCha8Rng::seed_from_u64(0);
    let mut head_mlp = Mlp::init(d, 1, 0, &mut init_rng);
    let w_mlp = rand_matrix(rng, 1, d, 1.0);
    head_mlp.weights[0] = w_mlp.clone();

    // s = (Σ_valid w_c) · W_mlp W2 W1 W_O W_V restricted to the return rows
    let ov = layer.heads[0].output.matmul(&layer.heads[0].value).unwrap();
    let chain = w_mlp.matmul(&layer.w2).unwrap().matmul(&layer.w1).unwrap().matmul(&ov).unwrap();
    let wsum: f64 = (0..arch.n).filter(|&c| mask[c]).map(|c| readout.get(c, 0)).sum();
    let s = (0..arch.return_dim()).map(|k| wsum * chain.get(0, k)).collect();
    let model = TransformerModel {
        config: arch,
        layers: vec![layer],
        readout,
        head: head_mlp,
    };
    (model, s)
}

pub fn check_delta_covar_identities() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    let mut worst_self: f64 = 0.0;
    let mut worst_affine: f64 = 0.0;
    for _ in 0..20 {
        let mask = rand_mask(&mut rng, 4);
        let (model, s) = affine_transformer(&mut rng, &mask);
        let mut emb = rand_matrix(&mut rng, 2, 4, 1.0);
        for (c, valid) in mask.iter().enumerate() {
            if !valid {
                emb.set_col(c, &[0.0, 0.0]);
            }
        }
        let text = TextWindow {
            embeddings: emb,
            mask: mask.clone(),
            positions: vec![0; 4],
        };
        let v_tau: Vec<f64> = (0..3).map(|_| rng.random_range(-0.5..0.0)).collect();
        let v_med: Vec<f64> = (0..3).map(|_| rng.random_range(-0.1..0.1)).collect();
        let same = delta_covar(&model, &v_tau, &v_tau, &text).map_err(|e| e.to_string())?;
        worst_self = worst_self.max(same.abs());
        let got = delta_covar(&model, &v_tau, &v_med, &text).map_err(|e| e.to_string())?;
        let want: f64 = s.iter().zip(v_tau.iter().zip(&v_med)).map(|(s, (a, b))| s * (a - b)).sum();
        worst_affine = worst_affine.max((got - want).abs());
    }
    let detail = format!("|ΔCoVaR(v, v)| max {worst_self:e}; affine error {worst_affine:.1e}");
    if worst_self == 0.0 && worst_affine <= 1e-10 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Small but complete configuration for end-to-end CLI runs.
pub const SMALL_PIPELINE_TOML: &str = r#"
[sim]
T = 400
seed = 3

[train]
lr_grid = [0.015]
batch_grid = [32, 64]
max_epochs = 30
patience = 10
seed = 9

[window]
n_max = 5
"#;

fn cli(args: &[&str]) -> Result<(), String> {
    let mut full = vec!["covarlab"];
    full.extend_from_slice(args);
    match covarlab::cli::run_with_args(full) {
        0 => Ok(()),
        code => Err(format!("`{}` exited with {code}", args.join(" "))),
    }
}

/// simulate → fit-var → fit-covar → predict → backtest in `root`.
pub fn run_small_pipeline(root: &Path, config: &Path) -> Result<(), String> {
    let p = |s: &str| root.join(s).display().to_string();
    let cfg = config.display().to_string();
    cli(&["simulate", "--config", &cfg, "--out", &p("sim"), "--seed", "3"])?;
    cli(&["fit-var", "--config", &cfg, "--returns", &p("sim/returns.csv"), "--out", &p("var")])?;
    cli(&[
        "fit-covar",
        "--config",
        &cfg,
        "--returns",
        &p("sim/returns.csv"),
        "--embeddings",
        &p("sim/embeddings.cvem"),
        "--out",
        &p("covar"),
        "--seed",
        "9",
    ])?;
    cli(&[
        "predict",
        "--returns",
        &p("sim/returns.csv"),
        "--embeddings",
        &p("sim/embeddings.cvem"),
        "--var-dir",
        &p("var"),
        "--model-dir",
        &p("covar"),
        "--out",
        &p("pred"),
    ])?;
    cli(&[
        "backtest",
        "--returns",
        &p("sim/returns.csv"),
        "--risk",
        &format!("transformer={}", p("pred/risk.csv")),
        "--out",
        &p("bt"),
    ])
}

/// Every non-manifest file under `root`, relative path → bytes.
pub fn primary_outputs(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in fs::read_dir(&dir).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else if !path.file_name().unwrap().to_string_lossy().starts_with("manifest.") {
                let rel = path.strip_prefix(root).unwrap().display().to_string();
                out.push((rel, fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

pub fn check_pipeline_determinism() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = tmp.path().join("small.toml");
    fs::write(&config, SMALL_PIPELINE_TOML).map_err(|e| e.to_string())?;
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    run_small_pipeline(&a, &config)?;
    run_small_pipeline(&b, &config)?;
    let (oa, ob) = (primary_outputs(&a), primary_outputs(&b));
    let names: Vec<&str> = oa.iter().map(|(n, _)| n.as_str()).collect();
    let detail = format!("{} primary files compared", oa.len());
    if oa == ob && names.contains(&"bt/loss_table.csv") && names.contains(&"pred/risk.csv") {
        Ok(detail)
    } else {
        Err(format!("{detail}; outputs differ"))
    }
}

pub fn check_sim_mae() -> Check {
    let mut exp = CovarExperiment::default();
    exp.train.parallel = false;
    let start = Instant::now();
    let out = run_covar_experiment(&exp).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let t = out.transformer.mae;
    let m = out.mlp.mae;
    let detail = format!(
        "Transformer MAE {t:.4} (<= 0.04), MLP MAE {m:.4} (in [0.02, 0.06]), VaR plug-in floor {:.4}, {secs:.0} s",
        out.plug_in_floor
    );
    if t <= 0.04 && (0.02..=0.06).contains(&m) && secs <= 600.0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

pub fn check_crisis_direction() -> Check {
    let out = run_crisis_experiment(&CrisisExperiment::default()).map_err(|e| e.to_string())?;
    let detail = format!(
        "crisis-date mean CoVaR: text {:.5} vs returns-only {:.5} over {} dates",
        out.text_crisis_mean, out.returns_only_crisis_mean, out.crisis_test_dates
    );
    if out.crisis_test_dates > 0 && out.text_crisis_mean < out.returns_only_crisis_mean {
        Ok(detail)
    } else {
        Err(detail)
    }
}
