//! Compares tape gradients of the mean pinball loss with central finite
//! differences for every parameter matrix of a small network.
//!
//! Usage: cargo run --example gradient_check

use covarlab::numcore::{grad, Matrix};
use covarlab::transformer::{ArchConfig, Features, QuantileNet, TextWindow, TransformerModel, Variant};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const STEP: f64 = 1e-5;

fn main() -> covarlab::error::Result<()> {
    env_logger::init();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let arch = ArchConfig {
        n: 3,
        d_e: 3,
        institutions: 2,
        heads: 2,
        ffn_hidden: 4,
        layers: 1,
        mlp_depth: 2,
        mlp_width: 4,
        variant: Variant::ResidualLayernorm,
    };
    let model = TransformerModel::init(arch.clone(), &mut rng)?;
    let mut emb = Matrix::zeros(3, 3);
    for c in 0..2 {
        emb.set_col(c, &[rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), 0.3]);
    }
    let features = Features {
        returns: vec![0.4],
        text: TextWindow {
            embeddings: emb,
            mask: vec![true, true, false],
            positions: vec![0, 2, 0],
        },
        aux: Vec::new(),
    };
    let target = -0.7;
    let loss = |params: &[&Matrix]| {
        grad(params, |t, v| {
            let p = model.forward(t, v, &features)?;
            t.pinball(p, Matrix::scalar(target), 0.05)
        })
    };

    let params: Vec<Matrix> = model.params().into_iter().cloned().collect();
    let refs: Vec<&Matrix> = params.iter().collect();
    let analytic = loss(&refs)?;
    println!("loss {:.8}", analytic.loss);
    println!("{:<20}{:>14}", "parameter", "rel. error");
    for (k, name) in model.param_names().iter().enumerate() {
        let mut work = params.clone();
        let (mut diff, mut norm) = (0.0f64, 0.0f64);
        for e in 0..work[k].data().len() {
            let orig = work[k].data()[e];
            work[k].data_mut()[e] = orig + STEP;
            let up = loss(&work.iter().collect::<Vec<_>>())?.loss;
            work[k].data_mut()[e] = orig - STEP;
            let down = loss(&work.iter().collect::<Vec<_>>())?.loss;
            work[k].data_mut()[e] = orig;
            let numeric = (up - down) / (2.0 * STEP);
            let a = analytic.grads[k].data()[e];
            diff = diff.max((a - numeric).abs());
            norm = norm.max(a.abs()).max(numeric.abs());
        }
        println!("{name:<20}{:>14.2e}", diff / norm.max(1e-8));
    }
    Ok(())
}
