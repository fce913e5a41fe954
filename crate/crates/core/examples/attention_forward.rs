//! Builds a small Transformer quantile network, assembles a padded news
//! window, and shows that the prediction ignores pad tokens and is
//! unchanged by a joint permutation of tokens and readout weights.
//!
//! Usage: cargo run --example attention_forward

use covarlab::numcore::{softmax_cols, Matrix};
use covarlab::transformer::{concat_pi, model_forward, ArchConfig, TextWindow, TransformerModel, Variant};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> covarlab::error::Result<()> {
    env_logger::init();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let arch = ArchConfig {
        n: 6,
        d_e: 4,
        institutions: 3,
        heads: 2,
        ffn_hidden: 8,
        layers: 1,
        mlp_depth: 2,
        mlp_width: 8,
        variant: Variant::Plain,
    };
    let model = TransformerModel::init(arch.clone(), &mut rng)?;

    // four articles over three days, two pad slots
    let mask = vec![true, true, true, true, false, false];
    let mut emb = Matrix::zeros(arch.d_e, arch.n);
    for c in 0..4 {
        let v: Vec<f64> = (0..arch.d_e).map(|_| rng.random_range(-1.0..1.0)).collect();
        emb.set_col(c, &v);
    }
    let window = TextWindow {
        embeddings: emb,
        mask: mask.clone(),
        positions: vec![1, 1, 3, 4, 0, 0],
    }
    .with_positional_encoding()?;
    let returns = [-0.02, 0.01];
    let batch = concat_pi(&returns, &window.embeddings, &window.mask)?;
    let base = model_forward(&model, &batch)?;
    println!("prediction: {base:.10}");

    let scores = Matrix::from_vec(3, 3, vec![1.0, 2.0, 0.5, -1.0, 0.0, 3.0, 10.0, 10.0, 10.0])?;
    let attn = softmax_cols(&scores, &[true, true, false])?;
    println!("masked softmax (third key is pad): {attn:?}");

    let mut junk = batch.clone();
    junk.z.set_col(5, &[99.0; 6]);
    println!("with garbage in a pad slot: {:.10}", model_forward(&model, &junk)?);

    let perm = [3, 0, 2, 1, 5, 4];
    let mut permuted = batch.clone();
    let mut pmodel = model.clone();
    for (dst, &src) in perm.iter().enumerate() {
        permuted.z.set_col(dst, &batch.z.col(src));
        permuted.mask[dst] = batch.mask[src];
        pmodel.readout.set(dst, 0, model.readout.get(src, 0));
    }
    println!("tokens and readout permuted: {:.10}", model_forward(&pmodel, &permuted)?);
    Ok(())
}
