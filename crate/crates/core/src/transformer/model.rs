use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::{Matrix, Tape, Var};

use super::config::{ArchConfig, Variant};
use super::inputs::{concat_pi, Features, TokenBatch};

const LAYER_NORM_EPS: f64 = 1e-5;

/// A network trainable with the pinball loss.
pub trait QuantileNet: Clone + Send + Sync {
    /// Parameters in a fixed order shared by [`Self::params_mut`] and
    /// [`Self::forward`].
    fn params(&self) -> Vec<&Matrix>;

    fn params_mut(&mut self) -> Vec<&mut Matrix>;

    /// Records the forward pass on `tape`, reading parameters from `params`
    /// (in [`Self::params`] order). Returns a `1 × 1` node.
    fn forward(&self, tape: &mut Tape, params: &[Var], features: &Features) -> Result<Var>;

    fn predict(&self, features: &Features) -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = self
            .params()
            .into_iter()
            .map(|p| tape.leaf(p.clone()))
            .collect();
        let out = self.forward(&mut tape, &vars, features)?;
        let v = tape.value(out).item();
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite("predict"))
        }
    }
}

fn glorot<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    let a = (6.0 / (rows + cols) as f64).sqrt();
    let dist = Uniform::new_inclusive(-a, a).expect("finite bound");
    let data = (0..rows * cols).map(|_| dist.sample(rng)).collect();
    Matrix::from_vec(rows, cols, data).expect("shape")
}

/// Per-head attention weights: key, query, value are `d/H × d`, output is `d × d/H`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Head {
    pub key: Matrix,
    pub query: Matrix,
    pub value: Matrix,
    pub output: Matrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub heads: Vec<Head>,
    pub w1: Matrix,
    pub b1: Matrix,
    pub w2: Matrix,
    pub b2: Matrix,
}

/// `W_D σ(… σ(W_1 x + b_1) …) + b_D` with column-vector biases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Matrix>,
}

impl Mlp {
    pub fn init<R: Rng + ?Sized>(input: usize, depth: usize, width: usize, rng: &mut R) -> Self {
        let mut dims = vec![input];
        dims.extend(std::iter::repeat_n(width, depth - 1));
        dims.push(1);
        let weights = dims.windows(2).map(|w| glorot(w[1], w[0], rng)).collect();
        let biases = dims[1..].iter().map(|&o| Matrix::zeros(o, 1)).collect();
        Self { weights, biases }
    }

    pub fn input_dim(&self) -> usize {
        self.weights[0].cols()
    }

    pub fn depth(&self) -> usize {
        self.weights.len()
    }

    fn params(&self) -> Vec<&Matrix> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| [w, b])
            .collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Matrix> {
        self.weights
            .iter_mut()
            .zip(self.biases.iter_mut())
            .flat_map(|(w, b)| [w, b])
            .collect()
    }

    fn forward(
        &self,
        tape: &mut Tape,
        params: &mut impl Iterator<Item = Var>,
        input: Var,
    ) -> Result<Var> {
        let mut h = input;
        let depth = self.depth();
        for i in 0..depth {
            let w = next(params)?;
            let b = next(params)?;
            let lin = tape.matmul(w, h)?;
            h = tape.add_column(lin, b)?;
            if i + 1 < depth {
                h = tape.relu(h);
            }
        }
        Ok(h)
    }
}

fn next(params: &mut impl Iterator<Item = Var>) -> Result<Var> {
    params
        .next()
        .ok_or_else(|| Error::InvalidArgument("parameter list too short".into()))
}

/// Transformer layers, readout vector `w` (n × 1), and MLP head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformerModel {
    pub config: ArchConfig,
    pub layers: Vec<Layer>,
    pub readout: Matrix,
    pub head: Mlp,
}

impl TransformerModel {
    /// Glorot-uniform weights, zero biases.
    pub fn init<R: Rng + ?Sized>(config: ArchConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let d = config.d();
        let dh = config.head_dim();
        let layers = (0..config.layers)
            .map(|_| Layer {
                heads: (0..config.heads)
                    .map(|_| Head {
                        key: glorot(dh, d, rng),
                        query: glorot(dh, d, rng),
                        value: glorot(dh, d, rng),
                        output: glorot(d, dh, rng),
                    })
                    .collect(),
                w1: glorot(config.ffn_hidden, d, rng),
                b1: Matrix::zeros(config.ffn_hidden, 1),
                w2: glorot(d, config.ffn_hidden, rng),
                b2: Matrix::zeros(d, 1),
            })
            .collect();
        let readout = glorot(config.n, 1, rng);
        let head = Mlp::init(d, config.mlp_depth, config.mlp_width, rng);
        Ok(Self {
            config,
            layers,
            readout,
            head,
        })
    }

    /// Every weight set to zero.
    pub fn zeros(config: ArchConfig) -> Result<Self> {
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
        let mut m = Self::init(config, &mut rng)?;
        for p in m.params_mut() {
            p.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        Ok(m)
    }

    /// Parameter names aligned with [`QuantileNet::params`].
    pub fn param_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for (l, layer) in self.layers.iter().enumerate() {
            for h in 0..layer.heads.len() {
                for kind in ["W_K", "W_Q", "W_V", "W_O"] {
                    names.push(format!("layer{l}.head{h}.{kind}"));
                }
            }
            for kind in ["W1", "b1", "W2", "b2"] {
                names.push(format!("layer{l}.ffn.{kind}"));
            }
        }
        names.push("readout.w".into());
        for i in 0..self.head.depth() {
            names.push(format!("mlp.W{}", i + 1));
            names.push(format!("mlp.b{}", i + 1));
        }
        names
    }

    /// Runs the whole network on a prepared token batch.
    pub fn forward_tokens(
        &self,
        tape: &mut Tape,
        params: &[Var],
        batch: &TokenBatch,
    ) -> Result<Var> {
        let cfg = &self.config;
        if batch.z.shape() != (cfg.d(), cfg.n) || batch.mask.len() != cfg.n {
            return Err(Error::Shape {
                op: "model_forward",
                left: (cfg.d(), cfg.n),
                right: batch.z.shape(),
            });
        }
        let mut it = params.iter().copied();
        let mut x = tape.leaf(batch.z.clone());
        for layer in &self.layers {
            let heads: Vec<[Var; 4]> = (0..layer.heads.len())
                .map(|_| Ok([next(&mut it)?, next(&mut it)?, next(&mut it)?, next(&mut it)?]))
                .collect::<Result<_>>()?;
            let ffn = [
                next(&mut it)?,
                next(&mut it)?,
                next(&mut it)?,
                next(&mut it)?,
            ];
            x = layer_forward(tape, x, &heads, ffn, &batch.mask, cfg.d(), cfg.variant)?;
        }
        let w = next(&mut it)?;
        let pooled = tape.matmul(x, w)?;
        self.head.forward(tape, &mut it, pooled)
    }
}

fn msa(tape: &mut Tape, z: Var, heads: &[[Var; 4]], mask: &[bool], d: usize) -> Result<Var> {
    let inv_sqrt_d = 1.0 / (d as f64).sqrt();
    let mut outs = Vec::with_capacity(heads.len());
    for &[key, query, value, output] in heads {
        let k = tape.matmul(key, z)?;
        let q = tape.matmul(query, z)?;
        let v = tape.matmul(value, z)?;
        let kt = tape.transpose(k);
        // rows index keys, columns index queries
        let scores = tape.matmul(kt, q)?;
        let scaled = tape.scale(scores, inv_sqrt_d);
        let attn = tape.softmax_cols(scaled, mask)?;
        let mixed = tape.matmul(v, attn)?;
        outs.push(tape.matmul(output, mixed)?);
    }
    tape.add_all(&outs)
}

fn ffn(tape: &mut Tape, x: Var, [w1, b1, w2, b2]: [Var; 4]) -> Result<Var> {
    let h = tape.matmul(w1, x)?;
    let h = tape.add_column(h, b1)?;
    let h = tape.relu(h);
    let o = tape.matmul(w2, h)?;
    tape.add_column(o, b2)
}

fn layer_forward(
    tape: &mut Tape,
    z: Var,
    heads: &[[Var; 4]],
    ffn_params: [Var; 4],
    mask: &[bool],
    d: usize,
    variant: Variant,
) -> Result<Var> {
    let out = match variant {
        Variant::Plain => {
            let a = msa(tape, z, heads, mask, d)?;
            ffn(tape, a, ffn_params)?
        }
        Variant::ResidualLayernorm => {
            let a = msa(tape, z, heads, mask, d)?;
            let a = tape.add(z, a)?;
            let a = tape.layer_norm_cols(a, LAYER_NORM_EPS);
            let f = ffn(tape, a, ffn_params)?;
            let f = tape.add(a, f)?;
            tape.layer_norm_cols(f, LAYER_NORM_EPS)
        }
    };
    tape.mask_cols(out, mask)
}

impl QuantileNet for TransformerModel {
    fn params(&self) -> Vec<&Matrix> {
        let mut out = Vec::new();
        for layer in &self.layers {
            for h in &layer.heads {
                out.extend([&h.key, &h.query, &h.value, &h.output]);
            }
            out.extend([&layer.w1, &layer.b1, &layer.w2, &layer.b2]);
        }
        out.push(&self.readout);
        out.extend(self.head.params());
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            for h in &mut layer.heads {
                out.extend([&mut h.key, &mut h.query, &mut h.value, &mut h.output]);
            }
            out.extend([&mut layer.w1, &mut layer.b1, &mut layer.w2, &mut layer.b2]);
        }
        out.push(&mut self.readout);
        out.extend(self.head.params_mut());
        out
    }

    fn forward(&self, tape: &mut Tape, params: &[Var], features: &Features) -> Result<Var> {
        let batch = concat_pi(
            &features.returns,
            &features.text.embeddings,
            &features.text.mask,
        )?;
        self.forward_tokens(tape, params, &batch)
    }
}

/// Returns-only MLP baseline; its input is the other institutions' returns
/// followed by any auxiliary scalars (e.g. a sentiment index).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnsMlp {
    pub mlp: Mlp,
}

impl ReturnsMlp {
    pub fn init<R: Rng + ?Sized>(input: usize, depth: usize, width: usize, rng: &mut R) -> Self {
        Self {
            mlp: Mlp::init(input, depth, width, rng),
        }
    }
}

impl QuantileNet for ReturnsMlp {
    fn params(&self) -> Vec<&Matrix> {
        self.mlp.params()
    }

    fn params_mut(&mut self) -> Vec<&mut Matrix> {
        self.mlp.params_mut()
    }

    fn forward(&self, tape: &mut Tape, params: &[Var], features: &Features) -> Result<Var> {
        let mut input = features.returns.clone();
        input.extend_from_slice(&features.aux);
        if input.len() != self.mlp.input_dim() {
            return Err(Error::Shape {
                op: "mlp_forward",
                left: (self.mlp.input_dim(), 1),
                right: (input.len(), 1),
            });
        }
        let x = tape.leaf(Matrix::column(&input));
        let mut it = params.iter().copied();
        self.mlp.forward(tape, &mut it, x)
    }
}

fn leaves(tape: &mut Tape, ms: &[&Matrix]) -> Vec<Var> {
    ms.iter().map(|m| tape.leaf((*m).clone())).collect()
}

/// Multi-head self-attention `Σ_h W_O W_V Z σ_S(Zᵀ W_Kᵀ W_Q Z / √d)` with pad
/// keys excluded from every softmax column.
pub fn msa_forward(batch: &TokenBatch, heads: &[Head]) -> Result<Matrix> {
    let d = batch.z.rows();
    let mut tape = Tape::new();
    let z = tape.leaf(batch.z.clone());
    let vars: Vec<[Var; 4]> = heads
        .iter()
        .map(|h| {
            let v = leaves(&mut tape, &[&h.key, &h.query, &h.value, &h.output]);
            [v[0], v[1], v[2], v[3]]
        })
        .collect();
    let out = msa(&mut tape, z, &vars, &batch.mask, d)?;
    Ok(tape.value(out).clone())
}

/// Column-wise `W2 relu(W1 X + b1) + b2`.
pub fn ffn_forward(x: &Matrix, w1: &Matrix, b1: &Matrix, w2: &Matrix, b2: &Matrix) -> Result<Matrix> {
    let mut tape = Tape::new();
    let xv = tape.leaf(x.clone());
    let p = leaves(&mut tape, &[w1, b1, w2, b2]);
    let out = ffn(&mut tape, xv, [p[0], p[1], p[2], p[3]])?;
    Ok(tape.value(out).clone())
}

/// Scalar prediction of the full network on a token batch.
pub fn model_forward(model: &TransformerModel, batch: &TokenBatch) -> Result<f64> {
    let mut tape = Tape::new();
    let vars = leaves(&mut tape, &model.params());
    let out = model.forward_tokens(&mut tape, &vars, batch)?;
    Ok(tape.value(out).item())
}

/// Norms of one weight matrix.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormRow {
    pub name: String,
    pub spectral: f64,
    /// Sum of row ℓ2 norms.
    pub two_one: f64,
    pub max_abs: f64,
}

pub fn matrix_norms(name: &str, m: &Matrix) -> NormRow {
    let spectral = if m.rows() == 0 || m.cols() == 0 {
        0.0
    } else {
        let dm = nalgebra::DMatrix::from_row_slice(m.rows(), m.cols(), m.data());
        dm.singular_values().iter().fold(0.0f64, |a, b| a.max(*b))
    };
    let two_one = (0..m.rows())
        .map(|r| m.row(r).iter().map(|v| v * v).sum::<f64>().sqrt())
        .sum();
    NormRow {
        name: name.to_string(),
        spectral,
        two_one,
        max_abs: m.max_abs(),
    }
}

/// Spectral, (2,1) and max-abs norm of every parameter matrix.
pub fn weight_norm_report(model: &TransformerModel) -> Vec<NormRow> {
    model
        .param_names()
        .iter()
        .zip(model.params())
        .map(|(n, m)| matrix_norms(n, m))
        .collect()
}
