//! Transformer quantile network: return-augmented tokens, masked multi-head
//! self-attention, position-wise FFN, linear readout over tokens, and an MLP
//! head producing one quantile.

pub mod checkpoint;
mod config;
mod inputs;
mod model;

pub use config::{ArchConfig, Variant};
pub use inputs::{concat_pi, positional_encoding, Features, TextWindow, TokenBatch};
pub use model::{
    ffn_forward, matrix_norms, model_forward, msa_forward, weight_norm_report, Head, Layer, Mlp,
    NormRow, QuantileNet, ReturnsMlp, TransformerModel,
};
