//! Dense matrices and a small reverse-mode gradient engine.
//!
//! Everything is `f64`. Reductions run in a fixed row-major, left-to-right
//! order and nothing inside a single operation runs in parallel, so results
//! are bit-reproducible for identical inputs.

mod matrix;
mod tape;

pub use matrix::{relu, softmax_cols, Matrix};
pub use tape::{grad, Gradients, Tape, Var};
