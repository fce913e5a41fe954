use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which Transformer block is used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Attention and FFN sublayers composed directly.
    #[default]
    Plain,
    /// Each sublayer wrapped in a residual connection followed by
    /// per-column normalisation.
    ResidualLayernorm,
}

impl Variant {
    pub fn code(self) -> u32 {
        match self {
            Variant::Plain => 0,
            Variant::ResidualLayernorm => 1,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(Variant::Plain),
            1 => Some(Variant::ResidualLayernorm),
            _ => None,
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plain" => Ok(Variant::Plain),
            "residual_layernorm" => Ok(Variant::ResidualLayernorm),
            other => Err(Error::InvalidArgument(format!("unknown variant {other:?}"))),
        }
    }
}

/// Architecture tuple of the Transformer quantile network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchConfig {
    /// Token capacity (articles per window, padded).
    pub n: usize,
    /// Embedding dimension.
    pub d_e: usize,
    /// Number of institutions; the return block has `institutions - 1` rows.
    pub institutions: usize,
    pub heads: usize,
    /// FFN hidden width.
    pub ffn_hidden: usize,
    pub layers: usize,
    /// MLP depth (number of affine maps).
    pub mlp_depth: usize,
    pub mlp_width: usize,
    #[serde(default)]
    pub variant: Variant,
}

impl ArchConfig {
    /// n = 97, d_e = 64, J = 8, H = 1, d_h = d_m = 64, L = 1, two-layer MLP.
    pub fn empirical() -> Self {
        Self {
            n: 97,
            d_e: 64,
            institutions: 8,
            heads: 1,
            ffn_hidden: 64,
            layers: 1,
            mlp_depth: 2,
            mlp_width: 64,
            variant: Variant::Plain,
        }
    }

    pub fn return_dim(&self) -> usize {
        self.institutions.saturating_sub(1)
    }

    /// Token dimension `(J − 1) + d_e`.
    pub fn d(&self) -> usize {
        self.return_dim() + self.d_e
    }

    pub fn head_dim(&self) -> usize {
        self.d() / self.heads
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidArgument(msg));
        if self.n == 0 {
            return fail("n must be at least 1".into());
        }
        if self.institutions < 2 {
            return fail("need at least two institutions".into());
        }
        if self.layers == 0 {
            return fail("at least one Transformer layer is required".into());
        }
        if self.mlp_depth == 0 {
            return fail("MLP depth must be at least 1".into());
        }
        if self.heads == 0 || !self.d().is_multiple_of(self.heads) {
            return fail(format!(
                "head count {} must divide d = {}",
                self.heads,
                self.d()
            ));
        }
        if self.ffn_hidden == 0 || (self.mlp_depth > 1 && self.mlp_width == 0) {
            return fail("hidden widths must be positive".into());
        }
        Ok(())
    }
}
