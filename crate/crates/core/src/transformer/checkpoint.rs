//! Binary checkpoints.
//!
//! Transformer (`CVTF`): magic, version u32, the nine [`ArchConfig`] fields as
//! u32 (n, d_e, institutions, heads, ffn_hidden, layers, mlp_depth,
//! mlp_width, variant), then every parameter matrix in
//! [`QuantileNet::params`] order as (rows u32, cols u32, row-major f64).
//!
//! Returns-only MLP (`CVMP`): magic, version u32, input u32, depth u32,
//! width u32, then the matrices the same way. All integers little-endian.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::numcore::Matrix;

use super::config::{ArchConfig, Variant};
use super::model::{QuantileNet, ReturnsMlp, TransformerModel};

pub const TRANSFORMER_MAGIC: &[u8; 4] = b"CVTF";
pub const MLP_MAGIC: &[u8; 4] = b"CVMP";
pub const CHECKPOINT_VERSION: u32 = 1;

struct Reader<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> Reader<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.inner.read_exact(&mut buf).map_err(|e| {
            if e.kind() == std::io::ErrorKind::UnexpectedEof {
                Error::Truncated {
                    offset: self.offset,
                }
            } else {
                Error::Io(e)
            }
        })?;
        self.offset += N as u64;
        Ok(buf)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }

    fn matrix_into(&mut self, target: &mut Matrix) -> Result<()> {
        let at = self.offset;
        let rows = self.u32()? as usize;
        let cols = self.u32()? as usize;
        if (rows, cols) != target.shape() {
            return Err(Error::Format {
                path: Default::default(),
                reason: format!(
                    "matrix at offset {at} is {rows}x{cols}, expected {:?}",
                    target.shape()
                ),
            });
        }
        for v in target.data_mut() {
            *v = self.f64()?;
        }
        Ok(())
    }
}

fn write_matrix(w: &mut impl Write, m: &Matrix) -> Result<()> {
    w.write_all(&(m.rows() as u32).to_le_bytes())?;
    w.write_all(&(m.cols() as u32).to_le_bytes())?;
    for v in m.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn check_header<R: Read>(r: &mut Reader<R>, magic: &[u8; 4]) -> Result<()> {
    let got: [u8; 4] = r.bytes()?;
    if &got != magic {
        return Err(Error::Format {
            path: Default::default(),
            reason: format!("bad magic {:?}", String::from_utf8_lossy(&got)),
        });
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format {
            path: Default::default(),
            reason: format!("unsupported version {version}"),
        });
    }
    Ok(())
}

pub fn write_transformer(w: &mut impl Write, model: &TransformerModel) -> Result<()> {
    let c = &model.config;
    w.write_all(TRANSFORMER_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    for field in [
        c.n,
        c.d_e,
        c.institutions,
        c.heads,
        c.ffn_hidden,
        c.layers,
        c.mlp_depth,
        c.mlp_width,
    ] {
        w.write_all(&(field as u32).to_le_bytes())?;
    }
    w.write_all(&c.variant.code().to_le_bytes())?;
    for m in model.params() {
        write_matrix(w, m)?;
    }
    Ok(())
}

pub fn read_transformer(r: impl Read) -> Result<TransformerModel> {
    let mut r = Reader {
        inner: r,
        offset: 0,
    };
    check_header(&mut r, TRANSFORMER_MAGIC)?;
    let mut f = [0usize; 8];
    for v in &mut f {
        *v = r.u32()? as usize;
    }
    let code = r.u32()?;
    let variant = Variant::from_code(code).ok_or_else(|| Error::Format {
        path: Default::default(),
        reason: format!("unknown variant code {code}"),
    })?;
    let config = ArchConfig {
        n: f[0],
        d_e: f[1],
        institutions: f[2],
        heads: f[3],
        ffn_hidden: f[4],
        layers: f[5],
        mlp_depth: f[6],
        mlp_width: f[7],
        variant,
    };
    let mut model = TransformerModel::zeros(config)?;
    for m in model.params_mut() {
        r.matrix_into(m)?;
    }
    Ok(model)
}

pub fn write_mlp(w: &mut impl Write, model: &ReturnsMlp) -> Result<()> {
    w.write_all(MLP_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    let width = if model.mlp.depth() > 1 {
        model.mlp.weights[0].rows()
    } else {
        0
    };
    for field in [model.mlp.input_dim(), model.mlp.depth(), width] {
        w.write_all(&(field as u32).to_le_bytes())?;
    }
    for m in model.params() {
        write_matrix(w, m)?;
    }
    Ok(())
}

pub fn read_mlp(r: impl Read) -> Result<ReturnsMlp> {
    let mut r = Reader {
        inner: r,
        offset: 0,
    };
    check_header(&mut r, MLP_MAGIC)?;
    let input = r.u32()? as usize;
    let depth = r.u32()? as usize;
    let width = r.u32()? as usize;
    if depth == 0 {
        return Err(Error::Format {
            path: Default::default(),
            reason: "MLP depth 0".into(),
        });
    }
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
    let mut model = ReturnsMlp::init(input, depth, width, &mut rng);
    for m in model.params_mut() {
        r.matrix_into(m)?;
    }
    Ok(model)
}

fn with_path<T>(res: Result<T>, path: &Path) -> Result<T> {
    res.map_err(|e| match e {
        Error::Format { reason, .. } => Error::Format {
            path: path.to_path_buf(),
            reason,
        },
        other => other,
    })
}

pub fn save_transformer(model: &TransformerModel, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_transformer(&mut buf, model)?;
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn load_transformer(path: &Path) -> Result<TransformerModel> {
    let bytes = std::fs::read(path)?;
    with_path(read_transformer(bytes.as_slice()), path)
}

pub fn save_mlp(model: &ReturnsMlp, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_mlp(&mut buf, model)?;
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn load_mlp(path: &Path) -> Result<ReturnsMlp> {
    let bytes = std::fs::read(path)?;
    with_path(read_mlp(bytes.as_slice()), path)
}
