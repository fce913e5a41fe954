//! Model inputs: padded text windows, positional encodings, and the
//! return-augmented token matrix.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::Matrix;

/// `d_e × n` embedding matrix with a validity mask and the day offset
/// (0 = oldest day of the window) of every column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextWindow {
    pub embeddings: Matrix,
    pub mask: Vec<bool>,
    pub positions: Vec<usize>,
}

impl TextWindow {
    /// All-pad window.
    pub fn empty(d_e: usize, n: usize) -> Self {
        Self {
            embeddings: Matrix::zeros(d_e, n),
            mask: vec![false; n],
            positions: vec![0; n],
        }
    }

    pub fn d_e(&self) -> usize {
        self.embeddings.rows()
    }

    pub fn n(&self) -> usize {
        self.embeddings.cols()
    }

    pub fn valid_count(&self) -> usize {
        self.mask.iter().filter(|v| **v).count()
    }

    /// Mean ℓ2 norm of the valid columns (0 for an all-pad window).
    pub fn mean_valid_norm(&self) -> f64 {
        let mut total = 0.0;
        let mut count = 0usize;
        for (c, &valid) in self.mask.iter().enumerate() {
            if valid {
                total += self.embeddings.col(c).iter().map(|v| v * v).sum::<f64>().sqrt();
                count += 1;
            }
        }
        if count == 0 {
            0.0
        } else {
            total / count as f64
        }
    }

    /// Adds sinusoidal encodings of each column's day offset to the valid
    /// columns, scaled by [`Self::mean_valid_norm`]. Pad columns are zeroed.
    pub fn with_positional_encoding(&self) -> Result<Self> {
        let scale = self.mean_valid_norm();
        let mut out = self.embeddings.mask_cols(&self.mask)?;
        for (c, &valid) in self.mask.iter().enumerate() {
            if !valid {
                continue;
            }
            let pe = positional_encoding(self.positions[c], self.d_e(), scale)?;
            for (r, p) in pe.iter().enumerate() {
                out.set(r, c, out.get(r, c) + p);
            }
        }
        Ok(Self {
            embeddings: out,
            mask: self.mask.clone(),
            positions: self.positions.clone(),
        })
    }
}

/// Everything one prediction needs: the other institutions' returns, the
/// text window (already position-encoded), and optional scalar side inputs
/// used by the MLP baselines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Features {
    pub returns: Vec<f64>,
    pub text: TextWindow,
    #[serde(default)]
    pub aux: Vec<f64>,
}

/// Return-augmented token matrix `Z` (d × n) and its validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenBatch {
    pub z: Matrix,
    pub mask: Vec<bool>,
}

/// Stacks the return vector on top of every valid embedding column.
///
/// Pad columns stay all-zero. A window with no valid column gets a single
/// null token in column 0 that carries the returns over a zero embedding,
/// so the return information is never dropped.
pub fn concat_pi(returns: &[f64], embeddings: &Matrix, mask: &[bool]) -> Result<TokenBatch> {
    let n = embeddings.cols();
    if mask.len() != n || n == 0 {
        return Err(Error::Shape {
            op: "concat_pi",
            left: embeddings.shape(),
            right: (mask.len(), 1),
        });
    }
    let r = returns.len();
    let d = r + embeddings.rows();
    let mut z = Matrix::zeros(d, n);
    let mut mask = mask.to_vec();
    let null_token = !mask.iter().any(|v| *v);
    if null_token {
        mask[0] = true;
    }
    for c in 0..n {
        if !mask[c] {
            continue;
        }
        for (i, v) in returns.iter().enumerate() {
            z.set(i, c, *v);
        }
        if null_token {
            continue;
        }
        for e in 0..embeddings.rows() {
            z.set(r + e, c, embeddings.get(e, c));
        }
    }
    Ok(TokenBatch { z, mask })
}

/// `PE(k, 2i) = sin(k / 10000^{2i/d_e})`, `PE(k, 2i+1) = cos(·)`, times `scale`.
pub fn positional_encoding(k: usize, d_e: usize, scale: f64) -> Result<Vec<f64>> {
    if !d_e.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!(
            "positional encoding needs an even dimension, got {d_e}"
        )));
    }
    let mut out = Vec::with_capacity(d_e);
    for i in 0..d_e / 2 {
        let angle = k as f64 / 10000f64.powf(2.0 * i as f64 / d_e as f64);
        out.push(scale * angle.sin());
        out.push(scale * angle.cos());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn concat_two_valid_columns() {
        let e = Matrix::filled(3, 2, 1.0);
        let b = concat_pi(&[0.1, -0.2], &e, &[true, true]).unwrap();
        let expected = Matrix::from_rows(&[
            vec![0.1, 0.1],
            vec![-0.2, -0.2],
            vec![1.0, 1.0],
            vec![1.0, 1.0],
            vec![1.0, 1.0],
        ])
        .unwrap();
        assert_eq!(b.z, expected);
    }

    #[test]
    fn concat_single_column() {
        let e = Matrix::column(&[0.3, 0.4]);
        let b = concat_pi(&[0.5], &e, &[true]).unwrap();
        assert_eq!(b.z.col(0), vec![0.5, 0.3, 0.4]);
    }

    #[test]
    fn concat_pad_column_stays_zero() {
        let e = Matrix::filled(2, 2, 9.0);
        let b = concat_pi(&[1.0], &e, &[true, false]).unwrap();
        assert_eq!(b.z.col(1), vec![0.0, 0.0, 0.0]);
        assert_eq!(b.mask, vec![true, false]);
    }

    #[test]
    fn concat_all_pad_gets_null_token() {
        let e = Matrix::filled(2, 3, 7.0);
        let b = concat_pi(&[0.2], &e, &[false; 3]).unwrap();
        assert_eq!(b.mask, vec![true, false, false]);
        assert_eq!(b.z.col(0), vec![0.2, 0.0, 0.0]);
        assert_eq!(b.z.col(1), vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn concat_rejects_bad_mask() {
        let e = Matrix::zeros(2, 3);
        assert!(concat_pi(&[0.0], &e, &[true]).is_err());
    }

    #[test]
    fn pe_examples() {
        let pe = positional_encoding(0, 6, 1.0).unwrap();
        assert_eq!(pe, vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
        let pe = positional_encoding(1, 2, 1.0).unwrap();
        assert!((pe[0] - 0.841_470_984_807_896_5).abs() < 1e-15);
        assert!((pe[1] - 0.540_302_305_868_139_8).abs() < 1e-15);
        let pe = positional_encoding(3, 4, 0.0).unwrap();
        assert!(pe.iter().all(|v| *v == 0.0));
        assert!(positional_encoding(1, 3, 1.0).is_err());
    }

    #[test]
    fn pe_only_touches_valid_columns() {
        let w = TextWindow {
            embeddings: Matrix::from_rows(&[vec![3.0, 5.0], vec![4.0, 5.0]]).unwrap(),
            mask: vec![true, false],
            positions: vec![0, 0],
        };
        let enc = w.with_positional_encoding().unwrap();
        // scale = |(3,4)| = 5; PE(0) = (0, 1)
        assert_eq!(enc.embeddings.col(0), vec![3.0, 9.0]);
        assert_eq!(enc.embeddings.col(1), vec![0.0, 0.0]);
    }
}
