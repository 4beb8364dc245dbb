// SPDX-License-Identifier: MIT OR Apache-2.0

//! `TFAC` code container.
//!
//! Little-endian layout:
//!
//! ```text
//! "TFAC" | u16 version = 1 | u16 flags (bit 0: dense block present)
//! u32 n_sequences | u32 width | u32 kind_len | kind (UTF-8)
//! per sequence:
//!   u32 T
//!   [T × width f32 row-major]              dense (predictive) codes, if flagged
//!   per token: u32 nnz, nnz × (u32 index, f32 value)   sparse codes
//! ```
//!
//! Sparse indices are strictly increasing within a token.

use std::fs;
use std::path::Path;

use crate::activation_store::Reader;
use crate::linalg::Mat;
use crate::{Error, Result, SparseCode, TemporalCodes};

pub const MAGIC: &[u8; 4] = b"TFAC";
pub const VERSION: u16 = 1;
const FLAG_DENSE: u16 = 1;

/// Codes for a whole set.
#[derive(Debug, Clone, PartialEq)]
pub struct CodeSet {
    /// Model kind that produced the codes (e.g. `"temporal"`, `"topk"`).
    pub kind: String,
    pub width: usize,
    /// Per sequence `T × width` dense codes (predictive codes of a temporal model).
    pub dense: Option<Vec<Mat>>,
    /// Per sequence, per token sparse codes (novel or SAE codes).
    pub sparse: Vec<Vec<SparseCode>>,
}

impl CodeSet {
    pub fn from_temporal(kind: &str, width: usize, codes: &[TemporalCodes]) -> Self {
        Self {
            kind: kind.to_string(),
            width,
            dense: Some(codes.iter().map(|c| c.z_p.clone()).collect()),
            sparse: codes.iter().map(|c| c.novel_codes()).collect(),
        }
    }

    pub fn from_sparse(kind: &str, width: usize, codes: Vec<Vec<SparseCode>>) -> Self {
        Self {
            kind: kind.to_string(),
            width,
            dense: None,
            sparse: codes,
        }
    }

    pub fn len(&self) -> usize {
        self.sparse.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sparse.is_empty()
    }

    /// Sparse codes of sequence `i` as a dense `T × width` matrix.
    pub fn sparse_matrix(&self, i: usize) -> Mat {
        let seq = &self.sparse[i];
        let mut m = Mat::zeros(seq.len(), self.width);
        for (t, code) in seq.iter().enumerate() {
            for &j in &code.support {
                m[(t, j)] = code.z[j];
            }
        }
        m
    }

    fn validate(&self) -> Result<()> {
        if let Some(dense) = &self.dense {
            if dense.len() != self.sparse.len() {
                return Err(Error::Shape(format!(
                    "{} dense and {} sparse sequences",
                    dense.len(),
                    self.sparse.len()
                )));
            }
            for (i, (d, s)) in dense.iter().zip(&self.sparse).enumerate() {
                if d.nrows() != s.len() || d.ncols() != self.width {
                    return Err(Error::Shape(format!(
                        "sequence {i}: dense block {}×{} for {} tokens of width {}",
                        d.nrows(),
                        d.ncols(),
                        s.len(),
                        self.width
                    )));
                }
            }
        }
        for seq in &self.sparse {
            for code in seq {
                if code.z.len() != self.width {
                    return Err(Error::Shape(format!("code of width {} in a set of width {}", code.z.len(), self.width)));
                }
            }
        }
        Ok(())
    }
}

pub fn encode_tfac(codes: &CodeSet) -> Result<Vec<u8>> {
    codes.validate()?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let flags = if codes.dense.is_some() { FLAG_DENSE } else { 0 };
    out.extend_from_slice(&flags.to_le_bytes());
    out.extend_from_slice(&(codes.sparse.len() as u32).to_le_bytes());
    out.extend_from_slice(&(codes.width as u32).to_le_bytes());
    out.extend_from_slice(&(codes.kind.len() as u32).to_le_bytes());
    out.extend_from_slice(codes.kind.as_bytes());
    for (i, seq) in codes.sparse.iter().enumerate() {
        out.extend_from_slice(&(seq.len() as u32).to_le_bytes());
        if let Some(dense) = &codes.dense {
            for row in dense[i].row_iter() {
                for &v in row.iter() {
                    out.extend_from_slice(&(v as f32).to_le_bytes());
                }
            }
        }
        for code in seq {
            out.extend_from_slice(&(code.support.len() as u32).to_le_bytes());
            for &j in &code.support {
                out.extend_from_slice(&(j as u32).to_le_bytes());
                out.extend_from_slice(&(code.z[j] as f32).to_le_bytes());
            }
        }
    }
    Ok(out)
}

pub fn decode_tfac(bytes: &[u8]) -> Result<CodeSet> {
    let mut r = Reader::new(bytes);
    r.magic(MAGIC)?;
    r.version(VERSION)?;
    let flags_at = r.pos;
    let flags = r.u16()?;
    if flags & !FLAG_DENSE != 0 {
        return Err(Error::Malformed {
            offset: flags_at,
            reason: format!("unknown flags {flags:#06x}"),
        });
    }
    let n_seq = r.u32()? as usize;
    let width_at = r.pos;
    let width = r.u32()? as usize;
    if width == 0 {
        return Err(Error::ZeroDim { offset: width_at });
    }
    let kind_len = r.u32()? as usize;
    let kind_at = r.pos;
    let kind = String::from_utf8(r.take(kind_len)?.to_vec()).map_err(|_| Error::Malformed {
        offset: kind_at,
        reason: "kind is not UTF-8".into(),
    })?;
    let has_dense = flags & FLAG_DENSE != 0;
    let mut dense = Vec::new();
    let mut sparse = Vec::new();
    for _ in 0..n_seq {
        let len = r.u32()? as usize;
        if has_dense {
            let needed = len.saturating_mul(width).saturating_mul(4);
            if needed > r.remaining() {
                return Err(Error::Truncated {
                    offset: r.pos,
                    needed,
                    available: r.remaining(),
                });
            }
            let mut data = Vec::with_capacity(len * width);
            for _ in 0..len * width {
                data.push(r.f32()? as f64);
            }
            dense.push(Mat::from_row_slice(len, width, &data));
        }
        let mut seq = Vec::with_capacity(len.min(r.remaining() / 4));
        for _ in 0..len {
            let nnz = r.u32()? as usize;
            let mut z = vec![0.0; width];
            let mut support = Vec::with_capacity(nnz.min(width));
            for _ in 0..nnz {
                let at = r.pos;
                let j = r.u32()? as usize;
                let v = r.f32()? as f64;
                if j >= width || support.last().is_some_and(|&p| p >= j) {
                    return Err(Error::Malformed {
                        offset: at,
                        reason: format!("latent index {j} out of range or out of order"),
                    });
                }
                z[j] = v;
                support.push(j);
            }
            seq.push(SparseCode { z, support });
        }
        sparse.push(seq);
    }
    if r.remaining() != 0 {
        return Err(Error::Malformed {
            offset: r.pos,
            reason: format!("{} trailing bytes", r.remaining()),
        });
    }
    Ok(CodeSet {
        kind,
        width,
        dense: has_dense.then_some(dense),
        sparse,
    })
}

pub fn save_codes(codes: &CodeSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_tfac(codes)?).map_err(|e| Error::io(path, e))
}

pub fn load_codes(path: impl AsRef<Path>) -> Result<CodeSet> {
    let path = path.as_ref();
    decode_tfac(&fs::read(path).map_err(|e| Error::io(path, e))?)
}
