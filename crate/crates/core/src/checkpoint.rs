// SPDX-License-Identifier: MIT OR Apache-2.0

//! `TFAM` model checkpoints.
//!
//! ```text
//! "TFAM" | u16 version=1 | u16 flags=0 | u32 header_len | header (UTF-8 JSON)
//! u32 n_tensors
//! per tensor: u32 name_len | name | u32 rows | u32 cols | rows*cols f64 LE (row-major)
//! ```
//!
//! The JSON header carries the model kind, dimensions, sparsity budget,
//! λ and training position; the same JSON is mirrored to `<path>.meta.json`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::activation_store::{sidecar_path, Reader};
use crate::linalg::{Mat, Vector};
use crate::sae::{DictionaryModel, SaeKind};
use crate::temporal::{NovelKind, TemporalModel};
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"TFAM";
pub const VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Sae(DictionaryModel),
    Temporal(TemporalModel),
}

impl Model {
    /// `relu`, `topk`, `batchtopk`, `temporal` or `temporal-pred-only`.
    pub fn kind_name(&self) -> &'static str {
        match self {
            Model::Sae(m) => m.kind.as_str(),
            Model::Temporal(t) if t.pred_only => "temporal-pred-only",
            Model::Temporal(_) => "temporal",
        }
    }

    pub fn n(&self) -> usize {
        match self {
            Model::Sae(m) => m.n(),
            Model::Temporal(t) => t.n(),
        }
    }

    pub fn m(&self) -> usize {
        match self {
            Model::Sae(m) => m.m(),
            Model::Temporal(t) => t.m(),
        }
    }

    pub fn param_slices(&self) -> Vec<&[f64]> {
        match self {
            Model::Sae(m) => m.param_slices(),
            Model::Temporal(t) => t.param_slices(),
        }
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        match self {
            Model::Sae(m) => m.param_slices_mut(),
            Model::Temporal(t) => t.param_slices_mut(),
        }
    }

    pub fn max_column_norm_error(&self) -> f64 {
        match self {
            Model::Sae(m) => m.max_column_norm_error(),
            Model::Temporal(t) => t.max_column_norm_error(),
        }
    }

    pub fn as_sae(&self) -> Option<&DictionaryModel> {
        match self {
            Model::Sae(m) => Some(m),
            _ => None,
        }
    }

    pub fn as_temporal(&self) -> Option<&TemporalModel> {
        match self {
            Model::Temporal(t) => Some(t),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub kind: String,
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub lambda: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_attn: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub novel_kind: Option<NovelKind>,
    #[serde(default)]
    pub learned_values: bool,
    #[serde(default)]
    pub split_dictionary: bool,
    /// Optimizer steps taken.
    #[serde(default)]
    pub step: usize,
    #[serde(default)]
    pub adam_t: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub norm_scale: Option<f64>,
    /// Free-form extras (resolved training config, provenance).
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub extra: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    /// Row-major.
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn from_mat(name: &str, m: &Mat) -> Self {
        let data = (0..m.nrows()).flat_map(|r| (0..m.ncols()).map(move |c| m[(r, c)])).collect();
        Self {
            name: name.into(),
            rows: m.nrows(),
            cols: m.ncols(),
            data,
        }
    }

    pub fn from_vec(name: &str, v: &[f64]) -> Self {
        Self {
            name: name.into(),
            rows: v.len(),
            cols: 1,
            data: v.to_vec(),
        }
    }

    pub fn to_mat(&self) -> Mat {
        Mat::from_row_slice(self.rows, self.cols, &self.data)
    }

    pub fn to_vector(&self) -> Vector {
        Vector::from_column_slice(&self.data)
    }
}

/// Adam moments, one buffer per parameter slice.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct OptimizerState {
    pub t: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub step: usize,
    pub optimizer: Option<OptimizerState>,
    pub norm_scale: Option<f64>,
    pub extra: serde_json::Value,
}

impl Checkpoint {
    pub fn new(model: Model) -> Self {
        Self {
            model,
            step: 0,
            optimizer: None,
            norm_scale: None,
            extra: serde_json::Value::Null,
        }
    }

    pub fn header(&self) -> Header {
        let (k, lambda, d_attn, novel_kind, learned_values, split) = match &self.model {
            Model::Sae(m) => (m.k, m.lambda, None, None, false, false),
            Model::Temporal(t) => (
                t.k_novel,
                t.lambda,
                Some(t.d_attn()),
                Some(t.novel_kind),
                t.w_v.is_some(),
                t.dict_novel.is_some(),
            ),
        };
        Header {
            kind: self.model.kind_name().into(),
            n: self.model.n(),
            m: self.model.m(),
            k,
            lambda,
            d_attn,
            novel_kind,
            learned_values,
            split_dictionary: split,
            step: self.step,
            adam_t: self.optimizer.as_ref().map_or(0, |o| o.t),
            norm_scale: self.norm_scale,
            extra: self.extra.clone(),
        }
    }

    fn tensors(&self) -> Vec<Tensor> {
        let mut out = match &self.model {
            Model::Sae(m) => vec![
                Tensor::from_mat("w_dec", &m.w_dec),
                Tensor::from_vec("b_dec", m.b_dec.as_slice()),
                Tensor::from_mat("w_enc", &m.w_enc),
                Tensor::from_vec("b_enc", m.b_enc.as_slice()),
            ],
            Model::Temporal(t) => {
                let mut v = vec![Tensor::from_mat("dict", &t.dict)];
                if let Some(d) = &t.dict_novel {
                    v.push(Tensor::from_mat("dict_novel", d));
                }
                v.push(Tensor::from_vec("b_dec", t.b_dec.as_slice()));
                v.push(Tensor::from_mat("w_q", &t.w_q));
                v.push(Tensor::from_mat("w_k", &t.w_k));
                if let Some(w) = &t.w_v {
                    v.push(Tensor::from_mat("w_v", w));
                }
                v
            }
        };
        if let Some(opt) = &self.optimizer {
            for (i, (m, v)) in opt.m.iter().zip(&opt.v).enumerate() {
                out.push(Tensor::from_vec(&format!("adam.m.{i}"), m));
                out.push(Tensor::from_vec(&format!("adam.v.{i}"), v));
            }
        }
        out
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&self.header()).expect("header serializes");
        let tensors = self.tensors();
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&0u16.to_le_bytes());
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
        for t in &tensors {
            out.extend_from_slice(&(t.name.len() as u32).to_le_bytes());
            out.extend_from_slice(t.name.as_bytes());
            out.extend_from_slice(&(t.rows as u32).to_le_bytes());
            out.extend_from_slice(&(t.cols as u32).to_le_bytes());
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        r.magic(MAGIC)?;
        r.version(VERSION)?;
        let flags_at = r.pos;
        if r.u16()? != 0 {
            return Err(Error::Malformed {
                offset: flags_at,
                reason: "unknown flags".into(),
            });
        }
        let header_len = r.u32()? as usize;
        let header_at = r.pos;
        let header: Header = serde_json::from_slice(r.take(header_len)?).map_err(|e| Error::Malformed {
            offset: header_at,
            reason: format!("header json: {e}"),
        })?;
        let count = r.u32()? as usize;
        let mut tensors = Vec::new();
        for _ in 0..count {
            let name_len = r.u32()? as usize;
            let name_at = r.pos;
            let name = String::from_utf8(r.take(name_len)?.to_vec()).map_err(|_| Error::Malformed {
                offset: name_at,
                reason: "tensor name is not UTF-8".into(),
            })?;
            let rows = r.u32()? as usize;
            let cols = r.u32()? as usize;
            let len = rows.saturating_mul(cols);
            if len.saturating_mul(8) > r.remaining() {
                return Err(Error::Truncated {
                    offset: r.pos,
                    needed: len * 8,
                    available: r.remaining(),
                });
            }
            let data = (0..len).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
            tensors.push(Tensor { name, rows, cols, data });
        }
        if r.remaining() != 0 {
            return Err(Error::Malformed {
                offset: r.pos,
                reason: "trailing bytes".into(),
            });
        }
        Self::assemble(header, tensors)
    }

    fn assemble(header: Header, tensors: Vec<Tensor>) -> Result<Self> {
        let find = |name: &str| -> Result<&Tensor> {
            tensors
                .iter()
                .find(|t| t.name == name)
                .ok_or_else(|| Error::Malformed {
                    offset: 0,
                    reason: format!("missing tensor {name}"),
                })
        };
        let expect = |t: &Tensor, rows: usize, cols: usize| -> Result<()> {
            if t.rows != rows || t.cols != cols {
                return Err(Error::Malformed {
                    offset: 0,
                    reason: format!("tensor {} is {}x{}, expected {rows}x{cols}", t.name, t.rows, t.cols),
                });
            }
            Ok(())
        };
        let (n, m) = (header.n, header.m);
        let model = match header.kind.as_str() {
            "relu" | "topk" | "batchtopk" => {
                let (w_dec, b_dec, w_enc, b_enc) = (find("w_dec")?, find("b_dec")?, find("w_enc")?, find("b_enc")?);
                expect(w_dec, n, m)?;
                expect(b_dec, n, 1)?;
                expect(w_enc, m, n)?;
                expect(b_enc, m, 1)?;
                Model::Sae(DictionaryModel {
                    kind: header.kind.parse::<SaeKind>()?,
                    w_dec: w_dec.to_mat(),
                    b_dec: b_dec.to_vector(),
                    w_enc: w_enc.to_mat(),
                    b_enc: b_enc.to_vector(),
                    k: header.k,
                    lambda: header.lambda,
                })
            }
            "temporal" | "temporal-pred-only" => {
                let d_attn = header.d_attn.ok_or_else(|| Error::Malformed {
                    offset: 0,
                    reason: "temporal checkpoint without d_attn".into(),
                })?;
                let dict = find("dict")?;
                expect(dict, n, m)?;
                let dict_novel = if header.split_dictionary {
                    let d = find("dict_novel")?;
                    expect(d, n, m)?;
                    Some(d.to_mat())
                } else {
                    None
                };
                let (b_dec, w_q, w_k) = (find("b_dec")?, find("w_q")?, find("w_k")?);
                expect(b_dec, n, 1)?;
                expect(w_q, d_attn, m)?;
                expect(w_k, d_attn, m)?;
                let w_v = if header.learned_values {
                    let w = find("w_v")?;
                    expect(w, m, m)?;
                    Some(w.to_mat())
                } else {
                    None
                };
                Model::Temporal(TemporalModel {
                    dict: dict.to_mat(),
                    dict_novel,
                    b_dec: b_dec.to_vector(),
                    w_q: w_q.to_mat(),
                    w_k: w_k.to_mat(),
                    w_v,
                    k_novel: header.k,
                    novel_kind: header.novel_kind.unwrap_or(NovelKind::BatchTopK),
                    lambda: header.lambda,
                    pred_only: header.kind == "temporal-pred-only",
                })
            }
            other => {
                return Err(Error::Malformed {
                    offset: 0,
                    reason: format!("unknown model kind {other:?}"),
                })
            }
        };
        let mut moments: Vec<(usize, bool, Vec<f64>)> = tensors
            .iter()
            .filter_map(|t| {
                let rest = t.name.strip_prefix("adam.")?;
                let (which, idx) = rest.split_once('.')?;
                Some((idx.parse().ok()?, which == "m", t.data.clone()))
            })
            .collect();
        let optimizer = if moments.is_empty() {
            None
        } else {
            moments.sort_by_key(|(i, is_m, _)| (*i, !*is_m));
            let mut state = OptimizerState {
                t: header.adam_t,
                ..Default::default()
            };
            for (_, is_m, data) in moments {
                if is_m {
                    state.m.push(data);
                } else {
                    state.v.push(data);
                }
            }
            Some(state)
        };
        Ok(Self {
            model,
            step: header.step,
            optimizer,
            norm_scale: header.norm_scale,
            extra: header.extra,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))?;
        let side = sidecar_path(path);
        let text = serde_json::to_string_pretty(&self.header()).expect("header serializes");
        fs::write(&side, text).map_err(|e| Error::io(&side, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
