// SPDX-License-Identifier: MIT OR Apache-2.0

//! Activation sequences and the `TFA1` container.
//!
//! ```text
//! offset  size          field
//! 0       4             magic "TFA1"
//! 4       2             version (u16 LE) = 1
//! 6       2             flags   (u16 LE) = 0
//! 8       4             n_seq   (u32 LE)
//! 12      4             dim     (u32 LE)
//! 16      4 * n_seq     sequence lengths (u32 LE)
//! ...     4 * Σ T_i*dim payload, row-major f32 LE, sequences back to back
//! ```
//!
//! Metadata (tokens, event spans, provenance, normalization scale) lives in
//! a JSON sidecar at `<path>.meta.json`. Values are stored as `f32` on disk
//! and held as `f64` in memory.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::linalg::{rng_for, Mat};
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"TFA1";
pub const VERSION: u16 = 1;
const HEADER_LEN: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventSpan {
    pub start: usize,
    /// Exclusive.
    pub end: usize,
    pub label: String,
}

impl EventSpan {
    pub fn new(start: usize, end: usize, label: impl Into<String>) -> Self {
        Self {
            start,
            end,
            label: label.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SequenceMeta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub events: Option<Vec<EventSpan>>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub source: String,
}

impl SequenceMeta {
    pub fn is_empty(&self) -> bool {
        self.tokens.is_none() && self.events.is_none() && self.source.is_empty()
    }

    /// Event label for every position, `None` where no span covers it.
    pub fn position_labels(&self, len: usize) -> Option<Vec<Option<usize>>> {
        let events = self.events.as_ref()?;
        let mut labels = vec![None; len];
        for (e, span) in events.iter().enumerate() {
            for slot in &mut labels[span.start..span.end.min(len)] {
                *slot = Some(e);
            }
        }
        Some(labels)
    }

    /// First span carrying `label`.
    pub fn span(&self, label: &str) -> Option<&EventSpan> {
        self.events.as_ref()?.iter().find(|s| s.label == label)
    }

    fn validate(&self, index: usize, len: usize) -> Result<()> {
        if let Some(tokens) = &self.tokens {
            if tokens.len() != len {
                return Err(Error::InvalidInput(format!(
                    "sequence {index}: {} tokens for {len} rows",
                    tokens.len()
                )));
            }
        }
        if let Some(events) = &self.events {
            let mut prev_end = 0;
            for span in events {
                if span.start >= span.end || span.end > len || span.start < prev_end {
                    return Err(Error::InvalidInput(format!(
                        "sequence {index}: event span [{}, {}) is empty, out of range, unsorted or overlapping",
                        span.start, span.end
                    )));
                }
                prev_end = span.end;
            }
        }
        Ok(())
    }
}

/// Ragged collection of `T_i × dim` activation matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationSet {
    sequences: Vec<Mat>,
    dim: usize,
    meta: Vec<SequenceMeta>,
    norm_scale: Option<f64>,
    /// Free-form provenance of the whole set.
    pub source: Option<String>,
    pub layer: Option<i64>,
}

impl ActivationSet {
    pub fn new(sequences: Vec<Mat>, dim: usize) -> Result<Self> {
        let meta = vec![SequenceMeta::default(); sequences.len()];
        Self::with_meta(sequences, dim, meta)
    }

    pub fn with_meta(sequences: Vec<Mat>, dim: usize, meta: Vec<SequenceMeta>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("dim must be positive".into()));
        }
        if meta.len() != sequences.len() {
            return Err(Error::InvalidInput(format!(
                "{} metadata records for {} sequences",
                meta.len(),
                sequences.len()
            )));
        }
        for (i, (seq, m)) in sequences.iter().zip(&meta).enumerate() {
            if seq.ncols() != dim {
                return Err(Error::Shape(format!(
                    "sequence {i} has {} columns, expected {dim}",
                    seq.ncols()
                )));
            }
            if seq.nrows() == 0 {
                return Err(Error::InvalidInput(format!("sequence {i} is empty")));
            }
            if seq.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!("sequence {i} has non-finite entries")));
            }
            m.validate(i, seq.nrows())?;
        }
        Ok(Self {
            sequences,
            dim,
            meta,
            norm_scale: None,
            source: None,
            layer: None,
        })
    }

    pub fn empty(dim: usize) -> Result<Self> {
        Self::new(Vec::new(), dim)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn sequences(&self) -> &[Mat] {
        &self.sequences
    }

    pub fn sequence(&self, i: usize) -> &Mat {
        &self.sequences[i]
    }

    pub fn meta(&self) -> &[SequenceMeta] {
        &self.meta
    }

    pub fn meta_mut(&mut self) -> &mut [SequenceMeta] {
        &mut self.meta
    }

    pub fn norm_scale(&self) -> Option<f64> {
        self.norm_scale
    }

    pub fn lengths(&self) -> Vec<usize> {
        self.sequences.iter().map(|s| s.nrows()).collect()
    }

    pub fn total_tokens(&self) -> usize {
        self.sequences.iter().map(|s| s.nrows()).sum()
    }

    pub fn min_len(&self) -> usize {
        self.sequences.iter().map(|s| s.nrows()).min().unwrap_or(0)
    }

    pub fn max_len(&self) -> usize {
        self.sequences.iter().map(|s| s.nrows()).max().unwrap_or(0)
    }

    /// All token rows stacked in sequence order.
    pub fn stacked(&self) -> Mat {
        let parts: Vec<&Mat> = self.sequences.iter().collect();
        if parts.is_empty() {
            return Mat::zeros(0, self.dim);
        }
        crate::linalg::vstack(&parts)
    }

    pub fn mean_row_norm(&self) -> f64 {
        let total = self.total_tokens();
        if total == 0 {
            return 0.0;
        }
        let sum: f64 = self
            .sequences
            .iter()
            .flat_map(|s| s.row_iter().map(|r| r.norm()).collect::<Vec<_>>())
            .sum();
        sum / total as f64
    }

    /// Same metadata, new matrices (shapes must match the originals).
    pub(crate) fn replace_sequences(&self, sequences: Vec<Mat>) -> Self {
        debug_assert_eq!(sequences.len(), self.sequences.len());
        Self {
            sequences,
            dim: self.dim,
            meta: self.meta.clone(),
            norm_scale: self.norm_scale,
            source: self.source.clone(),
            layer: self.layer,
        }
    }

    /// Subset of sequences by index, metadata carried along.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            sequences: indices.iter().map(|&i| self.sequences[i].clone()).collect(),
            dim: self.dim,
            meta: indices.iter().map(|&i| self.meta[i].clone()).collect(),
            norm_scale: self.norm_scale,
            source: self.source.clone(),
            layer: self.layer,
        }
    }
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct Sidecar {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    source: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    layer: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    norm_scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sequences: Option<Vec<SequenceMeta>>,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

/// Cursor over a byte buffer that reports offsets in its errors.
pub(crate) struct Reader<'a> {
    bytes: &'a [u8],
    pub pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let available = self.bytes.len() - self.pos;
        if n > available {
            return Err(Error::Truncated {
                offset: self.pos,
                needed: n,
                available,
            });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub fn magic(&mut self, expected: &'static [u8; 4]) -> Result<()> {
        let offset = self.pos;
        let found = self.take(4)?;
        if found != expected {
            return Err(Error::BadMagic {
                offset,
                expected: std::str::from_utf8(expected).unwrap_or("?"),
                found: [found[0], found[1], found[2], found[3]],
            });
        }
        Ok(())
    }

    pub fn version(&mut self, expected: u16) -> Result<()> {
        let offset = self.pos;
        let found = self.u16()?;
        if found != expected {
            return Err(Error::VersionMismatch {
                offset,
                expected,
                found,
            });
        }
        Ok(())
    }

    pub fn u16(&mut self) -> Result<u16> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    pub fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    pub fn f32(&mut self) -> Result<f32> {
        let b = self.take(4)?;
        Ok(f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    pub fn f64(&mut self) -> Result<f64> {
        let b = self.take(8)?;
        let mut a = [0u8; 8];
        a.copy_from_slice(b);
        Ok(f64::from_le_bytes(a))
    }

    pub fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }
}

/// Parses a `TFA1` buffer (no sidecar).
pub fn decode_tfa1(bytes: &[u8]) -> Result<ActivationSet> {
    let mut r = Reader::new(bytes);
    r.magic(MAGIC)?;
    r.version(VERSION)?;
    let flags_at = r.pos;
    let flags = r.u16()?;
    if flags != 0 {
        return Err(Error::Malformed {
            offset: flags_at,
            reason: format!("unknown flags {flags:#06x}"),
        });
    }
    let n_seq = r.u32()? as usize;
    let dim_at = r.pos;
    let dim = r.u32()? as usize;
    if dim == 0 {
        return Err(Error::ZeroDim { offset: dim_at });
    }
    let table_at = r.pos;
    // Guard the length table before allocating for it.
    if n_seq.saturating_mul(4) > r.remaining() {
        return Err(Error::Truncated {
            offset: r.pos,
            needed: n_seq * 4,
            available: r.remaining(),
        });
    }
    let mut lengths = Vec::with_capacity(n_seq);
    for i in 0..n_seq {
        let len = r.u32()? as usize;
        if len == 0 {
            return Err(Error::ZeroLengthSequence {
                offset: table_at + 4 * i,
                index: i,
            });
        }
        lengths.push(len);
    }
    let total: usize = lengths.iter().sum();
    let needed = total.saturating_mul(dim).saturating_mul(4);
    if needed > r.remaining() {
        return Err(Error::Truncated {
            offset: r.pos,
            needed,
            available: r.remaining(),
        });
    }
    let mut sequences = Vec::with_capacity(n_seq);
    for &len in &lengths {
        let mut data = Vec::with_capacity(len * dim);
        for _ in 0..len * dim {
            data.push(r.f32()? as f64);
        }
        sequences.push(Mat::from_row_slice(len, dim, &data));
    }
    if r.remaining() != 0 {
        return Err(Error::Malformed {
            offset: r.pos,
            reason: format!("{} trailing bytes after payload", r.remaining()),
        });
    }
    for (i, s) in sequences.iter().enumerate() {
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::Malformed {
                offset: HEADER_LEN + 4 * n_seq,
                reason: format!("sequence {i} has non-finite values"),
            });
        }
    }
    Ok(ActivationSet {
        meta: vec![SequenceMeta::default(); n_seq],
        sequences,
        dim,
        norm_scale: None,
        source: None,
        layer: None,
    })
}

pub fn encode_tfa1(set: &ActivationSet) -> Vec<u8> {
    let total = set.total_tokens();
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * set.len() + 4 * total * set.dim);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&0u16.to_le_bytes());
    out.extend_from_slice(&(set.len() as u32).to_le_bytes());
    out.extend_from_slice(&(set.dim as u32).to_le_bytes());
    for s in &set.sequences {
        out.extend_from_slice(&(s.nrows() as u32).to_le_bytes());
    }
    for s in &set.sequences {
        for row in s.row_iter() {
            for &v in row.iter() {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
    }
    out
}

/// Reads a `TFA1` file and its sidecar, when one exists.
pub fn load_activations(path: impl AsRef<Path>) -> Result<ActivationSet> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut set = decode_tfa1(&bytes)?;
    let side = sidecar_path(path);
    if side.exists() {
        let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
        let sidecar: Sidecar = serde_json::from_str(&text).map_err(|source| Error::Sidecar {
            path: side.clone(),
            source,
        })?;
        if let Some(metas) = sidecar.sequences {
            if metas.len() != set.len() {
                return Err(Error::InvalidInput(format!(
                    "sidecar describes {} sequences, payload has {}",
                    metas.len(),
                    set.len()
                )));
            }
            for (i, m) in metas.iter().enumerate() {
                m.validate(i, set.sequences[i].nrows())?;
            }
            set.meta = metas;
        }
        if let Some(scale) = sidecar.norm_scale {
            if !(scale.is_finite() && scale > 0.0) {
                return Err(Error::InvalidInput(format!("norm_scale {scale} is not positive")));
            }
        }
        set.norm_scale = sidecar.norm_scale;
        set.source = sidecar.source;
        set.layer = sidecar.layer;
    }
    Ok(set)
}

/// Writes the `TFA1` file, plus a sidecar whenever there is metadata to keep.
pub fn save_activations(set: &ActivationSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_tfa1(set)).map_err(|e| Error::io(path, e))?;
    let side = sidecar_path(path);
    let has_seq_meta = set.meta.iter().any(|m| !m.is_empty());
    if has_seq_meta || set.norm_scale.is_some() || set.source.is_some() || set.layer.is_some() {
        let sidecar = Sidecar {
            source: set.source.clone(),
            layer: set.layer,
            norm_scale: set.norm_scale,
            sequences: has_seq_meta.then(|| set.meta.clone()),
        };
        let text = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
        fs::write(&side, text).map_err(|e| Error::io(&side, e))?;
    } else if side.exists() {
        fs::remove_file(&side).map_err(|e| Error::io(&side, e))?;
    }
    Ok(())
}

/// Scales the set so the mean token-row L2 norm is 1; returns the applied
/// scale `c = 1 / mean ‖x‖`.
pub fn normalize_unit_expected_norm(set: &ActivationSet) -> Result<(ActivationSet, f64)> {
    if set.norm_scale.is_some() {
        return Err(Error::InvalidInput("set is already normalized".into()));
    }
    if set.total_tokens() == 0 {
        return Err(Error::InvalidInput("no token rows to normalize".into()));
    }
    let mean = set.mean_row_norm();
    if mean <= 0.0 {
        return Err(Error::Degenerate("all-zero activations (mean norm 0)".into()));
    }
    let scale = 1.0 / mean;
    let mut out = set.replace_sequences(set.sequences.iter().map(|s| s * scale).collect());
    out.norm_scale = Some(scale);
    Ok((out, scale))
}

/// Applies a known scale (e.g. the one stored with a trained model) to a raw set.
pub fn apply_norm_scale(set: &ActivationSet, scale: f64) -> Result<ActivationSet> {
    if set.norm_scale.is_some() {
        return Err(Error::InvalidInput("set is already normalized".into()));
    }
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::InvalidInput(format!("norm_scale {scale} is not positive")));
    }
    let mut out = set.replace_sequences(set.sequences.iter().map(|s| s * scale).collect());
    out.norm_scale = Some(scale);
    Ok(out)
}

/// Shuffles each sequence's rows along time with an independent permutation.
pub fn permutation_surrogate(set: &ActivationSet, seed: u64) -> ActivationSet {
    use crate::par::*;
    let shuffled: Vec<Mat> = set
        .sequences
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let mut order: Vec<usize> = (0..s.nrows()).collect();
            order.shuffle(&mut rng_for(seed, i as u64));
            Mat::from_fn(s.nrows(), s.ncols(), |r, c| s[(order[r], c)])
        })
        .collect();
    set.replace_sequences(shuffled)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BatchMode {
    /// Individual token rows, shuffled across the whole set.
    Token,
    /// Whole sequences packed up to the token budget.
    Sequence,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Batch {
    Tokens(Mat),
    Sequences(Vec<Mat>),
}

impl Batch {
    pub fn token_count(&self) -> usize {
        match self {
            Batch::Tokens(m) => m.nrows(),
            Batch::Sequences(s) => s.iter().map(|m| m.nrows()).sum(),
        }
    }
}

/// Endless, epoch-by-epoch batch stream. Each epoch visits every token
/// (or every sequence) exactly once in an order fixed by `(seed, epoch)`.
pub struct BatchIter<'a> {
    set: &'a ActivationSet,
    batch_tokens: usize,
    seed: u64,
    mode: BatchMode,
    epoch: u64,
    plan: Vec<Vec<(usize, usize)>>,
    next: usize,
}

pub fn batch_iter(set: &ActivationSet, batch_tokens: usize, seed: u64, mode: BatchMode) -> Result<BatchIter<'_>> {
    if batch_tokens == 0 {
        return Err(Error::InvalidInput("batch_tokens must be at least 1".into()));
    }
    let mut it = BatchIter {
        set,
        batch_tokens,
        seed,
        mode,
        epoch: 0,
        plan: Vec::new(),
        next: 0,
    };
    it.plan_epoch();
    Ok(it)
}

impl BatchIter<'_> {
    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    /// Batches in the current epoch.
    pub fn batches_per_epoch(&self) -> usize {
        self.plan.len()
    }

    fn plan_epoch(&mut self) {
        // stream 2^32 + epoch keeps epochs apart from the per-sequence streams
        let mut rng = rng_for(self.seed, (1u64 << 32) + self.epoch);
        self.next = 0;
        self.plan = match self.mode {
            BatchMode::Token => {
                let mut all: Vec<(usize, usize)> = self
                    .set
                    .sequences
                    .iter()
                    .enumerate()
                    .flat_map(|(i, s)| (0..s.nrows()).map(move |t| (i, t)))
                    .collect();
                all.shuffle(&mut rng);
                all.chunks(self.batch_tokens).map(|c| c.to_vec()).collect()
            }
            BatchMode::Sequence => {
                let mut order: Vec<usize> = (0..self.set.len()).collect();
                order.shuffle(&mut rng);
                let mut plan = Vec::new();
                let mut current: Vec<(usize, usize)> = Vec::new();
                let mut tokens = 0;
                for i in order {
                    let len = self.set.sequences[i].nrows();
                    if !current.is_empty() && tokens + len > self.batch_tokens {
                        plan.push(std::mem::take(&mut current));
                        tokens = 0;
                    }
                    current.push((i, len));
                    tokens += len;
                }
                if !current.is_empty() {
                    plan.push(current);
                }
                plan
            }
        };
    }

    fn advance_epoch_if_done(&mut self) -> bool {
        if self.plan.is_empty() {
            return false;
        }
        if self.next >= self.plan.len() {
            self.epoch += 1;
            self.plan_epoch();
        }
        true
    }

    /// Skips `n` batches without materializing them.
    pub fn skip_batches(&mut self, n: usize) {
        for _ in 0..n {
            if !self.advance_epoch_if_done() {
                return;
            }
            self.next += 1;
        }
    }
}

impl Iterator for BatchIter<'_> {
    type Item = Batch;

    fn next(&mut self) -> Option<Batch> {
        if !self.advance_epoch_if_done() {
            return None;
        }
        let entry = &self.plan[self.next];
        self.next += 1;
        Some(match self.mode {
            BatchMode::Token => {
                let dim = self.set.dim;
                Batch::Tokens(Mat::from_fn(entry.len(), dim, |r, c| {
                    let (i, t) = entry[r];
                    self.set.sequences[i][(t, c)]
                }))
            }
            BatchMode::Sequence => {
                Batch::Sequences(entry.iter().map(|&(i, _)| self.set.sequences[i].clone()).collect())
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::gaussian_matrix;
    use proptest::prelude::*;

    fn random_set(lengths: &[usize], dim: usize, seed: u64) -> ActivationSet {
        let mut rng = rng_for(seed, 0);
        ActivationSet::new(
            lengths.iter().map(|&t| gaussian_matrix(t, dim, 1.0, &mut rng)).collect(),
            dim,
        )
        .unwrap()
    }

    #[test]
    fn single_sequence_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.tfa1");
        let seq = Mat::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let set = ActivationSet::new(vec![seq.clone()], 3).unwrap();
        save_activations(&set, &path).unwrap();
        let back = load_activations(&path).unwrap();
        assert_eq!(back.sequence(0), &seq);
        assert!(!sidecar_path(&path).exists());
    }

    #[test]
    fn bad_magic_is_reported() {
        let mut bytes = encode_tfa1(&random_set(&[2], 3, 1));
        bytes[..4].copy_from_slice(b"XXXX");
        match decode_tfa1(&bytes) {
            Err(Error::BadMagic { offset: 0, found, .. }) => assert_eq!(&found, b"XXXX"),
            other => panic!("expected bad magic, got {other:?}"),
        }
    }

    #[test]
    fn distinct_load_errors() {
        let good = encode_tfa1(&random_set(&[2, 3], 3, 2));

        let mut bad_version = good.clone();
        bad_version[4] = 9;
        assert!(matches!(
            decode_tfa1(&bad_version),
            Err(Error::VersionMismatch { offset: 4, found: 9, .. })
        ));

        let truncated = &good[..good.len() - 5];
        assert!(matches!(decode_tfa1(truncated), Err(Error::Truncated { offset: 24, .. })));

        let mut zero_dim = good.clone();
        zero_dim[12..16].copy_from_slice(&0u32.to_le_bytes());
        assert!(matches!(decode_tfa1(&zero_dim), Err(Error::ZeroDim { offset: 12 })));

        let mut zero_len = good.clone();
        zero_len[20..24].copy_from_slice(&0u32.to_le_bytes());
        assert!(matches!(
            decode_tfa1(&zero_len),
            Err(Error::ZeroLengthSequence { offset: 20, index: 1 })
        ));
    }

    #[test]
    fn empty_set_is_valid() {
        let set = ActivationSet::empty(5).unwrap();
        let bytes = encode_tfa1(&set);
        assert_eq!(bytes.len(), 16);
        assert_eq!(&bytes[8..12], &0u32.to_le_bytes());
        let back = decode_tfa1(&bytes).unwrap();
        assert_eq!(back.len(), 0);
        assert_eq!(back.dim(), 5);
    }

    #[test]
    fn length_table_and_payload_size() {
        let n = 4;
        let bytes = encode_tfa1(&random_set(&[3, 5], n, 3));
        assert_eq!(&bytes[16..20], &3u32.to_le_bytes());
        assert_eq!(&bytes[20..24], &5u32.to_le_bytes());
        assert_eq!(bytes.len(), 24 + 8 * n * 4);
    }

    #[test]
    fn sidecar_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("meta.tfa1");
        let mut set = random_set(&[4], 2, 4);
        set.meta_mut()[0] = SequenceMeta {
            tokens: Some(vec!["a".into(), "b".into(), "c".into(), "d".into()]),
            events: Some(vec![EventSpan::new(0, 2, "x"), EventSpan::new(2, 4, "y")]),
            source: String::new(),
        };
        set.layer = Some(12);
        save_activations(&set, &path).unwrap();
        let text = fs::read_to_string(sidecar_path(&path)).unwrap();
        assert!(text.contains("\"events\""));
        let back = load_activations(&path).unwrap();
        assert_eq!(back.meta(), set.meta());
        assert_eq!(back.layer, Some(12));
    }

    #[test]
    fn overlapping_events_rejected() {
        let meta = SequenceMeta {
            events: Some(vec![EventSpan::new(0, 3, "a"), EventSpan::new(2, 4, "b")]),
            ..Default::default()
        };
        let err = ActivationSet::with_meta(vec![Mat::zeros(4, 2)], 2, vec![meta]);
        assert!(err.is_err());
    }

    #[test]
    fn normalize_examples() {
        let set = ActivationSet::new(vec![Mat::from_row_slice(1, 2, &[0.0, 2.0])], 2).unwrap();
        let (out, scale) = normalize_unit_expected_norm(&set).unwrap();
        assert_eq!(scale, 0.5);
        assert!((out.sequence(0).row(0).norm() - 1.0).abs() < 1e-15);
        assert!(normalize_unit_expected_norm(&out).is_err());

        let set = ActivationSet::new(vec![Mat::from_row_slice(2, 1, &[2.0, -4.0])], 1).unwrap();
        let (out, scale) = normalize_unit_expected_norm(&set).unwrap();
        assert!((scale - 1.0 / 3.0).abs() < 1e-15);
        assert!((out.sequence(0)[(0, 0)] - 2.0 / 3.0).abs() < 1e-15);
        assert!((out.sequence(0)[(1, 0)] + 4.0 / 3.0).abs() < 1e-15);

        let zeros = ActivationSet::new(vec![Mat::zeros(3, 2)], 2).unwrap();
        assert!(matches!(normalize_unit_expected_norm(&zeros), Err(Error::Degenerate(_))));
    }

    #[test]
    fn surrogate_of_length_one_is_identity() {
        let set = random_set(&[1, 1, 1], 3, 5);
        assert_eq!(permutation_surrogate(&set, 9), set);
    }

    #[test]
    fn surrogate_is_seed_deterministic() {
        let set = random_set(&[10, 7], 3, 6);
        assert_eq!(permutation_surrogate(&set, 1), permutation_surrogate(&set, 1));
        assert_ne!(permutation_surrogate(&set, 1), permutation_surrogate(&set, 2));
    }

    #[test]
    fn sequence_mode_never_splits() {
        let set = random_set(&[3, 8, 2, 5], 2, 7);
        let mut it = batch_iter(&set, 6, 11, BatchMode::Sequence).unwrap();
        let per_epoch = it.batches_per_epoch();
        let mut seen = 0;
        for batch in it.by_ref().take(per_epoch) {
            let Batch::Sequences(seqs) = batch else { panic!() };
            for s in &seqs {
                assert!(set.sequences().contains(s));
            }
            seen += seqs.len();
        }
        assert_eq!(seen, 4);
    }

    #[test]
    fn batch_stream_is_deterministic_and_skippable() {
        let set = random_set(&[5, 6, 7], 2, 8);
        let a: Vec<Batch> = batch_iter(&set, 4, 3, BatchMode::Token).unwrap().take(12).collect();
        let b: Vec<Batch> = batch_iter(&set, 4, 3, BatchMode::Token).unwrap().take(12).collect();
        assert_eq!(a, b);
        let mut skipped = batch_iter(&set, 4, 3, BatchMode::Token).unwrap();
        skipped.skip_batches(7);
        assert_eq!(skipped.next().unwrap(), a[7]);
    }

    proptest! {
        #[test]
        fn save_load_is_bitwise_stable(lengths in prop::collection::vec(1usize..6, 0..5), dim in 1usize..5, seed in 0u64..1000) {
            let set = random_set(&lengths, dim, seed);
            let first = encode_tfa1(&set);
            let loaded = decode_tfa1(&first).unwrap();
            prop_assert_eq!(encode_tfa1(&loaded), first);
            for (a, b) in set.sequences().iter().zip(loaded.sequences()) {
                for (x, y) in a.iter().zip(b.iter()) {
                    prop_assert_eq!((*x as f32) as f64, *y);
                }
            }
        }

        #[test]
        fn surrogate_preserves_row_multisets(lengths in prop::collection::vec(1usize..9, 1..4), seed in 0u64..1000) {
            let set = random_set(&lengths, 3, seed);
            let sur = permutation_surrogate(&set, seed ^ 0xabc);
            for (a, b) in set.sequences().iter().zip(sur.sequences()) {
                let mut ra: Vec<Vec<u64>> = a.row_iter().map(|r| r.iter().map(|v| v.to_bits()).collect()).collect();
                let mut rb: Vec<Vec<u64>> = b.row_iter().map(|r| r.iter().map(|v| v.to_bits()).collect()).collect();
                ra.sort();
                rb.sort();
                prop_assert_eq!(ra, rb);
            }
        }

        #[test]
        fn token_epoch_covers_each_token_once(lengths in prop::collection::vec(1usize..9, 1..5), bt in 1usize..7, seed in 0u64..100) {
            // tag every row with a unique id in column 0
            let mut id = 0.0;
            let seqs: Vec<Mat> = lengths.iter().map(|&t| Mat::from_fn(t, 1, |_, _| { id += 1.0; id })).collect();
            let set = ActivationSet::new(seqs, 1).unwrap();
            let mut it = batch_iter(&set, bt, seed, BatchMode::Token).unwrap();
            let per_epoch = it.batches_per_epoch();
            let mut ids: Vec<i64> = it.by_ref().take(per_epoch).flat_map(|b| match b {
                Batch::Tokens(m) => { assert!(m.nrows() <= bt); m.iter().map(|v| *v as i64).collect::<Vec<_>>() }
                _ => unreachable!(),
            }).collect();
            ids.sort();
            let expected: Vec<i64> = (1..=set.total_tokens() as i64).collect();
            prop_assert_eq!(ids, expected);
        }

        #[test]
        fn normalized_mean_norm_is_one(lengths in prop::collection::vec(1usize..8, 1..4), seed in 0u64..1000) {
            let set = random_set(&lengths, 4, seed);
            let (out, _) = normalize_unit_expected_norm(&set).unwrap();
            prop_assert!((out.mean_row_norm() - 1.0).abs() < 1e-6);
        }
    }
}
