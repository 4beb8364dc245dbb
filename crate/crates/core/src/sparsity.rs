// SPDX-License-Identifier: MIT OR Apache-2.0

//! Sparsifying nonlinearities applied to pre-activation matrices
//! (rows = tokens, columns = latents).

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::linalg::Mat;

/// Non-negative code for one token with its support.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseCode {
    pub z: Vec<f64>,
    /// Indices with `z > 0`, ascending.
    pub support: Vec<usize>,
}

impl SparseCode {
    pub fn from_dense(z: Vec<f64>) -> Self {
        let support = z
            .iter()
            .enumerate()
            .filter(|(_, v)| **v > 0.0)
            .map(|(i, _)| i)
            .collect();
        Self { z, support }
    }

    pub fn l0(&self) -> usize {
        self.support.len()
    }
}

/// Rows of a code matrix as [`SparseCode`]s.
pub fn codes_from_matrix(m: &Mat) -> Vec<SparseCode> {
    m.row_iter()
        .map(|r| SparseCode::from_dense(r.iter().copied().collect()))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "rule", content = "k")]
pub enum Sparsifier {
    Relu,
    TopK(usize),
    BatchTopK(usize),
}

#[derive(Debug, Clone)]
pub struct Selection {
    pub codes: Mat,
    /// Positions short of the requested budget (0 for ReLU).
    pub shortfall: usize,
}

impl Selection {
    pub fn mean_l0(&self) -> f64 {
        if self.codes.nrows() == 0 {
            return 0.0;
        }
        self.codes.iter().filter(|v| **v > 0.0).count() as f64 / self.codes.nrows() as f64
    }
}

pub fn apply(pre: &Mat, rule: Sparsifier) -> Selection {
    match rule {
        Sparsifier::Relu => Selection {
            codes: pre.map(|v| v.max(0.0)),
            shortfall: 0,
        },
        Sparsifier::TopK(k) => topk(pre, k),
        Sparsifier::BatchTopK(k) => batch_topk(pre, k),
    }
}

// larger value first, lower index breaks ties
fn rank(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal).then(a.1.cmp(&b.1))
}

/// Keeps the `keep` largest positive entries of `values`, returning their
/// positions.
fn largest_positive(values: impl Iterator<Item = f64>, keep: usize) -> (Vec<usize>, usize) {
    let mut positives: Vec<(f64, usize)> = values
        .enumerate()
        .filter(|(_, v)| *v > 0.0)
        .map(|(i, v)| (v, i))
        .collect();
    if positives.len() <= keep {
        let shortfall = keep - positives.len();
        return (positives.into_iter().map(|(_, i)| i).collect(), shortfall);
    }
    if keep == 0 {
        return (Vec::new(), 0);
    }
    positives.select_nth_unstable_by(keep - 1, rank);
    positives.truncate(keep);
    (positives.into_iter().map(|(_, i)| i).collect(), 0)
}

/// Per-row TopK over positive pre-activations.
pub fn topk(pre: &Mat, k: usize) -> Selection {
    let mut codes = Mat::zeros(pre.nrows(), pre.ncols());
    let mut shortfall = 0;
    for r in 0..pre.nrows() {
        let (keep, short) = largest_positive(pre.row(r).iter().copied(), k);
        shortfall += short;
        for c in keep {
            codes[(r, c)] = pre[(r, c)];
        }
    }
    Selection { codes, shortfall }
}

/// Keeps the `rows * k` largest positive pre-activations across the whole batch.
pub fn batch_topk(pre: &Mat, k: usize) -> Selection {
    let cols = pre.ncols();
    let budget = pre.nrows() * k;
    // row-major flat index so ties resolve by (token, latent)
    let flat = (0..pre.nrows()).flat_map(|r| (0..cols).map(move |c| (r, c)));
    let (keep, shortfall) = largest_positive(flat.map(|(r, c)| pre[(r, c)]), budget);
    let mut codes = Mat::zeros(pre.nrows(), cols);
    for idx in keep {
        let (r, c) = (idx / cols, idx % cols);
        codes[(r, c)] = pre[(r, c)];
    }
    Selection { codes, shortfall }
}
