// SPDX-License-Identifier: MIT OR Apache-2.0

//! Small dense helpers shared by the models and metrics.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Deterministic generator for `(seed, stream)`; streams let parallel
/// workers draw independent numbers without sharing state.
pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn gaussian_matrix<R: Rng>(rows: usize, cols: usize, scale: f64, rng: &mut R) -> Mat {
    // column-major fill order is part of the seed contract
    Mat::from_fn(rows, cols, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
}

/// Random matrix with unit-norm Gaussian columns.
pub fn random_unit_columns<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Mat {
    let mut m = gaussian_matrix(rows, cols, 1.0, rng);
    normalize_columns(&mut m);
    m
}

/// Rescales every non-zero column to unit L2 norm.
pub fn normalize_columns(m: &mut Mat) {
    for mut col in m.column_iter_mut() {
        let norm = col.norm();
        if norm > 0.0 {
            col /= norm;
        }
    }
}

/// Removes from each column of `grad` its component along the matching
/// (unit-norm) column of `dict`.
pub fn remove_parallel_component(grad: &mut Mat, dict: &Mat) {
    for (mut g, d) in grad.column_iter_mut().zip(dict.column_iter()) {
        let along = g.dot(&d);
        g.axpy(-along, &d, 1.0);
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

pub fn row_vec(m: &Mat, r: usize) -> Vec<f64> {
    m.row(r).iter().copied().collect()
}

/// Column means as a row-broadcastable vector.
pub fn column_means(m: &Mat) -> Vector {
    let rows = m.nrows().max(1) as f64;
    Vector::from_iterator(m.ncols(), m.column_iter().map(|c| c.sum() / rows))
}

pub fn center_columns(m: &Mat) -> Mat {
    let mean = column_means(m);
    subtract_row(m, &mean)
}

/// `m - 1 vᵀ`.
pub fn subtract_row(m: &Mat, v: &Vector) -> Mat {
    let mut out = m.clone();
    for (mut col, &mu) in out.column_iter_mut().zip(v.iter()) {
        col.add_scalar_mut(-mu);
    }
    out
}

/// `m + 1 vᵀ`.
pub fn add_row(m: &Mat, v: &Vector) -> Mat {
    let mut out = m.clone();
    for (mut col, &mu) in out.column_iter_mut().zip(v.iter()) {
        col.add_scalar_mut(mu);
    }
    out
}

/// Sum over rows, i.e. `1ᵀ m` as a column vector.
pub fn column_sums(m: &Mat) -> Vector {
    Vector::from_iterator(m.ncols(), m.column_iter().map(|c| c.sum()))
}

pub fn relu(m: &Mat) -> Mat {
    m.map(|v| v.max(0.0))
}

/// Stacks matrices with equal column counts vertically.
pub fn vstack(parts: &[&Mat]) -> Mat {
    let cols = parts.first().map_or(0, |p| p.ncols());
    let rows = parts.iter().map(|p| p.nrows()).sum();
    let mut out = Mat::zeros(rows, cols);
    let mut at = 0;
    for p in parts {
        out.rows_mut(at, p.nrows()).copy_from(*p);
        at += p.nrows();
    }
    out
}

/// Splits `m` into consecutive row blocks of the given lengths.
pub fn split_rows(m: &Mat, lengths: &[usize]) -> Vec<Mat> {
    let mut at = 0;
    lengths
        .iter()
        .map(|&len| {
            let block = m.rows(at, len).into_owned();
            at += len;
            block
        })
        .collect()
}

/// Sum of squares of all entries.
pub fn sq_norm(m: &Mat) -> f64 {
    m.iter().map(|v| v * v).sum()
}

/// Population variance of each column, summed.
pub fn total_variance(m: &Mat) -> f64 {
    let rows = m.nrows() as f64;
    if m.nrows() == 0 {
        return 0.0;
    }
    m.column_iter()
        .map(|c| {
            let mean = c.sum() / rows;
            c.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / rows
        })
        .sum()
}
