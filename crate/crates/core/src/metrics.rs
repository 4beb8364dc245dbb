// SPDX-License-Identifier: MIT OR Apache-2.0

//! Temporal-structure and representation-geometry measurements.
//!
//! Conventions: matrices have one row per token. The cosine of a zero
//! vector is 0. Undefined entries in position maps are `NaN`.

pub mod heatmap;

use nalgebra::SymmetricEigen;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::linalg::{center_columns, column_means, cosine, row_vec, subtract_row, total_variance, Mat};
use crate::par::*;
use crate::sparsity::SparseCode;
use crate::{ActivationSet, Error, Result};

/// Relative tolerance on unit norms accepted by [`ustat`].
pub const UNIT_TOL: f64 = 1e-6;

/// U-statistic effective dimension `(M² − M) / (‖G‖_F² − M)` of unit rows.
///
/// Mutually orthogonal samples give `+∞`.
pub fn ustat(samples: &Mat) -> Result<f64> {
    let m = samples.nrows();
    if m < 2 {
        return Err(Error::InvalidInput(format!("ustat needs at least 2 samples, got {m}")));
    }
    if let Some(r) = (0..m).find(|&r| (samples.row(r).norm() - 1.0).abs() > UNIT_TOL) {
        return Err(Error::InvalidInput(format!(
            "row {r} has norm {}, expected 1",
            samples.row(r).norm()
        )));
    }
    let gram = samples * samples.transpose();
    let off = gram.norm_squared() - m as f64;
    let mf = m as f64;
    if off <= 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok((mf * mf - mf) / off)
}

fn unit_rows(m: &Mat) -> Result<Mat> {
    let mut out = m.clone();
    for (r, mut row) in out.row_iter_mut().enumerate() {
        let norm = row.norm();
        if norm == 0.0 {
            return Err(Error::Degenerate(format!("row {r} is zero and cannot be unit-normalized")));
        }
        row /= norm;
    }
    Ok(out)
}

/// Rows at position `t` of every sequence long enough to have one.
pub fn position_rows(set: &ActivationSet, t: usize) -> Mat {
    let rows: Vec<_> = set
        .sequences()
        .iter()
        .filter(|s| s.nrows() > t)
        .map(|s| s.row(t).clone_owned())
        .collect();
    if rows.is_empty() {
        return Mat::zeros(0, set.dim());
    }
    Mat::from_rows(&rows)
}

/// [`ustat`] of the unit-normalized position-`t` rows, for each position.
pub fn ustat_curve(set: &ActivationSet, positions: &[usize]) -> Result<Vec<f64>> {
    positions
        .par_iter()
        .map(|&t| {
            let rows = position_rows(set, t);
            if rows.nrows() == 0 {
                return Err(Error::InvalidInput(format!(
                    "position {t} is beyond every sequence (max length {})",
                    set.max_len()
                )));
            }
            if rows.nrows() < 2 {
                return Err(Error::InvalidInput(format!("position {t} is reached by only one sequence")));
            }
            ustat(&unit_rows(&rows)?)
        })
        .collect()
}

/// Entry `(i, t)` is the mean over sequences of `cos(x_t, x_{t − lags[i]})`
/// for `t < min_len`; `NaN` where `t < lag`.
pub fn autocorr_map(set: &ActivationSet, lags: &[usize]) -> Result<Mat> {
    let min_len = set.min_len();
    if let Some(&w) = lags.iter().find(|&&w| w >= min_len) {
        return Err(Error::InvalidInput(format!(
            "lag {w} is not below the shortest sequence length {min_len}"
        )));
    }
    let rows: Vec<Vec<f64>> = lags
        .par_iter()
        .map(|&w| {
            (0..min_len)
                .map(|t| {
                    if t < w {
                        return f64::NAN;
                    }
                    let sum: f64 = set
                        .sequences()
                        .iter()
                        .map(|s| cosine(&row_vec(s, t), &row_vec(s, t - w)))
                        .sum();
                    sum / set.len() as f64
                })
                .collect()
        })
        .collect();
    Ok(Mat::from_fn(lags.len(), min_len, |i, t| rows[i][t]))
}

/// Replaces every diagonal `i − j = k` with its mean.
pub fn diagonal_mean_surrogate(s: &Mat) -> Result<Mat> {
    let n = s.nrows();
    if s.ncols() != n {
        return Err(Error::Shape(format!("expected a square matrix, got {}×{}", n, s.ncols())));
    }
    let mut out = Mat::zeros(n, n);
    for k in -(n as isize - 1)..=(n as isize - 1) {
        let cells: Vec<(usize, usize)> = (0..n)
            .filter_map(|i| {
                let j = i as isize - k;
                (0..n as isize).contains(&j).then_some((i, j as usize))
            })
            .collect();
        let mean = cells.iter().map(|&c| s[c]).sum::<f64>() / cells.len() as f64;
        for c in cells {
            out[c] = mean;
        }
    }
    Ok(out)
}

/// Orthonormal basis (as columns) of the row space of `m`.
fn row_space_basis(m: &Mat) -> Mat {
    let svd = m.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested v_t");
    let largest = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let tol = largest * (m.nrows().max(m.ncols()) as f64) * f64::EPSILON;
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > tol && largest > 0.0)
        .collect();
    Mat::from_fn(m.ncols(), keep.len(), |r, c| v_t[(keep[c], r)])
}

/// Fraction of the variance of (centered) position-`t` targets captured by
/// projecting each onto the row space of its own `w` preceding rows.
pub fn context_projection_ev(set: &ActivationSet, t: usize, w: usize) -> Result<f64> {
    if w > t {
        return Err(Error::InvalidInput(format!("window {w} reaches before position 0 at t = {t}")));
    }
    let seqs: Vec<&Mat> = set.sequences().iter().filter(|s| s.nrows() > t).collect();
    if seqs.len() < 2 {
        return Err(Error::InvalidInput(format!("fewer than 2 sequences reach position {t}")));
    }
    let targets = Mat::from_rows(&seqs.iter().map(|s| s.row(t).clone_owned()).collect::<Vec<_>>());
    let centered = center_columns(&targets);
    let total = total_variance(&centered);
    if total <= 0.0 {
        return Err(Error::Degenerate(format!("targets at position {t} have zero variance")));
    }
    if w == 0 {
        return Ok(0.0);
    }
    let projected: Vec<_> = seqs
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let basis = row_space_basis(&s.rows(t - w, w).clone_owned());
            let y = centered.row(i).transpose();
            (&basis * (basis.transpose() * y)).transpose()
        })
        .collect();
    // targets are already centered, so the captured variance is the mean
    // squared norm of the projections
    let captured: f64 = projected.iter().map(|p| p.norm_squared()).sum::<f64>() / seqs.len() as f64;
    Ok(captured / total)
}

/// `(tr C)² / tr(C²)` for a symmetric positive semi-definite `C`.
pub fn effective_rank_of_moment(c: &Mat) -> Result<f64> {
    let tr = c.trace();
    let tr2 = c.norm_squared();
    if tr == 0.0 || tr2 == 0.0 {
        return Err(Error::Degenerate("zero matrix has no effective rank".into()));
    }
    Ok(tr * tr / tr2)
}

/// Effective rank of the (uncentered) second-moment matrix of the rows.
pub fn effective_rank(codes: &Mat) -> Result<f64> {
    if codes.nrows() == 0 {
        return Err(Error::Degenerate("no rows".into()));
    }
    let c = codes.transpose() * codes / codes.nrows() as f64;
    effective_rank_of_moment(&c)
}

/// Centered linear CKA.
pub fn linear_cka(x: &Mat, y: &Mat) -> Result<f64> {
    if x.nrows() != y.nrows() {
        return Err(Error::Shape(format!("row counts differ: {} vs {}", x.nrows(), y.nrows())));
    }
    let xc = center_columns(x);
    let yc = center_columns(y);
    let xx = (xc.transpose() * &xc).norm();
    let yy = (yc.transpose() * &yc).norm();
    if xx == 0.0 || yy == 0.0 {
        return Err(Error::Degenerate("CKA input has zero variance".into()));
    }
    Ok((yc.transpose() * &xc).norm_squared() / (xx * yy))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    pub values: Mat,
    pub centered: bool,
}

/// Pairwise cosine of rows, after subtracting the row mean when `center`.
pub fn cosine_similarity_matrix(codes: &Mat, center: bool) -> SimilarityMatrix {
    let x = if center { center_columns(codes) } else { codes.clone() };
    let norms: Vec<f64> = x.row_iter().map(|r| r.norm()).collect();
    let gram = &x * x.transpose();
    let t = x.nrows();
    let values = Mat::from_fn(t, t, |i, j| {
        if norms[i] == 0.0 || norms[j] == 0.0 {
            0.0
        } else {
            gram[(i, j)] / (norms[i] * norms[j])
        }
    });
    SimilarityMatrix { values, centered: center }
}

/// Path length over end-to-end distance.
pub fn tortuosity(path: &Mat) -> Result<f64> {
    let t = path.nrows();
    if t < 2 {
        return Err(Error::InvalidInput("tortuosity needs at least 2 points".into()));
    }
    let length: f64 = (1..t).map(|i| (path.row(i) - path.row(i - 1)).norm()).sum();
    let chord = (path.row(t - 1) - path.row(0)).norm();
    if chord <= f64::EPSILON * length.max(1.0) {
        return Err(Error::Degenerate("path endpoints coincide".into()));
    }
    Ok(length / chord)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CutoffRule {
    /// Smallest `f_c` whose cumulative non-zero-frequency energy reaches half.
    #[default]
    EqualEnergy,
    /// `f_c` at the given fraction of the Nyquist index.
    NyquistFraction(f64),
}


#[derive(Debug, Clone, PartialEq)]
pub struct FourierSplit {
    /// Mean plus every frequency below `cutoff`.
    pub slow: Mat,
    pub fast: Mat,
    /// Frequency index `f_c`; bins `1..f_c` are slow.
    pub cutoff: usize,
}

/// Energy per frequency index `0..=T/2`, summed over dimensions and folding
/// each conjugate pair together.
pub fn frequency_energy(spectra: &[Vec<Complex<f64>>], len: usize) -> Vec<f64> {
    let mut energy = vec![0.0; len / 2 + 1];
    for spec in spectra {
        for (f, e) in energy.iter_mut().enumerate() {
            *e += spec[f].norm_sqr();
            let mirror = len - f;
            if f != 0 && mirror != f {
                *e += spec[mirror].norm_sqr();
            }
        }
    }
    energy
}

/// Splits a `T × n` sequence into slow and fast parts with a shared cutoff.
pub fn fourier_split(sequence: &Mat, rule: CutoffRule) -> Result<FourierSplit> {
    let len = sequence.nrows();
    if len < 4 {
        return Err(Error::InvalidInput(format!("fourier_split needs T ≥ 4, got {len}")));
    }
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(len);
    let inv = planner.plan_fft_inverse(len);
    let spectra: Vec<Vec<Complex<f64>>> = sequence
        .column_iter()
        .map(|col| {
            let mut buf: Vec<Complex<f64>> = col.iter().map(|&v| Complex::new(v, 0.0)).collect();
            fwd.process(&mut buf);
            buf
        })
        .collect();
    let energy = frequency_energy(&spectra, len);
    let nyquist = len / 2;
    let cutoff = match rule {
        CutoffRule::EqualEnergy => {
            let total: f64 = energy[1..].iter().sum();
            let mut cum = 0.0;
            let mut cut = nyquist + 1;
            for (f, e) in energy.iter().enumerate().skip(1) {
                cum += e;
                if total > 0.0 && cum >= 0.5 * total {
                    cut = f;
                    break;
                }
            }
            cut
        }
        CutoffRule::NyquistFraction(frac) => ((frac * nyquist as f64).round() as usize).clamp(1, nyquist + 1),
    };
    let mut slow = Mat::zeros(len, sequence.ncols());
    for (d, spec) in spectra.iter().enumerate() {
        let mut buf: Vec<Complex<f64>> = (0..len)
            .map(|k| {
                let f = k.min(len - k);
                if f < cutoff {
                    spec[k]
                } else {
                    Complex::new(0.0, 0.0)
                }
            })
            .collect();
        inv.process(&mut buf);
        for (t, v) in buf.iter().enumerate() {
            slow[(t, d)] = v.re / len as f64;
        }
    }
    let fast = sequence - &slow;
    Ok(FourierSplit { slow, fast, cutoff })
}

/// Eigenvalues of a symmetric matrix, descending and normalized to sum 1.
pub fn kernel_spectrum(k: &Mat) -> Result<Vec<f64>> {
    if k.nrows() != k.ncols() {
        return Err(Error::Shape("kernel must be square".into()));
    }
    let scale = k.amax().max(1.0);
    if (k - k.transpose()).amax() > 1e-9 * scale {
        return Err(Error::InvalidInput("kernel is not symmetric".into()));
    }
    let mut eig: Vec<f64> = SymmetricEigen::new(k.clone()).eigenvalues.iter().copied().collect();
    eig.sort_by(|a, b| b.total_cmp(a));
    let sum: f64 = eig.iter().sum();
    if sum == 0.0 {
        return Err(Error::Degenerate("kernel has zero trace".into()));
    }
    Ok(eig.into_iter().map(|e| e / sum).collect())
}

/// Linear kernel `X Xᵀ` over tokens.
pub fn gram_kernel(codes: &Mat) -> Mat {
    codes * codes.transpose()
}

/// Fraction of adjacent pairs whose supports differ, with the positions
/// `t` where `support(z_t) ≠ support(z_{t+1})`.
pub fn support_switch_rate(codes: &[SparseCode]) -> Result<(f64, Vec<usize>)> {
    if codes.len() < 2 {
        return Err(Error::InvalidInput("need at least 2 codes".into()));
    }
    let switches: Vec<usize> = (0..codes.len() - 1)
        .filter(|&t| codes[t].support != codes[t + 1].support)
        .collect();
    Ok((switches.len() as f64 / (codes.len() - 1) as f64, switches))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pca {
    /// `T × k` coordinates of the centered rows.
    pub projection: Mat,
    /// `p × k` orthonormal components.
    pub basis: Mat,
    /// Explained-variance ratio per component, zero past the rank.
    pub ratios: Vec<f64>,
    pub mean: crate::linalg::Vector,
}

/// Top-`k` principal components with a deterministic sign (largest
/// absolute loading positive).
pub fn pca_project(codes: &Mat, k: usize) -> Result<Pca> {
    let (t, p) = codes.shape();
    if t <= k {
        return Err(Error::InvalidInput(format!("PCA with k = {k} needs more than {k} rows, got {t}")));
    }
    if k > p {
        return Err(Error::InvalidInput(format!("k = {k} exceeds the {p} columns")));
    }
    let mean = column_means(codes);
    let centered = subtract_row(codes, &mean);
    let cov = centered.transpose() * &centered;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let total: f64 = eig.eigenvalues.iter().map(|e| e.max(0.0)).sum();
    let mut basis = Mat::zeros(p, k);
    let mut ratios = Vec::with_capacity(k);
    let tol = total * 1e-12;
    for (c, &i) in order.iter().take(k).enumerate() {
        let mut v = eig.eigenvectors.column(i).clone_owned();
        let pivot = v.iamax();
        if v[pivot] < 0.0 {
            v = -v;
        }
        basis.set_column(c, &v);
        let e = eig.eigenvalues[i];
        ratios.push(if total > 0.0 && e > tol { e / total } else { 0.0 });
    }
    Ok(Pca {
        projection: &centered * &basis,
        basis,
        ratios,
        mean,
    })
}

/// Least-squares slope of `y` against `0, 1, …`.
pub fn linear_fit_slope(y: &[f64]) -> f64 {
    let n = y.len() as f64;
    if y.len() < 2 {
        return 0.0;
    }
    let mx = (n - 1.0) / 2.0;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, v) in y.iter().enumerate() {
        let dx = i as f64 - mx;
        sxy += dx * (v - my);
        sxx += dx * dx;
    }
    sxy / sxx
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0;
        for &k in &idx[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        0.0
    } else {
        sab / (saa * sbb).sqrt()
    }
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    pearson(&ranks(a), &ranks(b))
}

/// Rank correlation of `values` with their positions.
pub fn spearman_trend(values: &[f64]) -> f64 {
    let pos: Vec<f64> = (0..values.len()).map(|i| i as f64).collect();
    spearman(&pos, values)
}
