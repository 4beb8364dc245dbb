// SPDX-License-Identifier: MIT OR Apache-2.0

//! Baseline sparse autoencoders: ReLU (L1-penalized), TopK and BatchTopK.
//!
//! ```text
//! pre  = W_enc (x - b_dec) + b_enc
//! z    = ReLU(pre) | TopK(pre) | BatchTopK(pre)
//! x̂    = W_dec z + b_dec
//! loss = mean_tokens ‖x - x̂‖² + λ mean_tokens ‖z‖₁     (λ used by ReLU only)
//! ```
//!
//! Gradients treat the TopK/BatchTopK selection as fixed and use a zero
//! ReLU subgradient at 0.

use serde::{Deserialize, Serialize};

use crate::linalg::{add_row, column_means, column_sums, random_unit_columns, rng_for, sq_norm, subtract_row, total_variance, Mat, Vector};
pub use crate::sparsity::SparseCode;
use crate::sparsity::{self, Selection, Sparsifier};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SaeKind {
    Relu,
    TopK,
    BatchTopK,
}

impl SaeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SaeKind::Relu => "relu",
            SaeKind::TopK => "topk",
            SaeKind::BatchTopK => "batchtopk",
        }
    }
}

impl std::str::FromStr for SaeKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(SaeKind::Relu),
            "topk" => Ok(SaeKind::TopK),
            "batchtopk" => Ok(SaeKind::BatchTopK),
            other => Err(Error::InvalidInput(format!("unknown SAE kind {other:?}"))),
        }
    }
}

/// Dictionary, biases and (untied) encoder of a baseline SAE.
#[derive(Debug, Clone, PartialEq)]
pub struct DictionaryModel {
    pub kind: SaeKind,
    /// `n × M`, unit-norm columns.
    pub w_dec: Mat,
    pub b_dec: Vector,
    /// `M × n`.
    pub w_enc: Mat,
    pub b_enc: Vector,
    pub k: usize,
    pub lambda: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    /// Mean squared reconstruction error per token.
    pub mse: f64,
    /// Mean L1 of the sparse code per token (before λ).
    pub l1: f64,
    pub nmse: f64,
    pub mean_l0: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SaeGrads {
    pub w_dec: Mat,
    pub b_dec: Vector,
    pub w_enc: Mat,
    pub b_enc: Vector,
}

impl SaeGrads {
    pub fn slices(&self) -> Vec<&[f64]> {
        vec![self.w_dec.as_slice(), self.b_dec.as_slice(), self.w_enc.as_slice(), self.b_enc.as_slice()]
    }
}

impl DictionaryModel {
    /// Random unit-norm dictionary, `W_enc = W_decᵀ`, `b_dec` at the data mean.
    pub fn init(kind: SaeKind, n: usize, m: usize, k: usize, lambda: f64, data_mean: Option<&Vector>, seed: u64) -> Self {
        let mut rng = rng_for(seed, 0);
        let w_dec = random_unit_columns(n, m, &mut rng);
        Self {
            kind,
            w_enc: w_dec.transpose(),
            w_dec,
            b_dec: data_mean.cloned().unwrap_or_else(|| Vector::zeros(n)),
            b_enc: Vector::zeros(m),
            k,
            lambda,
        }
    }

    pub fn n(&self) -> usize {
        self.w_dec.nrows()
    }

    pub fn m(&self) -> usize {
        self.w_dec.ncols()
    }

    pub fn sparsifier(&self) -> Sparsifier {
        match self.kind {
            SaeKind::Relu => Sparsifier::Relu,
            SaeKind::TopK => Sparsifier::TopK(self.k),
            SaeKind::BatchTopK => Sparsifier::BatchTopK(self.k),
        }
    }

    fn check_input(&self, x: &Mat) -> Result<()> {
        if x.ncols() != self.n() {
            return Err(Error::Shape(format!("input has {} columns, model expects {}", x.ncols(), self.n())));
        }
        Ok(())
    }

    /// `(X - b_dec) W_encᵀ + b_enc`, one row per token.
    pub fn pre_activations(&self, x: &Mat) -> Mat {
        let centered = subtract_row(x, &self.b_dec);
        add_row(&(centered * self.w_enc.transpose()), &self.b_enc)
    }

    /// Encodes a batch with the model's own rule (BatchTopK spans the batch).
    pub fn encode_batch(&self, x: &Mat) -> Result<Selection> {
        self.check_input(x)?;
        Ok(sparsity::apply(&self.pre_activations(x), self.sparsifier()))
    }

    /// Single-token encode. BatchTopK on one token is TopK.
    pub fn encode(&self, x: &[f64]) -> Result<(SparseCode, usize)> {
        let row = Mat::from_row_slice(1, x.len(), x);
        let sel = self.encode_batch(&row)?;
        Ok((SparseCode::from_dense(sel.codes.row(0).iter().copied().collect()), sel.shortfall))
    }

    pub fn encode_batchtopk(&self, x: &Mat) -> Result<Vec<SparseCode>> {
        self.check_input(x)?;
        if x.nrows() == 0 {
            return Err(Error::InvalidInput("BatchTopK needs at least one token".into()));
        }
        let sel = sparsity::batch_topk(&self.pre_activations(x), self.k);
        Ok(sparsity::codes_from_matrix(&sel.codes))
    }

    pub fn decode(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.m() {
            return Err(Error::Shape(format!("code has length {}, model width is {}", z.len(), self.m())));
        }
        let out = &self.w_dec * Vector::from_column_slice(z) + &self.b_dec;
        Ok(out.iter().copied().collect())
    }

    /// `Z W_decᵀ + b_dec`.
    pub fn decode_batch(&self, z: &Mat) -> Mat {
        add_row(&(z * self.w_dec.transpose()), &self.b_dec)
    }

    pub fn reconstruct(&self, x: &Mat) -> Result<Mat> {
        Ok(self.decode_batch(&self.encode_batch(x)?.codes))
    }

    pub fn loss(&self, x: &Mat) -> Result<LossBreakdown> {
        Ok(self.forward(x)?.0)
    }

    fn forward(&self, x: &Mat) -> Result<(LossBreakdown, Mat, Selection, Mat)> {
        self.check_input(x)?;
        if x.nrows() == 0 {
            return Err(Error::InvalidInput("empty batch".into()));
        }
        let tokens = x.nrows() as f64;
        let pre = self.pre_activations(x);
        let sel = sparsity::apply(&pre, self.sparsifier());
        let residual = self.decode_batch(&sel.codes) - x;
        let sq = sq_norm(&residual);
        let l1 = sel.codes.sum() / tokens;
        let lambda = self.effective_lambda();
        let energy = sq_norm(x);
        let breakdown = LossBreakdown {
            total: sq / tokens + lambda * l1,
            mse: sq / tokens,
            l1,
            nmse: if energy > 0.0 { sq / energy } else { f64::NAN },
            mean_l0: sel.mean_l0(),
        };
        Ok((breakdown, pre, sel, residual))
    }

    pub fn effective_lambda(&self) -> f64 {
        match self.kind {
            SaeKind::Relu => self.lambda,
            _ => 0.0,
        }
    }

    /// Loss and exact gradients under the frozen-support convention.
    pub fn backward(&self, x: &Mat) -> Result<(LossBreakdown, SaeGrads)> {
        let (breakdown, _pre, sel, residual) = self.forward(x)?;
        let tokens = x.nrows() as f64;
        let z = &sel.codes;
        let d_xhat = residual * (2.0 / tokens);
        let mask = z.map(|v| if v > 0.0 { 1.0 } else { 0.0 });
        let lambda = self.effective_lambda();

        let w_dec = d_xhat.transpose() * z;
        let mut b_dec = column_sums(&d_xhat);
        let d_z = &d_xhat * &self.w_dec + &mask * (lambda / tokens);
        let d_pre = d_z.component_mul(&mask);
        let centered = subtract_row(x, &self.b_dec);
        let w_enc = d_pre.transpose() * &centered;
        let b_enc = column_sums(&d_pre);
        let d_centered = &d_pre * &self.w_enc;
        b_dec -= column_sums(&d_centered);
        Ok((breakdown, SaeGrads { w_dec, b_dec, w_enc, b_enc }))
    }

    /// Removes the gradient component parallel to each decoder column.
    pub fn project_decoder_gradient(&self, grads: &mut SaeGrads) {
        crate::linalg::remove_parallel_component(&mut grads.w_dec, &self.w_dec);
    }

    pub fn renormalize_decoder(&mut self) {
        crate::linalg::normalize_columns(&mut self.w_dec);
    }

    /// Parameter storage in the order `w_dec, b_dec, w_enc, b_enc`.
    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            self.w_dec.as_mut_slice(),
            self.b_dec.as_mut_slice(),
            self.w_enc.as_mut_slice(),
            self.b_enc.as_mut_slice(),
        ]
    }

    pub fn param_slices(&self) -> Vec<&[f64]> {
        vec![self.w_dec.as_slice(), self.b_dec.as_slice(), self.w_enc.as_slice(), self.b_enc.as_slice()]
    }

    pub fn max_column_norm_error(&self) -> f64 {
        self.w_dec.column_iter().map(|c| (c.norm() - 1.0).abs()).fold(0.0, f64::max)
    }
}

/// `(nmse, explained_variance)` of a reconstruction.
///
/// `nmse = Σ‖x - x̂‖² / Σ‖x‖²`; explained variance is
/// `1 - Σ_d var(x_d - x̂_d) / Σ_d var(x_d)` with variances over tokens.
pub fn reconstruction_metrics(x: &Mat, x_hat: &Mat) -> Result<(f64, f64)> {
    if x.shape() != x_hat.shape() {
        return Err(Error::Shape(format!("{:?} vs {:?}", x.shape(), x_hat.shape())));
    }
    let diff = x - x_hat;
    let energy = sq_norm(x);
    if energy == 0.0 {
        return Err(Error::Degenerate("input has zero energy".into()));
    }
    let var = total_variance(x);
    if var == 0.0 {
        return Err(Error::Degenerate("input has zero variance".into()));
    }
    Ok((sq_norm(&diff) / energy, 1.0 - total_variance(&diff) / var))
}

/// Mean of all token rows, for initializing `b_dec`.
pub fn data_mean(x: &Mat) -> Vector {
    column_means(x)
}
