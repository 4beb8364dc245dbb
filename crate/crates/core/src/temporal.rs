// SPDX-License-Identifier: MIT OR Apache-2.0

//! Temporal feature analyzer.
//!
//! Each token is split into a predictive part, read off the strictly-past
//! context by attention in latent space, and a novel part, a sparse code of
//! what the prediction leaves unexplained. Both decode through the same
//! dictionary `D` (or through two dictionaries in split mode).
//!
//! ```text
//! v_t   = ReLU(Dᵀ (x_t - b))
//! s_tu  = (W_Q v_t)·(W_K v_u) / √d_attn          u < t
//! z_p,t = Σ_u softmax_u(s_tu) W_V v_u             z_p,1 = 0
//! z_n,t = σ(D_nᵀ (x_t - b - D z_p,t))             σ = TopK | BatchTopK | ReLU
//! x̂_t   = D z_p,t + D_n z_n,t + b
//! ```
//!
//! With `W_V` left as the identity, `z_p,t` is a convex combination of past
//! latents. Rows of every matrix here are tokens.

use serde::{Deserialize, Serialize};

use crate::linalg::{add_row, column_sums, gaussian_matrix, random_unit_columns, rng_for, sq_norm, subtract_row, vstack, Mat, Vector};
use crate::par::*;
use crate::sae::{DictionaryModel, SaeKind};
use crate::sparsity::{self, codes_from_matrix, SparseCode, Sparsifier};
use crate::{ActivationSet, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NovelKind {
    TopK,
    BatchTopK,
    /// L1-penalized, weight `lambda`.
    Relu,
}

impl NovelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NovelKind::TopK => "topk",
            NovelKind::BatchTopK => "batchtopk",
            NovelKind::Relu => "relu",
        }
    }
}

impl std::str::FromStr for NovelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "topk" => Ok(NovelKind::TopK),
            "batchtopk" => Ok(NovelKind::BatchTopK),
            "relu" => Ok(NovelKind::Relu),
            other => Err(Error::InvalidInput(format!("unknown novel kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueMode {
    /// `W_V = I`: predictions are convex combinations of past latents.
    Identity,
    /// Trainable `M × M` value projection, initialized to the identity.
    Learned,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemporalShape {
    pub n: usize,
    pub m: usize,
    pub d_attn: usize,
    pub k_novel: usize,
    pub novel_kind: NovelKind,
    pub value_mode: ValueMode,
    pub split_dictionary: bool,
    pub pred_only: bool,
    pub lambda: f64,
}

impl TemporalShape {
    pub fn new(n: usize, m: usize) -> Self {
        Self {
            n,
            m,
            d_attn: 64.min(m),
            k_novel: 8,
            novel_kind: NovelKind::BatchTopK,
            value_mode: ValueMode::Identity,
            split_dictionary: false,
            pred_only: false,
            lambda: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemporalModel {
    /// `n × M`, shared by the latent encoder, the novel encoder and the decoder.
    pub dict: Mat,
    /// Separate novel dictionary in split mode.
    pub dict_novel: Option<Mat>,
    pub b_dec: Vector,
    /// `d_attn × M`.
    pub w_q: Mat,
    pub w_k: Mat,
    /// `M × M`; `None` means identity.
    pub w_v: Option<Mat>,
    pub k_novel: usize,
    pub novel_kind: NovelKind,
    pub lambda: f64,
    pub pred_only: bool,
}

/// Codes and reconstructions for one sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalCodes {
    /// `T × M`, dense and non-negative when `W_V = I`.
    pub z_p: Mat,
    /// `T × M`, sparse.
    pub z_n: Mat,
    /// `D z_p + b`.
    pub x_hat_p: Mat,
    /// `D_n z_n + b`.
    pub x_hat_n: Mat,
    pub x_hat: Mat,
    /// `T × T`; row `t` holds weights over positions `< t`.
    pub attn: Mat,
}

impl TemporalCodes {
    pub fn novel_codes(&self) -> Vec<SparseCode> {
        codes_from_matrix(&self.z_n)
    }

    pub fn len(&self) -> usize {
        self.z_p.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.z_p.nrows() == 0
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TfaLoss {
    pub total: f64,
    pub mse: f64,
    /// Mean L1 of the novel code per token (before λ).
    pub l1: f64,
    pub nmse: f64,
    /// `Σ‖x - x̂_p‖² / Σ‖x‖²`.
    pub pred_nmse: f64,
    /// `Σ‖x - x̂_n‖² / Σ‖x‖²`.
    pub novel_nmse: f64,
    pub mean_l0: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TfaGrads {
    pub dict: Mat,
    pub dict_novel: Option<Mat>,
    pub b_dec: Vector,
    pub w_q: Mat,
    pub w_k: Mat,
    pub w_v: Option<Mat>,
}

impl TfaGrads {
    /// Same order as [`TemporalModel::param_slices`].
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out = vec![self.dict.as_slice()];
        if let Some(d) = &self.dict_novel {
            out.push(d.as_slice());
        }
        out.extend([self.b_dec.as_slice(), self.w_q.as_slice(), self.w_k.as_slice()]);
        if let Some(v) = &self.w_v {
            out.push(v.as_slice());
        }
        out
    }

    fn add_assign(&mut self, other: &TfaGrads) {
        self.dict += &other.dict;
        if let (Some(a), Some(b)) = (&mut self.dict_novel, &other.dict_novel) {
            *a += b;
        }
        self.b_dec += &other.b_dec;
        self.w_q += &other.w_q;
        self.w_k += &other.w_k;
        if let (Some(a), Some(b)) = (&mut self.w_v, &other.w_v) {
            *a += b;
        }
    }
}

/// Forward intermediates for one sequence.
struct SeqCache {
    u: Mat,
    a: Mat,
    v: Mat,
    q: Mat,
    keys: Mat,
    values: Mat,
    attn: Mat,
    z_p: Mat,
    residual: Mat,
    pre_n: Mat,
}

/// Row-wise softmax over strictly-past positions; row 0 stays zero.
fn causal_softmax(scores: &Mat) -> Mat {
    let t_len = scores.nrows();
    let mut p = Mat::zeros(t_len, t_len);
    for t in 1..t_len {
        let max = (0..t).map(|u| scores[(t, u)]).fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for u in 0..t {
            let e = (scores[(t, u)] - max).exp();
            p[(t, u)] = e;
            total += e;
        }
        for u in 0..t {
            p[(t, u)] /= total;
        }
    }
    p
}

impl TemporalModel {
    pub fn init(shape: &TemporalShape, data_mean: Option<&Vector>, seed: u64) -> Result<Self> {
        if shape.d_attn == 0 || shape.d_attn > shape.m {
            return Err(Error::InvalidInput(format!(
                "d_attn must be in 1..={} (got {})",
                shape.m, shape.d_attn
            )));
        }
        let mut rng = rng_for(seed, 0);
        let dict = random_unit_columns(shape.n, shape.m, &mut rng);
        let dict_novel = shape
            .split_dictionary
            .then(|| random_unit_columns(shape.n, shape.m, &mut rng));
        let scale = 1.0 / (shape.m as f64).sqrt();
        let w_q = gaussian_matrix(shape.d_attn, shape.m, scale, &mut rng);
        let w_k = gaussian_matrix(shape.d_attn, shape.m, scale, &mut rng);
        Ok(Self {
            dict,
            dict_novel,
            b_dec: data_mean.cloned().unwrap_or_else(|| Vector::zeros(shape.n)),
            w_q,
            w_k,
            w_v: (shape.value_mode == ValueMode::Learned).then(|| Mat::identity(shape.m, shape.m)),
            k_novel: shape.k_novel,
            novel_kind: shape.novel_kind,
            lambda: shape.lambda,
            pred_only: shape.pred_only,
        })
    }

    pub fn shape(&self) -> TemporalShape {
        TemporalShape {
            n: self.n(),
            m: self.m(),
            d_attn: self.d_attn(),
            k_novel: self.k_novel,
            novel_kind: self.novel_kind,
            value_mode: self.value_mode(),
            split_dictionary: self.dict_novel.is_some(),
            pred_only: self.pred_only,
            lambda: self.lambda,
        }
    }

    pub fn n(&self) -> usize {
        self.dict.nrows()
    }

    pub fn m(&self) -> usize {
        self.dict.ncols()
    }

    pub fn d_attn(&self) -> usize {
        self.w_q.nrows()
    }

    pub fn value_mode(&self) -> ValueMode {
        if self.w_v.is_some() {
            ValueMode::Learned
        } else {
            ValueMode::Identity
        }
    }

    pub fn novel_dict(&self) -> &Mat {
        self.dict_novel.as_ref().unwrap_or(&self.dict)
    }

    fn novel_sparsifier(&self) -> Sparsifier {
        match self.novel_kind {
            NovelKind::TopK => Sparsifier::TopK(self.k_novel),
            NovelKind::BatchTopK => Sparsifier::BatchTopK(self.k_novel),
            NovelKind::Relu => Sparsifier::Relu,
        }
    }

    fn effective_lambda(&self) -> f64 {
        match self.novel_kind {
            NovelKind::Relu => self.lambda,
            _ => 0.0,
        }
    }

    /// Tied-encoder TopK SAE on this model's (novel) dictionary; used as the
    /// reduction target when the predictive path is switched off.
    pub fn tied_sae(&self) -> DictionaryModel {
        let dict = self.novel_dict().clone();
        DictionaryModel {
            kind: SaeKind::TopK,
            w_enc: dict.transpose(),
            b_enc: Vector::zeros(dict.ncols()),
            w_dec: dict,
            b_dec: self.b_dec.clone(),
            k: self.k_novel,
            lambda: 0.0,
        }
    }

    fn check_sequence(&self, x: &Mat) -> Result<()> {
        if x.ncols() != self.n() {
            return Err(Error::Shape(format!("sequence has {} columns, model expects {}", x.ncols(), self.n())));
        }
        if x.nrows() == 0 {
            return Err(Error::InvalidInput("empty sequence".into()));
        }
        Ok(())
    }

    /// `ReLU(Dᵀ(x - b))` for each row.
    pub fn encode_latent(&self, x: &Mat) -> Mat {
        (subtract_row(x, &self.b_dec) * &self.dict).map(|v| v.max(0.0))
    }

    fn values(&self, v: &Mat) -> Mat {
        match &self.w_v {
            Some(w_v) => v * w_v.transpose(),
            None => v.clone(),
        }
    }

    /// Predictive codes and attention weights for a sequence of latents.
    pub fn predictive_code(&self, v: &Mat) -> (Mat, Mat) {
        let q = v * self.w_q.transpose();
        let keys = v * self.w_k.transpose();
        let attn = causal_softmax(&((&q * keys.transpose()) / (self.d_attn() as f64).sqrt()));
        (&attn * self.values(v), attn)
    }

    /// Novel code of a single token given its predictive code.
    pub fn novel_code(&self, x_t: &[f64], z_p_t: &[f64]) -> Result<(SparseCode, usize)> {
        if x_t.len() != self.n() || z_p_t.len() != self.m() {
            return Err(Error::Shape("novel_code input lengths".into()));
        }
        let x = Mat::from_row_slice(1, self.n(), x_t);
        let zp = Mat::from_row_slice(1, self.m(), z_p_t);
        let residual = subtract_row(&x, &self.b_dec) - zp * self.dict.transpose();
        let sel = sparsity::apply(&(residual * self.novel_dict()), self.novel_sparsifier());
        Ok((SparseCode::from_dense(sel.codes.row(0).iter().copied().collect()), sel.shortfall))
    }

    fn sequence_cache(&self, x: &Mat) -> SeqCache {
        let u = subtract_row(x, &self.b_dec);
        let a = &u * &self.dict;
        let v = a.map(|e| e.max(0.0));
        let q = &v * self.w_q.transpose();
        let keys = &v * self.w_k.transpose();
        let values = self.values(&v);
        let attn = causal_softmax(&((&q * keys.transpose()) / (self.d_attn() as f64).sqrt()));
        let z_p = &attn * &values;
        let residual = &u - &z_p * self.dict.transpose();
        let pre_n = if self.pred_only {
            Mat::zeros(0, 0)
        } else {
            &residual * self.novel_dict()
        };
        SeqCache {
            u,
            a,
            v,
            q,
            keys,
            values,
            attn,
            z_p,
            residual,
            pre_n,
        }
    }

    /// Caches per sequence plus the novel codes (selection spans the batch).
    fn run(&self, seqs: &[Mat]) -> Result<(Vec<SeqCache>, Vec<Mat>)> {
        for s in seqs {
            self.check_sequence(s)?;
        }
        let caches: Vec<SeqCache> = seqs.par_iter().map(|x| self.sequence_cache(x)).collect();
        let m = self.m();
        if self.pred_only {
            let zn = seqs.iter().map(|s| Mat::zeros(s.nrows(), m)).collect();
            return Ok((caches, zn));
        }
        let zn = match self.novel_sparsifier() {
            Sparsifier::BatchTopK(k) => {
                let pres: Vec<&Mat> = caches.iter().map(|c| &c.pre_n).collect();
                let lengths: Vec<usize> = seqs.iter().map(|s| s.nrows()).collect();
                let sel = sparsity::batch_topk(&vstack(&pres), k);
                crate::linalg::split_rows(&sel.codes, &lengths)
            }
            rule => caches.par_iter().map(|c| sparsity::apply(&c.pre_n, rule).codes).collect(),
        };
        Ok((caches, zn))
    }

    fn assemble(&self, cache: &SeqCache, z_n: Mat) -> TemporalCodes {
        let x_hat_p = add_row(&(&cache.z_p * self.dict.transpose()), &self.b_dec);
        let x_hat_n = add_row(&(&z_n * self.novel_dict().transpose()), &self.b_dec);
        let x_hat = add_row(&(&x_hat_p + &x_hat_n), &(-&self.b_dec));
        TemporalCodes {
            z_p: cache.z_p.clone(),
            z_n,
            x_hat_p,
            x_hat_n,
            x_hat,
            attn: cache.attn.clone(),
        }
    }

    /// Forward pass over a batch of sequences; BatchTopK novel selection is
    /// taken across every token in the batch.
    pub fn forward_batch(&self, seqs: &[Mat]) -> Result<Vec<TemporalCodes>> {
        let (caches, zn) = self.run(seqs)?;
        Ok(caches
            .iter()
            .zip(zn)
            .map(|(c, z)| self.assemble(c, z))
            .collect())
    }

    pub fn forward(&self, x: &Mat) -> Result<TemporalCodes> {
        Ok(self.forward_batch(std::slice::from_ref(x))?.remove(0))
    }

    /// Encodes every sequence of a set independently (each sequence is its
    /// own BatchTopK batch).
    pub fn encode_set(&self, set: &ActivationSet) -> Result<Vec<TemporalCodes>> {
        set.sequences()
            .par_iter()
            .map(|s| self.forward(s))
            .collect()
    }

    fn loss_from(&self, seqs: &[Mat], codes: &[TemporalCodes]) -> TfaLoss {
        let tokens: usize = seqs.iter().map(|s| s.nrows()).sum();
        let tokens = tokens as f64;
        let (mut sq, mut sq_p, mut sq_n, mut energy, mut l1, mut nnz) = (0.0, 0.0, 0.0, 0.0, 0.0, 0usize);
        for (x, c) in seqs.iter().zip(codes) {
            sq += sq_norm(&(&c.x_hat - x));
            sq_p += sq_norm(&(&c.x_hat_p - x));
            sq_n += sq_norm(&(&c.x_hat_n - x));
            energy += sq_norm(x);
            l1 += c.z_n.sum();
            nnz += c.z_n.iter().filter(|v| **v > 0.0).count();
        }
        let ratio = |v: f64| if energy > 0.0 { v / energy } else { f64::NAN };
        TfaLoss {
            total: sq / tokens + self.effective_lambda() * l1 / tokens,
            mse: sq / tokens,
            l1: l1 / tokens,
            nmse: ratio(sq),
            pred_nmse: ratio(sq_p),
            novel_nmse: ratio(sq_n),
            mean_l0: nnz as f64 / tokens,
        }
    }

    pub fn loss_batch(&self, seqs: &[Mat]) -> Result<TfaLoss> {
        let codes = self.forward_batch(seqs)?;
        Ok(self.loss_from(seqs, &codes))
    }

    pub fn loss(&self, x: &Mat) -> Result<TfaLoss> {
        self.loss_batch(std::slice::from_ref(x))
    }

    /// Loss and exact gradients (frozen novel support, ReLU subgradient 0).
    pub fn backward_batch(&self, seqs: &[Mat]) -> Result<(TfaLoss, TfaGrads)> {
        let (caches, zn) = self.run(seqs)?;
        let codes: Vec<TemporalCodes> = caches.iter().zip(zn.iter()).map(|(c, z)| self.assemble(c, z.clone())).collect();
        let loss = self.loss_from(seqs, &codes);
        let tokens = loss_tokens(seqs);
        let per_seq: Vec<TfaGrads> = (0..seqs.len())
            .into_par_iter()
            .map(|i| self.sequence_backward(&seqs[i], &caches[i], &zn[i], &codes[i], tokens))
            .collect();
        let mut iter = per_seq.into_iter();
        let mut total = iter.next().ok_or_else(|| Error::InvalidInput("empty batch".into()))?;
        for g in iter {
            total.add_assign(&g);
        }
        if self.dict_novel.is_none() {
            // tied: fold the novel-path dictionary gradient in
            if let Some(extra) = total.dict_novel.take() {
                total.dict += extra;
            }
        }
        Ok((loss, total))
    }

    pub fn backward(&self, x: &Mat) -> Result<(TfaLoss, TfaGrads)> {
        self.backward_batch(std::slice::from_ref(x))
    }

    fn sequence_backward(&self, x: &Mat, c: &SeqCache, z_n: &Mat, codes: &TemporalCodes, tokens: f64) -> TfaGrads {
        let d_pred = &self.dict;
        let d_novel = self.novel_dict();
        let g = (&codes.x_hat - x) * (2.0 / tokens);

        let mut grad_pred = g.transpose() * &c.z_p;
        let mut grad_novel = g.transpose() * z_n;
        let mut grad_b = column_sums(&g);

        let d_zp = if self.pred_only {
            &g * d_pred
        } else {
            let mask = z_n.map(|v| if v > 0.0 { 1.0 } else { 0.0 });
            let d_zn = &g * d_novel + &mask * (self.effective_lambda() / tokens);
            let d_pre = d_zn.component_mul(&mask);
            grad_novel += c.residual.transpose() * &d_pre;
            let d_res = &d_pre * d_novel.transpose();
            grad_b -= column_sums(&d_res);
            grad_pred -= d_res.transpose() * &c.z_p;
            (&g - &d_res) * d_pred
        };

        let d_values = c.attn.transpose() * &d_zp;
        let d_attn = &d_zp * c.values.transpose();
        let weighted: Vec<f64> = (0..c.attn.nrows())
            .map(|t| c.attn.row(t).iter().zip(d_attn.row(t).iter()).map(|(p, d)| p * d).sum())
            .collect();
        let d_scores = Mat::from_fn(c.attn.nrows(), c.attn.ncols(), |t, u| c.attn[(t, u)] * (d_attn[(t, u)] - weighted[t]));
        let inv_sqrt = 1.0 / (self.d_attn() as f64).sqrt();
        let d_q = &d_scores * &c.keys * inv_sqrt;
        let d_keys = d_scores.transpose() * &c.q * inv_sqrt;
        let grad_wq = d_q.transpose() * &c.v;
        let grad_wk = d_keys.transpose() * &c.v;
        let mut d_v = &d_q * &self.w_q + &d_keys * &self.w_k;
        let grad_wv = match &self.w_v {
            Some(w_v) => {
                d_v += &d_values * w_v;
                Some(d_values.transpose() * &c.v)
            }
            None => {
                d_v += &d_values;
                None
            }
        };
        let d_a = d_v.zip_map(&c.a, |d, a| if a > 0.0 { d } else { 0.0 });
        grad_pred += c.u.transpose() * &d_a;
        grad_b -= column_sums(&(&d_a * d_pred.transpose()));

        TfaGrads {
            dict: grad_pred,
            dict_novel: Some(grad_novel),
            b_dec: grad_b,
            w_q: grad_wq,
            w_k: grad_wk,
            w_v: grad_wv,
        }
    }

    pub fn project_decoder_gradient(&self, grads: &mut TfaGrads) {
        crate::linalg::remove_parallel_component(&mut grads.dict, &self.dict);
        if let (Some(g), Some(d)) = (&mut grads.dict_novel, &self.dict_novel) {
            crate::linalg::remove_parallel_component(g, d);
        }
    }

    pub fn renormalize_decoder(&mut self) {
        crate::linalg::normalize_columns(&mut self.dict);
        if let Some(d) = &mut self.dict_novel {
            crate::linalg::normalize_columns(d);
        }
    }

    pub fn max_column_norm_error(&self) -> f64 {
        let err = |m: &Mat| m.column_iter().map(|c| (c.norm() - 1.0).abs()).fold(0.0, f64::max);
        err(&self.dict).max(self.dict_novel.as_ref().map_or(0.0, err))
    }

    /// Order: `dict, [dict_novel], b_dec, w_q, w_k, [w_v]`.
    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = vec![self.dict.as_mut_slice()];
        if let Some(d) = &mut self.dict_novel {
            out.push(d.as_mut_slice());
        }
        out.extend([self.b_dec.as_mut_slice(), self.w_q.as_mut_slice(), self.w_k.as_mut_slice()]);
        if let Some(v) = &mut self.w_v {
            out.push(v.as_mut_slice());
        }
        out
    }

    pub fn param_slices(&self) -> Vec<&[f64]> {
        let mut out = vec![self.dict.as_slice()];
        if let Some(d) = &self.dict_novel {
            out.push(d.as_slice());
        }
        out.extend([self.b_dec.as_slice(), self.w_q.as_slice(), self.w_k.as_slice()]);
        if let Some(v) = &self.w_v {
            out.push(v.as_slice());
        }
        out
    }
}

fn loss_tokens(seqs: &[Mat]) -> f64 {
    seqs.iter().map(|s| s.nrows()).sum::<usize>() as f64
}

/// Table-3 style comparison of the predictive and novel reconstructions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentStats {
    /// Mean cosine between `D z_p` and `D_n z_n` over tokens where both are
    /// non-zero; absent when no such token exists.
    pub cosine_pred_novel: Option<f64>,
    /// Mean of `‖D z_p‖ / (‖D z_p‖ + ‖D_n z_n‖)`, in percent.
    pub pred_norm_pct: f64,
    pub novel_norm_pct: f64,
    pub pred_nmse: f64,
    pub novel_nmse: f64,
    pub pred_explained_variance: f64,
    pub novel_explained_variance: f64,
    /// Value pathway used for the predictive code.
    pub value_mode: ValueMode,
}

pub fn component_stats(model: &TemporalModel, set: &ActivationSet) -> Result<ComponentStats> {
    let codes = model.encode_set(set)?;
    let x = set.stacked();
    let stack = |f: &dyn Fn(&TemporalCodes) -> &Mat| {
        let parts: Vec<&Mat> = codes.iter().map(f).collect();
        vstack(&parts)
    };
    let x_hat_p = stack(&|c| &c.x_hat_p);
    let x_hat_n = stack(&|c| &c.x_hat_n);
    let pred_part = subtract_row(&x_hat_p, &model.b_dec);
    let novel_part = subtract_row(&x_hat_n, &model.b_dec);

    let mut cos_sum = 0.0;
    let mut cos_count = 0usize;
    let mut share_sum = 0.0;
    let mut share_count = 0usize;
    for t in 0..x.nrows() {
        let p = pred_part.row(t);
        let q = novel_part.row(t);
        let (np, nq) = (p.norm(), q.norm());
        if np > 0.0 && nq > 0.0 {
            cos_sum += p.dot(&q) / (np * nq);
            cos_count += 1;
        }
        if np + nq > 0.0 {
            share_sum += np / (np + nq);
            share_count += 1;
        }
    }
    let pred_share = if share_count > 0 { 100.0 * share_sum / share_count as f64 } else { 0.0 };
    let novel_share = if share_count > 0 { 100.0 - pred_share } else { 0.0 };
    let (pred_nmse, pred_ev) = crate::sae::reconstruction_metrics(&x, &x_hat_p)?;
    let (novel_nmse, novel_ev) = crate::sae::reconstruction_metrics(&x, &x_hat_n)?;
    Ok(ComponentStats {
        cosine_pred_novel: (cos_count > 0).then(|| cos_sum / cos_count as f64),
        pred_norm_pct: pred_share,
        novel_norm_pct: novel_share,
        pred_nmse,
        novel_nmse,
        pred_explained_variance: pred_ev,
        novel_explained_variance: novel_ev,
        value_mode: model.value_mode(),
    })
}
