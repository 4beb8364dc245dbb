#![allow(dead_code)]

use rand::Rng;
use tfa_core::linalg::{gaussian_matrix, rng_for, Mat, Vector};
use tfa_core::sae::{DictionaryModel, SaeKind};
use tfa_core::temporal::{NovelKind, TemporalModel, TemporalShape, ValueMode};

pub const FD_STEP: f64 = 1e-6;
/// Denominator floor for the relative error of near-zero gradients.
pub const REL_FLOOR: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradCase {
    Relu,
    TopK,
    BatchTopK,
    TemporalIdentity,
    TemporalLearned,
    PredOnly,
}

impl GradCase {
    pub const ALL: [GradCase; 6] = [
        GradCase::Relu,
        GradCase::TopK,
        GradCase::BatchTopK,
        GradCase::TemporalIdentity,
        GradCase::TemporalLearned,
        GradCase::PredOnly,
    ];
}

pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Central differences over every parameter; returns the worst relative error.
fn check<M: Clone>(
    model: &M,
    analytic: Vec<Vec<f64>>,
    slices_mut: impl Fn(&mut M) -> Vec<&mut [f64]>,
    loss: impl Fn(&M) -> f64,
) -> f64 {
    let mut worst = 0.0f64;
    for (p, grad) in analytic.iter().enumerate() {
        for (i, &a) in grad.iter().enumerate() {
            let mut plus = model.clone();
            slices_mut(&mut plus)[p][i] += FD_STEP;
            let mut minus = model.clone();
            slices_mut(&mut minus)[p][i] -= FD_STEP;
            let numeric = (loss(&plus) - loss(&minus)) / (2.0 * FD_STEP);
            worst = worst.max(rel_error(a, numeric));
        }
    }
    worst
}

fn perturb(v: &mut [f64], scale: f64, rng: &mut impl Rng) {
    for x in v {
        *x += scale * (rng.random::<f64>() - 0.5);
    }
}

/// Max relative gradient error of one random small instance
/// (n = 6, M = 10, d_attn = 4, T = 5).
pub fn gradient_error(case: GradCase, seed: u64) -> f64 {
    let (n, m, t_len) = (6, 10, 5);
    let mut rng = rng_for(seed, 77);
    match case {
        GradCase::Relu | GradCase::TopK | GradCase::BatchTopK => {
            let kind = match case {
                GradCase::Relu => SaeKind::Relu,
                GradCase::TopK => SaeKind::TopK,
                _ => SaeKind::BatchTopK,
            };
            let mut model = DictionaryModel::init(kind, n, m, 3, 0.05, None, seed);
            perturb(model.b_dec.as_mut_slice(), 0.2, &mut rng);
            perturb(model.b_enc.as_mut_slice(), 0.2, &mut rng);
            let x = gaussian_matrix(t_len, n, 1.0, &mut rng);
            let (_, grads) = model.backward(&x).unwrap();
            let analytic = grads.slices().iter().map(|s| s.to_vec()).collect();
            check(&model, analytic, |m| m.param_slices_mut(), |m| m.loss(&x).unwrap().total)
        }
        _ => {
            let mut shape = TemporalShape::new(n, m);
            shape.d_attn = 4;
            shape.k_novel = 3;
            shape.novel_kind = NovelKind::TopK;
            match case {
                GradCase::TemporalLearned => {
                    shape.value_mode = ValueMode::Learned;
                    shape.novel_kind = NovelKind::BatchTopK;
                }
                GradCase::PredOnly => shape.pred_only = true,
                _ => {}
            }
            let mut model = TemporalModel::init(&shape, None, seed).unwrap();
            model.b_dec = Vector::from_iterator(n, (0..n).map(|_| 0.2 * (rng.random::<f64>() - 0.5)));
            // sharper attention than the default initialization
            model.w_q *= 3.0;
            model.w_k *= 3.0;
            if let Some(w_v) = &mut model.w_v {
                perturb(w_v.as_mut_slice(), 0.4, &mut rng);
            }
            let seqs: Vec<Mat> = (0..2).map(|_| gaussian_matrix(t_len, n, 1.0, &mut rng)).collect();
            let (_, grads) = model.backward_batch(&seqs).unwrap();
            let analytic = grads.slices().iter().map(|s| s.to_vec()).collect();
            check(&model, analytic, |m| m.param_slices_mut(), |m| m.loss_batch(&seqs).unwrap().total)
        }
    }
}
