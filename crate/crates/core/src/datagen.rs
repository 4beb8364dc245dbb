// SPDX-License-Identifier: MIT OR Apache-2.0

//! Synthetic activation sets with known ground truth.
//!
//! Every generator is a pure function of its arguments and seed. Sequence
//! `b` draws from its own RNG stream, so the output does not depend on
//! whether the `parallel` feature is on.

use std::f64::consts::TAU;

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::linalg::{gaussian_matrix, random_unit_columns, rng_for, Mat};
use crate::par::*;
use crate::{ActivationSet, Error, EventSpan, Result, SequenceMeta};

/// Active-atom count per position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Schedule {
    Constant(usize),
    /// `k(t) = base + ⌊t / every⌋`, optionally capped.
    Staircase { base: usize, every: usize, cap: Option<usize> },
    Table(Vec<usize>),
}

impl Schedule {
    pub fn k(&self, t: usize) -> usize {
        match self {
            Schedule::Constant(k) => *k,
            Schedule::Staircase { base, every, cap } => {
                let k = base + t / (*every).max(1);
                cap.map_or(k, |c| k.min(c))
            }
            Schedule::Table(v) => v.get(t).or(v.last()).copied().unwrap_or(0),
        }
    }
}

/// Which atoms position `t` may draw its `k(t)` active atoms from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AtomPool {
    /// The first `⌈N · k(t) / k_max⌉` atoms, so the ensemble's energy spreads
    /// over more atoms as `k(t)` grows. A constant schedule uses all atoms.
    #[default]
    Proportional,
    /// Every atom, at every position.
    All,
}

impl AtomPool {
    pub fn size(self, atoms: usize, k: usize, k_max: usize) -> usize {
        match self {
            AtomPool::All => atoms,
            AtomPool::Proportional if k_max == 0 => atoms,
            AtomPool::Proportional => (atoms * k).div_ceil(k_max).clamp(k, atoms),
        }
    }
}

/// Planted dictionary `V` (`n × N`, unit columns) behind a generated set.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedProcess {
    pub dictionary: Mat,
    pub schedule: Schedule,
    pub pool: AtomPool,
    /// Largest off-diagonal `|⟨v_i, v_j⟩|`.
    pub coherence: f64,
    pub seed: u64,
}

/// Output of [`gen_dictionary_process`].
#[derive(Debug, Clone)]
pub struct PlantedData {
    pub set: ActivationSet,
    pub process: PlantedProcess,
    /// Per sequence, `T × N` coefficients before row normalization.
    pub codes: Vec<Mat>,
    /// Per sequence, `‖V a_t‖` for every row.
    pub row_norms: Vec<Vec<f64>>,
}

/// Coefficient magnitudes of active atoms.
pub const COEFF_RANGE: (f64, f64) = (0.5, 1.5);

pub fn coherence(dictionary: &Mat) -> f64 {
    let gram = dictionary.transpose() * dictionary;
    let mut worst: f64 = 0.0;
    for i in 0..gram.nrows() {
        for j in 0..gram.ncols() {
            if i != j {
                worst = worst.max(gram[(i, j)].abs());
            }
        }
    }
    worst
}

/// `B` sequences of `T` unit-norm rows `x_t = V a_t / ‖V a_t‖`, where `a_t`
/// has `k(t)` uniformly chosen atoms with positive coefficients, drawn from
/// the [`AtomPool::Proportional`] pool.
pub fn gen_dictionary_process(
    n: usize,
    atoms: usize,
    len: usize,
    batch: usize,
    schedule: Schedule,
    seed: u64,
) -> Result<PlantedData> {
    gen_dictionary_process_with(n, atoms, len, batch, schedule, AtomPool::default(), seed)
}

pub fn gen_dictionary_process_with(
    n: usize,
    atoms: usize,
    len: usize,
    batch: usize,
    schedule: Schedule,
    pool: AtomPool,
    seed: u64,
) -> Result<PlantedData> {
    if n == 0 || len == 0 || batch == 0 {
        return Err(Error::InvalidInput("n, T and B must be positive".into()));
    }
    if n >= atoms {
        return Err(Error::InvalidInput(format!(
            "dictionary must be overcomplete (n = {n}, N = {atoms})"
        )));
    }
    if let Some(t) = (0..len).find(|&t| schedule.k(t) > atoms) {
        return Err(Error::InvalidInput(format!(
            "k({t}) = {} exceeds N = {atoms}",
            schedule.k(t)
        )));
    }
    let dictionary = random_unit_columns(n, atoms, &mut rng_for(seed, 0));
    let k_max = (0..len).map(|t| schedule.k(t)).max().unwrap_or(0);

    let per_seq: Vec<(Mat, Mat, Vec<f64>)> = (0..batch)
        .into_par_iter()
        .map(|b| {
            let mut rng = rng_for(seed, 1 + b as u64);
            let mut codes = Mat::zeros(len, atoms);
            for t in 0..len {
                let k = schedule.k(t);
                for j in sample(&mut rng, pool.size(atoms, k, k_max), k) {
                    codes[(t, j)] = rng.random_range(COEFF_RANGE.0..COEFF_RANGE.1);
                }
            }
            let mut x = &codes * dictionary.transpose();
            let mut norms = Vec::with_capacity(len);
            for mut row in x.row_iter_mut() {
                let norm = row.norm();
                if norm > 0.0 {
                    row /= norm;
                }
                norms.push(norm);
            }
            (x, codes, norms)
        })
        .collect();

    let mut seqs = Vec::with_capacity(batch);
    let mut codes = Vec::with_capacity(batch);
    let mut row_norms = Vec::with_capacity(batch);
    for (x, c, r) in per_seq {
        seqs.push(x);
        codes.push(c);
        row_norms.push(r);
    }
    let mut set = ActivationSet::new(seqs, n)?;
    set.source = Some(format!("planted:n={n},N={atoms},seed={seed}"));
    Ok(PlantedData {
        set,
        process: PlantedProcess {
            coherence: coherence(&dictionary),
            dictionary,
            schedule,
            pool,
            seed,
        },
        codes,
        row_norms,
    })
}

/// Components that sum to every generated row of [`gen_event_sequences`].
#[derive(Debug, Clone)]
pub struct EventTruth {
    /// Per sequence, the event vector `s_e` repeated over the event's span.
    pub slow: Vec<Mat>,
    /// Per sequence, sparse innovations (without noise).
    pub fast: Vec<Mat>,
    pub noise: Vec<Mat>,
    /// `n × slow_dim` orthonormal basis of the slow subspace.
    pub slow_basis: Mat,
    /// `n × fast_atoms` unit atoms used by the innovations.
    pub fast_dictionary: Mat,
}

#[derive(Debug, Clone)]
pub struct EventData {
    pub set: ActivationSet,
    pub truth: EventTruth,
}

/// Magnitude of each event vector.
pub const SLOW_NORM: f64 = 1.0;
/// Innovation coefficients are `±FAST_SCALE · U[0.5, 1.5]`.
pub const FAST_SCALE: f64 = 0.5;

/// Contiguous spans tiling `[0, len)` with random interior boundaries.
fn random_spans<R: Rng>(len: usize, count: usize, rng: &mut R) -> Vec<(usize, usize)> {
    let mut cuts: Vec<usize> = sample(rng, len - 1, count - 1).into_iter().map(|c| c + 1).collect();
    cuts.sort_unstable();
    let mut bounds = vec![0];
    bounds.extend(cuts);
    bounds.push(len);
    bounds.windows(2).map(|w| (w[0], w[1])).collect()
}

/// `x_t = s_e + f_t + ε_t`: a fixed vector per event drawn from a shared
/// `slow_dim`-dimensional subspace, a fresh `fast_k`-sparse innovation and
/// isotropic noise with standard deviation `noise`.
#[allow(clippy::too_many_arguments)]
pub fn gen_event_sequences(
    n: usize,
    len: usize,
    batch: usize,
    n_events: usize,
    slow_dim: usize,
    fast_k: usize,
    noise: f64,
    seed: u64,
) -> Result<EventData> {
    if n == 0 || len == 0 || batch == 0 {
        return Err(Error::InvalidInput("n, T and B must be positive".into()));
    }
    if n_events == 0 || n_events > len {
        return Err(Error::InvalidInput(format!("n_events must be in 1..={len}")));
    }
    if slow_dim == 0 || slow_dim > n {
        return Err(Error::InvalidInput(format!("slow_dim must be in 1..={n}")));
    }
    let fast_atoms = 2 * n;
    if fast_k > fast_atoms {
        return Err(Error::InvalidInput(format!("fast_k must be at most {fast_atoms}")));
    }
    let mut shared = rng_for(seed, 0);
    let slow_basis = gaussian_matrix(n, slow_dim, 1.0, &mut shared).qr().q();
    let fast_dictionary = random_unit_columns(n, fast_atoms, &mut shared);

    type Parts = (Mat, Mat, Mat, Mat, SequenceMeta);
    let parts: Vec<Parts> = (0..batch)
        .into_par_iter()
        .map(|b| {
            let mut rng = rng_for(seed, 1 + b as u64);
            let spans = random_spans(len, n_events, &mut rng);
            let mut slow = Mat::zeros(len, n);
            for &(start, end) in &spans {
                let c = gaussian_matrix(slow_dim, 1, 1.0, &mut rng);
                let s = &slow_basis * c.normalize() * SLOW_NORM;
                for t in start..end {
                    slow.row_mut(t).copy_from(&s.transpose());
                }
            }
            let mut fast = Mat::zeros(len, n);
            for t in 0..len {
                for j in sample(&mut rng, fast_atoms, fast_k) {
                    let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                    let mag = FAST_SCALE * rng.random_range(0.5..1.5);
                    let atom = fast_dictionary.column(j).transpose();
                    let mut row = fast.row_mut(t);
                    row += atom * (sign * mag);
                }
            }
            let eps = Mat::from_fn(len, n, |_, _| noise * rng.sample::<f64, _>(StandardNormal));
            let x = &slow + &fast + &eps;
            let meta = SequenceMeta {
                tokens: None,
                events: Some(
                    spans
                        .iter()
                        .enumerate()
                        .map(|(e, &(s, t))| EventSpan::new(s, t, format!("event{e}")))
                        .collect(),
                ),
                source: format!("events:seq{b}"),
            };
            (x, slow, fast, eps, meta)
        })
        .collect();

    let mut seqs = Vec::with_capacity(batch);
    let mut meta = Vec::with_capacity(batch);
    let mut slow = Vec::with_capacity(batch);
    let mut fast = Vec::with_capacity(batch);
    let mut noise_parts = Vec::with_capacity(batch);
    for (x, s, f, e, m) in parts {
        seqs.push(x);
        slow.push(s);
        fast.push(f);
        noise_parts.push(e);
        meta.push(m);
    }
    let mut set = ActivationSet::with_meta(seqs, n, meta)?;
    set.source = Some(format!("events:n={n},seed={seed}"));
    Ok(EventData {
        set,
        truth: EventTruth {
            slow,
            fast,
            noise: noise_parts,
            slow_basis,
            fast_dictionary,
        },
    })
}

/// One sequence of points `(cos θ_i, sin θ_i, 0, …)` at `θ_i = 2πi / n_points`,
/// plus optional Gaussian noise.
pub fn gen_manifold_circle(n_points: usize, ambient_dim: usize, noise: f64, seed: u64) -> Result<ActivationSet> {
    if ambient_dim < 2 {
        return Err(Error::InvalidInput("ambient_dim must be at least 2".into()));
    }
    if n_points == 0 {
        return Err(Error::InvalidInput("n_points must be positive".into()));
    }
    let mut rng = rng_for(seed, 0);
    let mut x = Mat::zeros(n_points, ambient_dim);
    for i in 0..n_points {
        let theta = TAU * i as f64 / n_points as f64;
        x[(i, 0)] = theta.cos();
        x[(i, 1)] = theta.sin();
    }
    if noise > 0.0 {
        x += Mat::from_fn(n_points, ambient_dim, |_, _| noise * rng.sample::<f64, _>(StandardNormal));
    }
    let mut set = ActivationSet::new(vec![x], ambient_dim)?;
    set.source = Some(format!("circle:n={n_points}"));
    Ok(set)
}
