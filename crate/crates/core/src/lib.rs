// SPDX-License-Identifier: MIT OR Apache-2.0

//! Sparse autoencoders and temporal feature analysis over sequences of
//! model activations, plus the diagnostics used to study their temporal
//! structure (intrinsic dimension, non-stationarity, slow/fast splits,
//! event structure, support switching).
//!
//! Module map:
//!
//! - [`activation_store`]: the `TFA1` container, normalization, surrogates, batching
//! - [`datagen`]: synthetic sets with planted ground truth
//! - [`sae`]: ReLU / TopK / BatchTopK sparse autoencoders with analytic gradients
//! - [`temporal`]: the temporal feature analyzer (predictive + novel codes)
//! - [`trainer`]: Adam with warmup, checkpoints, competition-phase summaries
//! - [`metrics`]: U-statistic, autocorrelation, CKA, Fourier split, clustering inputs
//! - [`analysis`]: event, noise, clustering, garden-path and dictionary-split pipelines
//!
//! Data-parallel loops go through [`par`], which is rayon when the
//! `parallel` feature is on and plain iterators otherwise.

pub mod activation_store;
pub mod analysis;
pub mod checkpoint;
pub mod codes_io;
pub mod datagen;
mod error;
pub mod linalg;
pub mod metrics;
pub mod par;
pub mod sae;
pub mod sparsity;
pub mod temporal;
pub mod trainer;

pub use activation_store::{ActivationSet, EventSpan, SequenceMeta};
pub use error::{Error, Result};
pub use sae::{DictionaryModel, SaeKind, SparseCode};
pub use temporal::{NovelKind, TemporalCodes, TemporalModel};
