// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::Path;

use serde::{Deserialize, Serialize};
use tfa_core::activation_store::save_activations;
use tfa_core::datagen::{gen_dictionary_process_with, gen_event_sequences, gen_manifold_circle, AtomPool, Schedule};
use tfa_core::metrics::heatmap::Palette;
use tfa_core::ActivationSet;

use crate::config;
use crate::failure::Outcome;
use crate::io::write_matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SynthKind {
    /// Sparse combinations of a planted dictionary.
    Planted,
    /// Slow per-event vectors plus sparse fast innovations.
    Events,
    /// Equally spaced points on the unit circle.
    Circle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub kind: SynthKind,
    pub seed: u64,
    /// Ambient dimension `n`.
    pub dim: usize,
    /// Sequence length `T`.
    pub len: usize,
    /// Number of sequences `B`.
    pub sequences: usize,
    /// Planted dictionary size `N`.
    pub atoms: usize,
    pub schedule: Schedule,
    pub pool: AtomPool,
    pub events: usize,
    pub slow_dim: usize,
    pub fast_k: usize,
    /// Circle point count.
    pub points: usize,
    /// Noise standard deviation; `events` defaults to 0.05, others to 0.
    pub noise: Option<f64>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            kind: SynthKind::Planted,
            seed: 0,
            dim: 16,
            len: 64,
            sequences: 64,
            atoms: 32,
            schedule: Schedule::Constant(3),
            pool: AtomPool::Proportional,
            events: 4,
            slow_dim: 4,
            fast_k: 2,
            points: 512,
            noise: None,
        }
    }
}

#[derive(Debug, Clone, Default, clap::Args)]
pub struct SynthArgs {
    #[arg(long, value_enum)]
    pub kind: Option<SynthKind>,
    /// Points (circle) or sequences (planted, events).
    #[arg(long)]
    pub n: Option<usize>,
    /// Constant number of active atoms (planted).
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub len: Option<usize>,
}

pub fn resolve(file: Option<&Path>, seed: Option<u64>, args: &SynthArgs) -> Outcome<SynthConfig> {
    let mut cfg: SynthConfig = config::load(file)?;
    config::merge(args.kind, &mut cfg.kind);
    config::merge(seed, &mut cfg.seed);
    config::merge(args.dim, &mut cfg.dim);
    config::merge(args.len, &mut cfg.len);
    if let Some(n) = args.n {
        match cfg.kind {
            SynthKind::Circle => cfg.points = n,
            _ => cfg.sequences = n,
        }
    }
    if let Some(k) = args.k {
        cfg.schedule = Schedule::Constant(k);
    }
    if cfg.noise.is_none() {
        cfg.noise = Some(if cfg.kind == SynthKind::Events { 0.05 } else { 0.0 });
    }
    Ok(cfg)
}

pub fn run(cfg: &SynthConfig, out: &Path) -> Outcome<()> {
    let noise = cfg.noise.unwrap_or(0.0);
    let set: ActivationSet = match cfg.kind {
        SynthKind::Planted => {
            let data = gen_dictionary_process_with(cfg.dim, cfg.atoms, cfg.len, cfg.sequences, cfg.schedule.clone(), cfg.pool, cfg.seed)?;
            write_matrix(out, "dictionary", &data.process.dictionary, Palette::Diverging, false)?;
            data.set
        }
        SynthKind::Events => {
            let data = gen_event_sequences(cfg.dim, cfg.len, cfg.sequences, cfg.events, cfg.slow_dim, cfg.fast_k, noise, cfg.seed)?;
            let slow = ActivationSet::new(data.truth.slow.clone(), cfg.dim)?;
            let fast = ActivationSet::new(data.truth.fast.clone(), cfg.dim)?;
            save_activations(&slow, out.join("truth_slow.tfa1"))?;
            save_activations(&fast, out.join("truth_fast.tfa1"))?;
            data.set
        }
        SynthKind::Circle => gen_manifold_circle(cfg.points, cfg.dim.max(2), noise, cfg.seed)?,
    };
    save_activations(&set, out.join("activations.tfa1"))?;
    Ok(())
}
