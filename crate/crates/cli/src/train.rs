// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tfa_core::activation_store::{apply_norm_scale, normalize_unit_expected_norm};
use tfa_core::temporal::{NovelKind, ValueMode};
use tfa_core::trainer::{competition_phases, ModelKind, PhaseSummary, TrainConfig, Trainer};

use crate::config;
use crate::failure::{Classify, Outcome};
use crate::io::{create, load_checkpoint, load_input, write_json};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainFile {
    pub input: Option<PathBuf>,
    pub layer: Option<i64>,
    /// Rescale inputs to unit mean row norm before training.
    pub normalize: bool,
    pub train: TrainConfig,
}

impl Default for TrainFile {
    fn default() -> Self {
        Self {
            input: None,
            layer: None,
            normalize: true,
            train: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Default, clap::Args)]
pub struct TrainArgs {
    /// relu | topk | batchtopk | temporal | temporal-pred-only
    #[arg(long)]
    pub kind: Option<String>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long = "d-attn")]
    pub d_attn: Option<usize>,
    /// topk | batchtopk | relu
    #[arg(long = "novel-kind")]
    pub novel_kind: Option<String>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long = "batch-tokens")]
    pub batch_tokens: Option<usize>,
    /// Train a value projection instead of the identity.
    #[arg(long = "learned-values")]
    pub learned_values: bool,
    /// Continue from a checkpoint written by an earlier run with the same config.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

pub fn resolve(file: Option<&Path>, seed: Option<u64>, input: Option<PathBuf>, layer: Option<i64>, args: &TrainArgs) -> Outcome<TrainFile> {
    let mut cfg: TrainFile = config::load(file)?;
    config::merge(input.map(Some), &mut cfg.input);
    if layer.is_some() {
        cfg.layer = layer;
    }
    let t = &mut cfg.train;
    config::merge(seed, &mut t.seed);
    if let Some(kind) = &args.kind {
        t.model.kind = kind.parse::<ModelKind>().or_usage("--kind")?;
    }
    if let Some(kind) = &args.novel_kind {
        t.model.novel_kind = kind.parse::<NovelKind>().or_usage("--novel-kind")?;
    }
    config::merge(args.k, &mut t.model.k);
    config::merge(args.lambda, &mut t.model.lambda);
    config::merge(args.d_attn, &mut t.model.d_attn);
    config::merge(args.width, &mut t.model.width);
    config::merge(args.steps, &mut t.steps);
    config::merge(args.batch_tokens, &mut t.batch_tokens);
    if args.learned_values {
        t.model.value_mode = ValueMode::Learned;
    }
    if t.warmup_steps > t.steps {
        t.warmup_steps = t.steps;
    }
    t.validate()?;
    Ok(cfg)
}

#[derive(Debug, Serialize)]
struct TrainSummary {
    kind: String,
    steps: usize,
    resumed_from: Option<usize>,
    norm_scale: Option<f64>,
    loss: Option<f64>,
    nmse: Option<f64>,
    pred_nmse: Option<f64>,
    novel_nmse: Option<f64>,
    l0: Option<f64>,
    phases: Option<PhaseSummary>,
}

pub fn checkpoint_name(step: usize) -> String {
    format!("step-{step:07}.tfam")
}

pub fn run(cfg: &TrainFile, resume: Option<&Path>, out: &Path) -> Outcome<()> {
    let input = config::required(&cfg.input, "input")?;
    let raw = load_input(&input, cfg.layer)?;
    let (mut trainer, set) = match resume {
        Some(path) => {
            let ckpt = load_checkpoint(path)?;
            let set = match (ckpt.norm_scale, raw.norm_scale()) {
                (Some(scale), None) => apply_norm_scale(&raw, scale)?,
                _ => raw,
            };
            (Trainer::resume(ckpt, cfg.train.clone())?, set)
        }
        None => {
            let set = if cfg.normalize && raw.norm_scale().is_none() {
                normalize_unit_expected_norm(&raw)?.0
            } else {
                raw
            };
            (Trainer::new(&set, cfg.train.clone())?, set)
        }
    };
    let start = trainer.step;
    let ckpt_dir = out.join("checkpoints");
    let final_step = cfg.train.steps;
    if cfg.train.checkpoint_every > 0 {
        std::fs::create_dir_all(&ckpt_dir).or_usage(format!("creating {}", ckpt_dir.display()))?;
    }
    trainer.run(&set, |t| {
        if t.step < final_step {
            t.checkpoint().save(ckpt_dir.join(checkpoint_name(t.step)))?;
        }
        Ok(())
    })?;
    trainer.checkpoint().save(out.join("model.tfam"))?;

    let mut w = create(&out.join("log.csv"))?;
    trainer.log.write_csv(&mut w).or_usage("writing log.csv")?;
    drop(w);

    let last = trainer.log.last();
    let phases = if cfg.train.model.kind == ModelKind::Temporal && !trainer.log.records.is_empty() {
        Some(competition_phases(&trainer.log, 25.min(trainer.log.records.len()))?)
    } else {
        None
    };
    write_json(
        &out.join("summary.json"),
        &TrainSummary {
            kind: trainer.model.kind_name().to_string(),
            steps: trainer.step,
            resumed_from: resume.map(|_| start),
            norm_scale: trainer.norm_scale,
            loss: last.map(|r| r.loss),
            nmse: last.map(|r| r.nmse),
            pred_nmse: last.and_then(|r| r.pred_nmse),
            novel_nmse: last.and_then(|r| r.novel_nmse),
            l0: last.map(|r| r.l0),
            phases,
        },
    )
}
