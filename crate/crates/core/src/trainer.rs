// SPDX-License-Identifier: MIT OR Apache-2.0

//! Seeded training loop: Adam, linear warmup then linear decay, decoder
//! renormalization after every step, and per-step logs for studying how the
//! predictive and novel components compete.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::activation_store::{batch_iter, Batch, BatchMode};
use crate::checkpoint::{Checkpoint, Model, OptimizerState};
use crate::linalg::{column_means, vstack, Mat};
use crate::sae::{DictionaryModel, SaeKind};
use crate::temporal::{NovelKind, TemporalModel, TemporalShape, ValueMode};
use crate::{ActivationSet, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "relu")]
    Relu,
    #[serde(rename = "topk")]
    TopK,
    #[serde(rename = "batchtopk")]
    BatchTopK,
    #[serde(rename = "temporal")]
    Temporal,
    #[serde(rename = "temporal-pred-only")]
    TemporalPredOnly,
}

impl ModelKind {
    pub fn is_temporal(self) -> bool {
        matches!(self, ModelKind::Temporal | ModelKind::TemporalPredOnly)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Relu => "relu",
            ModelKind::TopK => "topk",
            ModelKind::BatchTopK => "batchtopk",
            ModelKind::Temporal => "temporal",
            ModelKind::TemporalPredOnly => "temporal-pred-only",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "relu" => ModelKind::Relu,
            "topk" => ModelKind::TopK,
            "batchtopk" => ModelKind::BatchTopK,
            "temporal" => ModelKind::Temporal,
            "temporal-pred-only" => ModelKind::TemporalPredOnly,
            other => return Err(Error::InvalidInput(format!("unknown model kind {other:?}"))),
        })
    }
}

/// Architecture and sparsity hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSpec {
    pub kind: ModelKind,
    /// Dictionary size `M`.
    pub width: usize,
    /// TopK / BatchTopK budget (novel budget for temporal models).
    pub k: usize,
    /// L1 weight for ReLU codes.
    pub lambda: f64,
    pub d_attn: usize,
    pub novel_kind: NovelKind,
    pub value_mode: ValueMode,
    pub split_dictionary: bool,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            kind: ModelKind::BatchTopK,
            width: 64,
            k: 8,
            lambda: 1e-3,
            d_attn: 64,
            novel_kind: NovelKind::BatchTopK,
            value_mode: ValueMode::Identity,
            split_dictionary: false,
        }
    }
}

impl ModelSpec {
    /// Fresh model for data with the given dimension and column means.
    pub fn build(&self, n: usize, data_mean: Option<&crate::linalg::Vector>, seed: u64) -> Result<Model> {
        if self.width == 0 {
            return Err(Error::InvalidInput("width must be positive".into()));
        }
        Ok(match self.kind {
            ModelKind::Relu | ModelKind::TopK | ModelKind::BatchTopK => {
                let kind = match self.kind {
                    ModelKind::Relu => SaeKind::Relu,
                    ModelKind::TopK => SaeKind::TopK,
                    _ => SaeKind::BatchTopK,
                };
                Model::Sae(DictionaryModel::init(kind, n, self.width, self.k, self.lambda, data_mean, seed))
            }
            ModelKind::Temporal | ModelKind::TemporalPredOnly => {
                let shape = TemporalShape {
                    n,
                    m: self.width,
                    d_attn: self.d_attn.min(self.width),
                    k_novel: self.k,
                    novel_kind: self.novel_kind,
                    value_mode: self.value_mode,
                    split_dictionary: self.split_dictionary,
                    pred_only: self.kind == ModelKind::TemporalPredOnly,
                    lambda: self.lambda,
                };
                Model::Temporal(TemporalModel::init(&shape, data_mean, seed)?)
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub steps: usize,
    /// Tokens per batch; temporal models get whole sequences up to this budget.
    pub batch_tokens: usize,
    pub lr_peak: f64,
    pub lr_min: f64,
    pub warmup_steps: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
    /// Global gradient-norm clip, off when `None`.
    pub grad_clip: Option<f64>,
    /// Write a checkpoint every this many steps (0 = only at the end).
    pub checkpoint_every: usize,
    pub model: ModelSpec,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 1000,
            batch_tokens: 512,
            lr_peak: 1e-3,
            lr_min: 9e-4,
            warmup_steps: 200,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
            grad_clip: None,
            checkpoint_every: 0,
            model: ModelSpec::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.warmup_steps > self.steps {
            return Err(Error::InvalidInput(format!(
                "warmup_steps {} exceeds steps {}",
                self.warmup_steps, self.steps
            )));
        }
        if self.lr_min > self.lr_peak {
            return Err(Error::InvalidInput("lr_min exceeds lr_peak".into()));
        }
        if self.batch_tokens == 0 {
            return Err(Error::InvalidInput("batch_tokens must be positive".into()));
        }
        Ok(())
    }

    pub fn batch_mode(&self) -> BatchMode {
        if self.model.kind.is_temporal() {
            BatchMode::Sequence
        } else {
            BatchMode::Token
        }
    }
}

/// Learning rate at `step`: linear 0 → peak over the warmup, then linear
/// down to `lr_min` at the final step.
pub fn lr_at(config: &TrainConfig, step: usize) -> f64 {
    let warm = config.warmup_steps;
    if step < warm {
        return config.lr_peak * step as f64 / warm as f64;
    }
    if config.steps <= warm {
        return config.lr_peak;
    }
    let frac = ((step - warm) as f64 / (config.steps - warm) as f64).min(1.0);
    config.lr_peak + (config.lr_min - config.lr_peak) * frac
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub step: usize,
    pub loss: f64,
    pub nmse: f64,
    pub pred_nmse: Option<f64>,
    pub novel_nmse: Option<f64>,
    pub l0: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub records: Vec<LogRecord>,
}

impl TrainLog {
    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "step,loss,nmse,pred_nmse,novel_nmse,l0,lr")?;
        let opt = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
        for r in &self.records {
            writeln!(
                w,
                "{},{:e},{:e},{},{},{},{:e}",
                r.step,
                r.loss,
                r.nmse,
                opt(r.pred_nmse),
                opt(r.novel_nmse),
                r.l0,
                r.lr
            )?;
        }
        Ok(())
    }

    pub fn last(&self) -> Option<&LogRecord> {
        self.records.last()
    }
}

/// Adam over flat parameter slices.
#[derive(Debug, Clone)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub state: OptimizerState,
}

impl Adam {
    pub fn new(config: &TrainConfig, shapes: &[usize]) -> Self {
        Self {
            beta1: config.beta1,
            beta2: config.beta2,
            eps: config.eps,
            state: OptimizerState {
                t: 0,
                m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
                v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            },
        }
    }

    pub fn step(&mut self, params: Vec<&mut [f64]>, grads: &[&[f64]], lr: f64) {
        self.state.t += 1;
        let t = self.state.t as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (i, p) in params.into_iter().enumerate() {
            let g = grads[i];
            let (m, v) = (&mut self.state.m[i], &mut self.state.v[i]);
            for j in 0..p.len() {
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g[j];
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g[j] * g[j];
                let m_hat = m[j] / c1;
                let v_hat = v[j] / c2;
                p[j] -= lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}

/// Stats and flattened gradients of one batch.
pub struct StepResult {
    pub record: LogRecord,
    pub grads: Vec<Vec<f64>>,
}

fn compute_step(model: &Model, batch: &Batch) -> Result<StepResult> {
    match model {
        Model::Sae(sae) => {
            let x = match batch {
                Batch::Tokens(m) => m.clone(),
                Batch::Sequences(s) => vstack(&s.iter().collect::<Vec<&Mat>>()),
            };
            let (loss, mut grads) = sae.backward(&x)?;
            sae.project_decoder_gradient(&mut grads);
            Ok(StepResult {
                record: LogRecord {
                    step: 0,
                    loss: loss.total,
                    nmse: loss.nmse,
                    pred_nmse: None,
                    novel_nmse: None,
                    l0: loss.mean_l0,
                    lr: 0.0,
                },
                grads: grads.slices().iter().map(|s| s.to_vec()).collect(),
            })
        }
        Model::Temporal(tfa) => {
            let Batch::Sequences(seqs) = batch else {
                return Err(Error::InvalidInput("temporal models train on whole sequences".into()));
            };
            let (loss, mut grads) = tfa.backward_batch(seqs)?;
            tfa.project_decoder_gradient(&mut grads);
            Ok(StepResult {
                record: LogRecord {
                    step: 0,
                    loss: loss.total,
                    nmse: loss.nmse,
                    pred_nmse: Some(loss.pred_nmse),
                    novel_nmse: Some(loss.novel_nmse),
                    l0: loss.mean_l0,
                    lr: 0.0,
                },
                grads: grads.slices().iter().map(|s| s.to_vec()).collect(),
            })
        }
    }
}

fn renormalize(model: &mut Model) {
    match model {
        Model::Sae(m) => m.renormalize_decoder(),
        Model::Temporal(t) => t.renormalize_decoder(),
    }
}

fn clip(grads: &mut [Vec<f64>], max_norm: f64) {
    let norm = grads.iter().flatten().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        grads.iter_mut().flatten().for_each(|g| *g *= s);
    }
}

/// Resumable training state.
pub struct Trainer {
    pub model: Model,
    pub optimizer: Adam,
    pub step: usize,
    pub config: TrainConfig,
    pub log: TrainLog,
    pub norm_scale: Option<f64>,
}

impl Trainer {
    /// Builds a fresh model from `config.model` with `b_dec` at the data mean.
    pub fn new(set: &ActivationSet, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        if set.total_tokens() == 0 {
            return Err(Error::InvalidInput("training set has no tokens".into()));
        }
        let mean = column_means(&set.stacked());
        let model = config.model.build(set.dim(), Some(&mean), config.seed)?;
        Self::with_model(model, config, set.norm_scale())
    }

    pub fn with_model(model: Model, config: TrainConfig, norm_scale: Option<f64>) -> Result<Self> {
        config.validate()?;
        let shapes: Vec<usize> = model.param_slices().iter().map(|s| s.len()).collect();
        Ok(Self {
            optimizer: Adam::new(&config, &shapes),
            model,
            step: 0,
            config,
            log: TrainLog::default(),
            norm_scale,
        })
    }

    pub fn resume(checkpoint: Checkpoint, config: TrainConfig) -> Result<Self> {
        let mut trainer = Self::with_model(checkpoint.model, config, checkpoint.norm_scale)?;
        trainer.step = checkpoint.step;
        if let Some(state) = checkpoint.optimizer {
            if state.m.len() != trainer.optimizer.state.m.len() {
                return Err(Error::InvalidInput("optimizer state does not match model".into()));
            }
            trainer.optimizer.state = state;
        }
        Ok(trainer)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            model: self.model.clone(),
            step: self.step,
            optimizer: Some(self.optimizer.state.clone()),
            norm_scale: self.norm_scale,
            extra: serde_json::to_value(&self.config).unwrap_or_default(),
        }
    }

    /// Trains until `config.steps`, calling `on_checkpoint` at the configured
    /// cadence and once at the end.
    pub fn run(&mut self, set: &ActivationSet, mut on_checkpoint: impl FnMut(&Trainer) -> Result<()>) -> Result<()> {
        let mut batches = batch_iter(set, self.config.batch_tokens, self.config.seed, self.config.batch_mode())?;
        batches.skip_batches(self.step);
        while self.step < self.config.steps {
            let batch = batches
                .next()
                .ok_or_else(|| Error::InvalidInput("training set has no tokens".into()))?;
            let mut result = compute_step(&self.model, &batch)?;
            let lr = lr_at(&self.config, self.step + 1);
            if !result.record.loss.is_finite() || result.grads.iter().flatten().any(|g| !g.is_finite()) {
                return Err(Error::NonFinite {
                    step: self.step + 1,
                    detail: format!("loss {} (lr {lr:e}, kind {})", result.record.loss, self.model.kind_name()),
                });
            }
            if let Some(max) = self.config.grad_clip {
                clip(&mut result.grads, max);
            }
            let grads: Vec<&[f64]> = result.grads.iter().map(|g| g.as_slice()).collect();
            self.optimizer.step(self.model.param_slices_mut(), &grads, lr);
            renormalize(&mut self.model);
            self.step += 1;
            result.record.step = self.step;
            result.record.lr = lr;
            self.log.records.push(result.record);
            let every = self.config.checkpoint_every;
            if every > 0 && self.step.is_multiple_of(every) && self.step < self.config.steps {
                on_checkpoint(self)?;
            }
        }
        on_checkpoint(self)
    }
}

/// Trains a fresh model from `config` on `set`.
pub fn train(set: &ActivationSet, config: &TrainConfig) -> Result<(Model, TrainLog)> {
    let mut trainer = Trainer::new(set, config.clone())?;
    trainer.run(set, |_| Ok(()))?;
    Ok((trainer.model, trainer.log))
}

/// Continues training an existing model (fresh optimizer state).
pub fn train_model(model: Model, set: &ActivationSet, config: &TrainConfig) -> Result<(Model, TrainLog)> {
    let mut trainer = Trainer::with_model(model, config.clone(), set.norm_scale())?;
    trainer.run(set, |_| Ok(()))?;
    Ok((trainer.model, trainer.log))
}

pub fn save_checkpoint_to(trainer: &Trainer, path: &Path) -> Result<()> {
    trainer.checkpoint().save(path)
}

/// Summary of the predictive/novel competition over a temporal run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseSummary {
    /// First step where predictive NMSE drops below novel NMSE.
    pub crossover_step: Option<usize>,
    /// Predictive NMSE rose more than 20% above its running minimum after
    /// the crossover.
    pub takeover: bool,
    pub takeover_step: Option<usize>,
    pub min_pred_nmse: f64,
    pub final_pred_nmse: f64,
    pub final_novel_nmse: f64,
    pub smoothing_window: usize,
}

/// Relative rise over the running minimum counted as a late takeover.
pub const TAKEOVER_RISE: f64 = 0.2;

fn trailing_mean(values: &[f64], window: usize) -> Vec<f64> {
    let w = window.max(1);
    (0..values.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(w);
            values[lo..=i].iter().sum::<f64>() / (i + 1 - lo) as f64
        })
        .collect()
}

/// Crossover and takeover detection on a (optionally smoothed) log.
pub fn competition_phases(log: &TrainLog, smoothing_window: usize) -> Result<PhaseSummary> {
    let mut pred = Vec::with_capacity(log.records.len());
    let mut novel = Vec::with_capacity(log.records.len());
    for r in &log.records {
        match (r.pred_nmse, r.novel_nmse) {
            (Some(p), Some(n)) => {
                pred.push(p);
                novel.push(n);
            }
            _ => return Err(Error::InvalidInput("log has no predictive/novel NMSE (not a temporal run)".into())),
        }
    }
    if pred.is_empty() {
        return Err(Error::InvalidInput("empty log".into()));
    }
    let pred_s = trailing_mean(&pred, smoothing_window);
    let novel_s = trailing_mean(&novel, smoothing_window);
    let cross = (0..pred_s.len()).find(|&i| pred_s[i] < novel_s[i]);
    let mut takeover_at = None;
    if let Some(c) = cross {
        let mut running_min = f64::INFINITY;
        for (i, &p) in pred_s.iter().enumerate().skip(c) {
            running_min = running_min.min(p);
            if p > running_min * (1.0 + TAKEOVER_RISE) {
                takeover_at = Some(i);
                break;
            }
        }
    }
    Ok(PhaseSummary {
        crossover_step: cross.map(|i| log.records[i].step),
        takeover: takeover_at.is_some(),
        takeover_step: takeover_at.map(|i| log.records[i].step),
        min_pred_nmse: pred.iter().cloned().fold(f64::INFINITY, f64::min),
        final_pred_nmse: *pred.last().unwrap(),
        final_novel_nmse: *novel.last().unwrap(),
        smoothing_window: smoothing_window.max(1),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{gaussian_matrix, rng_for};

    fn small_set(seed: u64) -> ActivationSet {
        let mut rng = rng_for(seed, 0);
        ActivationSet::new((0..4).map(|_| gaussian_matrix(12, 6, 1.0, &mut rng)).collect(), 6).unwrap()
    }

    #[test]
    fn schedule_endpoints() {
        let cfg = TrainConfig {
            steps: 1000,
            ..Default::default()
        };
        assert_eq!(lr_at(&cfg, 0), 0.0);
        assert_eq!(lr_at(&cfg, 200), 1e-3);
        assert!((lr_at(&cfg, 1000) - 9e-4).abs() < 1e-18);
        assert!((lr_at(&cfg, 100) - 5e-4).abs() < 1e-18);
        assert!((lr_at(&cfg, 600) - 9.5e-4).abs() < 1e-15);
    }

    #[test]
    fn config_invariants() {
        let mut cfg = TrainConfig {
            steps: 10,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        cfg.warmup_steps = 5;
        cfg.lr_min = 1.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn zero_steps_leaves_model_unchanged() {
        let set = small_set(1);
        let cfg = TrainConfig {
            steps: 0,
            warmup_steps: 0,
            ..Default::default()
        };
        let fresh = cfg.model.build(6, Some(&column_means(&set.stacked())), cfg.seed).unwrap();
        let (model, log) = train(&set, &cfg).unwrap();
        assert_eq!(model, fresh);
        assert!(log.records.is_empty());
    }

    #[test]
    fn training_is_seed_deterministic_and_keeps_unit_columns() {
        let set = small_set(2);
        for kind in [ModelKind::Relu, ModelKind::TopK, ModelKind::BatchTopK, ModelKind::Temporal] {
            let cfg = TrainConfig {
                steps: 30,
                warmup_steps: 5,
                batch_tokens: 16,
                seed: 7,
                model: ModelSpec {
                    kind,
                    width: 12,
                    k: 2,
                    d_attn: 4,
                    ..Default::default()
                },
                ..Default::default()
            };
            let mut trainer = Trainer::new(&set, cfg.clone()).unwrap();
            let mut worst: f64 = 0.0;
            while trainer.step < cfg.steps {
                trainer.config.steps = trainer.step + 1;
                trainer.run(&set, |_| Ok(())).unwrap();
                worst = worst.max(trainer.model.max_column_norm_error());
            }
            assert!(worst < 1e-9, "{kind:?}: column norm drift {worst}");
            let (a, _) = train(&set, &cfg).unwrap();
            let (b, _) = train(&set, &cfg).unwrap();
            assert_eq!(a, b);
            assert_eq!(trainer.log.records.len(), 30);
            assert!(trainer.log.records.windows(2).all(|w| w[1].step == w[0].step + 1));
        }
    }

    #[test]
    fn resume_matches_uninterrupted() {
        let set = small_set(3);
        let cfg = TrainConfig {
            steps: 40,
            warmup_steps: 10,
            batch_tokens: 20,
            seed: 5,
            checkpoint_every: 15,
            model: ModelSpec {
                kind: ModelKind::Temporal,
                width: 12,
                k: 2,
                d_attn: 4,
                value_mode: ValueMode::Learned,
                ..Default::default()
            },
            ..Default::default()
        };
        let mut saved = Vec::new();
        let mut full = Trainer::new(&set, cfg.clone()).unwrap();
        full.run(&set, |t| {
            saved.push(t.checkpoint());
            Ok(())
        })
        .unwrap();
        assert_eq!(saved[0].step, 15);
        let bytes = saved[0].to_bytes();
        let mut resumed = Trainer::resume(Checkpoint::from_bytes(&bytes).unwrap(), cfg).unwrap();
        resumed.run(&set, |_| Ok(())).unwrap();
        assert_eq!(resumed.model, full.model);
        assert_eq!(resumed.log.records, full.log.records[15..]);
    }

    fn log_from(pred: &[f64], novel: &[f64]) -> TrainLog {
        TrainLog {
            records: pred
                .iter()
                .zip(novel)
                .enumerate()
                .map(|(i, (&p, &n))| LogRecord {
                    step: i + 1,
                    loss: p.min(n),
                    nmse: 0.1,
                    pred_nmse: Some(p),
                    novel_nmse: Some(n),
                    l0: 1.0,
                    lr: 1e-3,
                })
                .collect(),
        }
    }

    #[test]
    fn monotone_improvement_has_no_takeover() {
        let pred: Vec<f64> = (0..50).map(|i| 2.0 / (1.0 + i as f64)).collect();
        let novel = vec![0.5; 50];
        let s = competition_phases(&log_from(&pred, &novel), 1).unwrap();
        assert!(!s.takeover);
        assert_eq!(s.crossover_step, Some(5));
    }

    #[test]
    fn forced_recrossing_is_a_takeover() {
        let mut pred: Vec<f64> = (0..30).map(|i| 2.0 - 0.06 * i as f64).collect();
        pred.extend((0..20).map(|i| 0.26 + 0.1 * i as f64));
        let novel = vec![1.0; 50];
        let s = competition_phases(&log_from(&pred, &novel), 1).unwrap();
        assert!(s.takeover);
        assert!(s.takeover_step.unwrap() > s.crossover_step.unwrap());
    }

    #[test]
    fn crossover_matches_linear_scan() {
        let mut rng = rng_for(4, 0);
        for _ in 0..50 {
            let pred: Vec<f64> = (0..40).map(|_| rand::Rng::random::<f64>(&mut rng)).collect();
            let novel: Vec<f64> = (0..40).map(|_| rand::Rng::random::<f64>(&mut rng)).collect();
            let mut expect = None;
            for i in 0..40 {
                if pred[i] < novel[i] {
                    expect = Some(i + 1);
                    break;
                }
            }
            let s = competition_phases(&log_from(&pred, &novel), 1).unwrap();
            assert_eq!(s.crossover_step, expect);
        }
    }

    #[test]
    fn sae_log_is_not_temporal() {
        let set = small_set(5);
        let cfg = TrainConfig {
            steps: 3,
            warmup_steps: 1,
            batch_tokens: 8,
            ..Default::default()
        };
        let (_, log) = train(&set, &cfg).unwrap();
        assert!(competition_phases(&log, 1).is_err());
        let mut csv = Vec::new();
        log.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("step,loss,nmse,pred_nmse,novel_nmse,l0,lr\n1,"));
    }
}
