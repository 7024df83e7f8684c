use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::optim::{clip_grad_norm, AdamW, AdamWConfig};
use super::schedule::Schedule;
use crate::datasets::make_batches;
use crate::error::{Error, Result};
use crate::model::{masked_cross_entropy_grad, save_checkpoint, ComposedSequence, LossStats, Model};
use crate::scalar::Scalar;
use crate::ssm::ScanMode;
use crate::tensor::Parameters;
use crate::tokens::PAD;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    /// Stop after this many optimizer steps even mid-epoch.
    pub max_steps: Option<usize>,
    pub seed: u64,
    /// Global-norm clipping threshold; `None` disables clipping.
    pub grad_clip: Option<f64>,
    pub schedule: Schedule,
    pub lr_peak: f64,
    pub warmup_steps: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Metrics-log interval in steps.
    pub log_every: usize,
    /// Validation interval in steps; 0 validates at the end of every epoch.
    pub eval_every: usize,
    /// Extra `step-N.ckpt` snapshots; 0 keeps only `best` and `last`.
    pub checkpoint_every: usize,
    /// Stop once validation token accuracy reaches this value.
    pub target_valid_acc: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamWConfig::default();
        Self {
            batch_size: 8,
            epochs: 1,
            max_steps: None,
            seed: 0,
            grad_clip: Some(1.0),
            schedule: Schedule::InverseSqrt,
            lr_peak: 0.006,
            warmup_steps: 5000,
            beta1: adam.beta1,
            beta2: adam.beta2,
            eps: adam.eps,
            weight_decay: adam.weight_decay,
            log_every: 1,
            eval_every: 0,
            checkpoint_every: 0,
            target_valid_acc: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::Config(msg.to_string()));
        if self.batch_size == 0 {
            return fail("batch_size must be at least 1");
        }
        if self.epochs == 0 {
            return fail("epochs must be at least 1");
        }
        if self.log_every == 0 {
            return fail("log_every must be at least 1");
        }
        if !(self.lr_peak > 0.0 && self.lr_peak.is_finite()) {
            return fail("lr_peak must be positive and finite");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return fail("betas must lie in [0, 1)");
        }
        if !(self.eps > 0.0) || !(self.weight_decay >= 0.0) {
            return fail("eps must be positive and weight_decay non-negative");
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0) {
                return fail("grad_clip must be positive");
            }
        }
        Ok(())
    }

    pub fn adamw(&self) -> AdamWConfig {
        AdamWConfig {
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
            weight_decay: self.weight_decay,
        }
    }
}

/// One line of `metrics.jsonl`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub step: usize,
    pub lr: f64,
    pub loss: f64,
    pub token_acc: f64,
}

/// One line of `valid.jsonl`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidMetrics {
    pub step: usize,
    pub epoch: usize,
    pub loss: f64,
    pub token_acc: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    /// Every optimizer step, regardless of `log_every`.
    pub steps: Vec<StepMetrics>,
    pub valid: Vec<ValidMetrics>,
    pub best: Option<ValidMetrics>,
    pub reached_target: bool,
}

impl TrainReport {
    pub fn losses(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.loss).collect()
    }
}

/// Where a training run writes logs and checkpoints.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub dir: PathBuf,
    /// Copied into every checkpoint header.
    pub meta: BTreeMap<String, String>,
}

/// Teacher-forced statistics of `model` over `seqs`, without embedding masking.
pub fn evaluate<T: Scalar>(model: &Model<T>, seqs: &[ComposedSequence]) -> Result<LossStats> {
    let mut total = LossStats::default();
    for seq in seqs {
        let logits = model.forward_sequence(seq)?;
        let (stats, _) = masked_cross_entropy_grad(&logits, model.vocab_size(), seq, T::zero())?;
        total.merge(&stats);
    }
    Ok(total)
}

/// Name of the first tensor holding a NaN or infinity.
pub fn first_non_finite<T: Scalar, P: Parameters<T>>(params: &P) -> Option<String> {
    params
        .named_tensors()
        .into_iter()
        .find(|(_, t)| t.data().iter().any(|x| !x.is_finite()))
        .map(|(name, _)| name)
}

pub struct Trainer<T> {
    pub model: Model<T>,
    pub optimizer: AdamW<T>,
    config: TrainConfig,
    grads: Model<T>,
    mask_rng: ChaCha8Rng,
    step: usize,
}

impl<T: Scalar> Trainer<T> {
    pub fn new(model: Model<T>, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let optimizer = AdamW::new(&model, config.adamw());
        let grads = model.zeros_like();
        let mask_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x6d61_736b);
        Ok(Self {
            model,
            optimizer,
            config,
            grads,
            mask_rng,
            step: 0,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    /// Optimizer steps taken so far.
    pub fn steps_taken(&self) -> usize {
        self.step
    }

    /// Gradient of the token-averaged loss over `batch`, then one AdamW update.
    pub fn train_step(&mut self, batch: &[ComposedSequence]) -> Result<StepMetrics> {
        if batch.is_empty() {
            return Err(Error::Domain("empty training batch".into()));
        }
        let total: usize = batch.iter().map(|s| s.num_targets()).sum();
        if total == 0 {
            return Err(Error::Domain("training batch has no scored positions".into()));
        }
        let step = self.step + 1;
        let scale = T::lit(1.0 / total as f64);
        let v = self.model.vocab_size();
        self.grads.zero_grad();
        let mut stats = LossStats::default();
        for seq in batch {
            let (logits, trace) =
                self.model
                    .forward_trace(seq, Some(&mut self.mask_rng), ScanMode::Sequential)?;
            let (s, dlogits) = masked_cross_entropy_grad(&logits, v, seq, scale)?;
            stats.merge(&s);
            self.model.backward(&trace, &dlogits, &mut self.grads);
        }
        let loss = stats.mean_loss();
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("training loss at step {step}")));
        }
        if let Some(name) = first_non_finite(&self.grads) {
            return Err(Error::NonFinite(format!("gradient of {name} at step {step}")));
        }
        clip_grad_norm(&mut self.grads, self.config.grad_clip.unwrap_or(f64::INFINITY));
        let cfg = &self.config;
        let lr = cfg.schedule.lr(step, cfg.warmup_steps, cfg.lr_peak);
        self.optimizer.step(&mut self.model, &self.grads, lr)?;
        self.step = step;
        Ok(StepMetrics {
            step,
            lr,
            loss,
            token_acc: stats.accuracy(),
        })
    }

    /// Seeded per-epoch batching, periodic validation with best-checkpoint
    /// retention, and optional on-disk logs.
    pub fn run(
        &mut self,
        train: &[ComposedSequence],
        valid: &[ComposedSequence],
        output: Option<&RunOutput>,
    ) -> Result<TrainReport> {
        if train.is_empty() {
            return Err(Error::Domain("training set is empty".into()));
        }
        let mut logs = match output {
            Some(out) => {
                std::fs::create_dir_all(&out.dir)?;
                Some((
                    BufWriter::new(File::create(out.dir.join("metrics.jsonl"))?),
                    BufWriter::new(File::create(out.dir.join("valid.jsonl"))?),
                ))
            }
            None => None,
        };
        let mut report = TrainReport::default();
        let max_steps = self.config.max_steps.unwrap_or(usize::MAX);
        let mut current_epoch = 0;
        'epochs: for epoch in 0..self.config.epochs {
            current_epoch = epoch;
            if self.step >= max_steps {
                break;
            }
            let seed = self.config.seed.wrapping_add(epoch as u64);
            let batches = make_batches(train, self.config.batch_size, PAD, seed)?;
            for batch in &batches {
                let metrics = self.train_step(&batch.sequences())?;
                report.steps.push(metrics);
                if let Some((m, _)) = logs.as_mut() {
                    if metrics.step % self.config.log_every == 0 {
                        writeln!(m, "{}", serde_json::to_string(&metrics)?)?;
                    }
                }
                if let Some(out) = output {
                    let every = self.config.checkpoint_every;
                    if every > 0 && metrics.step % every == 0 {
                        let path = out.dir.join(format!("step-{}.ckpt", metrics.step));
                        save_checkpoint(&path, &self.model, &self.meta(out, epoch))?;
                    }
                }
                let eval_now = self.config.eval_every > 0 && metrics.step % self.config.eval_every == 0;
                if eval_now && self.validate(valid, epoch, output, &mut logs, &mut report)? {
                    break 'epochs;
                }
                if self.step >= max_steps {
                    break;
                }
            }
            if self.config.eval_every == 0 && self.validate(valid, epoch, output, &mut logs, &mut report)? {
                break;
            }
        }
        let evaluated = report.valid.last().is_some_and(|v| v.step == self.step);
        if !evaluated {
            self.validate(valid, current_epoch, output, &mut logs, &mut report)?;
        }
        if let Some((m, v)) = logs.as_mut() {
            m.flush()?;
            v.flush()?;
        }
        if let Some(out) = output {
            save_checkpoint(&out.dir.join("last.ckpt"), &self.model, &self.meta(out, current_epoch))?;
        }
        Ok(report)
    }

    fn meta(&self, out: &RunOutput, epoch: usize) -> BTreeMap<String, String> {
        let mut meta = out.meta.clone();
        meta.insert("step".into(), self.step.to_string());
        meta.insert("epoch".into(), epoch.to_string());
        meta
    }

    /// Returns true when the accuracy target has been reached.
    fn validate(
        &self,
        valid: &[ComposedSequence],
        epoch: usize,
        output: Option<&RunOutput>,
        logs: &mut Option<(BufWriter<File>, BufWriter<File>)>,
        report: &mut TrainReport,
    ) -> Result<bool> {
        if valid.is_empty() {
            return Ok(false);
        }
        let stats = evaluate(&self.model, valid)?;
        let record = ValidMetrics {
            step: self.step,
            epoch,
            loss: stats.mean_loss(),
            token_acc: stats.accuracy(),
        };
        if !record.loss.is_finite() {
            return Err(Error::NonFinite(format!("validation loss at step {}", self.step)));
        }
        report.valid.push(record);
        if let Some((_, v)) = logs.as_mut() {
            writeln!(v, "{}", serde_json::to_string(&record)?)?;
        }
        if report.best.is_none_or(|b| record.loss < b.loss) {
            report.best = Some(record);
            if let Some(out) = output {
                save_checkpoint(&out.dir.join("best.ckpt"), &self.model, &self.meta(out, epoch))?;
            }
        }
        let reached = self.config.target_valid_acc.is_some_and(|t| record.token_acc >= t);
        report.reached_target |= reached;
        Ok(reached)
    }
}
