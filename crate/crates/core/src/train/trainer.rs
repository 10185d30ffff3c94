//! Mini-batch training shared by the pre-training and fine-tuning phases.
//!
//! Per-sample forward/backward passes of a batch run through [`Exec::map`];
//! gradients are summed afterwards in batch order, so results do not depend
//! on the worker count.

use serde::{Deserialize, Serialize};

use super::adam::{Adam, AdamConfig};
use super::augment::{augment, FlipDraw};
use super::data::Dataset;
use super::evaluate::{evaluate, SplitMetrics};
use crate::autograd::Grads;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::model::{LossWeights, Network, ParamStore};
use crate::seed;
use rand::seq::SliceRandom;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    Double,
}

impl std::str::FromStr for Precision {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "double" | "f64" => Ok(Precision::Double),
            other => Err(Error::InvalidConfig(format!(
                "precision {other:?} is not supported (only \"double\")"
            ))),
        }
    }
}

/// Learning-rate schedule over `max_steps`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrSchedule {
    #[default]
    Constant,
    /// Half-cosine decay from `learning_rate` to zero at `max_steps`.
    Cosine,
}

impl LrSchedule {
    pub fn rate(self, base: f64, step: usize, total: usize) -> f64 {
        match self {
            LrSchedule::Constant => base,
            LrSchedule::Cosine => {
                let t = step as f64 / total.max(1) as f64;
                0.5 * base * (1.0 + (std::f64::consts::PI * t).cos())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub lr_schedule: LrSchedule,
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub max_steps: usize,
    /// Optional cap on passes over the training set.
    pub max_epochs: Option<usize>,
    pub loss: LossWeights,
    pub hflip: bool,
    pub vflip: bool,
    /// Validation rounds without improvement before stopping; 0 disables.
    pub patience: usize,
    /// Steps between validation rounds; `None` validates once per epoch.
    pub eval_every: Option<usize>,
    pub seed: u64,
    /// 0 runs single-threaded.
    pub workers: usize,
    pub freeze_backbone: bool,
    pub precision: Precision,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-4,
            lr_schedule: LrSchedule::Constant,
            adam: AdamConfig::default(),
            batch_size: 8,
            max_steps: 1000,
            max_epochs: None,
            loss: LossWeights::default(),
            hflip: true,
            vflip: true,
            patience: 10,
            eval_every: None,
            seed: 0,
            workers: 0,
            freeze_backbone: false,
            precision: Precision::Double,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig("learning_rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be positive".into()));
        }
        if self.eval_every == Some(0) || self.max_epochs == Some(0) && self.max_steps > 0 {
            return Err(Error::InvalidConfig("eval_every and max_epochs must be positive".into()));
        }
        let a = &self.adam;
        if !((0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2) && a.eps > 0.0) {
            return Err(Error::InvalidConfig("adam betas must lie in [0, 1) and eps be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: usize,
    pub epoch: usize,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalLog {
    /// Number of optimizer steps taken before this evaluation.
    pub step: usize,
    pub mae_sur: Option<f64>,
    pub mae_smr: Option<f64>,
    pub combined: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters at the best validation round (the final ones without validation data).
    pub best: ParamStore,
    pub best_step: usize,
    pub best_val: Option<f64>,
    pub last: ParamStore,
    pub steps: usize,
    pub losses: Vec<StepLog>,
    pub evals: Vec<EvalLog>,
    pub stopped_early: bool,
}

/// Batch-mean loss and gradient for the listed samples.
pub fn batch_gradient(
    net: &Network,
    data: &Dataset,
    batch: &[usize],
    weights: &LossWeights,
    draws: &[FlipDraw],
    exec: Exec,
) -> Result<(f64, Grads)> {
    let items: Vec<(usize, FlipDraw)> = batch.iter().copied().zip(draws.iter().copied()).collect();
    let results = exec.map(&items, |&(i, draw)| {
        let s = &data.samples()[i];
        let (a, b) = augment(&s.original, &s.compressed, draw);
        net.loss_and_grads(&a, &b, &s.target, weights)
    });
    let mut total = Grads::zeros_like(net.store());
    let mut loss = 0.0;
    for r in results {
        let (l, _, g) = r?;
        loss += l;
        total.add_assign(&g);
    }
    let inv = 1.0 / batch.len() as f64;
    total.scale(inv);
    Ok((loss * inv, total))
}

/// Fits `net` on `train`, keeping the parameters with the best validation
/// `MAE_sur + MAE_smr` (masked terms excluded).
pub fn fit(net: &Network, train: &Dataset, val: Option<&Dataset>, cfg: &TrainConfig, exec: Exec) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::EmptySplit("training split has no items".into()));
    }
    for s in train.samples() {
        let t = &s.target;
        if (cfg.loss.sur_mask && t.sur.is_none()) || (cfg.loss.smr_mask && t.smr.is_none()) {
            return Err(Error::InvalidArgument(format!(
                "training item ({}, {}) lacks a target required by the loss masks",
                s.ladder_id, s.rung_index
            )));
        }
    }
    let val = val.filter(|v| !v.is_empty());
    let mut work = net.clone();
    let trainable: Vec<bool> = work
        .store()
        .names()
        .iter()
        .map(|n| !(cfg.freeze_backbone && n.starts_with("backbone.")))
        .collect();
    let mut adam = Adam::new(work.store(), cfg.adam);
    let score = |m: &SplitMetrics| m.combined(cfg.loss.sur_mask, cfg.loss.smr_mask);

    let mut evals = Vec::new();
    let mut best = work.store().clone();
    let mut best_step = 0;
    let mut best_val = None;
    if let Some(v) = val {
        let m = evaluate(&work, v, exec)?;
        best_val = Some(score(&m));
        evals.push(EvalLog {
            step: 0,
            mae_sur: m.mae_sur,
            mae_smr: m.mae_smr,
            combined: score(&m),
        });
    }

    let n = train.len();
    let per_epoch = n.div_ceil(cfg.batch_size);
    let eval_every = cfg.eval_every.unwrap_or(per_epoch);
    let mut order: Vec<usize> = Vec::new();
    let mut losses = Vec::new();
    let mut since_best = 0;
    let mut stopped_early = false;
    let mut step = 0;
    while step < cfg.max_steps {
        let epoch = step / per_epoch;
        if cfg.max_epochs.is_some_and(|e| epoch >= e) {
            break;
        }
        let pos = step % per_epoch;
        if pos == 0 {
            order = (0..n).collect();
            order.shuffle(&mut seed::rng(cfg.seed, &[seed::hash_str("epoch"), epoch as u64]));
        }
        let batch = &order[pos * cfg.batch_size..((pos + 1) * cfg.batch_size).min(n)];
        let draws: Vec<FlipDraw> = batch
            .iter()
            .map(|&i| {
                let mut rng = seed::rng(cfg.seed, &[seed::hash_str("flip"), step as u64, i as u64]);
                FlipDraw::sample(&mut rng, cfg.hflip, cfg.vflip)
            })
            .collect();
        let (loss, grads) = batch_gradient(&work, train, batch, &cfg.loss, &draws, exec)?;
        if !loss.is_finite() || grads.0.iter().any(|g| !g.is_finite()) {
            let items: Vec<String> = batch
                .iter()
                .map(|&i| {
                    let s = &train.samples()[i];
                    format!("{}#{}", s.ladder_id, s.rung_index)
                })
                .collect();
            return Err(Error::NonFiniteLoss {
                step,
                detail: format!("loss {loss} on batch [{}]", items.join(", ")),
            });
        }
        losses.push(StepLog { step, epoch, loss });
        let lr = cfg.lr_schedule.rate(cfg.learning_rate, step, cfg.max_steps);
        adam.step(work.store_mut(), &grads, lr, &trainable);
        step += 1;

        if let Some(v) = val {
            if step % eval_every == 0 || step == cfg.max_steps {
                let m = evaluate(&work, v, exec)?;
                let s = score(&m);
                evals.push(EvalLog {
                    step,
                    mae_sur: m.mae_sur,
                    mae_smr: m.mae_smr,
                    combined: s,
                });
                if best_val.is_none_or(|b| s < b) {
                    best_val = Some(s);
                    best = work.store().clone();
                    best_step = step;
                    since_best = 0;
                } else {
                    since_best += 1;
                    if cfg.patience > 0 && since_best >= cfg.patience {
                        stopped_early = true;
                        break;
                    }
                }
            }
        }
    }
    let last = work.into_store();
    if val.is_none() {
        best = last.clone();
        best_step = step;
    }
    Ok(TrainOutcome {
        best,
        best_step,
        best_val,
        last,
        steps: step,
        losses,
        evals,
        stopped_early,
    })
}

/// Pre-training phase: targets are proxy SUR labels plus SMR.
pub fn pretrain(net: &Network, train: &Dataset, val: Option<&Dataset>, cfg: &TrainConfig, exec: Exec) -> Result<TrainOutcome> {
    fit(net, train, val, cfg, exec)
}

/// Fine-tuning phase: targets are ground-truth SUR plus SMR. `net` may carry
/// warm-started parameters (see [`warm_start`]).
pub fn finetune(net: &Network, train: &Dataset, val: Option<&Dataset>, cfg: &TrainConfig, exec: Exec) -> Result<TrainOutcome> {
    fit(net, train, val, cfg, exec)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WarmStart {
    pub copied: Vec<String>,
    pub skipped: Vec<String>,
}

/// Copies pre-trained parameters into `target`: everything when both use the
/// same variant, otherwise only the backbone (the other modules of a
/// different variant see differently distributed inputs). Backbone configs
/// must agree.
pub fn warm_start(target: &mut Network, source: &Network) -> Result<WarmStart> {
    if target.config().backbone != source.config().backbone {
        return Err(Error::ConfigMismatch("warm start requires identical backbone configs".into()));
    }
    let same_variant = target.variant() == source.variant();
    let mut copied = Vec::new();
    let mut skipped = Vec::new();
    let dst = target.store_mut();
    for (name, t) in source.store().iter() {
        if !same_variant && !name.starts_with("backbone.") {
            skipped.push(name.to_string());
            continue;
        }
        match dst.get_mut(name) {
            Some(d) if d.shape == t.shape => {
                d.data.copy_from_slice(&t.data);
                copied.push(name.to_string());
            }
            _ => skipped.push(name.to_string()),
        }
    }
    Ok(WarmStart { copied, skipped })
}
