//! Fine-grained training loop shared by the level-0 experts and the
//! level-1 meta heads: validation every few batches, best-loss
//! checkpointing, patience-based early stopping and a reduce-on-plateau
//! learning-rate schedule.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlateauConfig {
    /// Multiplier applied to the learning rate on a plateau.
    pub factor: f64,
    /// Evaluations without improvement before the rate is reduced.
    pub patience: usize,
    pub min_lr: f64,
}

impl Default for PlateauConfig {
    fn default() -> Self {
        PlateauConfig {
            factor: 0.5,
            patience: 10,
            min_lr: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Decoupled decay; never applied to bias terms.
    pub weight_decay: f64,
    pub batch_size: usize,
    /// Batches between validation passes.
    pub eval_every: usize,
    /// Evaluations without improvement before stopping.
    pub patience: usize,
    pub plateau: PlateauConfig,
    pub max_epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.1,
            weight_decay: 0.01,
            batch_size: 32,
            eval_every: 10,
            patience: 50,
            plateau: PlateauConfig::default(),
            max_epochs: 30,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Documented defaults for a transformer-backed expert plugin.
    pub fn transformer_defaults() -> Self {
        TrainConfig {
            learning_rate: 2e-5,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return bad("learning_rate must be finite and non-negative");
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return bad("weight_decay must be finite and non-negative");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1");
        }
        if self.eval_every == 0 {
            return bad("eval_every must be >= 1");
        }
        if self.patience == 0 {
            return bad("patience must be >= 1");
        }
        if self.plateau.patience == 0 || !(self.plateau.factor > 0.0 && self.plateau.factor <= 1.0) {
            return bad("plateau scheduler needs patience >= 1 and factor in (0, 1]");
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be >= 1");
        }
        Ok(())
    }
}

/// A model the loop can step and score.
pub trait Trainable: Clone {
    type Example;

    /// One optimizer step on a mini-batch.
    fn step(&mut self, batch: &[&Self::Example], learning_rate: f64, weight_decay: f64);

    /// Mean loss over a data set.
    fn loss(&self, data: &[Self::Example]) -> f64;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    /// Global batch count at evaluation time.
    pub step: usize,
    pub epoch: usize,
    pub val_loss: f64,
    pub best_loss: f64,
    pub learning_rate: f64,
    pub improved: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub best_val_loss: f64,
    pub step: usize,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<M> {
    /// Best-validation-loss snapshot, not the final state.
    pub model: M,
    pub checkpoints: Vec<Checkpoint>,
    pub log: Vec<EvalRecord>,
    pub stopped_early: bool,
    pub steps: usize,
}

impl<M> TrainOutcome<M> {
    pub fn best_val_loss(&self) -> f64 {
        self.checkpoints.last().map_or(f64::INFINITY, |c| c.best_val_loss)
    }
}

/// Early-stopping and plateau bookkeeping.
#[derive(Clone, Debug)]
pub struct Monitor {
    best: f64,
    since_best: usize,
    since_plateau_cut: usize,
    learning_rate: f64,
    patience: usize,
    plateau: PlateauConfig,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Verdict {
    pub improved: bool,
    pub stop: bool,
}

impl Monitor {
    pub fn new(config: &TrainConfig) -> Self {
        Monitor {
            best: f64::INFINITY,
            since_best: 0,
            since_plateau_cut: 0,
            learning_rate: config.learning_rate,
            patience: config.patience,
            plateau: config.plateau.clone(),
        }
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn best(&self) -> f64 {
        self.best
    }

    /// Only a strictly lower loss counts as an improvement.
    pub fn observe(&mut self, val_loss: f64) -> Verdict {
        if val_loss < self.best {
            self.best = val_loss;
            self.since_best = 0;
            self.since_plateau_cut = 0;
            return Verdict {
                improved: true,
                stop: false,
            };
        }
        self.since_best += 1;
        self.since_plateau_cut += 1;
        if self.since_plateau_cut >= self.plateau.patience {
            self.learning_rate = (self.learning_rate * self.plateau.factor).max(self.plateau.min_lr.min(self.learning_rate));
            self.since_plateau_cut = 0;
        }
        Verdict {
            improved: false,
            stop: self.since_best >= self.patience,
        }
    }
}

/// Runs mini-batch training with seeded shuffling. Deterministic given
/// (model, data, config).
pub fn fit<M: Trainable>(
    model: M,
    train: &[M::Example],
    val: &[M::Example],
    config: &TrainConfig,
) -> Result<TrainOutcome<M>> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::TrainingData("empty training split".into()));
    }
    if val.is_empty() {
        return Err(Error::TrainingData("empty validation split".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut monitor = Monitor::new(config);
    let mut current = model;
    let mut best = current.clone();
    let mut checkpoints = Vec::new();
    let mut log = Vec::new();
    let mut steps = 0usize;
    let mut last_eval_step = None;
    let mut stopped_early = false;

    let mut evaluate = |current: &M, best: &mut M, steps: usize, epoch: usize, monitor: &mut Monitor| {
        let lr_before = monitor.learning_rate();
        let val_loss = current.loss(val);
        let verdict = monitor.observe(val_loss);
        if verdict.improved {
            *best = current.clone();
            checkpoints.push(Checkpoint {
                best_val_loss: val_loss,
                step: steps,
            });
        }
        log.push(EvalRecord {
            step: steps,
            epoch,
            val_loss,
            best_loss: monitor.best(),
            learning_rate: lr_before,
            improved: verdict.improved,
        });
        verdict.stop
    };

    'epochs: for epoch in 0..config.max_epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&M::Example> = chunk.iter().map(|&i| &train[i]).collect();
            current.step(&batch, monitor.learning_rate(), config.weight_decay);
            steps += 1;
            if steps.is_multiple_of(config.eval_every) {
                last_eval_step = Some(steps);
                if evaluate(&current, &mut best, steps, epoch, &mut monitor) {
                    stopped_early = true;
                    break 'epochs;
                }
            }
        }
    }
    if last_eval_step != Some(steps) {
        evaluate(&current, &mut best, steps, config.max_epochs.saturating_sub(1), &mut monitor);
    }

    Ok(TrainOutcome {
        model: best,
        checkpoints,
        log,
        stopped_early,
        steps,
    })
}
