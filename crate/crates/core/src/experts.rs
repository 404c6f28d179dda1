//! Level-0 binary experts: logistic heads over hashed text features with a
//! two-logit softmax output.

use serde::{Deserialize, Serialize};

use crate::corpus::{BinaryDataset, FormattedInput, Setting};
use crate::error::{Error, Result};
use crate::features::{Featurizer, Owner, SparseVec, Variant};
use crate::train::{self, Checkpoint, EvalRecord, TrainConfig, Trainable};

/// Logits beyond this magnitude are clamped when converted to probabilities,
/// keeping both outputs strictly inside (0, 1).
pub const LOGIT_CLAMP: f64 = 30.0;

pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Cross-entropy of a logistic output at logit `s` against label `y`.
fn logistic_ce(s: f64, y: f64) -> f64 {
    s.max(0.0) + (-s.abs()).exp().ln_1p() - y * s
}

/// Dense weights over hashed features plus an undecayed bias.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LinearModel {
    pub fn zeros(dimension: usize) -> Self {
        LinearModel {
            weights: vec![0.0; dimension],
            bias: 0.0,
        }
    }

    pub fn logit(&self, x: &SparseVec) -> f64 {
        x.dot(&self.weights) + self.bias
    }

    /// Gradient of the mean cross-entropy: (dense weight gradient, bias gradient).
    pub fn gradient(&self, batch: &[&(SparseVec, f64)]) -> (Vec<f64>, f64) {
        let mut gw = vec![0.0; self.weights.len()];
        let mut gb = 0.0;
        let scale = 1.0 / batch.len() as f64;
        for (x, y) in batch.iter().map(|e| (&e.0, e.1)) {
            let err = (logistic(self.logit(x)) - y) * scale;
            for (i, v) in x.iter() {
                gw[i as usize] += err * v;
            }
            gb += err;
        }
        (gw, gb)
    }
}

impl Trainable for LinearModel {
    type Example = (SparseVec, f64);

    fn step(&mut self, batch: &[&Self::Example], learning_rate: f64, weight_decay: f64) {
        // Residuals use the pre-step weights for the whole batch.
        let scale = 1.0 / batch.len() as f64;
        let errs: Vec<f64> = batch
            .iter()
            .map(|(x, y)| (logistic(self.logit(x)) - y) * scale)
            .collect();
        if weight_decay != 0.0 {
            let keep = 1.0 - learning_rate * weight_decay;
            self.weights.iter_mut().for_each(|w| *w *= keep);
        }
        for ((x, _), err) in batch.iter().zip(&errs) {
            for (i, v) in x.iter() {
                self.weights[i as usize] -= learning_rate * err * v;
            }
        }
        self.bias -= learning_rate * errs.iter().sum::<f64>();
    }

    fn loss(&self, data: &[Self::Example]) -> f64 {
        data.iter().map(|(x, y)| logistic_ce(self.logit(x), *y)).sum::<f64>() / data.len() as f64
    }
}

/// Sparse (index, value) storage of the non-zero weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct StoredWeights {
    dimension: usize,
    entries: Vec<(u32, f64)>,
    bias: f64,
}

impl From<&LinearModel> for StoredWeights {
    fn from(m: &LinearModel) -> Self {
        StoredWeights {
            dimension: m.weights.len(),
            entries: m
                .weights
                .iter()
                .enumerate()
                .filter(|(_, w)| **w != 0.0)
                .map(|(i, w)| (i as u32, *w))
                .collect(),
            bias: m.bias,
        }
    }
}

impl From<StoredWeights> for LinearModel {
    fn from(s: StoredWeights) -> Self {
        let mut m = LinearModel::zeros(s.dimension);
        for (i, w) in s.entries {
            m.weights[i as usize] = w;
        }
        m.bias = s.bias;
        m
    }
}

mod stored {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(m: &LinearModel, s: S) -> std::result::Result<S::Ok, S::Error> {
        StoredWeights::from(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<LinearModel, D::Error> {
        StoredWeights::deserialize(d).map(LinearModel::from)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinaryExpert {
    pub target_class: usize,
    pub variant: Variant,
    pub setting: Setting,
    pub seed: u64,
    pub featurizer: Featurizer,
    #[serde(with = "stored")]
    pub model: LinearModel,
    pub trained: bool,
}

/// Signed contribution of one token occurrence to the positive logit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TokenAttribution {
    pub token: String,
    pub start: usize,
    pub end: usize,
    pub contribution: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Attributions {
    pub tokens: Vec<TokenAttribution>,
    pub bias: f64,
    /// Positive-class logit; equals the sum of contributions plus bias.
    pub logit: f64,
}

impl Attributions {
    /// Total contribution per distinct token text, in first-occurrence order.
    pub fn by_token(&self) -> Vec<(String, f64)> {
        let mut out: Vec<(String, f64)> = Vec::new();
        for t in &self.tokens {
            match out.iter_mut().find(|(k, _)| *k == t.token) {
                Some(entry) => entry.1 += t.contribution,
                None => out.push((t.token.clone(), t.contribution)),
            }
        }
        out
    }
}

/// Result of training one expert.
#[derive(Clone, Debug)]
pub struct TrainedExpert {
    pub expert: BinaryExpert,
    pub checkpoints: Vec<Checkpoint>,
    pub log: Vec<EvalRecord>,
    pub stopped_early: bool,
}

impl BinaryExpert {
    /// Untrained expert with zero weights.
    pub fn new(target_class: usize, setting: Setting, featurizer: Featurizer) -> Self {
        let dim = featurizer.dimension as usize;
        BinaryExpert {
            target_class,
            variant: featurizer.variant,
            setting,
            seed: 0,
            featurizer,
            model: LinearModel::zeros(dim),
            trained: false,
        }
    }

    fn ensure_trained(&self) -> Result<()> {
        if self.trained {
            Ok(())
        } else {
            Err(Error::Untrained {
                class: self.target_class,
                variant: self.variant.to_string(),
            })
        }
    }

    pub fn logit(&self, input: &FormattedInput) -> Result<f64> {
        self.ensure_trained()?;
        Ok(self.model.logit(&self.featurizer.featurize(&input.text)))
    }

    /// Two-logit softmax output (ρ⁰, ρ¹).
    pub fn predict(&self, input: &FormattedInput) -> Result<(f64, f64)> {
        Ok(probabilities_from_logit(self.logit(input)?))
    }

    pub fn positive_probability(&self, input: &FormattedInput) -> Result<f64> {
        self.predict(input).map(|p| p.1)
    }

    /// Exact additive decomposition of the positive logit over token occurrences.
    /// Bigram increments are split evenly between their two tokens.
    pub fn token_attributions(&self, input: &FormattedInput) -> Result<Attributions> {
        self.ensure_trained()?;
        let analysis = self.featurizer.analyze(&input.text);
        let mut contrib = vec![0.0; analysis.tokens.len()];
        for inc in &analysis.increments {
            let c = self.model.weights[inc.bucket as usize] * inc.value;
            match inc.owner {
                Owner::Unigram(i) => contrib[i] += c,
                Owner::Bigram(i, j) => {
                    contrib[i] += 0.5 * c;
                    contrib[j] += 0.5 * c;
                }
            }
        }
        let tokens: Vec<TokenAttribution> = analysis
            .tokens
            .into_iter()
            .zip(contrib)
            .map(|(t, contribution)| TokenAttribution {
                token: t.text,
                start: t.start,
                end: t.end,
                contribution,
            })
            .collect();
        let logit = self.model.logit(&self.featurizer.featurize(&input.text));
        Ok(Attributions {
            tokens,
            bias: self.model.bias,
            logit,
        })
    }
}

/// (ρ⁰, ρ¹) from a positive-class logit, with ρ⁰ = 1 − ρ¹.
pub fn probabilities_from_logit(logit: f64) -> (f64, f64) {
    let p1 = logistic(logit.clamp(-LOGIT_CLAMP, LOGIT_CLAMP));
    (1.0 - p1, p1)
}

/// Trains one expert on a one-vs-all split. The featurizer must already be
/// fitted on the training texts.
pub fn train_expert(
    train_set: &BinaryDataset,
    val_set: &BinaryDataset,
    featurizer: Featurizer,
    setting: Setting,
    config: &TrainConfig,
) -> Result<TrainedExpert> {
    if train_set.target_class != val_set.target_class {
        return Err(Error::TrainingData("train and validation target different classes".into()));
    }
    let positives = train_set.positives();
    if positives == 0 || positives == train_set.len() {
        return Err(Error::TrainingData(format!(
            "training split for class {} needs both positive and negative examples",
            train_set.target_class
        )));
    }
    if val_set.is_empty() {
        return Err(Error::TrainingData("empty validation split".into()));
    }
    let encode = |set: &BinaryDataset| -> Vec<(SparseVec, f64)> {
        set.items
            .iter()
            .map(|(input, k)| (featurizer.featurize(&input.text), f64::from(*k)))
            .collect()
    };
    let train_x = encode(train_set);
    let val_x = encode(val_set);
    let model = LinearModel::zeros(featurizer.dimension as usize);
    let outcome = train::fit(model, &train_x, &val_x, config)?;

    let mut expert = BinaryExpert::new(train_set.target_class, setting, featurizer);
    expert.model = outcome.model;
    expert.seed = config.seed;
    expert.trained = true;
    Ok(TrainedExpert {
        expert,
        checkpoints: outcome.checkpoints,
        log: outcome.log,
        stopped_early: outcome.stopped_early,
    })
}
