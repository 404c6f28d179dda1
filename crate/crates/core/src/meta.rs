//! Direct meta-classifiers over z-vectors: a one-hidden-layer feedforward
//! network (the default aggregator), multinomial logistic regression and
//! k-nearest neighbours.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::{argmax, ZVector, ARCHITECTURES};
use crate::train::{self, Checkpoint, EvalRecord, TrainConfig, Trainable};
use crate::weighting::softmax;

pub const DEFAULT_HIDDEN: usize = 32;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetaPrediction {
    pub logits: Vec<f64>,
    pub probabilities: Vec<f64>,
    pub label: usize,
}

impl MetaPrediction {
    pub fn from_logits(logits: Vec<f64>) -> Self {
        let probabilities = softmax(&logits);
        let label = argmax(&probabilities);
        MetaPrediction {
            logits,
            probabilities,
            label,
        }
    }
}

fn cross_entropy(logits: &[f64], label: usize) -> f64 {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|l| (l - m).exp()).sum::<f64>().ln();
    lse - logits[label]
}

/// Parameters of the 2K → H → K rectifier network. Matrices are row-major
/// with one row per output unit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FfnnParams {
    pub input: usize,
    pub hidden: usize,
    pub output: usize,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
    pub seed: u64,
}

/// Gradient (or optimizer moment) with the same layout as [`FfnnParams`].
#[derive(Clone, Debug, PartialEq)]
pub struct FfnnGrad {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl FfnnGrad {
    fn zeros_like(p: &FfnnParams) -> Self {
        FfnnGrad {
            w1: vec![0.0; p.w1.len()],
            b1: vec![0.0; p.b1.len()],
            w2: vec![0.0; p.w2.len()],
            b2: vec![0.0; p.b2.len()],
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        [&self.w1, &self.b1, &self.w2, &self.b2]
            .into_iter()
            .flatten()
            .copied()
            .collect()
    }
}

impl FfnnParams {
    /// Seeded symmetric-uniform initialization scaled by fan-in.
    pub fn init(num_classes: usize, hidden: usize, seed: u64) -> Result<Self> {
        if hidden == 0 {
            return Err(Error::Config("hidden width must be >= 1".into()));
        }
        if num_classes < 2 {
            return Err(Error::Config("need at least 2 classes".into()));
        }
        let input = ARCHITECTURES * num_classes;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut uniform = |n: usize, fan_in: usize| -> Vec<f64> {
            let bound = 1.0 / (fan_in as f64).sqrt();
            (0..n).map(|_| rng.random_range(-bound..bound)).collect()
        };
        let w1 = uniform(hidden * input, input);
        let b1 = uniform(hidden, input);
        let w2 = uniform(num_classes * hidden, hidden);
        let b2 = uniform(num_classes, hidden);
        Ok(FfnnParams {
            input,
            hidden,
            output: num_classes,
            w1,
            b1,
            w2,
            b2,
            seed,
        })
    }

    pub fn zeros(num_classes: usize, hidden: usize) -> Self {
        let input = ARCHITECTURES * num_classes;
        FfnnParams {
            input,
            hidden,
            output: num_classes,
            w1: vec![0.0; hidden * input],
            b1: vec![0.0; hidden],
            w2: vec![0.0; num_classes * hidden],
            b2: vec![0.0; num_classes],
            seed: 0,
        }
    }

    pub fn num_parameters(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    pub fn flatten(&self) -> Vec<f64> {
        [&self.w1, &self.b1, &self.w2, &self.b2]
            .into_iter()
            .flatten()
            .copied()
            .collect()
    }

    /// Mutable access to the i-th parameter in flattened order.
    pub fn param_mut(&mut self, mut i: usize) -> &mut f64 {
        for v in [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2] {
            if i < v.len() {
                return &mut v[i];
            }
            i -= v.len();
        }
        panic!("parameter index out of range")
    }

    fn check_width(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.input {
            return Err(Error::Shape {
                expected: self.input,
                got: z.len(),
            });
        }
        Ok(())
    }

    /// (pre-activations, activations, logits)
    fn forward_full(&self, z: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let pre: Vec<f64> = (0..self.hidden)
            .map(|h| {
                let row = &self.w1[h * self.input..(h + 1) * self.input];
                row.iter().zip(z).map(|(w, x)| w * x).sum::<f64>() + self.b1[h]
            })
            .collect();
        let act: Vec<f64> = pre.iter().map(|v| v.max(0.0)).collect();
        let logits = (0..self.output)
            .map(|k| {
                let row = &self.w2[k * self.hidden..(k + 1) * self.hidden];
                row.iter().zip(&act).map(|(w, a)| w * a).sum::<f64>() + self.b2[k]
            })
            .collect();
        (pre, act, logits)
    }

    pub fn logits(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.check_width(z)?;
        Ok(self.forward_full(z).2)
    }

    pub fn predict(&self, z: &[f64]) -> Result<MetaPrediction> {
        self.logits(z).map(MetaPrediction::from_logits)
    }

    /// Mean cross-entropy over a batch.
    pub fn loss(&self, batch: &[(&[f64], usize)]) -> f64 {
        batch
            .iter()
            .map(|(z, y)| cross_entropy(&self.forward_full(z).2, *y))
            .sum::<f64>()
            / batch.len() as f64
    }

    /// Backpropagated gradient of the mean cross-entropy.
    pub fn gradients(&self, batch: &[(&[f64], usize)]) -> Result<FfnnGrad> {
        if batch.is_empty() {
            return Err(Error::Empty("gradient batch".into()));
        }
        let mut g = FfnnGrad::zeros_like(self);
        let scale = 1.0 / batch.len() as f64;
        for (z, y) in batch {
            self.check_width(z)?;
            if *y >= self.output {
                return Err(Error::ClassOutOfRange {
                    index: *y,
                    classes: self.output,
                });
            }
            let (pre, act, logits) = self.forward_full(z);
            let mut delta_out = softmax(&logits);
            delta_out[*y] -= 1.0;
            for (k, delta) in delta_out.iter().enumerate() {
                let d = delta * scale;
                g.b2[k] += d;
                let row = &mut g.w2[k * self.hidden..(k + 1) * self.hidden];
                for (w, a) in row.iter_mut().zip(&act) {
                    *w += d * a;
                }
            }
            for (h, p) in pre.iter().enumerate() {
                if *p <= 0.0 {
                    continue;
                }
                let back: f64 = (0..self.output)
                    .map(|k| self.w2[k * self.hidden + h] * delta_out[k])
                    .sum::<f64>()
                    * scale;
                g.b1[h] += back;
                for (i, x) in z.iter().enumerate() {
                    g.w1[h * self.input + i] += back * x;
                }
            }
        }
        Ok(g)
    }
}

pub fn ffnn_gradients(params: &FfnnParams, batch: &[(&[f64], usize)]) -> Result<FfnnGrad> {
    params.gradients(batch)
}

pub fn ffnn_predict(params: &FfnnParams, z: &ZVector) -> Result<MetaPrediction> {
    params.predict(z)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetaConfig {
    pub hidden: usize,
    pub train: TrainConfig,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
}

impl Default for MetaConfig {
    fn default() -> Self {
        MetaConfig {
            hidden: DEFAULT_HIDDEN,
            train: TrainConfig {
                learning_rate: 0.01,
                max_epochs: 200,
                ..TrainConfig::default()
            },
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
        }
    }
}

/// FFNN with AdamW state; decay skips bias vectors.
#[derive(Clone, Debug)]
struct AdamFfnn {
    params: FfnnParams,
    m: FfnnGrad,
    v: FfnnGrad,
    t: i32,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl Trainable for AdamFfnn {
    type Example = (ZVector, usize);

    fn step(&mut self, batch: &[&Self::Example], lr: f64, wd: f64) {
        let b: Vec<(&[f64], usize)> = batch.iter().map(|(z, y)| (z.values(), *y)).collect();
        let g = self.params.gradients(&b).expect("validated shapes");
        self.t += 1;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        let groups = [
            (&mut self.params.w1, &g.w1, &mut self.m.w1, &mut self.v.w1, true),
            (&mut self.params.b1, &g.b1, &mut self.m.b1, &mut self.v.b1, false),
            (&mut self.params.w2, &g.w2, &mut self.m.w2, &mut self.v.w2, true),
            (&mut self.params.b2, &g.b2, &mut self.m.b2, &mut self.v.b2, false),
        ];
        for (p, g, m, v, decay) in groups {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let update = (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
                if decay {
                    p[i] -= lr * wd * p[i];
                }
                p[i] -= lr * update;
            }
        }
    }

    fn loss(&self, data: &[Self::Example]) -> f64 {
        let b: Vec<(&[f64], usize)> = data.iter().map(|(z, y)| (z.values(), *y)).collect();
        self.params.loss(&b)
    }
}

#[derive(Clone, Debug)]
pub struct TrainedMeta<H> {
    pub head: H,
    pub checkpoints: Vec<Checkpoint>,
    pub log: Vec<EvalRecord>,
    /// Classes absent from the training rows.
    pub missing_classes: Vec<usize>,
}

fn validate_rows(rows: &[(ZVector, usize)], num_classes: usize, what: &str) -> Result<Vec<usize>> {
    if rows.is_empty() {
        return Err(Error::Empty(format!("{what} z-vectors")));
    }
    let mut seen = vec![false; num_classes];
    for (z, y) in rows {
        if z.len() != ARCHITECTURES * num_classes {
            return Err(Error::Shape {
                expected: ARCHITECTURES * num_classes,
                got: z.len(),
            });
        }
        if *y >= num_classes {
            return Err(Error::ClassOutOfRange {
                index: *y,
                classes: num_classes,
            });
        }
        seen[*y] = true;
    }
    Ok((0..num_classes).filter(|j| !seen[*j]).collect())
}

/// Trains the FFNN meta-classifier; returns the best-validation-loss checkpoint.
pub fn train_ffnn(
    train_rows: &[(ZVector, usize)],
    val_rows: &[(ZVector, usize)],
    num_classes: usize,
    config: &MetaConfig,
) -> Result<TrainedMeta<FfnnParams>> {
    let missing_classes = validate_rows(train_rows, num_classes, "training")?;
    validate_rows(val_rows, num_classes, "validation")?;
    let params = FfnnParams::init(num_classes, config.hidden, config.train.seed)?;
    let model = AdamFfnn {
        m: FfnnGrad::zeros_like(&params),
        v: FfnnGrad::zeros_like(&params),
        params,
        t: 0,
        beta1: config.adam_beta1,
        beta2: config.adam_beta2,
        eps: config.adam_eps,
    };
    let out = train::fit(model, train_rows, val_rows, &config.train)?;
    Ok(TrainedMeta {
        head: out.model.params,
        checkpoints: out.checkpoints,
        log: out.log,
        missing_classes,
    })
}

/// Multinomial logistic regression over the 2K z-features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrHead {
    pub input: usize,
    pub output: usize,
    /// Row-major, one row per class.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl LrHead {
    pub fn zeros(num_classes: usize) -> Self {
        let input = ARCHITECTURES * num_classes;
        LrHead {
            input,
            output: num_classes,
            weights: vec![0.0; input * num_classes],
            bias: vec![0.0; num_classes],
        }
    }

    pub fn logits(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.input {
            return Err(Error::Shape {
                expected: self.input,
                got: z.len(),
            });
        }
        Ok((0..self.output)
            .map(|k| {
                let row = &self.weights[k * self.input..(k + 1) * self.input];
                row.iter().zip(z).map(|(w, x)| w * x).sum::<f64>() + self.bias[k]
            })
            .collect())
    }

    pub fn predict(&self, z: &[f64]) -> Result<MetaPrediction> {
        self.logits(z).map(MetaPrediction::from_logits)
    }
}

impl Trainable for LrHead {
    type Example = (ZVector, usize);

    fn step(&mut self, batch: &[&Self::Example], lr: f64, wd: f64) {
        let mut gw = vec![0.0; self.weights.len()];
        let mut gb = vec![0.0; self.bias.len()];
        let scale = 1.0 / batch.len() as f64;
        for (z, y) in batch.iter().map(|e| (&e.0, e.1)) {
            let mut d = softmax(&self.logits(z).expect("validated shapes"));
            d[y] -= 1.0;
            for k in 0..self.output {
                gb[k] += d[k] * scale;
                for (i, x) in z.iter().enumerate() {
                    gw[k * self.input + i] += d[k] * x * scale;
                }
            }
        }
        for (w, g) in self.weights.iter_mut().zip(&gw) {
            *w -= lr * wd * *w + lr * g;
        }
        for (b, g) in self.bias.iter_mut().zip(&gb) {
            *b -= lr * g;
        }
    }

    fn loss(&self, data: &[Self::Example]) -> f64 {
        data.iter()
            .map(|(z, y)| cross_entropy(&self.logits(z).expect("validated shapes"), *y))
            .sum::<f64>()
            / data.len() as f64
    }
}

/// Gradient-trained multinomial logistic head (plain gradient descent).
pub fn train_lr_head(
    train_rows: &[(ZVector, usize)],
    val_rows: &[(ZVector, usize)],
    num_classes: usize,
    config: &TrainConfig,
) -> Result<TrainedMeta<LrHead>> {
    let missing_classes = validate_rows(train_rows, num_classes, "training")?;
    validate_rows(val_rows, num_classes, "validation")?;
    let out = train::fit(LrHead::zeros(num_classes), train_rows, val_rows, config)?;
    Ok(TrainedMeta {
        head: out.model,
        checkpoints: out.checkpoints,
        log: out.log,
        missing_classes,
    })
}

/// Defaults used for the logistic head.
pub fn lr_head_defaults() -> TrainConfig {
    TrainConfig {
        learning_rate: 1.0,
        weight_decay: 0.0,
        max_epochs: 200,
        ..TrainConfig::default()
    }
}

/// Euclidean k-nearest-neighbour vote. Distance ties go to the lower
/// training index, vote ties to the lowest class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KnnHead {
    pub k: usize,
    pub num_classes: usize,
    pub points: Vec<(ZVector, usize)>,
}

impl KnnHead {
    pub fn vote_fractions(&self, z: &[f64]) -> Result<Vec<f64>> {
        let width = ARCHITECTURES * self.num_classes;
        if z.len() != width {
            return Err(Error::Shape {
                expected: width,
                got: z.len(),
            });
        }
        let mut dist: Vec<(f64, usize)> = self
            .points
            .iter()
            .enumerate()
            .map(|(i, (p, _))| (p.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(), i))
            .collect();
        dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut counts = vec![0.0; self.num_classes];
        for (_, i) in dist.iter().take(self.k) {
            counts[self.points[*i].1] += 1.0;
        }
        Ok(counts.into_iter().map(|c| c / self.k as f64).collect())
    }

    pub fn predict(&self, z: &[f64]) -> Result<usize> {
        self.vote_fractions(z).map(|f| argmax(&f))
    }
}

pub fn train_knn_head(train_rows: &[(ZVector, usize)], num_classes: usize, k: usize) -> Result<KnnHead> {
    validate_rows(train_rows, num_classes, "training")?;
    if k == 0 {
        return Err(Error::Config("k must be >= 1".into()));
    }
    if k > train_rows.len() {
        return Err(Error::Config(format!(
            "k = {k} exceeds training size {}",
            train_rows.len()
        )));
    }
    Ok(KnnHead {
        k,
        num_classes,
        points: train_rows.to_vec(),
    })
}
