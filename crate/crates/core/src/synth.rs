//! Seeded synthetic citation corpus with the three-class label set.
//!
//! Contexts mix class cue words with shared filler, and section titles are
//! correlated with the label, so title-aware inputs carry extra signal.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{CitationInstance, Dataset, LabelSchema, Split};
use crate::error::{Error, Result};
use crate::fusion::{ZVector, ARCHITECTURES};

const CUES: [&[&str]; 3] = [
    &[
        "use", "using", "adopt", "implementation", "algorithm", "toolkit", "parser", "applied", "following",
        "procedure", "employ", "trained", "optimizer", "protocol", "setup", "pipeline", "preprocessing",
        "tokenizer", "released", "code",
    ],
    &[
        "previous", "studies", "shown", "widely", "known", "proposed", "literature", "prior", "investigated",
        "extensively", "recent", "research", "attention", "important", "introduced", "popular", "survey",
        "traditionally", "long", "explored",
    ],
    &[
        "consistent", "results", "similar", "agree", "findings", "observed", "confirm", "reported",
        "outperform", "comparable", "accuracy", "improvement", "contrast", "match", "performance", "higher",
        "lower", "gains", "differs", "replicate",
    ],
];

const FILLER: &[&str] = &[
    "the", "a", "of", "in", "for", "and", "to", "on", "with", "is", "this", "that", "model", "data",
    "approach", "task", "language", "corpus", "set", "analysis", "text", "system", "features", "we",
    "our", "as", "by", "their", "these", "from", "experiments", "domain", "training", "word", "sentence",
];

const TITLES: [&[&str]; 3] = [
    &["Methods", "Methodology", "Experimental Setup", "Implementation", "Materials and Methods"],
    &["Introduction", "Related Work", "Background", "Prior Work"],
    &["Results", "Discussion", "Evaluation", "Results and Discussion"],
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub size: usize,
    /// Class shares in schema order.
    pub proportions: Vec<f64>,
    /// Fractions assigned to the train and validation splits; the rest is test.
    pub train_fraction: f64,
    pub val_fraction: f64,
    /// Probability that a content token is a cue word of the true class.
    pub cue_rate: f64,
    /// Probability that a cue word is taken from another class instead.
    pub confusion: f64,
    /// Probability that the section title belongs to the true class.
    pub title_fidelity: f64,
    /// Probability that the section title is missing.
    pub missing_title: f64,
    pub min_tokens: usize,
    pub max_tokens: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            size: 2400,
            proportions: vec![0.58, 0.29, 0.13],
            train_fraction: 0.7,
            val_fraction: 0.15,
            cue_rate: 0.2,
            confusion: 0.3,
            title_fidelity: 0.9,
            missing_title: 0.05,
            min_tokens: 12,
            max_tokens: 24,
            seed: 7,
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("synthetic corpus: {m}")));
        if self.proportions.len() != 3 || self.proportions.iter().any(|p| *p <= 0.0) {
            return bad("need three positive class proportions");
        }
        for (name, p) in [
            ("cue_rate", self.cue_rate),
            ("confusion", self.confusion),
            ("title_fidelity", self.title_fidelity),
            ("missing_title", self.missing_title),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(&format!("{name} must lie in [0, 1]"));
            }
        }
        if self.train_fraction <= 0.0 || self.val_fraction <= 0.0 || self.train_fraction + self.val_fraction >= 1.0 {
            return bad("split fractions must be positive and leave room for a test split");
        }
        if self.min_tokens == 0 || self.min_tokens > self.max_tokens {
            return bad("token range must satisfy 1 <= min_tokens <= max_tokens");
        }
        if self.size < 30 {
            return bad("size must be at least 30");
        }
        Ok(())
    }
}

fn sentence(rng: &mut ChaCha8Rng, label: usize, cfg: &SynthConfig) -> String {
    let len = rng.random_range(cfg.min_tokens..=cfg.max_tokens);
    let mut words: Vec<String> = Vec::with_capacity(len + 2);
    for _ in 0..len {
        let word = if rng.random_bool(cfg.cue_rate) {
            let class = if rng.random_bool(cfg.confusion) {
                rng.random_range(0..3)
            } else {
                label
            };
            *CUES[class].choose(rng).unwrap()
        } else {
            *FILLER.choose(rng).unwrap()
        };
        words.push(word.to_string());
    }
    // Marker style and numbers differ by class; only the case- and
    // digit-preserving encoder sees them.
    let marker = match (label, rng.random_bool(0.7)) {
        (0, true) => format!("[{}]", rng.random_range(1..60)),
        (2, true) => format!("{}.{}%", rng.random_range(50..99), rng.random_range(0..10)),
        _ => format!("(Author et al., {})", rng.random_range(1995..2021)),
    };
    let at = rng.random_range(0..=words.len());
    words.insert(at, marker);
    let mut text = words.join(" ");
    if let Some(first) = text.get_mut(0..1) {
        first.make_ascii_uppercase();
    }
    text.push('.');
    text
}

fn title(rng: &mut ChaCha8Rng, label: usize, cfg: &SynthConfig) -> Option<String> {
    if rng.random_bool(cfg.missing_title) {
        return None;
    }
    let class = if rng.random_bool(cfg.title_fidelity) {
        label
    } else {
        rng.random_range(0..3)
    };
    Some(TITLES[class].choose(rng).unwrap().to_string())
}

/// Generates a corpus over the three-class schema. The same config always
/// yields the same dataset.
pub fn generate(cfg: &SynthConfig) -> Result<Dataset> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let total: f64 = cfg.proportions.iter().sum();
    let mut labels = Vec::with_capacity(cfg.size);
    let mut assigned = 0;
    for (class, p) in cfg.proportions.iter().enumerate() {
        let n = if class + 1 == cfg.proportions.len() {
            cfg.size - assigned
        } else {
            (cfg.size as f64 * p / total).round() as usize
        };
        labels.extend(std::iter::repeat_n(class, n));
        assigned += n;
    }
    labels.shuffle(&mut rng);

    let n_train = (cfg.size as f64 * cfg.train_fraction).round() as usize;
    let n_val = (cfg.size as f64 * cfg.val_fraction).round() as usize;
    let instances = labels
        .into_iter()
        .enumerate()
        .map(|(i, label)| {
            let split = if i < n_train {
                Split::Train
            } else if i < n_train + n_val {
                Split::Val
            } else {
                Split::Test
            };
            CitationInstance {
                section_title: title(&mut rng, label, cfg),
                context: sentence(&mut rng, label, cfg),
                label,
                annotation_confidence: Some(rng.random_range(0.6..=1.0)),
                split,
            }
        })
        .collect();
    Ok(Dataset {
        schema: LabelSchema::scicite(),
        instances,
    })
}

/// Seeded z-vectors with labels drawn uniformly over `num_classes`.
///
/// Each expert of the true class fires above 0.5 with probability
/// `1 − noise`; every other expert stays below 0.5 with the same probability.
pub fn generate_z(num_classes: usize, n: usize, noise: f64, seed: u64) -> Result<Vec<(ZVector, usize)>> {
    if num_classes < 2 || !(0.0..=1.0).contains(&noise) {
        return Err(Error::Config("need at least 2 classes and noise in [0, 1]".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n)
        .map(|_| {
            let label = rng.random_range(0..num_classes);
            let values = (0..ARCHITECTURES * num_classes)
                .map(|slot| {
                    let positive = (slot / ARCHITECTURES == label) != rng.random_bool(noise);
                    if positive {
                        rng.random_range(0.5..1.0)
                    } else {
                        rng.random_range(0.0..0.5)
                    }
                })
                .collect();
            (ZVector(values), label)
        })
        .collect())
}
