//! Hashed unigram+bigram featurizers for the two expert variants.
//!
//! `Domain` keeps case, bracketed reference markers (`[12]`, `[3,5]`) and
//! numeric tokens, and weights features by idf. `General` lowercases, drops
//! bracketed markers and digits, and uses raw counts.

use std::fmt;
use std::hash::Hasher;
use std::sync::OnceLock;

use fnv::FnvHasher;
use regex::Regex;
use serde::{Deserialize, Serialize};

pub const DEFAULT_DIMENSION: u32 = 1 << 15;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Domain,
    General,
}

impl Variant {
    pub const ALL: [Variant; 2] = [Variant::Domain, Variant::General];

    /// Slot offset of this variant inside a class pair of the z-vector.
    pub fn slot(self) -> usize {
        match self {
            Variant::Domain => 0,
            Variant::General => 1,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Variant::Domain => f.write_str("domain"),
            Variant::General => f.write_str("general"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    /// Byte offsets into the analyzed text.
    pub start: usize,
    pub end: usize,
}

fn domain_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"\[[^\[\]]{1,40}\]|\p{L}[\p{L}\p{N}]*(?:['’-][\p{L}\p{N}]+)*|\p{N}+(?:[.,]\p{N}+)*")
            .unwrap()
    })
}

fn general_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\[[^\[\]]*\]|\p{L}+(?:['’]\p{L}+)*").unwrap())
}

pub fn tokenize(variant: Variant, text: &str) -> Vec<Token> {
    match variant {
        Variant::Domain => domain_pattern()
            .find_iter(text)
            .map(|m| Token {
                text: m.as_str().to_string(),
                start: m.start(),
                end: m.end(),
            })
            .collect(),
        Variant::General => general_pattern()
            .find_iter(text)
            .filter(|m| !m.as_str().starts_with('['))
            .map(|m| Token {
                text: m.as_str().to_lowercase(),
                start: m.start(),
                end: m.end(),
            })
            .collect(),
    }
}

/// Sorted sparse vector with unique indices.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SparseVec {
    pub indices: Vec<u32>,
    pub values: Vec<f64>,
}

impl SparseVec {
    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| *v == 0.0)
    }

    pub fn dot(&self, dense: &[f64]) -> f64 {
        self.iter().map(|(i, v)| dense[i as usize] * v).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.indices.iter().copied().zip(self.values.iter().copied())
    }

    pub fn to_dense(&self, dimension: usize) -> Vec<f64> {
        let mut out = vec![0.0; dimension];
        for (i, v) in self.iter() {
            out[i as usize] = v;
        }
        out
    }
}

/// Which token occurrence(s) produced a feature increment.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Owner {
    Unigram(usize),
    Bigram(usize, usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Increment {
    pub bucket: u32,
    /// Feature value added by this occurrence.
    pub value: f64,
    pub owner: Owner,
}

/// Tokens of a text together with the feature increments they produce.
#[derive(Clone, Debug, PartialEq)]
pub struct Analysis {
    pub tokens: Vec<Token>,
    pub increments: Vec<Increment>,
}

impl Analysis {
    pub fn to_sparse(&self) -> SparseVec {
        aggregate(&self.increments)
    }
}

fn aggregate(increments: &[Increment]) -> SparseVec {
    let mut pairs: Vec<(u32, f64)> = increments.iter().map(|i| (i.bucket, i.value)).collect();
        pairs.sort_by_key(|p| p.0);
        let mut out = SparseVec::default();
        for (idx, val) in pairs {
            match out.indices.last() {
                Some(&last) if last == idx => *out.values.last_mut().unwrap() += val,
                _ => {
                    out.indices.push(idx);
                    out.values.push(val);
                }
            }
    }
    out
}

/// Frozen inverse-document-frequency table over hash buckets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdfTable {
    pub documents: usize,
    /// (bucket, idf) for buckets seen during fitting, sorted by bucket.
    pub seen: Vec<(u32, f64)>,
    /// idf of buckets never seen during fitting.
    pub unseen: f64,
}

impl IdfTable {
    pub fn get(&self, bucket: u32) -> f64 {
        match self.seen.binary_search_by_key(&bucket, |p| p.0) {
            Ok(i) => self.seen[i].1,
            Err(_) => self.unseen,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Featurizer {
    pub variant: Variant,
    pub dimension: u32,
    pub idf: Option<IdfTable>,
}

fn bucket(key: &str, dimension: u32) -> u32 {
    let mut h = FnvHasher::default();
    h.write(key.as_bytes());
    (h.finish() % u64::from(dimension)) as u32
}

fn smooth_idf(documents: usize, df: usize) -> f64 {
    ((1.0 + documents as f64) / (1.0 + df as f64)).ln() + 1.0
}

impl Featurizer {
    /// Featurizer without idf statistics (the `General` variant never uses them).
    pub fn unfitted(variant: Variant, dimension: u32) -> Self {
        assert!(dimension > 0, "featurizer dimension must be positive");
        Featurizer {
            variant,
            dimension,
            idf: None,
        }
    }

    /// Freezes corpus statistics. Only the `Domain` variant keeps an idf table.
    pub fn fit<'a>(variant: Variant, dimension: u32, corpus: impl IntoIterator<Item = &'a str>) -> Self {
        let mut f = Self::unfitted(variant, dimension);
        if variant == Variant::General {
            return f;
        }
        let mut df: std::collections::BTreeMap<u32, usize> = Default::default();
        let mut documents = 0usize;
        for text in corpus {
            documents += 1;
            let mut buckets: Vec<u32> = f.raw_keys(&tokenize(variant, text)).into_iter().map(|(b, _)| b).collect();
            buckets.sort_unstable();
            buckets.dedup();
            for b in buckets {
                *df.entry(b).or_default() += 1;
            }
        }
        f.idf = Some(IdfTable {
            documents,
            seen: df.into_iter().map(|(b, n)| (b, smooth_idf(documents, n))).collect(),
            unseen: smooth_idf(documents, 0),
        });
        f
    }

    fn raw_keys(&self, tokens: &[Token]) -> Vec<(u32, Owner)> {
        let mut out = Vec::with_capacity(tokens.len() * 2);
        for (i, t) in tokens.iter().enumerate() {
            out.push((bucket(&format!("u\u{1}{}", t.text), self.dimension), Owner::Unigram(i)));
            if let Some(next) = tokens.get(i + 1) {
                out.push((
                    bucket(&format!("b\u{1}{}\u{1}{}", t.text, next.text), self.dimension),
                    Owner::Bigram(i, i + 1),
                ));
            }
        }
        out
    }

    pub fn analyze(&self, text: &str) -> Analysis {
        let tokens = tokenize(self.variant, text);
        let keys = self.raw_keys(&tokens);
        let increments: Vec<Increment> = keys
            .into_iter()
            .map(|(bucket, owner)| Increment {
                bucket,
                value: self.idf.as_ref().map_or(1.0, |t| t.get(bucket)),
                owner,
            })
            .collect();
        Analysis { tokens, increments }
    }

    pub fn featurize(&self, text: &str) -> SparseVec {
        self.analyze(text).to_sparse()
    }
}
