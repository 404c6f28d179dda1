//! The catalog of level-1 aggregators behind one interface.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::{self, ZVector, DEFAULT_GAMMA};
use crate::meta::{self, FfnnParams, KnnHead, LrHead, MetaConfig};
use crate::train::TrainConfig;
use crate::weighting::{self, ClassWeights, StackingHead, VotingRule};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    Max,
    Avg,
    Majority,
    WMax,
    WAvg,
    WMaj,
    #[serde(rename = "stackingc")]
    StackingC,
    Ffnn,
    Lr,
    Knn,
}

impl Strategy {
    pub const ALL: [Strategy; 10] = [
        Strategy::Max,
        Strategy::Avg,
        Strategy::Majority,
        Strategy::WMax,
        Strategy::WAvg,
        Strategy::WMaj,
        Strategy::StackingC,
        Strategy::Ffnn,
        Strategy::Lr,
        Strategy::Knn,
    ];

    pub const VOTING: [Strategy; 3] = [Strategy::Max, Strategy::Avg, Strategy::Majority];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Max => "max",
            Strategy::Avg => "avg",
            Strategy::Majority => "majority",
            Strategy::WMax => "w-max",
            Strategy::WAvg => "w-avg",
            Strategy::WMaj => "w-maj",
            Strategy::StackingC => "stackingc",
            Strategy::Ffnn => "ffnn",
            Strategy::Lr => "lr",
            Strategy::Knn => "knn",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('_', "-");
        let alias = match key.as_str() {
            "maj" => "majority",
            "wmax" => "w-max",
            "wavg" => "w-avg",
            "wmaj" | "w-majority" => "w-maj",
            "stacking-c" | "stacking" => "stackingc",
            other => other,
        };
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == alias)
            .ok_or_else(|| Error::Config(format!("unknown aggregation strategy {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AggregatorConfig {
    pub gamma: f64,
    pub ffnn: MetaConfig,
    pub lr: TrainConfig,
    pub knn_k: usize,
}

impl Default for AggregatorConfig {
    fn default() -> Self {
        AggregatorConfig {
            gamma: DEFAULT_GAMMA,
            ffnn: MetaConfig::default(),
            lr: meta::lr_head_defaults(),
            knn_k: 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Aggregator {
    Voting { rule: VotingRule },
    Weighted { rule: VotingRule, weights: Vec<ClassWeights> },
    StackingC { heads: Vec<StackingHead> },
    Ffnn { params: FfnnParams },
    Lr { head: LrHead },
    Knn { head: KnnHead },
}

fn rule_for(strategy: Strategy, gamma: f64) -> VotingRule {
    match strategy {
        Strategy::Max | Strategy::WMax => VotingRule::Max,
        Strategy::Avg | Strategy::WAvg => VotingRule::Avg,
        _ => VotingRule::Majority { gamma },
    }
}

fn vote(slots: &[f64], rule: VotingRule) -> usize {
    match rule {
        VotingRule::Max => fusion::max_vote(slots),
        VotingRule::Avg => fusion::avg_vote(slots).1,
        VotingRule::Majority { gamma } => fusion::majority_vote(slots, gamma),
    }
}

/// Per-class view of a slot vector matching the voting rule.
fn vote_scores(slots: &[f64], rule: VotingRule) -> Vec<f64> {
    match rule {
        VotingRule::Max => slots.chunks(2).map(|p| p[0].max(p[1])).collect(),
        VotingRule::Avg => fusion::consensus(slots),
        VotingRule::Majority { gamma } => fusion::vote_tally(slots, gamma)
            .into_iter()
            .map(|v| f64::from(v) / 2.0)
            .collect(),
    }
}

/// Fits `strategy`. Weighting schemes and StackingC use `val_rows`; the
/// learned heads train on `train_rows` and monitor `val_rows`.
pub fn fit(
    strategy: Strategy,
    train_rows: &[(ZVector, usize)],
    val_rows: &[(ZVector, usize)],
    num_classes: usize,
    config: &AggregatorConfig,
) -> Result<Aggregator> {
    let rule = rule_for(strategy, config.gamma);
    Ok(match strategy {
        Strategy::Max | Strategy::Avg | Strategy::Majority => Aggregator::Voting { rule },
        Strategy::WMax | Strategy::WAvg | Strategy::WMaj => Aggregator::Weighted {
            rule,
            weights: weighting::fit_geometric_weights(val_rows, num_classes)?,
        },
        Strategy::StackingC => Aggregator::StackingC {
            heads: weighting::fit_stackingc(val_rows, num_classes)?,
        },
        Strategy::Ffnn => Aggregator::Ffnn {
            params: meta::train_ffnn(train_rows, val_rows, num_classes, &config.ffnn)?.head,
        },
        Strategy::Lr => Aggregator::Lr {
            head: meta::train_lr_head(train_rows, val_rows, num_classes, &config.lr)?.head,
        },
        Strategy::Knn => Aggregator::Knn {
            head: meta::train_knn_head(train_rows, num_classes, config.knn_k)?,
        },
    })
}

impl Aggregator {
    /// Per-class scores: vote shares for voting rules, weighted scores for
    /// the geometric scheme and probabilities for learned heads.
    pub fn scores(&self, z: &ZVector) -> Result<Vec<f64>> {
        match self {
            Aggregator::Voting { rule } => Ok(vote_scores(z, *rule)),
            Aggregator::Weighted { rule, weights } => match rule {
                VotingRule::Avg => weighting::apply_weights(z, weights),
                _ => Ok(vote_scores(&weighting::reweighted_slots(z, weights)?, *rule)),
            },
            Aggregator::StackingC { heads } => Ok(weighting::stackingc_predict(z, heads).0),
            Aggregator::Ffnn { params } => Ok(params.predict(z)?.probabilities),
            Aggregator::Lr { head } => Ok(head.predict(z)?.probabilities),
            Aggregator::Knn { head } => head.vote_fractions(z),
        }
    }

    pub fn predict(&self, z: &ZVector) -> Result<usize> {
        match self {
            Aggregator::Voting { rule } => Ok(vote(z, *rule)),
            Aggregator::Weighted { rule, weights } => weighting::weighted_vote(z, weights, *rule),
            Aggregator::StackingC { heads } => Ok(weighting::stackingc_predict(z, heads).1),
            Aggregator::Ffnn { params } => Ok(params.predict(z)?.label),
            Aggregator::Lr { head } => Ok(head.predict(z)?.label),
            Aggregator::Knn { head } => head.predict(z),
        }
    }

    pub fn predict_all(&self, rows: &[(ZVector, usize)]) -> Result<Vec<usize>> {
        rows.iter().map(|(z, _)| self.predict(z)).collect()
    }
}
