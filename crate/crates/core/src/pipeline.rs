//! End-to-end training: 2K experts, z-vector extraction, level-1 heads,
//! evaluation and the multi-seed instability harness.

use std::io::Write;
use std::thread;

use serde::{Deserialize, Serialize};

use crate::bundle::{EnsembleBundle, BUNDLE_FORMAT, BUNDLE_VERSION};
use crate::corpus::{format_instance, ova_binarize, CitationInstance, Dataset, Setting, Split};
use crate::error::{Error, Result};
use crate::eval::{self, ExpertLabel, InstabilityReport, MetricsReport, RunRecord};
use crate::experts::{train_expert, BinaryExpert, TrainedExpert};
use crate::explain::mean_baseline;
use crate::features::{Featurizer, Variant, DEFAULT_DIMENSION};
use crate::fusion::{ExpertSet, ZVector, ARCHITECTURES};
use crate::meta::{self, MetaConfig};
use crate::train::{EvalRecord, TrainConfig};
use crate::weighting;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub setting: Setting,
    /// Master seed; every expert and the head derive their own seed from it.
    pub seed: u64,
    pub dimension: u32,
    pub expert: TrainConfig,
    pub meta: MetaConfig,
    /// Train the 2K experts on separate threads. Results do not depend on it.
    pub parallel: bool,
    /// Also fit geometric weights and StackingC heads into the bundle.
    pub fit_weighting: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            setting: Setting::WS,
            seed: 0,
            dimension: DEFAULT_DIMENSION,
            expert: TrainConfig::default(),
            meta: MetaConfig::default(),
            parallel: true,
            fit_weighting: true,
        }
    }
}

/// SplitMix64 step: decorrelated per-job seeds from one master seed.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut z = master
        .wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(stream.wrapping_add(1)));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpertLog {
    pub class: usize,
    pub variant: Variant,
    pub seed: u64,
    pub best_val_loss: f64,
    pub stopped_early: bool,
    pub log: Vec<EvalRecord>,
}

/// Cached z-vectors with gold labels for each split.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ZCache {
    pub train: Vec<(ZVector, usize)>,
    pub val: Vec<(ZVector, usize)>,
    pub test: Vec<(ZVector, usize)>,
}

impl ZCache {
    pub fn get(&self, split: Split) -> &[(ZVector, usize)] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PipelineOutput {
    pub bundle: EnsembleBundle,
    pub expert_logs: Vec<ExpertLog>,
    pub meta_log: Vec<EvalRecord>,
    pub z: ZCache,
}

/// Trains the 2K experts of one setting. Returned in z-vector slot order.
pub fn train_experts(dataset: &Dataset, cfg: &PipelineConfig) -> Result<Vec<TrainedExpert>> {
    cfg.expert.validate()?;
    let train = dataset.split(Split::Train);
    let val = dataset.split(Split::Val);
    if train.is_empty() {
        return Err(Error::TrainingData("the train split is empty".into()));
    }
    if val.is_empty() {
        return Err(Error::TrainingData("the validation split is empty".into()));
    }
    let texts: Vec<String> = train
        .iter()
        .map(|inst| format_instance(inst, cfg.setting).text)
        .collect();
    let featurizers = [
        Featurizer::fit(Variant::Domain, cfg.dimension, texts.iter().map(String::as_str)),
        Featurizer::unfitted(Variant::General, cfg.dimension),
    ];
    let k = dataset.schema.num_classes();
    let jobs: Vec<(usize, Variant)> = (0..k)
        .flat_map(|j| Variant::ALL.into_iter().map(move |v| (j, v)))
        .collect();
    let run = |slot: usize, (class, variant): (usize, Variant)| -> Result<TrainedExpert> {
        let config = TrainConfig {
            seed: derive_seed(cfg.seed, slot as u64),
            ..cfg.expert.clone()
        };
        train_expert(
            &ova_binarize(&train, class, cfg.setting),
            &ova_binarize(&val, class, cfg.setting),
            featurizers[variant.slot()].clone(),
            cfg.setting,
            &config,
        )
    };
    if cfg.parallel {
        thread::scope(|s| {
            let handles: Vec<_> = jobs
                .iter()
                .enumerate()
                .map(|(slot, job)| s.spawn(move || run(slot, *job)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("expert training thread panicked"))
                .collect()
        })
    } else {
        jobs.iter().enumerate().map(|(slot, job)| run(slot, *job)).collect()
    }
}

/// z-vectors of `instances` formatted for `setting`.
pub fn extract_z(
    experts: &ExpertSet<'_>,
    instances: &[CitationInstance],
    setting: Setting,
) -> Result<Vec<(ZVector, usize)>> {
    instances
        .iter()
        .map(|inst| Ok((experts.assemble_z(&format_instance(inst, setting))?, inst.label)))
        .collect()
}

pub fn extract_z_cache(experts: &ExpertSet<'_>, dataset: &Dataset, setting: Setting) -> Result<ZCache> {
    Ok(ZCache {
        train: extract_z(experts, &dataset.split(Split::Train), setting)?,
        val: extract_z(experts, &dataset.split(Split::Val), setting)?,
        test: extract_z(experts, &dataset.split(Split::Test), setting)?,
    })
}

/// Full pipeline: experts, z-vectors, FFNN on train-split z-vectors with
/// validation-split early stopping, optional weighting schemes.
pub fn train_pipeline(dataset: &Dataset, cfg: &PipelineConfig) -> Result<PipelineOutput> {
    let k = dataset.schema.num_classes();
    let trained = train_experts(dataset, cfg)?;
    let expert_logs = trained
        .iter()
        .map(|t| ExpertLog {
            class: t.expert.target_class,
            variant: t.expert.variant,
            seed: t.expert.seed,
            best_val_loss: t.checkpoints.last().map_or(f64::INFINITY, |c| c.best_val_loss),
            stopped_early: t.stopped_early,
            log: t.log.clone(),
        })
        .collect();
    let experts: Vec<BinaryExpert> = trained.into_iter().map(|t| t.expert).collect();
    let z = extract_z_cache(&ExpertSet::new(k, &experts)?, dataset, cfg.setting)?;

    let meta_cfg = MetaConfig {
        train: TrainConfig {
            seed: derive_seed(cfg.seed, (ARCHITECTURES * k) as u64),
            ..cfg.meta.train.clone()
        },
        ..cfg.meta.clone()
    };
    let head = meta::train_ffnn(&z.train, &z.val, k, &meta_cfg)?;
    let baseline = mean_baseline(z.train.iter().map(|(v, _)| v.values())).expect("non-empty train split");
    let (weights, stackingc) = if cfg.fit_weighting {
        (
            Some(weighting::fit_geometric_weights(&z.val, k)?),
            Some(weighting::fit_stackingc(&z.val, k)?),
        )
    } else {
        (None, None)
    };
    let bundle = EnsembleBundle {
        format: BUNDLE_FORMAT.to_string(),
        version: BUNDLE_VERSION,
        schema: dataset.schema.clone(),
        setting: cfg.setting,
        seed: cfg.seed,
        experts,
        ffnn: head.head,
        baseline,
        weights,
        stackingc,
    };
    Ok(PipelineOutput {
        bundle,
        expert_logs,
        meta_log: head.log,
        z,
    })
}

/// Metrics of the bundle's FFNN head on cached rows.
pub fn evaluate_ffnn(bundle: &EnsembleBundle, rows: &[(ZVector, usize)]) -> Result<MetricsReport> {
    let pred = rows
        .iter()
        .map(|(z, _)| bundle.ffnn.predict(z).map(|p| p.label))
        .collect::<Result<Vec<_>>>()?;
    let gold: Vec<usize> = rows.iter().map(|(_, y)| *y).collect();
    eval::metrics(&eval::confusion(&gold, &pred, bundle.num_classes())?)
}

/// Writes every evaluation step of every expert as CSV.
pub fn write_training_log<W: Write>(out: W, logs: &[ExpertLog], class_names: &[String]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "expert",
        "seed",
        "step",
        "epoch",
        "val_loss",
        "best_loss",
        "learning_rate",
        "improved",
    ])?;
    for e in logs {
        let name = format!("{}-{}", e.variant, class_names[e.class]);
        for r in &e.log {
            w.write_record([
                name.clone(),
                e.seed.to_string(),
                r.step.to_string(),
                r.epoch.to_string(),
                format!("{:.6}", r.val_loss),
                format!("{:.6}", r.best_loss),
                format!("{:e}", r.learning_rate),
                r.improved.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn run_once(dataset: &Dataset, cfg: &PipelineConfig, run: usize, seed: u64) -> Result<RunRecord> {
    let out = train_pipeline(
        dataset,
        &PipelineConfig {
            seed,
            fit_weighting: false,
            ..cfg.clone()
        },
    )?;
    let m = evaluate_ffnn(&out.bundle, &out.z.test)?;
    Ok(RunRecord {
        run,
        seed,
        accuracy: m.accuracy,
        macro_f1: m.macro_f1,
        expert_losses: out.expert_logs.iter().map(|e| e.best_val_loss).collect(),
    })
}

/// Repeats the whole pipeline once per seed and reports test metrics. A
/// failing run stops the harness and marks the report partial.
pub fn instability_run(dataset: &Dataset, cfg: &PipelineConfig, seeds: &[u64]) -> Result<InstabilityReport> {
    if seeds.len() < 2 {
        return Err(Error::Config("the instability harness needs at least 2 seeds".into()));
    }
    let experts = (0..dataset.schema.num_classes())
        .flat_map(|j| {
            Variant::ALL.into_iter().map(move |variant| ExpertLabel {
                class: dataset.schema.classes()[j].name.clone(),
                variant,
            })
        })
        .collect();
    let mut runs = Vec::with_capacity(seeds.len());
    let mut failure = None;
    for (i, seed) in seeds.iter().enumerate() {
        match run_once(dataset, cfg, i + 1, *seed) {
            Ok(r) => runs.push(r),
            Err(e) => {
                failure = Some(format!("run {} (seed {seed}) failed: {e}", i + 1));
                break;
            }
        }
    }
    let mut report = InstabilityReport::new(runs, experts);
    if failure.is_some() {
        report.partial = true;
        report.failure = failure;
    }
    Ok(report)
}
