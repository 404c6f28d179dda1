mod common;

use std::collections::BTreeSet;

use citefusion::aggregate::{self, AggregatorConfig, Strategy};
use citefusion::bundle::EnsembleBundle;
use citefusion::corpus::{format_input, load_dataset, BinaryDataset, LabelSchema, Setting, Split};
use citefusion::experts::train_expert;
use citefusion::features::{Featurizer, Variant, DEFAULT_DIMENSION};
use citefusion::fusion::{self, ZVector};
use citefusion::meta::{self, FfnnParams, MetaConfig};
use citefusion::pipeline::{train_pipeline, PipelineConfig};
use citefusion::synth::{generate, generate_z, SynthConfig};
use citefusion::train::{PlateauConfig, TrainConfig};
use citefusion::weighting;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;

fn toy_texts() -> Vec<(&'static str, u8)> {
    vec![
        ("we use the proposed method", 1),
        ("the method of smith was used", 1),
        ("following their protocol we use", 1),
        ("we adopt the method and protocol", 1),
        ("using the estimator of jones", 1),
        ("prior work studied this topic", 0),
        ("this topic has a long history", 0),
        ("earlier studies reported the topic", 0),
        ("the history of prior studies", 0),
        ("our results agree with jones", 0),
        ("results agree with earlier work", 0),
        ("we use prior results on the topic", 0),
    ]
}

fn toy_set(items: &[(&str, u8)]) -> BinaryDataset {
    BinaryDataset {
        target_class: 0,
        items: items
            .iter()
            .map(|(t, k)| (format_input(None, t, Setting::WoS), *k))
            .collect(),
    }
}

#[test]
fn expert_converges_to_the_penalized_newton_optimum() {
    let items = toy_texts();
    let set = toy_set(&items);
    let featurizer = Featurizer::fit(Variant::General, DEFAULT_DIMENSION, items.iter().map(|(t, _)| *t));
    let wd = 0.01;
    let config = TrainConfig {
        learning_rate: 0.5,
        weight_decay: wd,
        batch_size: items.len(),
        eval_every: 100,
        patience: 1_000,
        plateau: PlateauConfig {
            patience: 1_000,
            ..Default::default()
        },
        max_epochs: 20_000,
        seed: 1,
    };
    let trained = train_expert(&set, &set, featurizer.clone(), Setting::WoS, &config).unwrap();
    let expert = &trained.expert;

    // Oracle: dense design over the buckets the toy corpus touches.
    let sparse: Vec<_> = items.iter().map(|(t, _)| featurizer.featurize(t)).collect();
    let buckets: Vec<u32> = sparse
        .iter()
        .flat_map(|v| v.iter().map(|(i, _)| i))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let dense: Vec<Vec<f64>> = sparse
        .iter()
        .map(|v| {
            let d = v.to_dense(DEFAULT_DIMENSION as usize);
            buckets.iter().map(|&b| d[b as usize]).collect()
        })
        .collect();
    let y: Vec<f64> = items.iter().map(|(_, k)| f64::from(*k)).collect();
    // Decoupled decay wd on the mean loss is a ridge of n·wd on the summed loss.
    let (w, b) = newton_logistic(&dense, &y, 50, items.len() as f64 * wd);

    for (i, (text, _)) in items.iter().enumerate() {
        let oracle = b + dense[i].iter().zip(&w).map(|(x, c)| x * c).sum::<f64>();
        let got = expert.logit(&format_input(None, text, Setting::WoS)).unwrap();
        assert!((got - oracle).abs() < 1e-3, "{text}: {got} vs {oracle}");
    }
    let best = trained.checkpoints.last().unwrap().best_val_loss;
    assert!(best < 0.3, "{best}");
}

#[test]
fn domain_expert_fits_a_toy_split() {
    let items = toy_texts();
    let featurizer = Featurizer::fit(Variant::Domain, DEFAULT_DIMENSION, items.iter().map(|(t, _)| *t));
    let config = TrainConfig {
        max_epochs: 300,
        batch_size: 4,
        ..Default::default()
    };
    let trained = train_expert(&toy_set(&items), &toy_set(&items), featurizer, Setting::WoS, &config).unwrap();
    for (text, k) in &items {
        let p = trained.expert.positive_probability(&format_input(None, text, Setting::WoS)).unwrap();
        assert_eq!(p > 0.5, *k == 1, "{text}: {p}");
    }
    assert!(trained.checkpoints.last().unwrap().best_val_loss < 0.1);
}

#[test]
fn expert_training_is_deterministic() {
    let items = toy_texts();
    let f = Featurizer::fit(Variant::Domain, 1024, items.iter().map(|(t, _)| *t));
    let config = TrainConfig {
        batch_size: 3,
        seed: 9,
        ..Default::default()
    };
    let a = train_expert(&toy_set(&items), &toy_set(&items), f.clone(), Setting::WoS, &config).unwrap();
    let b = train_expert(&toy_set(&items), &toy_set(&items), f, Setting::WoS, &config).unwrap();
    assert_eq!(a.expert, b.expert);
    assert_eq!(a.log, b.log);
}

fn separable_rows(k: usize, n: usize, seed: u64) -> Vec<(ZVector, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let y = i % k;
            let z = (0..2 * k)
                .map(|s| {
                    if s / 2 == y {
                        rng.random_range(0.7..1.0)
                    } else {
                        rng.random_range(0.0..0.3)
                    }
                })
                .collect();
            (ZVector::new(z).unwrap(), y)
        })
        .collect()
}

fn train_accuracy(pred: &[usize], rows: &[(ZVector, usize)]) -> f64 {
    pred.iter().zip(rows).filter(|(p, (_, y))| *p == y).count() as f64 / rows.len() as f64
}

#[test]
fn learned_heads_fit_separable_z() {
    for k in [3, 6] {
        let train = separable_rows(k, 300, 1);
        let val = separable_rows(k, 60, 2);
        let cfg = AggregatorConfig::default();
        for strategy in [Strategy::Ffnn, Strategy::Lr, Strategy::Knn, Strategy::StackingC] {
            let agg = aggregate::fit(strategy, &train, &val, k, &cfg).unwrap();
            let acc = train_accuracy(&agg.predict_all(&train).unwrap(), &train);
            assert_eq!(acc, 1.0, "{strategy} at K={k}");
        }
    }
}

#[test]
fn ffnn_training_is_deterministic_per_seed() {
    let train = generate_z(3, 300, 0.2, 4).unwrap();
    let val = generate_z(3, 100, 0.2, 5).unwrap();
    let cfg = MetaConfig {
        train: TrainConfig {
            max_epochs: 20,
            seed: 3,
            ..MetaConfig::default().train
        },
        ..MetaConfig::default()
    };
    let a = meta::train_ffnn(&train, &val, 3, &cfg).unwrap();
    let b = meta::train_ffnn(&train, &val, 3, &cfg).unwrap();
    assert_eq!(a.head, b.head);
    let other = MetaConfig {
        train: TrainConfig { seed: 4, ..cfg.train.clone() },
        ..cfg
    };
    assert_ne!(meta::train_ffnn(&train, &val, 3, &other).unwrap().head, a.head);
}

#[test]
fn ffnn_forward_pass_matches_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for seed in 0..20 {
        let p = FfnnParams::init(3, 32, seed).unwrap();
        let net = RefNet {
            input: p.input,
            hidden: p.hidden,
            output: p.output,
            w1: &p.w1,
            b1: &p.b1,
            w2: &p.w2,
            b2: &p.b2,
        };
        let z: Vec<f64> = (0..6).map(|_| rng.random()).collect();
        let got = p.predict(&z).unwrap();
        let want = net.probabilities(&z);
        for (a, b) in got.probabilities.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
        let batch = vec![(z.clone(), 1usize)];
        let refs: Vec<(&[f64], usize)> = vec![(z.as_slice(), 1)];
        assert!((p.loss(&refs) - net.loss(&batch)).abs() < 1e-12);
    }
}

#[test]
fn relabelling_classes_permutes_every_aggregator() {
    // Moving class j to position π(j) (its z-pair included) must move every
    // decision accordingly. Continuous z avoids ties.
    let k = 4;
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut perm: Vec<usize> = (0..k).collect();
    perm.shuffle(&mut rng);
    let relabel = |rows: &[(ZVector, usize)]| -> Vec<(ZVector, usize)> {
        rows.iter()
            .map(|(z, y)| {
                let mut out = vec![0.0; z.len()];
                for j in 0..k {
                    out[2 * perm[j]] = z.values()[2 * j];
                    out[2 * perm[j] + 1] = z.values()[2 * j + 1];
                }
                (ZVector::new(out).unwrap(), perm[*y])
            })
            .collect()
    };
    let val = generate_z(k, 200, 0.3, 1).unwrap();
    let test = generate_z(k, 200, 0.3, 2).unwrap();
    let (pval, ptest) = (relabel(&val), relabel(&test));
    let cfg = AggregatorConfig::default();
    for strategy in [
        Strategy::Max,
        Strategy::Avg,
        Strategy::Majority,
        Strategy::WMax,
        Strategy::WAvg,
        Strategy::WMaj,
        Strategy::StackingC,
    ] {
        let a = aggregate::fit(strategy, &val, &val, k, &cfg).unwrap();
        let b = aggregate::fit(strategy, &pval, &pval, k, &cfg).unwrap();
        let pa = a.predict_all(&test).unwrap();
        let pb = b.predict_all(&ptest).unwrap();
        let moved: Vec<usize> = pa.iter().map(|j| perm[*j]).collect();
        assert_eq!(moved, pb, "{strategy}");
    }
    // Geometric weights travel with their class.
    let w = weighting::fit_geometric_weights(&val, k).unwrap();
    let pw = weighting::fit_geometric_weights(&pval, k).unwrap();
    for j in 0..k {
        for a in 0..2 {
            assert!((w[j].weights[a] - pw[perm[j]].weights[a]).abs() < 1e-12);
        }
    }
}

#[test]
fn voting_on_scicite_like_z_is_sane() {
    let rows = generate_z(3, 500, 0.1, 8).unwrap();
    let pred: Vec<usize> = rows.iter().map(|(z, _)| fusion::max_vote(z)).collect();
    assert!(train_accuracy(&pred, &rows) > 0.8);
}

#[test]
fn corpus_round_trips_through_jsonl() {
    let data = generate(&SynthConfig {
        size: 300,
        seed: 3,
        ..Default::default()
    })
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("all.jsonl");
    data.write_jsonl(std::fs::File::create(&path).unwrap()).unwrap();
    let back = load_dataset(&path, &LabelSchema::scicite()).unwrap();
    assert_eq!(back.instances, data.instances);
    assert_eq!(back.split_counts(), data.split_counts());
}

#[test]
fn pipeline_bundles_are_deterministic_and_round_trip() {
    let data = generate(&SynthConfig {
        size: 600,
        ..Default::default()
    })
    .unwrap();
    let cfg = PipelineConfig {
        seed: 5,
        ..Default::default()
    };
    let a = train_pipeline(&data, &cfg).unwrap();
    let b = train_pipeline(&data, &PipelineConfig { parallel: false, ..cfg.clone() }).unwrap();
    let json = a.bundle.to_json().unwrap();
    assert_eq!(json, b.bundle.to_json().unwrap());

    let back = EnsembleBundle::from_json(&json).unwrap();
    assert_eq!(back.to_json().unwrap(), json);
    for inst in data.split(Split::Test).iter().take(20) {
        let input = format_input(inst.section_title.as_deref(), &inst.context, Setting::WS);
        assert_eq!(back.predict(&input).unwrap(), a.bundle.predict(&input).unwrap());
    }
    // z-cache rows agree with fresh extraction through the bundle.
    let test = data.split(Split::Test);
    for ((z, y), inst) in a.z.test.iter().zip(&test).take(20) {
        assert_eq!(*y, inst.label);
        let input = format_input(inst.section_title.as_deref(), &inst.context, Setting::WS);
        assert_eq!(&back.z(&input).unwrap(), z);
    }
}
