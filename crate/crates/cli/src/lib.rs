//! Subcommands of the `citefusion` binary. Every command writes its primary
//! output to the supplied writer so it can be exercised in tests.

pub mod config;
pub mod server;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use citefusion::aggregate::{self, Strategy};
use citefusion::bundle::EnsembleBundle;
use citefusion::corpus::{load_dataset_path, Dataset, LabelSchema, Setting, Split};
use citefusion::eval::{self, MetricsReport};
use citefusion::explain::{self, InstanceMasses};
use citefusion::fusion::{read_z_csv, write_z_csv, ZVector};
use citefusion::pipeline::{self, evaluate_ffnn, extract_z, train_pipeline};
use citefusion::service::{results_json, ClassifyRequest, Ensembles, Mode, RequestItem};
use citefusion::synth;
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::config::Config;

#[derive(Debug, Parser)]
#[command(name = "citefusion", version, about = "Citation intent ensembles: train, aggregate, explain, serve")]
pub struct Cli {
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// JSONL file, or a directory holding train/dev/test JSONL files.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Use the generated synthetic corpus instead of a dataset on disk.
    #[arg(long, conflicts_with = "dataset")]
    pub synthetic: bool,
    /// Label schema: scicite, acl-arc or a TOML file.
    #[arg(long)]
    pub schema: Option<String>,
}

#[derive(Debug, Args)]
pub struct BundleArgs {
    /// Ensemble trained with section titles.
    #[arg(long)]
    pub ws_bundle: Option<PathBuf>,
    /// Ensemble trained without section titles.
    #[arg(long)]
    pub wos_bundle: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the synthetic corpus as train/dev/test JSONL files.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        size: Option<usize>,
    },
    /// Train experts, extract z-vectors and fit the meta-classifier into a bundle.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        setting: Option<Setting>,
        #[arg(long)]
        seed: Option<u64>,
        /// Bundle output path.
        #[arg(long)]
        out: PathBuf,
        /// CSV with every validation step of every expert.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Also write train/val/test z-vector CSVs into this directory.
        #[arg(long)]
        z_dir: Option<PathBuf>,
        /// Train experts one after another instead of in parallel.
        #[arg(long)]
        sequential: bool,
    },
    /// Cache the z-vectors of one split as CSV.
    ExtractZ {
        #[arg(long)]
        bundle: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value = "test")]
        split: Split,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate an aggregation strategy on cached z-vectors.
    Aggregate {
        /// max, avg, majority, w-max, w-avg, w-maj, stackingc, ffnn, lr, knn or all.
        #[arg(long)]
        strategy: String,
        /// Evaluation z-vectors.
        #[arg(long)]
        z: PathBuf,
        /// Training z-vectors (ffnn, lr, knn).
        #[arg(long)]
        train_z: Option<PathBuf>,
        /// Validation z-vectors (weighting schemes, StackingC, early stopping).
        #[arg(long)]
        val_z: Option<PathBuf>,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        knn_k: Option<usize>,
        /// Class names for text output.
        #[arg(long)]
        schema: Option<String>,
        /// json or text.
        #[arg(long, default_value = "json")]
        format: String,
    },
    /// Explanation reports, attribution masses and their correlations.
    Explain {
        #[arg(long)]
        bundle: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value = "test")]
        split: Split,
        /// Directory for reports.jsonl, masses.csv, shapley.csv and correlation CSVs.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        limit: Option<usize>,
        /// Explain a single context and print its report.
        #[arg(long)]
        text: Option<String>,
        #[arg(long)]
        section: Option<String>,
    },
    /// Repeat the full pipeline over several seeds and summarize test metrics.
    Instability {
        #[command(flatten)]
        data: DataArgs,
        /// Seed list such as `1..10` (inclusive) or `1,5,9`.
        #[arg(long)]
        seeds: String,
        #[arg(long)]
        setting: Option<Setting>,
        /// Per-expert best validation losses CSV.
        #[arg(long)]
        losses: Option<PathBuf>,
        /// Full report as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Run the HTTP API.
    Serve {
        #[command(flatten)]
        bundles: BundleArgs,
        #[arg(long)]
        host: Option<String>,
        #[arg(long)]
        port: Option<u16>,
    },
    /// Classify a batch file and print the results JSON.
    Classify {
        #[command(flatten)]
        bundles: BundleArgs,
        /// ClassifyRequest JSON, a JSON array of items or JSONL items.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        mode: Option<Mode>,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Fail unless the output equals this previously saved results file byte for byte.
        #[arg(long)]
        verify: Option<PathBuf>,
    },
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn schema_of(flag: Option<&str>, cfg: &Config) -> Result<LabelSchema> {
    let spec = flag.or(cfg.schema.as_deref()).unwrap_or("scicite");
    Ok(LabelSchema::resolve(spec)?)
}

fn load_data(args: &DataArgs, cfg: &Config) -> Result<Dataset> {
    if args.synthetic {
        return Ok(synth::generate(&cfg.synth)?);
    }
    let path = args
        .dataset
        .as_ref()
        .or(cfg.dataset.as_ref())
        .ok_or_else(|| anyhow!("no dataset given: pass --dataset PATH or --synthetic"))?;
    let schema = schema_of(args.schema.as_deref(), cfg)?;
    load_dataset_path(path, &schema).with_context(|| format!("loading {}", path.display()))
}

fn load_bundle(path: &Path) -> Result<EnsembleBundle> {
    EnsembleBundle::load(path).with_context(|| format!("loading bundle {}", path.display()))
}

fn load_ensembles(args: &BundleArgs, cfg: &Config) -> Result<Ensembles> {
    let ws = args.ws_bundle.as_ref().or(cfg.serve.ws_bundle.as_ref());
    let wos = args.wos_bundle.as_ref().or(cfg.serve.wos_bundle.as_ref());
    if ws.is_none() && wos.is_none() {
        bail!("pass --ws-bundle and/or --wos-bundle");
    }
    Ok(Ensembles::new(
        ws.map(|p| load_bundle(p)).transpose()?,
        wos.map(|p| load_bundle(p)).transpose()?,
    )?)
}

/// Parses `a..b` (inclusive) or a comma-separated list.
pub fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    let text = text.trim();
    if let Some((a, b)) = text.split_once("..") {
        let a: u64 = a.trim().parse().context("seed range start")?;
        let b: u64 = b.trim().trim_start_matches('=').parse().context("seed range end")?;
        if b < a {
            bail!("empty seed range {text}");
        }
        return Ok((a..=b).collect());
    }
    text.split(',')
        .map(|s| s.trim().parse::<u64>().with_context(|| format!("invalid seed {s:?}")))
        .collect()
}

/// Reads a classification batch in any of the accepted layouts.
pub fn read_request(text: &str) -> Result<ClassifyRequest> {
    if let Ok(r) = serde_json::from_str::<ClassifyRequest>(text) {
        return Ok(r);
    }
    if let Ok(items) = serde_json::from_str::<Vec<RequestItem>>(text) {
        return Ok(ClassifyRequest::new(items));
    }
    let items = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str::<RequestItem>(l).with_context(|| format!("input line {}", i + 1)))
        .collect::<Result<Vec<_>>>()?;
    Ok(ClassifyRequest::new(items))
}

fn metrics_for(agg: &aggregate::Aggregator, rows: &[(ZVector, usize)], k: usize) -> Result<MetricsReport> {
    let pred = agg.predict_all(rows)?;
    let gold: Vec<usize> = rows.iter().map(|(_, y)| *y).collect();
    Ok(eval::metrics(&eval::confusion(&gold, &pred, k)?)?)
}

fn read_z(path: &Path) -> Result<Vec<(ZVector, usize)>> {
    read_z_csv(File::open(path).with_context(|| format!("opening {}", path.display()))?)
        .with_context(|| format!("reading {}", path.display()))
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    let cfg = Config::load(cli.config.as_deref())?;
    match cli.command {
        Command::Synth { out: dir, seed, size } => {
            let synth_cfg = synth::SynthConfig {
                seed: seed.unwrap_or(cfg.synth.seed),
                size: size.unwrap_or(cfg.synth.size),
                ..cfg.synth.clone()
            };
            let data = synth::generate(&synth_cfg)?;
            fs::create_dir_all(&dir)?;
            for (split, name) in [(Split::Train, "train"), (Split::Val, "dev"), (Split::Test, "test")] {
                let part = Dataset {
                    schema: data.schema.clone(),
                    instances: data.split(split),
                };
                let path = dir.join(format!("{name}.jsonl"));
                let mut w = create(&path)?;
                part.write_jsonl(&mut w)?;
                w.flush()?;
                writeln!(out, "{} {} instances", path.display(), part.instances.len())?;
            }
        }

        Command::Train {
            data,
            setting,
            seed,
            out: bundle_path,
            log,
            z_dir,
            sequential,
        } => {
            let dataset = load_data(&data, &cfg)?;
            let mut pcfg = cfg.pipeline.clone();
            if let Some(s) = setting {
                pcfg.setting = s;
            }
            if let Some(s) = seed {
                pcfg.seed = s;
            }
            if sequential {
                pcfg.parallel = false;
            }
            let result = train_pipeline(&dataset, &pcfg)?;
            result.bundle.save(&bundle_path)?;
            let names: Vec<String> = dataset.schema.class_names().map(str::to_string).collect();
            if let Some(path) = log {
                let mut w = create(&path)?;
                pipeline::write_training_log(&mut w, &result.expert_logs, &names)?;
                w.flush()?;
            }
            if let Some(dir) = z_dir {
                for split in [Split::Train, Split::Val, Split::Test] {
                    let mut w = create(&dir.join(format!("z_{split}.csv")))?;
                    write_z_csv(&mut w, result.z.get(split))?;
                    w.flush()?;
                }
            }
            let test = if result.z.test.is_empty() {
                None
            } else {
                Some(evaluate_ffnn(&result.bundle, &result.z.test)?)
            };
            let experts: Vec<_> = result
                .expert_logs
                .iter()
                .map(|e| {
                    json!({
                        "class": names[e.class],
                        "variant": e.variant,
                        "seed": e.seed,
                        "best_val_loss": e.best_val_loss,
                        "stopped_early": e.stopped_early,
                    })
                })
                .collect();
            let summary = json!({
                "bundle": bundle_path,
                "setting": pcfg.setting,
                "seed": pcfg.seed,
                "experts": experts,
                "test": test,
            });
            writeln!(out, "{}", serde_json::to_string_pretty(&summary)?)?;
        }

        Command::ExtractZ {
            bundle,
            data,
            split,
            out: path,
        } => {
            let bundle = load_bundle(&bundle)?;
            let dataset = load_data(&data, &cfg)?;
            let rows = extract_z(&bundle.expert_set()?, &dataset.split(split), bundle.setting)?;
            let mut w = create(&path)?;
            write_z_csv(&mut w, &rows)?;
            w.flush()?;
            writeln!(out, "{} z-vectors written to {}", rows.len(), path.display())?;
        }

        Command::Aggregate {
            strategy,
            z,
            train_z,
            val_z,
            gamma,
            knn_k,
            schema,
            format,
        } => {
            let rows = read_z(&z)?;
            let k = rows
                .first()
                .map(|(v, _)| v.num_classes())
                .ok_or_else(|| anyhow!("{} holds no z-vectors", z.display()))?;
            let train_rows = train_z.as_deref().map(read_z).transpose()?;
            let val_rows = val_z.as_deref().map(read_z).transpose()?;
            let mut acfg = cfg.aggregator.clone();
            if let Some(g) = gamma {
                acfg.gamma = g;
            }
            if let Some(n) = knn_k {
                acfg.knn_k = n;
            }
            let strategies: Vec<Strategy> = if strategy.eq_ignore_ascii_case("all") {
                Strategy::ALL
                    .into_iter()
                    .filter(|s| match s {
                        Strategy::Max | Strategy::Avg | Strategy::Majority => true,
                        Strategy::WMax | Strategy::WAvg | Strategy::WMaj | Strategy::StackingC => val_rows.is_some(),
                        _ => train_rows.is_some() && val_rows.is_some(),
                    })
                    .collect()
            } else {
                vec![strategy.parse()?]
            };
            let mut reports = Vec::new();
            for s in strategies {
                let needs_val = !matches!(s, Strategy::Max | Strategy::Avg | Strategy::Majority);
                let needs_train = matches!(s, Strategy::Ffnn | Strategy::Lr | Strategy::Knn);
                if needs_val && val_rows.is_none() && s != Strategy::Knn {
                    bail!("strategy {s} needs --val-z");
                }
                if needs_train && train_rows.is_none() {
                    bail!("strategy {s} needs --train-z");
                }
                let agg = aggregate::fit(
                    s,
                    train_rows.as_deref().unwrap_or(&[]),
                    val_rows.as_deref().unwrap_or(&[]),
                    k,
                    &acfg,
                )?;
                reports.push((s, metrics_for(&agg, &rows, k)?));
            }
            if format == "text" {
                let names: Vec<String> = match schema.as_deref().or(cfg.schema.as_deref()) {
                    Some(spec) => LabelSchema::resolve(spec)?.class_names().map(str::to_string).collect(),
                    None => (0..k).map(|j| format!("class{j}")).collect(),
                };
                if reports.len() == 1 {
                    write!(out, "{}", reports[0].1.render_text(&names))?;
                } else {
                    writeln!(out, "{:<10}  {:>8}  {:>8}  {:>8}  {:>11}", "strategy", "accuracy", "macro-F1", "micro-F1", "weighted-F1")?;
                    for (s, m) in &reports {
                        writeln!(
                            out,
                            "{:<10}  {:>8.4}  {:>8.4}  {:>8.4}  {:>11.4}",
                            s.name(),
                            m.accuracy,
                            m.macro_f1,
                            m.micro_f1,
                            m.weighted_f1
                        )?;
                    }
                }
            } else if format == "json" {
                let value = if reports.len() == 1 {
                    serde_json::to_value(&reports[0].1)?
                } else {
                    serde_json::Value::Object(
                        reports
                            .iter()
                            .map(|(s, m)| Ok((s.name().to_string(), serde_json::to_value(m)?)))
                            .collect::<Result<_>>()?,
                    )
                };
                writeln!(out, "{}", serde_json::to_string_pretty(&value)?)?;
            } else {
                bail!("unknown format {format:?} (json, text)");
            }
        }

        Command::Explain {
            bundle,
            data,
            split,
            out_dir,
            limit,
            text,
            section,
        } => {
            let bundle = load_bundle(&bundle)?;
            if let Some(text) = text {
                let report = bundle.explain(0, section.as_deref(), &text)?;
                writeln!(out, "{}", serde_json::to_string_pretty(&report)?)?;
                return Ok(());
            }
            let dir = out_dir.ok_or_else(|| anyhow!("pass --out-dir for dataset explanations or --text for one context"))?;
            let dataset = load_data(&data, &cfg)?;
            let mut instances = dataset.split(split);
            if let Some(n) = limit {
                instances.truncate(n);
            }
            fs::create_dir_all(&dir)?;
            let names: Vec<String> = bundle.schema.class_names().map(str::to_string).collect();
            let mut reports_w = create(&dir.join("reports.jsonl"))?;
            let mut shapley_w = create(&dir.join("shapley.csv"))?;
            let slot_names: Vec<String> = bundle
                .experts
                .iter()
                .map(|e| format!("{}-{}", e.variant, names[e.target_class]))
                .collect();
            writeln!(shapley_w, "instance,predicted,gold,{}", slot_names.join(","))?;
            let mut masses = Vec::with_capacity(instances.len());
            for (i, inst) in instances.iter().enumerate() {
                let report = bundle.explain(i, inst.section_title.as_deref(), &inst.context)?;
                serde_json::to_writer(&mut reports_w, &report)?;
                writeln!(reports_w)?;
                let phi: Vec<String> = report.shapley.phi.iter().map(|v| format!("{v:.6}")).collect();
                writeln!(
                    shapley_w,
                    "{i},{},{},{}",
                    names[report.predicted_class],
                    names[inst.label],
                    phi.join(",")
                )?;
                masses.push(InstanceMasses {
                    instance: i,
                    predicted: report.predicted_class,
                    masses: report.experts.into_iter().map(|e| e.mass).collect(),
                });
            }
            reports_w.flush()?;
            shapley_w.flush()?;
            let stats = explain::mass_statistics(&masses, bundle.num_classes());
            let mut w = create(&dir.join("masses.csv"))?;
            explain::write_mass_table(&mut w, &stats, &names)?;
            w.flush()?;
            for g in stats.groups.iter().filter(|g| !g.too_small) {
                let path = dir.join(format!("correlation_{}.csv", names[g.predicted_class].to_lowercase()));
                let mut w = create(&path)?;
                explain::write_correlation_matrix(&mut w, g, &names)?;
                w.flush()?;
            }
            let mut w = create(&dir.join("mass_statistics.json"))?;
            serde_json::to_writer_pretty(&mut w, &stats)?;
            w.flush()?;
            for g in stats.groups.iter().filter(|g| g.too_small) {
                writeln!(
                    out,
                    "note: predicted class {} has {} instance(s); statistics omitted",
                    names[g.predicted_class], g.count
                )?;
            }
            writeln!(out, "explained {} instances into {}", instances.len(), dir.display())?;
        }

        Command::Instability {
            data,
            seeds,
            setting,
            losses,
            json: json_path,
        } => {
            let dataset = load_data(&data, &cfg)?;
            let seeds = parse_seeds(&seeds)?;
            let mut pcfg = cfg.pipeline.clone();
            if let Some(s) = setting {
                pcfg.setting = s;
            }
            let report = pipeline::instability_run(&dataset, &pcfg, &seeds)?;
            report.write_csv(&mut *out)?;
            if let Some(path) = losses {
                let mut w = create(&path)?;
                report.write_expert_losses_csv(&mut w)?;
                w.flush()?;
            }
            if let Some(path) = json_path {
                let mut w = create(&path)?;
                serde_json::to_writer_pretty(&mut w, &report)?;
                w.flush()?;
            }
            if let Some(msg) = &report.failure {
                bail!("partial report: {msg}");
            }
        }

        Command::Serve { bundles, host, port } => {
            let ensembles = Arc::new(load_ensembles(&bundles, &cfg)?);
            let host = host.unwrap_or_else(|| cfg.serve.host.clone());
            let port = port.unwrap_or(cfg.serve.port);
            let addr: SocketAddr = format!("{host}:{port}")
                .parse()
                .with_context(|| format!("invalid address {host}:{port}"))?;
            tokio::runtime::Runtime::new()?.block_on(server::serve(addr, ensembles, cfg.serve.max_body_bytes))?;
        }

        Command::Classify {
            bundles,
            input,
            mode,
            threshold,
            out: out_path,
            verify,
        } => {
            let ensembles = load_ensembles(&bundles, &cfg)?;
            let text = fs::read_to_string(&input).with_context(|| format!("reading {}", input.display()))?;
            let mut request = read_request(&text)?;
            if let Some(m) = mode {
                request.mode = m;
            }
            if let Some(t) = threshold {
                request.threshold = t;
            }
            let body = results_json(&ensembles.classify(&request)?)?;
            if let Some(expected) = verify {
                let saved = fs::read(&expected).with_context(|| format!("reading {}", expected.display()))?;
                if saved != body.as_bytes() {
                    bail!("results differ from {}", expected.display());
                }
                writeln!(out, "verified: results match {}", expected.display())?;
                return Ok(());
            }
            match out_path {
                Some(p) => {
                    fs::write(&p, &body)?;
                    writeln!(out, "{} results written to {}", request.items.len(), p.display())?;
                }
                None => out.write_all(body.as_bytes())?,
            }
        }
    }
    Ok(())
}
