//! Trains WS and WoS ensembles on the synthetic corpus and prints test
//! metrics for every aggregator.
//!
//! Usage: `cargo run --release --example synthetic_run [corpus-seed] [seed]`

use std::time::Instant;

use citefusion::aggregate::{self, AggregatorConfig, Strategy};
use citefusion::corpus::Setting;
use citefusion::eval;
use citefusion::pipeline::{train_pipeline, PipelineConfig};
use citefusion::synth::{generate, SynthConfig};

fn main() -> citefusion::Result<()> {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<u64>().expect("seeds are integers"));
    let corpus_seed = args.next().unwrap_or(SynthConfig::default().seed);
    let seed = args.next().unwrap_or(7);
    let data = generate(&SynthConfig { seed: corpus_seed, ..Default::default() })?;
    let k = data.schema.num_classes();
    for setting in [Setting::WS, Setting::WoS] {
        let start = Instant::now();
        let out = train_pipeline(&data, &PipelineConfig { setting, seed, ..Default::default() })?;
        println!("{setting}: trained in {:.1?}", start.elapsed());
        for e in &out.expert_logs {
            println!("  {}-{} best val loss {:.4} ({} evals)", e.variant, e.class, e.best_val_loss, e.log.len());
        }
        let gold: Vec<usize> = out.z.test.iter().map(|(_, y)| *y).collect();
        for strategy in Strategy::ALL {
            let agg = aggregate::fit(strategy, &out.z.train, &out.z.val, k, &AggregatorConfig::default())?;
            let pred = agg.predict_all(&out.z.test)?;
            let m = eval::metrics(&eval::confusion(&gold, &pred, k)?)?;
            println!("  {strategy:<10} accuracy {:.4}  macro-F1 {:.4}", m.accuracy, m.macro_f1);
        }
    }
    Ok(())
}
