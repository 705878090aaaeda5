//! Closest-language transfer on a toy language family, against random
//! initialisation on the same target data.
//!
//! ```text
//! cargo run --release --example transfer -- [variant] [seeds]
//! ```

use std::time::Instant;

use pacrnn_lab::multilingual::{run_transfer_trial, FamilyConfig, PipelineConfig, TransferConfig};
use pacrnn_lab::pacrnn::Variant;

fn main() -> pacrnn_lab::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let variant: Variant = args.get(1).map_or(Ok(Variant::PacRnnDnn), |s| s.parse())?;
    let seeds: u64 = args.get(2).map_or(3, |s| s.parse().expect("seed count"));
    let config = TransferConfig { pipeline: PipelineConfig::toy(variant), ..TransferConfig::default() };
    let show = |e: Option<usize>| e.map_or("never".to_string(), |e| e.to_string());
    for seed in 1..=seeds {
        let start = Instant::now();
        let trial = run_transfer_trial(&FamilyConfig::default(), &config, seed)?;
        println!(
            "seed {}: closest {} ({:?}), epochs to FER {}: transfer {} random {}; final FER {:.3} vs {:.3}  [{:.0}s]",
            seed,
            trial.outcome.decision.language,
            trial.outcome.decision.scores,
            config.threshold,
            show(trial.closest_epochs),
            show(trial.random_epochs),
            trial.closest_final_fer(),
            trial.random_final_fer(),
            start.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
