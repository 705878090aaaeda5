//! Trains a two-stage multilingual bottleneck cascade on three toy languages
//! and extracts features for a fourth one.
//!
//! ```text
//! cargo run --release --example bottleneck_features -- [seed]
//! ```

use pacrnn_lab::multilingual::{evaluate_multilingual, FamilyConfig, MultiHeadSpec, SbnPipeline};
use pacrnn_lab::pacrnn::Variant;
use pacrnn_lab::trainer::{ScheduleConfig, TrainOptions};

fn main() -> pacrnn_lab::Result<()> {
    let seed: u64 = std::env::args().nth(1).map_or(1, |s| s.parse().expect("seed"));
    let family_config = FamilyConfig { source_utterances: (60, 15), ..FamilyConfig::default() };
    let family = family_config.sample(seed)?;
    let train: Vec<_> = family.sources.iter().map(|l| l.train.clone()).collect();
    let dev: Vec<_> = family.sources.iter().map(|l| l.dev.clone()).collect();
    let options = TrainOptions { schedule: ScheduleConfig { max_epochs: 5, ..ScheduleConfig::toy(Variant::Dnn) }, seed, ..Default::default() };
    let spec = MultiHeadSpec::toy(family_config.base.feature_dim);
    let sbn = SbnPipeline::train(&train, &dev, &spec, &spec, &options, seed)?;
    println!(
        "stage 1: {} -> bottleneck {}, heads {:?}",
        sbn.stage1.input_width(),
        sbn.stage1.bn_width(),
        sbn.stage1.heads.keys().collect::<Vec<_>>()
    );
    println!("stage 2: {} -> bottleneck {}", sbn.stage2.input_width(), sbn.stage2.bn_width());
    let e = evaluate_multilingual(&sbn.stage1, &dev)?;
    println!("stage 1 pooled dev FER {:.3}", e.fer);

    let features = sbn.corpus_features(&family.target.train)?;
    println!(
        "{}: {} utterances of {}-dim features",
        features.language,
        features.utterances.len(),
        features.feature_dim().unwrap_or(0)
    );
    Ok(())
}
