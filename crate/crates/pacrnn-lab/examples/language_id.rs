//! Trains a frame-level language identifier on three toy languages and asks
//! which of them a fourth one is closest to.
//!
//! ```text
//! cargo run --release --example language_id -- [seeds]
//! ```

use pacrnn_lab::multilingual::{select_closest_language, train_lid, FamilyConfig, LidConfig};
use pacrnn_lab::pacrnn::Variant;
use pacrnn_lab::trainer::{ScheduleConfig, TrainOptions};

fn main() -> pacrnn_lab::Result<()> {
    let seeds: u64 = std::env::args().nth(1).map_or(3, |s| s.parse().expect("seed count"));
    let family_config = FamilyConfig::default();
    for seed in 1..=seeds {
        let family = family_config.sample(seed)?;
        let train: Vec<_> = family.sources.iter().map(|l| l.train.clone()).collect();
        let dev: Vec<_> = family.sources.iter().map(|l| l.dev.clone()).collect();
        let options = TrainOptions { schedule: ScheduleConfig { max_epochs: 10, ..ScheduleConfig::toy(Variant::Dnn) }, seed, ..Default::default() };
        let lid = train_lid(&train, &dev, &LidConfig::default(), &options, seed)?;
        let decision = select_closest_language(&lid, &family.target.train)?;
        let scores: Vec<String> = decision.scores.iter().map(|(l, p)| format!("{} {:.2}", l, p)).collect();
        println!(
            "seed {}: {} (derived from {}) is closest to {}  [{}]",
            seed,
            family.target.language(),
            family_config.target.parent.as_deref().unwrap_or("-"),
            decision.language,
            scores.join(", ")
        );
    }
    Ok(())
}
