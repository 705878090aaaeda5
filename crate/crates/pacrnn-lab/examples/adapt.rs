//! Trains a model on one toy language and carries it over to another with a
//! different phoneme inventory, keeping the hidden layers and replacing the
//! output layers.
//!
//! ```text
//! cargo run --release --example adapt -- [variant] [epochs]
//! ```

use pacrnn_lab::data::{generate_toy_corpus, ToyLanguageSpec, ToyParams};
use pacrnn_lab::multilingual::{adapt_network, AdaptMode};
use pacrnn_lab::pacrnn::{build_model, PacRnnConfig, Variant};
use pacrnn_lab::tensor::Rng;
use pacrnn_lab::trainer::{evaluate, train_model, ScheduleConfig, TrainOptions};

fn main() -> pacrnn_lab::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let variant: Variant = args.get(1).map_or(Ok(Variant::PacRnnDnn), |s| s.parse())?;
    let epochs: usize = args.get(2).map_or(15, |s| s.parse().expect("epoch count"));
    let corpus = |language: &str, phonemes: usize, seed: u64| -> pacrnn_lab::Result<_> {
        let spec = ToyLanguageSpec::from_params(&ToyParams {
            language: language.into(),
            phoneme_count: phonemes,
            feature_dim: 16,
            param_seed: seed,
            ..ToyParams::default()
        })?;
        Ok((generate_toy_corpus(&spec.with_seed(seed + 1), 150, (60, 120))?, generate_toy_corpus(&spec.with_seed(seed + 2), 20, (60, 120))?))
    };
    let (src_train, src_dev) = corpus("source", 10, 11)?;
    let (tgt_train, tgt_dev) = corpus("target", 8, 21)?;

    let options = TrainOptions { schedule: ScheduleConfig { max_epochs: epochs, ..ScheduleConfig::toy(variant) }, seed: 1, ..Default::default() };
    let cfg = PacRnnConfig::toy(variant, 16, src_train.state_classes, src_train.phoneme_classes);
    let donor = train_model(build_model(&cfg, &mut Rng::new(1))?, &src_train, &src_dev, &options, |_, _| Ok(()))?.model;
    println!("donor: {} dev FER on its own language {:.3}", variant, evaluate(&donor, &src_dev)?.fer);

    let run = adapt_network(donor, &tgt_train, &tgt_dev, AdaptMode::ReplaceHead, &options, 2)?;
    for r in &run.records {
        println!("  adapt epoch {:>2}: dev J {:.4} dev FER {:.4}", r.epoch, r.dev_j, r.dev_fer);
    }
    let adapted = run.model;
    println!(
        "adapted: {} states / {} phonemes, dev FER {:.3}",
        adapted.config.state_classes,
        adapted.config.phoneme_classes,
        evaluate(&adapted, &tgt_dev)?.fer
    );
    Ok(())
}
