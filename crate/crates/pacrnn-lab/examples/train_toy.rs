//! Trains the four model variants on one toy corpus and prints the
//! learning curves.
//!
//! ```text
//! cargo run --release --example train_toy -- [seed] [epochs]
//! ```

use std::time::Instant;

use pacrnn_lab::data::{generate_toy_corpus, ToyLanguageSpec, ToyParams};
use pacrnn_lab::pacrnn::{build_model, PacRnnConfig, Variant};
use pacrnn_lab::tensor::Rng;
use pacrnn_lab::trainer::{train_model, ScheduleConfig, TrainOptions};

fn main() -> pacrnn_lab::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let seed: u64 = args.get(1).map_or(1, |s| s.parse().unwrap());
    let epochs: usize = args.get(2).map_or(15, |s| s.parse().unwrap());
    let spec = ToyLanguageSpec::from_params(&ToyParams::default())?;
    let train = generate_toy_corpus(&spec.with_seed(100 + seed), 200, (60, 140))?;
    let dev = generate_toy_corpus(&spec.with_seed(200 + seed), 50, (60, 140))?;
    println!("next-phoneme entropy {:.3} (uniform {:.3})", spec.next_phoneme_entropy(), (spec.phoneme_count as f64).ln());
    for variant in Variant::ALL {
        let cfg = PacRnnConfig::toy(variant, spec.feature_dim, train.state_classes, train.phoneme_classes);
        let model = build_model(&cfg, &mut Rng::new(seed))?;
        let options = TrainOptions {
            schedule: ScheduleConfig { max_epochs: epochs, ..ScheduleConfig::toy(variant) },
            seed,
            ..Default::default()
        };
        let start = Instant::now();
        let run = train_model(model, &train, &dev, &options, |r, _| {
            println!(
                "  {:<12} epoch {:>2} lr {:.4} train J {:8.4} dev J {:8.4} dev FER {:.4}  [{:.1}s]",
                variant.name(), r.epoch, r.learning_rate, r.train_j, r.dev_j, r.dev_fer, start.elapsed().as_secs_f64()
            );
            Ok(())
        })?;
        println!("{}: final FER {:.4}", variant, run.final_dev_fer().unwrap());
    }
    Ok(())
}
