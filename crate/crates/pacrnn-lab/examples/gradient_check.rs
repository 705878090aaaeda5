//! Compares backpropagated gradients with central finite differences on a
//! sample of parameters of each variant.
//!
//! ```text
//! cargo run --release --example gradient_check -- [samples]
//! ```

use pacrnn_lab::data::{generate_toy_corpus, ToyLanguageSpec, ToyParams};
use pacrnn_lab::layers::{flat_get, flat_set, Parameterized};
use pacrnn_lab::pacrnn::{build_model, Model, PacRnnConfig, Variant};
use pacrnn_lab::tensor::Rng;
use pacrnn_lab::trainer::prepare_corpus;

fn main() -> pacrnn_lab::Result<()> {
    let samples: usize = std::env::args().nth(1).map_or(200, |s| s.parse().expect("sample count"));
    let params = ToyParams { feature_dim: 4, phoneme_count: 4, states_per_phoneme: 2, ..ToyParams::default() };
    let spec = ToyLanguageSpec::from_params(&params)?;
    let corpus = generate_toy_corpus(&spec.with_seed(1), 2, (12, 16))?;
    let h = 1e-5;
    for variant in Variant::ALL {
        let cfg = PacRnnConfig {
            pred_hidden: 8,
            projection: 4,
            corr_dnn_hidden: vec![12, 12],
            corr_lstm_cells: vec![8],
            dnn_hidden: vec![12, 12],
            lstm_cells: vec![8, 8],
            ..PacRnnConfig::toy(variant, 4, corpus.state_classes, corpus.phoneme_classes)
        };
        let mut rng = Rng::new(5);
        let model = build_model(&cfg, &mut rng)?;
        let seqs = prepare_corpus(&model, &corpus)?;
        let mut grads = model.zeros_like();
        for s in &seqs {
            model.loss_and_gradient(s, &mut grads)?;
        }
        let total = |m: &Model| -> f64 { seqs.iter().map(|s| m.sequence_loss(s).unwrap()).sum() };
        let mut worst = 0.0f64;
        for _ in 0..samples {
            let i = rng.below(model.parameter_count());
            let mut m = model.clone();
            let orig = flat_get(&m, i);
            flat_set(&mut m, i, orig + h);
            let up = total(&m);
            flat_set(&mut m, i, orig - h);
            let numeric = (up - total(&m)) / (2.0 * h);
            let analytic = flat_get(&grads, i);
            worst = worst.max((numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-3));
        }
        println!("{:<12} {:>6} parameters, max relative error over {} samples: {:.2e}", variant.name(), model.parameter_count(), samples, worst);
    }
    Ok(())
}
