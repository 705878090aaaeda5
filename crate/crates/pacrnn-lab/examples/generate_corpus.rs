//! Samples a toy language, writes a corpus, reads it back and prints a few
//! statistics.
//!
//! ```text
//! cargo run --example generate_corpus -- [out.corpus]
//! ```

use pacrnn_lab::data::{generate_toy_corpus, read_corpus, write_corpus, ToyLanguageSpec, ToyParams};

fn main() -> pacrnn_lab::Result<()> {
    let path = std::env::args().nth(1).unwrap_or_else(|| std::env::temp_dir().join("toy.corpus").display().to_string());
    let params = ToyParams { feature_dim: 8, ..ToyParams::default() };
    let spec = ToyLanguageSpec::from_params(&params)?;
    let corpus = generate_toy_corpus(&spec.with_seed(7), 20, (60, 140))?;
    write_corpus(&corpus, &path)?;
    let back = read_corpus(&path)?;
    assert_eq!(back, corpus);

    println!("{}: {} utterances, {} frames", path, back.utterances.len(), back.total_frames());
    println!(
        "{} phonemes x {} states = {} state classes, {} feature dims",
        spec.phoneme_count,
        spec.states_per_phoneme,
        back.state_classes,
        back.feature_dim().unwrap_or(0)
    );
    println!("next-phoneme entropy {:.3} nats (uniform {:.3})", spec.next_phoneme_entropy(), (spec.phoneme_count as f64).ln());
    let silence = back.trim_silence(5)?;
    println!("after trimming silence to 5 frames: {} frames", silence.total_frames());
    Ok(())
}
