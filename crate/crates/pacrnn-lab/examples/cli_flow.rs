//! The command-line workflow driven from code: generate a corpus, train,
//! evaluate and plot, all inside one output directory.
//!
//! ```text
//! cargo run --release --example cli_flow -- [output-dir]
//! ```

use pacrnn_lab::cli::{cmd_eval, cmd_generate, cmd_plot, cmd_train, Overrides, RunConfig};

const EXPERIMENT: &str = r#"
seed = 3

[generate]
train_utterances = 60
dev_utterances = 20

[model]
variant = "pacrnn-dnn"

[training.schedule]
max_epochs = 4

[plot]
title = "PAC-RNN-DNN on a toy language"
"#;

fn main() -> pacrnn_lab::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| std::env::temp_dir().join("pacrnn-cli-flow").display().to_string());
    let config = RunConfig::parse(EXPERIMENT, &Overrides { output_dir: Some(out.into()), ..Default::default() })?;
    for step in [cmd_generate, cmd_train, cmd_eval, cmd_plot] {
        print!("{}", step(&config)?);
    }
    println!("outputs in {}", config.output().display());
    Ok(())
}
