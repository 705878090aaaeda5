use std::path::{Path, PathBuf};
use std::process::Command;

use pacrnn_lab::cli::{cmd_adapt, cmd_eval, cmd_generate, cmd_lid, cmd_plot, cmd_train, epoch_rows, Overrides, RunConfig};
use pacrnn_lab::error::Error;
use pacrnn_lab::multilingual::Provenance;
use pacrnn_lab::pacrnn::{build_model, PacRnnConfig, Variant};
use pacrnn_lab::tensor::Rng;

const SMALL: &str = r#"
[generate]
train_utterances = 30
dev_utterances = 10
lengths = [40, 80]

[model]
variant = "pacrnn-dnn"
pred_hidden = 16
projection = 8
corr_dnn_hidden = [24, 24]

[training.schedule]
max_epochs = 3
"#;

fn config(text: &str, dir: &Path) -> RunConfig {
    RunConfig::parse(text, &Overrides { seed: None, output_dir: Some(dir.to_path_buf()) }).unwrap()
}

fn read(p: impl AsRef<Path>) -> Vec<u8> {
    std::fs::read(p.as_ref()).unwrap_or_else(|e| panic!("{}: {}", p.as_ref().display(), e))
}

fn files_under(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let p = entry.unwrap().path();
        if p.is_dir() {
            out.extend(files_under(&p));
        } else {
            out.push(p);
        }
    }
    out.sort();
    out
}

#[test]
fn training_twice_gives_identical_logs_and_models() {
    let tmp = tempfile::tempdir().unwrap();
    let runs: Vec<RunConfig> = ["a", "b"].iter().map(|d| config(SMALL, &tmp.path().join(d))).collect();
    for c in &runs {
        cmd_generate(c).unwrap();
        cmd_train(c).unwrap();
    }
    let a = runs[0].output();
    let b = runs[1].output();
    for f in ["metrics.jsonl", "model.pacrnn", "data/train.corpus", "data/dev.corpus"] {
        assert_eq!(read(a.join(f)), read(b.join(f)), "{}", f);
    }
    let log = String::from_utf8(read(a.join("metrics.jsonl"))).unwrap();
    assert_eq!(log.lines().count(), 3);
    for key in ["epoch", "learning_rate", "momentum", "train_j", "dev_j", "dev_fer"] {
        assert!(log.contains(&format!("\"{}\"", key)), "{}", key);
    }
    let timings = String::from_utf8(read(a.join("metrics.timings.jsonl"))).unwrap();
    assert_eq!(timings.lines().count(), 3);
    assert!(timings.contains("wall_seconds"));
}

#[test]
fn untrained_model_scores_at_chance() {
    let tmp = tempfile::tempdir().unwrap();
    let c = config("", tmp.path());
    cmd_generate(&c).unwrap();
    let cfg = PacRnnConfig::toy(Variant::PacRnnDnn, 24, 30, 10);
    let model_path = tmp.path().join("untrained.pacrnn");
    build_model(&cfg, &mut Rng::new(3)).unwrap().save(&model_path).unwrap();
    let text = format!("[eval]\nmodel = {:?}\n", model_path.display().to_string());
    let report = cmd_eval(&config(&text, tmp.path())).unwrap();
    let eval: serde_json::Value = serde_json::from_slice(&read(tmp.path().join("eval.json"))).unwrap();
    let fer = eval["fer"].as_f64().unwrap();
    assert!((fer - (1.0 - 1.0 / 30.0)).abs() <= 0.05, "FER {} ({})", fer, report);
    assert!(report.contains("FER"));
}

#[test]
fn plot_of_three_epoch_log() {
    let tmp = tempfile::tempdir().unwrap();
    let c = config(SMALL, tmp.path());
    cmd_generate(&c).unwrap();
    cmd_train(&c).unwrap();
    cmd_plot(&c).unwrap();
    let svg = String::from_utf8(read(tmp.path().join("curves.svg"))).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("<polyline"));
    let summary = String::from_utf8(read(tmp.path().join("summary.md"))).unwrap();
    assert_eq!(epoch_rows(&summary, "pacrnn-dnn / toy / train"), 3, "{}", summary);
    assert!(summary.contains("| pacrnn-dnn |"));
}

#[test]
fn resolved_config_is_echoed_and_rereadable() {
    let tmp = tempfile::tempdir().unwrap();
    let c = config(SMALL, tmp.path());
    cmd_generate(&c).unwrap();
    let text = String::from_utf8(read(tmp.path().join("generate.resolved.toml"))).unwrap();
    for key in ["base_lr", "momentum", "chunk_frames", "t_corr", "alpha", "clip_norm", "gradient_scale", "[lid.model]"] {
        assert!(text.contains(key), "{} missing from resolved config", key);
    }
    let again = RunConfig::parse(&text, &Overrides::default()).unwrap();
    assert_eq!(again, c.resolved());
}

#[test]
fn commands_do_not_touch_inputs() {
    let tmp = tempfile::tempdir().unwrap();
    let c = config(SMALL, &tmp.path().join("gen"));
    cmd_generate(&c).unwrap();
    let inputs = files_under(&tmp.path().join("gen"));
    let before: Vec<Vec<u8>> = inputs.iter().map(read).collect();
    let mut t = config(SMALL, &tmp.path().join("train"));
    t.data.train = Some(c.train_path());
    t.data.dev = Some(c.dev_path());
    cmd_train(&t).unwrap();
    cmd_eval(&t).unwrap();
    let after: Vec<Vec<u8>> = inputs.iter().map(read).collect();
    assert_eq!(before, after);
    assert_eq!(files_under(&tmp.path().join("gen")), inputs);

    // A donor sitting where the adapted model would be written is refused.
    std::fs::copy(t.output().join("model.pacrnn"), t.output().join("adapted.pacrnn")).unwrap();
    let text = format!("{}\n[adapt]\nmode = \"keep_head\"\ndonor = {:?}\n", SMALL, t.output().join("adapted.pacrnn").display().to_string());
    let mut a = config(&text, &t.output());
    a.data = t.data.clone();
    let donor = read(t.output().join("adapted.pacrnn"));
    assert!(matches!(cmd_adapt(&a), Err(Error::Config(_))));
    assert_eq!(read(t.output().join("adapted.pacrnn")), donor);
}

#[test]
fn single_model_adaptation_modes() {
    let tmp = tempfile::tempdir().unwrap();
    let c = config(SMALL, tmp.path());
    cmd_generate(&c).unwrap();
    cmd_train(&c).unwrap();
    let donor = c.output().join("model.pacrnn");
    let other = format!(
        "[generate]\ntrain_utterances = 20\ndev_utterances = 5\nlengths = [40, 60]\n[generate.params]\nphoneme_count = 8\nlanguage = \"other\"\n"
    );
    let o = config(&other, &tmp.path().join("other"));
    cmd_generate(&o).unwrap();
    for (mode, expect_ok) in [("keep_head", false), ("replace_head", true)] {
        let text = format!("[adapt]\nmode = {:?}\ndonor = {:?}\n[adapt.training.schedule]\nmax_epochs = 2\n", mode, donor.display().to_string());
        let mut a = config(&text, &tmp.path().join(mode));
        a.data.train = Some(o.train_path());
        a.data.dev = Some(o.dev_path());
        let result = cmd_adapt(&a);
        if expect_ok {
            result.unwrap();
            let adapted = pacrnn_lab::pacrnn::Model::load(a.output().join("adapted.pacrnn")).unwrap();
            assert_eq!((adapted.config.state_classes, adapted.config.phoneme_classes), (24, 8));
            assert_eq!(String::from_utf8(read(a.output().join("adapt.metrics.jsonl"))).unwrap().lines().count(), 2);
        } else {
            assert!(matches!(result, Err(Error::Config(_))), "{:?}", result.err());
        }
    }
}

const FAMILY: &str = r#"
[generate]
kind = "family"
[generate.family]
source_utterances = [20, 8]
target_utterances = [10, 8]
lengths = [40, 70]
[generate.family.base]
feature_dim = 8

[model]
pred_hidden = 16
projection = 8
corr_dnn_hidden = [24, 24]

[adapt.transfer.stage1_training.schedule]
max_epochs = 2
[adapt.transfer.pipeline.stage1_adapt.schedule]
max_epochs = 1
[adapt.transfer.pipeline.lid_training.schedule]
max_epochs = 2
[adapt.transfer.pipeline.hybrid.schedule]
max_epochs = 2
[adapt.transfer.pipeline.final_adapt.schedule]
max_epochs = 2
[lid.training.schedule]
max_epochs = 2
"#;

#[test]
fn family_lid_and_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let c = config(FAMILY, tmp.path());
    assert_eq!(c.adapt.transfer.stage1.feature_dim, 8);
    cmd_generate(&c).unwrap();
    let report = cmd_lid(&c).unwrap();
    assert!(report.starts_with("closest language to delta: "));
    for l in ["alpha", "beta", "gamma"] {
        assert!(report.contains(l));
    }
    cmd_adapt(&c).unwrap();
    let provenance: Provenance = serde_json::from_slice(&read(tmp.path().join("provenance.json"))).unwrap();
    let steps: Vec<&str> = provenance.steps.iter().map(|s| s.name.as_str()).collect();
    assert_eq!(steps, ["adapt_stage1", "select_closest_language", "train_closest_language_model", "adapt_to_target"]);
    for f in ["adapted.pacrnn", "stage1.multihead", "donor.multihead", "random.metrics.jsonl", "transfer.json", "bn/delta.dev.corpus"] {
        assert!(tmp.path().join(f).exists(), "{}", f);
    }
    let text = format!(
        "[eval]\nmodel = {:?}\ncorpus = {:?}\n",
        tmp.path().join("adapted.pacrnn").display().to_string(),
        tmp.path().join("bn/delta.dev.corpus").display().to_string()
    );
    cmd_eval(&config(&text, &tmp.path().join("eval"))).unwrap();
}

fn pacrnn(args: &[&str], root: &Path) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_pacrnn")).args(args).env("PACRNN_OUTPUT_ROOT", root).output().unwrap();
    (out.status.code().unwrap_or(-1), String::from_utf8_lossy(&out.stdout).into(), String::from_utf8_lossy(&out.stderr).into())
}

#[test]
fn binary_uses_output_root_and_reports_errors_on_one_line() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.toml");
    std::fs::write(&cfg, "output_dir = \"exp\"\n[generate]\ntrain_utterances = 3\ndev_utterances = 2\n").unwrap();
    let (code, stdout, _) = pacrnn(&["generate", "-c", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(code, 0);
    assert!(stdout.contains("train:"));
    assert!(tmp.path().join("exp/data/train.corpus").exists());

    std::fs::write(&cfg, "[model]\nwidth = 3\n").unwrap();
    let (code, _, stderr) = pacrnn(&["train", "-c", cfg.to_str().unwrap()], tmp.path());
    assert_ne!(code, 0);
    assert_eq!(stderr.lines().count(), 1, "{}", stderr);
    assert!(stderr.starts_with("error[config]: "), "{}", stderr);

    let (code, _, stderr) = pacrnn(&["eval", "--output", "nowhere"], tmp.path());
    assert_ne!(code, 0);
    assert!(stderr.starts_with("error[io]: ") && stderr.contains("model.pacrnn"), "{}", stderr);

    let (code, _, stderr) = pacrnn(&["sing"], tmp.path());
    assert_ne!(code, 0);
    assert!(stderr.starts_with("error[usage]: "), "{}", stderr);
}
