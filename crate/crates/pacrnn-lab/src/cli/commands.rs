use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::config::{AdaptCommand, CorpusKind, RunConfig};
use super::metrics::{read_label, read_metrics, write_metrics, MetricsWriter, RunLabel};
use super::plot::{learning_curves_svg, summary_markdown, Series};
use crate::data::{generate_toy_corpus, read_corpus, write_corpus, Corpus, ToyLanguageSpec};
use crate::error::{Error, Result};
use crate::multilingual::{
    adapt_network, closest_language_pipeline, select_closest_language, train_lid, train_multilingual, transfer_from_donor,
    AdaptMode, LanguageData, MultiHeadNet, PipelineConfig,
};
use crate::pacrnn::{build_model, Model};
use crate::tensor::Rng;
use crate::trainer::{evaluate, train_model, EpochRecord};

/// Corpus files of one language in a family manifest, relative to the manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub language: String,
    pub train: PathBuf,
    pub dev: PathBuf,
}

/// `family.json`: which generated languages are sources and which is the target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilyManifest {
    pub sources: Vec<ManifestEntry>,
    pub target: ManifestEntry,
}

/// Output directory handle that refuses to overwrite the command's inputs.
struct Outputs {
    dir: PathBuf,
    inputs: Vec<PathBuf>,
}

impl Outputs {
    fn open(config: &RunConfig, command: &str) -> Result<Outputs> {
        let dir = config.output();
        std::fs::create_dir_all(&dir).map_err(|e| Error::from(e).at_path(&dir))?;
        let out = Outputs { dir, inputs: Vec::new() };
        let text = config.resolved().to_toml()?;
        out.write(&format!("{}.resolved.toml", command), text.as_bytes())?;
        Ok(out)
    }

    fn input(&mut self, path: &Path) -> PathBuf {
        self.inputs.push(std::fs::canonicalize(path).unwrap_or_else(|_| path.to_path_buf()));
        path.to_path_buf()
    }

    fn path(&self, name: &str) -> Result<PathBuf> {
        let p = self.dir.join(name);
        if let Some(parent) = p.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::from(e).at_path(parent))?;
        }
        let canonical = match (p.parent().and_then(|d| std::fs::canonicalize(d).ok()), p.file_name()) {
            (Some(d), Some(f)) => d.join(f),
            _ => p.clone(),
        };
        if self.inputs.contains(&canonical) {
            return Err(Error::Config(format!("output {} would overwrite an input file", p.display())));
        }
        Ok(p)
    }

    fn write(&self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let p = self.path(name)?;
        std::fs::write(&p, bytes).map_err(|e| Error::from(e).at_path(&p))?;
        Ok(p)
    }

    fn json(&self, name: &str, value: &impl Serialize) -> Result<PathBuf> {
        let mut bytes = serde_json::to_vec_pretty(value).expect("value serialises");
        bytes.push(b'\n');
        self.write(name, &bytes)
    }

    fn corpus(&self, name: &str, corpus: &Corpus) -> Result<PathBuf> {
        let p = self.path(name)?;
        write_corpus(corpus, &p).map_err(|e| e.at_path(&p))?;
        Ok(p)
    }
}

fn load_corpus(path: &Path) -> Result<Corpus> {
    read_corpus(path).map_err(|e| e.at_path(path))
}

fn load_family(outputs: &mut Outputs, path: &Path) -> Result<(Vec<LanguageData>, LanguageData)> {
    let bytes = std::fs::read(outputs.input(path)).map_err(|e| Error::from(e).at_path(path))?;
    let manifest: FamilyManifest =
        serde_json::from_slice(&bytes).map_err(|e| Error::Data(format!("{}: {}", path.display(), e)))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut load = |e: &ManifestEntry| -> Result<LanguageData> {
        let train = load_corpus(&outputs.input(&base.join(&e.train)))?;
        let dev = load_corpus(&outputs.input(&base.join(&e.dev)))?;
        if train.language != e.language || dev.language != e.language {
            return Err(Error::Data(format!("{}: corpora of {} carry another language tag", path.display(), e.language)));
        }
        Ok(LanguageData { train, dev })
    };
    let sources = manifest.sources.iter().map(&mut load).collect::<Result<Vec<_>>>()?;
    let target = load(&manifest.target)?;
    Ok((sources, target))
}

fn describe(c: &Corpus) -> String {
    format!("{} utterances, {} frames", c.utterances.len(), c.total_frames())
}

/// Writes toy corpora under `<output>/data`.
pub fn cmd_generate(config: &RunConfig) -> Result<String> {
    let out = Outputs::open(config, "generate")?;
    let g = &config.generate;
    let mut report = String::new();
    match g.kind {
        CorpusKind::Single => {
            let spec = ToyLanguageSpec::from_params(&g.params)?;
            let rng = Rng::new(config.seed);
            let train = generate_toy_corpus(&spec.with_seed(rng.fork(1).next_u64()), g.train_utterances, g.lengths)?;
            let dev = generate_toy_corpus(&spec.with_seed(rng.fork(2).next_u64()), g.dev_utterances, g.lengths)?;
            let tp = out.corpus("data/train.corpus", &train)?;
            let dp = out.corpus("data/dev.corpus", &dev)?;
            out.json(
                "data/language.json",
                &json!({
                    "spec": spec,
                    "next_phoneme_entropy": spec.next_phoneme_entropy(),
                    "uniform_entropy": (spec.phoneme_count as f64).ln(),
                }),
            )?;
            let _ = writeln!(report, "train: {} ({})", tp.display(), describe(&train));
            let _ = writeln!(report, "dev:   {} ({})", dp.display(), describe(&dev));
            let _ = writeln!(
                report,
                "next-phoneme entropy {:.3} nats (uniform {:.3})",
                spec.next_phoneme_entropy(),
                (spec.phoneme_count as f64).ln()
            );
        }
        CorpusKind::Family => {
            let family = g.family.sample(config.seed)?;
            let mut entry = |data: &LanguageData| -> Result<ManifestEntry> {
                let lang = data.language().to_string();
                let train = format!("{}.train.corpus", lang);
                let dev = format!("{}.dev.corpus", lang);
                out.corpus(&format!("data/{}", train), &data.train)?;
                out.corpus(&format!("data/{}", dev), &data.dev)?;
                let _ = writeln!(report, "{}: train {}, dev {}", lang, describe(&data.train), describe(&data.dev));
                Ok(ManifestEntry { language: lang, train: train.into(), dev: dev.into() })
            };
            let sources = family.sources.iter().map(&mut entry).collect::<Result<Vec<_>>>()?;
            let target = entry(&family.target)?;
            let manifest = FamilyManifest { sources, target };
            let p = out.json("data/family.json", &manifest)?;
            out.json("data/languages.json", &family.specs)?;
            let _ = writeln!(report, "manifest: {}", p.display());
        }
    }
    Ok(report)
}

/// Trains `model` on the configured corpora; writes `model.pacrnn` and
/// `metrics.jsonl`.
pub fn cmd_train(config: &RunConfig) -> Result<String> {
    let mut out = Outputs::open(config, "train")?;
    let train = load_corpus(&out.input(&config.train_path()))?;
    let dev = load_corpus(&out.input(&config.dev_path()))?;
    let model = build_model(&config.model, &mut Rng::new(config.seed))?;
    let label = RunLabel { variant: config.model.variant.name().into(), corpus: train.language.clone(), stage: "train".into() };
    let mut writer = MetricsWriter::create(&out.path("metrics.jsonl")?, &label)?;
    let run = train_model(model, &train, &dev, &config.training, |r, _| writer.record(r))?;
    let model_path = out.path("model.pacrnn")?;
    run.model.save(&model_path).map_err(|e| e.at_path(&model_path))?;
    let mut report = String::new();
    for r in &run.records {
        let _ = writeln!(
            report,
            "epoch {:>2}  lr {:.5}  train J {:.4}  dev J {:.4}  dev FER {:.4}",
            r.epoch, r.learning_rate, r.train_j, r.dev_j, r.dev_fer
        );
    }
    let _ = writeln!(report, "{} model written to {}", config.model.variant, model_path.display());
    Ok(report)
}

fn stage_label(config: &PipelineConfig, corpus: &str, stage: &str) -> RunLabel {
    RunLabel { variant: config.model.variant.name().into(), corpus: corpus.into(), stage: stage.into() }
}

fn epochs_text(e: Option<usize>) -> String {
    e.map_or("not reached".into(), |e| format!("epoch {}", e))
}

/// `adapt.mode = "pipeline"` runs closest-language transfer over the family
/// manifest; the other modes fine-tune the model file `adapt.donor` on the
/// configured train/dev corpora.
pub fn cmd_adapt(config: &RunConfig) -> Result<String> {
    let mut out = Outputs::open(config, "adapt")?;
    let a = &config.adapt;
    let mut report = String::new();
    if a.mode != AdaptCommand::Pipeline {
        let donor_path = a.donor.clone().ok_or_else(|| Error::Config("adapt.donor must name a model file".into()))?;
        let donor = Model::load(out.input(&donor_path)).map_err(|e| e.at_path(&donor_path))?;
        let train = load_corpus(&out.input(&config.train_path()))?;
        let dev = load_corpus(&out.input(&config.dev_path()))?;
        let mode = if a.mode == AdaptCommand::KeepHead { AdaptMode::KeepHead } else { AdaptMode::ReplaceHead };
        let run = adapt_network(donor, &train, &dev, mode, &a.training, config.seed)?;
        let label = RunLabel { variant: run.model.config.variant.name().into(), corpus: train.language.clone(), stage: "adapt".into() };
        write_metrics(&out.path("adapt.metrics.jsonl")?, &label, &run.records)?;
        let p = out.path("adapted.pacrnn")?;
        run.model.save(&p).map_err(|e| e.at_path(&p))?;
        let fer = run.final_dev_fer().map_or("n/a".into(), |f| format!("{:.4}", f));
        let _ = writeln!(report, "adapted model written to {} (final dev FER {})", p.display(), fer);
        return Ok(report);
    }

    let (sources, target) = load_family(&mut out, &config.family_path())?;
    let transfer = &a.transfer;
    let donor = match &a.donor {
        Some(p) => MultiHeadNet::load(out.input(p)).map_err(|e| e.at_path(p))?,
        None => {
            let train: Vec<Corpus> = sources.iter().map(|s| s.train.clone()).collect();
            let dev: Vec<Corpus> = sources.iter().map(|s| s.dev.clone()).collect();
            let net = train_multilingual(&train, &dev, &transfer.stage1, &transfer.stage1_training, config.seed)?.model;
            let p = out.path("donor.multihead")?;
            net.save(&p).map_err(|e| e.at_path(&p))?;
            net
        }
    };
    let pipeline = PipelineConfig { seed: config.seed, ..transfer.pipeline.clone() };
    let (outcome, random): (_, Option<Vec<EpochRecord>>) = if a.random_baseline {
        let trial = transfer_from_donor(donor, &sources, &target, transfer, config.seed)?;
        (trial.outcome, Some(trial.random_records))
    } else {
        (closest_language_pipeline(&donor, &sources, &target, &pipeline)?, None)
    };

    let tag = target.language().to_string();
    let closest = outcome.decision.language.clone();
    write_metrics(&out.path("closest.metrics.jsonl")?, &stage_label(&pipeline, &closest, "closest"), &outcome.closest_records)?;
    write_metrics(&out.path("adapt.metrics.jsonl")?, &stage_label(&pipeline, &tag, "transfer"), &outcome.final_records)?;
    if let Some(records) = &random {
        write_metrics(&out.path("random.metrics.jsonl")?, &stage_label(&pipeline, &tag, "random"), records)?;
    }
    let stage1_path = out.path("stage1.multihead")?;
    outcome.stage1.save(&stage1_path).map_err(|e| e.at_path(&stage1_path))?;
    let model_path = out.path("adapted.pacrnn")?;
    outcome.model.save(&model_path).map_err(|e| e.at_path(&model_path))?;
    out.corpus(&format!("bn/{}.train.corpus", tag), &outcome.target_features.train)?;
    let bn_dev = out.corpus(&format!("bn/{}.dev.corpus", tag), &outcome.target_features.dev)?;
    out.json("provenance.json", &outcome.provenance)?;

    let threshold = transfer.threshold;
    let closest_epochs = crate::trainer::epochs_to_threshold(&outcome.final_records, threshold);
    let random_epochs = random.as_ref().and_then(|r| crate::trainer::epochs_to_threshold(r, threshold));
    out.json(
        "transfer.json",
        &json!({
            "target": tag,
            "closest_language": closest,
            "scores": outcome.decision.scores,
            "threshold": threshold,
            "transfer_epochs_to_threshold": closest_epochs,
            "transfer_final_dev_fer": outcome.final_records.last().map(|r| r.dev_fer),
            "random_epochs_to_threshold": random_epochs,
            "random_final_dev_fer": random.as_ref().and_then(|r| r.last()).map(|r| r.dev_fer),
        }),
    )?;
    let _ = writeln!(report, "closest language to {}: {}", tag, closest);
    for (lang, score) in &outcome.decision.scores {
        let _ = writeln!(report, "  {:<12} {:.4}", lang, score);
    }
    let _ = writeln!(report, "transfer reaches dev FER {} at {}", threshold, epochs_text(closest_epochs));
    if random.is_some() {
        let _ = writeln!(report, "random init reaches dev FER {} at {}", threshold, epochs_text(random_epochs));
    }
    let _ = writeln!(report, "adapted model: {} (inputs: {})", model_path.display(), bn_dev.display());
    Ok(report)
}

/// Trains a language identifier on the family's sources and scores the target.
pub fn cmd_lid(config: &RunConfig) -> Result<String> {
    let mut out = Outputs::open(config, "lid")?;
    let (sources, target) = load_family(&mut out, &config.family_path())?;
    let train: Vec<Corpus> = sources.iter().map(|s| s.train.clone()).collect();
    let dev: Vec<Corpus> = sources.iter().map(|s| s.dev.clone()).collect();
    let lid = train_lid(&train, &dev, &config.lid.model, &config.lid.training, config.seed)?;
    let decision = select_closest_language(&lid, &target.train)?;
    out.json("lid.json", &json!({ "target": target.language(), "closest": decision.language, "scores": decision.scores }))?;
    let mut report = format!("closest language to {}: {}\n", target.language(), decision.language);
    for (lang, score) in &decision.scores {
        let _ = writeln!(report, "  {:<12} {:.4}", lang, score);
    }
    Ok(report)
}

/// Mean objective and FER of `eval.model` on `eval.corpus`.
pub fn cmd_eval(config: &RunConfig) -> Result<String> {
    let mut out = Outputs::open(config, "eval")?;
    let resolved = config.resolved();
    let model_path = resolved.eval.model.expect("resolved");
    let corpus_path = resolved.eval.corpus.expect("resolved");
    let model = Model::load(out.input(&model_path)).map_err(|e| e.at_path(&model_path))?;
    let corpus = load_corpus(&out.input(&corpus_path))?;
    let e = evaluate(&model, &corpus)?;
    out.json(
        "eval.json",
        &json!({
            "model": model_path, "corpus": corpus_path, "mean_j": -e.loss, "fer": e.fer,
            "frames": e.frames, "errors": e.errors,
        }),
    )?;
    Ok(format!("mean J {:.6}  FER {:.4}  ({} of {} frames wrong)\n", -e.loss, e.fer, e.errors, e.frames))
}

fn series_name(label: &RunLabel, path: &Path) -> String {
    let parts: Vec<&str> = [label.variant.as_str(), label.corpus.as_str(), label.stage.as_str()]
        .into_iter()
        .filter(|s| !s.is_empty())
        .collect();
    if parts.is_empty() {
        path.display().to_string()
    } else {
        parts.join(" / ")
    }
}

/// Writes `curves.svg` and `summary.md` for the configured metrics logs.
pub fn cmd_plot(config: &RunConfig) -> Result<String> {
    let mut out = Outputs::open(config, "plot")?;
    let logs = if config.plot.metrics.is_empty() { vec![config.output().join("metrics.jsonl")] } else { config.plot.metrics.clone() };
    let mut series: Vec<Series> = Vec::new();
    for log in &logs {
        let records = read_metrics(&out.input(log))?;
        let label = read_label(log);
        let mut name = series_name(&label, log);
        if series.iter().any(|s| s.name == name) {
            name = format!("{} ({})", name, series.len() + 1);
        }
        series.push(Series { name, label, records });
    }
    let svg = out.write("curves.svg", learning_curves_svg(&config.plot.title, &series).as_bytes())?;
    let md = out.write("summary.md", summary_markdown(&config.plot.title, &series).as_bytes())?;
    Ok(format!("{}\n{}\n", svg.display(), md.display()))
}
