use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::data::ToyParams;
use crate::error::{Error, Result};
use crate::multilingual::{FamilyConfig, LidConfig, PipelineConfig, TransferConfig};
use crate::pacrnn::{PacRnnConfig, Variant};
use crate::trainer::{ScheduleConfig, TrainOptions};

/// Environment variable holding the directory that relative output
/// directories are resolved against.
pub const OUTPUT_ROOT_ENV: &str = "PACRNN_OUTPUT_ROOT";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusKind {
    /// One language, train and dev corpora.
    Single,
    /// Source languages plus a target language.
    Family,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateConfig {
    pub kind: CorpusKind,
    pub params: ToyParams,
    pub train_utterances: usize,
    pub dev_utterances: usize,
    pub lengths: (usize, usize),
    pub family: FamilyConfig,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        GenerateConfig {
            kind: CorpusKind::Single,
            params: ToyParams::default(),
            train_utterances: 200,
            dev_utterances: 50,
            lengths: (60, 140),
            family: FamilyConfig::default(),
        }
    }
}

impl GenerateConfig {
    /// Feature dimension and class counts of the corpora this section describes.
    pub fn shape(&self) -> (usize, usize, usize) {
        let p = match self.kind {
            CorpusKind::Single => &self.params,
            CorpusKind::Family => &self.family.base,
        };
        (p.feature_dim, p.phoneme_count * p.states_per_phoneme, p.phoneme_count)
    }
}

/// Input corpora. Unset paths default to what `generate` writes.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataPaths {
    pub train: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    /// Family manifest written by `generate` with `kind = "family"`.
    pub family: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdaptCommand {
    /// Closest-language transfer over a generated family.
    Pipeline,
    /// Fine-tune a trained model on the target corpora as it is.
    KeepHead,
    /// Swap in fresh output layers for the target, then fine-tune.
    ReplaceHead,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdaptConfig {
    pub mode: AdaptCommand,
    /// Model file to adapt (`keep_head`, `replace_head`) or multilingual
    /// first stage to start from (`pipeline`; trained on the sources when unset).
    pub donor: Option<PathBuf>,
    /// Fine-tuning schedule of the single-model modes.
    pub training: TrainOptions,
    pub transfer: TransferConfig,
    /// Also train a randomly initialised model on the target features.
    pub random_baseline: bool,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        AdaptConfig {
            mode: AdaptCommand::Pipeline,
            donor: None,
            training: TrainOptions::default(),
            transfer: TransferConfig::default(),
            random_baseline: true,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LidSection {
    pub model: LidConfig,
    pub training: TrainOptions,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub model: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlotConfig {
    pub metrics: Vec<PathBuf>,
    pub title: String,
}

/// A whole experiment definition. Defaults of `model`, `training`, `adapt`
/// and `lid` depend on `model.variant` and on the corpus shape from
/// `generate`; [`RunConfig::parse`] resolves them before applying the file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub data: DataPaths,
    pub generate: GenerateConfig,
    pub model: PacRnnConfig,
    pub training: TrainOptions,
    pub adapt: AdaptConfig,
    pub lid: LidSection,
    pub eval: EvalConfig,
    pub plot: PlotConfig,
}

/// Command-line overrides applied on top of the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
}

fn schedule_for(variant: Variant, seed: u64) -> TrainOptions {
    TrainOptions { schedule: ScheduleConfig::toy(variant), seed, ..TrainOptions::default() }
}

impl RunConfig {
    /// Every default for a given seed, variant and corpus shape.
    pub fn defaults(seed: u64, variant: Variant, generate: GenerateConfig) -> RunConfig {
        let (dim, states, phonemes) = generate.shape();
        let model = PacRnnConfig::toy(variant, dim, states, phonemes);
        let fine_tune = TrainOptions {
            schedule: ScheduleConfig { max_epochs: 5, ..ScheduleConfig::toy(variant) },
            seed,
            ..TrainOptions::default()
        };
        let mut pipeline = PipelineConfig::toy(variant);
        pipeline.model = model.clone();
        pipeline.seed = seed;
        let mut transfer = TransferConfig { pipeline, ..TransferConfig::default() };
        transfer.stage1.feature_dim = generate.family.base.feature_dim;
        let lid = LidSection { model: transfer.pipeline.lid.clone(), training: transfer.pipeline.lid_training.clone() };
        RunConfig {
            seed,
            output_dir: PathBuf::from("run"),
            data: DataPaths::default(),
            generate,
            model,
            training: schedule_for(variant, seed),
            adapt: AdaptConfig { training: fine_tune, transfer, ..AdaptConfig::default() },
            lid,
            eval: EvalConfig::default(),
            plot: PlotConfig::default(),
        }
    }

    /// Parses a TOML experiment file. Keys the file leaves out take their
    /// defaults; unknown keys are rejected.
    pub fn parse(text: &str, overrides: &Overrides) -> Result<RunConfig> {
        let mut user: Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        if let Some(seed) = overrides.seed {
            user.insert("seed".into(), Value::Integer(seed as i64));
        }
        if let Some(dir) = &overrides.output_dir {
            user.insert("output_dir".into(), Value::String(dir.display().to_string()));
        }
        let seed = match user.get("seed") {
            None => 1,
            Some(Value::Integer(s)) if *s >= 0 => *s as u64,
            Some(v) => return Err(Error::Config(format!("seed must be a non-negative integer, got {}", v))),
        };
        let generate: GenerateConfig = overlay_into(GenerateConfig::default(), user.get("generate"), "generate")?;
        let variant = match user.get("model").and_then(|m| m.get("variant")) {
            None => Variant::PacRnnDnn,
            Some(v) => v.clone().try_into().map_err(|e: toml::de::Error| Error::Config(format!("model.variant: {}", e.message())))?,
        };
        let config: RunConfig = overlay_into(RunConfig::defaults(seed, variant, generate), Some(&Value::Table(user)), "")?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path, overrides: &Overrides) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).at_path(path))?;
        let mut config = RunConfig::parse(&text, overrides)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        config.anchor_inputs(&base);
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        for (name, t) in [("training", &self.training), ("adapt.training", &self.adapt.training), ("lid.training", &self.lid.training)] {
            t.schedule.validate().map_err(|e| Error::Config(format!("{}: {}", name, e)))?;
            t.plan.validate().map_err(|e| Error::Config(format!("{}: {}", name, e)))?;
        }
        self.adapt.transfer.stage1.validate()?;
        self.adapt.transfer.pipeline.model.validate()?;
        Ok(())
    }

    /// Makes relative input paths relative to `base` (the config file's directory).
    pub fn anchor_inputs(&mut self, base: &Path) {
        let anchor = |p: &mut Option<PathBuf>| {
            if let Some(path) = p {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        };
        anchor(&mut self.data.train);
        anchor(&mut self.data.dev);
        anchor(&mut self.data.family);
        anchor(&mut self.adapt.donor);
        anchor(&mut self.eval.model);
        anchor(&mut self.eval.corpus);
        for p in &mut self.plot.metrics {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    /// Output directory: relative values are resolved against
    /// `$PACRNN_OUTPUT_ROOT` when it is set.
    pub fn output(&self) -> PathBuf {
        match std::env::var_os(OUTPUT_ROOT_ENV) {
            Some(root) if self.output_dir.is_relative() => PathBuf::from(root).join(&self.output_dir),
            _ => self.output_dir.clone(),
        }
    }

    pub fn data_dir(&self) -> PathBuf {
        self.output().join("data")
    }

    pub fn train_path(&self) -> PathBuf {
        self.data.train.clone().unwrap_or_else(|| self.data_dir().join("train.corpus"))
    }

    pub fn dev_path(&self) -> PathBuf {
        self.data.dev.clone().unwrap_or_else(|| self.data_dir().join("dev.corpus"))
    }

    pub fn family_path(&self) -> PathBuf {
        self.data.family.clone().unwrap_or_else(|| self.data_dir().join("family.json"))
    }

    /// The configuration with every default path filled in, as echoed beside
    /// the outputs.
    pub fn resolved(&self) -> RunConfig {
        let mut c = self.clone();
        c.output_dir = self.output();
        c.data = DataPaths {
            train: Some(self.train_path()),
            dev: Some(self.dev_path()),
            family: Some(self.family_path()),
        };
        c.eval.model = Some(self.eval.model.clone().unwrap_or_else(|| self.output().join("model.pacrnn")));
        c.eval.corpus = Some(self.eval.corpus.clone().unwrap_or_else(|| self.dev_path()));
        c
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(format!("cannot render config: {}", e)))
    }
}

/// Recursively replaces entries of `base` by those of `user`. Keys absent
/// from `base` are kept so that deserialisation can reject them.
fn overlay(base: &mut Value, user: &Value) {
    match (base, user) {
        (Value::Table(b), Value::Table(u)) => {
            for (k, v) in u {
                match b.get_mut(k) {
                    Some(slot) => overlay(slot, v),
                    None => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (slot, v) => *slot = v.clone(),
    }
}

fn overlay_into<T>(base: T, user: Option<&Value>, section: &str) -> Result<T>
where
    T: Serialize + for<'de> Deserialize<'de>,
{
    let mut value = Value::try_from(&base).map_err(|e| Error::Config(format!("cannot render defaults: {}", e)))?;
    if let Some(u) = user {
        overlay(&mut value, u);
    }
    value.try_into().map_err(|e: toml::de::Error| {
        let msg = e.message().to_string();
        Error::Config(if section.is_empty() { msg } else { format!("{}: {}", section, msg) })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trainer::GradientScale;

    #[test]
    fn empty_file_is_all_defaults() {
        let c = RunConfig::parse("", &Overrides::default()).unwrap();
        assert_eq!(c, RunConfig::defaults(1, Variant::PacRnnDnn, GenerateConfig::default()));
        assert_eq!((c.model.feature_dim, c.model.state_classes, c.model.phoneme_classes), (24, 30, 10));
    }

    #[test]
    fn variant_picks_its_defaults() {
        let c = RunConfig::parse("[model]\nvariant = \"lstm\"\n", &Overrides::default()).unwrap();
        assert_eq!(c.model.input, Variant::Lstm.default_input());
        assert_eq!(c.training.schedule, ScheduleConfig::toy(Variant::Lstm));
    }

    #[test]
    fn nested_keys_override_single_fields() {
        let text = "seed = 7\n[training.schedule]\nmax_epochs = 3\ngradient_scale = \"mean\"\n[generate.params]\nfeature_dim = 6\n";
        let c = RunConfig::parse(text, &Overrides::default()).unwrap();
        assert_eq!(c.training.schedule.max_epochs, 3);
        assert_eq!(c.training.schedule.gradient_scale, GradientScale::Mean);
        assert_eq!(c.training.schedule.base_lr, ScheduleConfig::toy(Variant::PacRnnDnn).base_lr);
        assert_eq!(c.training.seed, 7);
        assert_eq!(c.model.feature_dim, 6);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for text in ["colour = 1", "[model]\nwidth = 3", "[training.schedule]\nlr = 0.1", "[generate.params]\nbogus = true"] {
            let err = RunConfig::parse(text, &Overrides::default()).unwrap_err();
            assert!(matches!(err, Error::Config(_)), "{}: {:?}", text, err);
        }
    }

    #[test]
    fn overrides_win() {
        let o = Overrides { seed: Some(9), output_dir: Some("elsewhere".into()) };
        let c = RunConfig::parse("seed = 2\noutput_dir = \"x\"", &o).unwrap();
        assert_eq!((c.seed, c.output_dir), (9, PathBuf::from("elsewhere")));
    }

    #[test]
    fn resolved_config_round_trips() {
        let c = RunConfig::parse("[model]\nvariant = \"pacrnn-lstm\"\n[adapt]\nmode = \"replace_head\"", &Overrides::default()).unwrap();
        let r = c.resolved();
        let text = r.to_toml().unwrap();
        assert_eq!(RunConfig::parse(&text, &Overrides::default()).unwrap(), r);
    }

    #[test]
    fn invalid_values_name_the_section() {
        let err = RunConfig::parse("[training.schedule]\nbase_lr = -1.0", &Overrides::default()).unwrap_err();
        assert!(err.to_string().contains("training"), "{}", err);
    }
}
