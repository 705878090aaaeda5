use serde::{Deserialize, Serialize};

use super::net::{MultiHeadNet, MultiHeadSpec};
use super::pipeline::{closest_language_pipeline, hybrid_features, train_from_scratch, LanguageData, PipelineConfig, PipelineOutcome};
use super::sbn::train_multilingual;
use crate::data::{generate_toy_corpus, ToyLanguageSpec, ToyParams};
use crate::error::{Error, Result};
use crate::tensor::Rng;
use crate::trainer::{epochs_to_threshold, EpochRecord, ScheduleConfig, TrainOptions};

/// One language of a toy family: `magnitude` is the emission perturbation
/// relative to `parent` (the family base when `None`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyMember {
    pub language: String,
    #[serde(default)]
    pub parent: Option<String>,
    pub magnitude: f64,
}

/// Corpus sizes and the language tree of a transfer experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FamilyConfig {
    pub base: ToyParams,
    pub sources: Vec<FamilyMember>,
    pub target: FamilyMember,
    pub source_utterances: (usize, usize),
    pub target_utterances: (usize, usize),
    pub lengths: (usize, usize),
}

impl Default for FamilyConfig {
    fn default() -> Self {
        let member = |l: &str, parent: Option<&str>, magnitude| FamilyMember {
            language: l.into(),
            parent: parent.map(String::from),
            magnitude,
        };
        FamilyConfig {
            base: ToyParams { feature_dim: 16, ..ToyParams::default() },
            sources: vec![member("alpha", None, 1.0), member("beta", None, 1.0), member("gamma", None, 1.0)],
            target: member("delta", Some("beta"), 0.3),
            source_utterances: (120, 30),
            target_utterances: (30, 30),
            lengths: (60, 140),
        }
    }
}

/// Sampled corpora of a family.
#[derive(Clone, Debug)]
pub struct Family {
    pub sources: Vec<LanguageData>,
    pub target: LanguageData,
    pub specs: Vec<ToyLanguageSpec>,
}

impl FamilyConfig {
    /// Language specs in source order followed by the target. Perturbations
    /// depend on `seed`, so different seeds give different families.
    pub fn specs(&self, seed: u64) -> Result<Vec<ToyLanguageSpec>> {
        let base = ToyLanguageSpec::from_params(&self.base)?;
        let mut rng = Rng::new(seed).fork(0xFA);
        let mut specs: Vec<ToyLanguageSpec> = Vec::new();
        for m in self.sources.iter().chain(std::iter::once(&self.target)) {
            if specs.iter().any(|s| s.language == m.language) && m.language != self.target.language {
                return Err(Error::Config(format!("language {} listed twice", m.language)));
            }
            let parent = match &m.parent {
                None => &base,
                Some(p) => specs
                    .iter()
                    .find(|s| &s.language == p)
                    .ok_or_else(|| Error::Config(format!("{}: unknown parent language {}", m.language, p)))?,
            };
            let spec = parent.perturbed(&m.language, m.magnitude, rng.next_u64());
            specs.push(spec);
        }
        Ok(specs)
    }

    pub fn sample(&self, seed: u64) -> Result<Family> {
        let specs = self.specs(seed)?;
        let mut rng = Rng::new(seed).fork(0xDA);
        let mut draw = |spec: &ToyLanguageSpec, (train, dev): (usize, usize)| -> Result<LanguageData> {
            Ok(LanguageData {
                train: generate_toy_corpus(&spec.with_seed(rng.next_u64()), train, self.lengths)?,
                dev: generate_toy_corpus(&spec.with_seed(rng.next_u64()), dev, self.lengths)?,
            })
        };
        let (target_spec, source_specs) = specs.split_last().expect("target present");
        let sources = source_specs.iter().map(|s| draw(s, self.source_utterances)).collect::<Result<Vec<_>>>()?;
        let target = draw(target_spec, self.target_utterances)?;
        Ok(Family { sources, target, specs })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransferConfig {
    pub stage1: MultiHeadSpec,
    pub stage1_training: TrainOptions,
    pub pipeline: PipelineConfig,
    /// Dev FER both arms must reach.
    pub threshold: f64,
}

impl Default for TransferConfig {
    fn default() -> Self {
        TransferConfig {
            stage1: MultiHeadSpec::toy(FamilyConfig::default().base.feature_dim),
            stage1_training: TrainOptions {
                schedule: ScheduleConfig { max_epochs: 8, ..ScheduleConfig::toy(crate::pacrnn::Variant::Dnn) },
                ..TrainOptions::default()
            },
            pipeline: PipelineConfig::default(),
            threshold: 0.5,
        }
    }
}

/// Closest-language initialisation against random initialisation on the same
/// target features.
#[derive(Clone, Debug)]
pub struct TransferTrial {
    pub donor: MultiHeadNet,
    pub outcome: PipelineOutcome,
    pub random_records: Vec<EpochRecord>,
    pub closest_epochs: Option<usize>,
    pub random_epochs: Option<usize>,
}

impl TransferTrial {
    pub fn closest_final_fer(&self) -> f64 {
        self.outcome.final_records.last().map_or(f64::NAN, |r| r.dev_fer)
    }

    pub fn random_final_fer(&self) -> f64 {
        self.random_records.last().map_or(f64::NAN, |r| r.dev_fer)
    }
}

/// Samples a family from `family` and runs [`transfer_trial`] on it.
pub fn run_transfer_trial(family: &FamilyConfig, config: &TransferConfig, seed: u64) -> Result<TransferTrial> {
    let family = family.sample(seed)?;
    transfer_trial(&family.sources, &family.target, config, seed)
}

/// Trains the multilingual first stage on the sources, then runs the
/// closest-language pipeline and a randomly initialised model on the same
/// target features. Everything derives from `seed`.
pub fn transfer_trial(sources: &[LanguageData], target: &LanguageData, config: &TransferConfig, seed: u64) -> Result<TransferTrial> {
    let train: Vec<_> = sources.iter().map(|s| s.train.clone()).collect();
    let dev: Vec<_> = sources.iter().map(|s| s.dev.clone()).collect();
    let donor = train_multilingual(&train, &dev, &config.stage1, &config.stage1_training, seed)?.model;
    transfer_from_donor(donor, sources, target, config, seed)
}

pub fn transfer_from_donor(
    donor: MultiHeadNet,
    sources: &[LanguageData],
    target: &LanguageData,
    config: &TransferConfig,
    seed: u64,
) -> Result<TransferTrial> {
    let pipeline = PipelineConfig { seed, ..config.pipeline.clone() };
    let outcome = closest_language_pipeline(&donor, sources, target, &pipeline)?;
    let features = hybrid_features(&outcome.stage1, target)?;
    let random = train_from_scratch(&pipeline.model, &features, &pipeline.final_adapt, Rng::new(seed).fork(0xAB).next_u64())?;
    Ok(TransferTrial {
        closest_epochs: epochs_to_threshold(&outcome.final_records, config.threshold),
        random_epochs: epochs_to_threshold(&random.records, config.threshold),
        random_records: random.records,
        donor,
        outcome,
    })
}
