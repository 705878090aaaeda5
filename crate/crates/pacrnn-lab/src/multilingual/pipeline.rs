use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use super::adapt::{adapt_network, AdaptMode};
use super::lid::{select_closest_language, train_lid, LidConfig, LidDecision};
use super::net::MultiHeadNet;
use super::sbn::normalized_bn_corpus;
use crate::data::Corpus;
use crate::error::{Error, Result};
use crate::pacrnn::{build_model, Model, PacRnnConfig, Variant};
use crate::tensor::Rng;
use crate::trainer::{train_model, EpochRecord, ScheduleConfig, TrainOptions, TrainRun};

/// Training and dev corpora of one language.
#[derive(Clone, Debug, PartialEq)]
pub struct LanguageData {
    pub train: Corpus,
    pub dev: Corpus,
}

impl LanguageData {
    pub fn language(&self) -> &str {
        &self.train.language
    }

    fn map(&self, f: impl Fn(&Corpus) -> Result<Corpus>) -> Result<LanguageData> {
        Ok(LanguageData { train: f(&self.train)?, dev: f(&self.dev)? })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Hybrid model template; input width and class counts are taken from
    /// the data at each step.
    pub model: PacRnnConfig,
    pub stage1_adapt: TrainOptions,
    pub lid: LidConfig,
    pub lid_training: TrainOptions,
    pub hybrid: TrainOptions,
    pub final_adapt: TrainOptions,
    pub seed: u64,
}

fn options(schedule: ScheduleConfig) -> TrainOptions {
    TrainOptions { schedule, ..TrainOptions::default() }
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig::toy(Variant::PacRnnDnn)
    }
}

impl PipelineConfig {
    pub fn toy(variant: Variant) -> Self {
        PipelineConfig {
            model: PacRnnConfig::toy(variant, 16, 30, 10),
            stage1_adapt: options(ScheduleConfig { max_epochs: 3, ..ScheduleConfig::toy(Variant::Dnn) }),
            lid: LidConfig::default(),
            lid_training: options(ScheduleConfig { max_epochs: 10, ..ScheduleConfig::toy(Variant::Dnn) }),
            hybrid: options(ScheduleConfig { max_epochs: 15, ..ScheduleConfig::toy(variant) }),
            final_adapt: options(ScheduleConfig { max_epochs: 15, ..ScheduleConfig::toy(variant) }),
            seed: 1,
        }
    }

    fn step_seed(&self, step: u64) -> u64 {
        Rng::new(self.seed).fork(step).next_u64()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProvenanceStep {
    pub step: usize,
    pub name: String,
    pub seed: u64,
    pub schedule: Option<ScheduleConfig>,
    pub epochs: usize,
    /// Hash of the parameter file this step produced, when it produced one.
    pub output_sha256: Option<String>,
    pub detail: serde_json::Value,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub donor_sha256: String,
    pub target_language: String,
    pub closest_language: String,
    pub variant: Variant,
    pub steps: Vec<ProvenanceStep>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{:02x}", b)).collect()
}

#[derive(Clone, Debug)]
pub struct PipelineOutcome {
    pub model: Model,
    pub stage1: MultiHeadNet,
    pub decision: LidDecision,
    pub closest_records: Vec<EpochRecord>,
    pub final_records: Vec<EpochRecord>,
    /// Target corpora as seen by the hybrid model (normalised stage-1
    /// bottleneck features).
    pub target_features: LanguageData,
    pub provenance: Provenance,
}

/// Hybrid-model input for one language: normalised bottleneck features of
/// the (adapted) first stage.
pub fn hybrid_features(stage1: &MultiHeadNet, data: &LanguageData) -> Result<LanguageData> {
    data.map(|c| normalized_bn_corpus(stage1, c))
}

fn hybrid_config(template: &PacRnnConfig, data: &LanguageData) -> Result<PacRnnConfig> {
    let dim = data.train.feature_dim().ok_or_else(|| Error::Data(format!("{} training corpus is empty", data.language())))?;
    Ok(PacRnnConfig {
        feature_dim: dim,
        state_classes: data.train.state_classes,
        phoneme_classes: data.train.phoneme_classes,
        ..template.clone()
    })
}

/// A hybrid model trained from random initialisation on `data`.
pub fn train_from_scratch(template: &PacRnnConfig, data: &LanguageData, options: &TrainOptions, init_seed: u64) -> Result<TrainRun<Model>> {
    let model = build_model(&hybrid_config(template, data)?, &mut Rng::new(init_seed))?;
    train_model(model, &data.train, &data.dev, options, |_, _| Ok(()))
}

/// Closest-language transfer: adapt the first stage to the target, pick the
/// source language the LID finds closest, train a hybrid model on it from
/// random initialisation, then adapt that model to the target.
pub fn closest_language_pipeline(
    donor: &MultiHeadNet,
    sources: &[LanguageData],
    target: &LanguageData,
    config: &PipelineConfig,
) -> Result<PipelineOutcome> {
    let mut steps = Vec::new();
    let target_tag = target.language().to_string();
    let head_mode = |present: bool| if present { AdaptMode::KeepHead } else { AdaptMode::ReplaceHead };

    // 1. First stage fine-tuned on the target language.
    let seed1 = config.step_seed(1);
    let mode1 = head_mode(donor.heads.contains_key(&target_tag));
    let stage1_run = adapt_network(donor.clone(), &target.train, &target.dev, mode1, &config.stage1_adapt, seed1)?;
    let stage1 = stage1_run.model;
    steps.push(ProvenanceStep {
        step: 1,
        name: "adapt_stage1".into(),
        seed: seed1,
        schedule: Some(config.stage1_adapt.schedule.clone()),
        epochs: stage1_run.records.len(),
        output_sha256: Some(sha256_hex(&stage1.to_bytes()?)),
        detail: json!({ "mode": mode1, "target": target_tag }),
    });

    // 2. Language identification over the source languages.
    let seed2 = config.step_seed(2);
    let source_train: Vec<Corpus> = sources.iter().map(|s| s.train.clone()).collect();
    let source_dev: Vec<Corpus> = sources.iter().map(|s| s.dev.clone()).collect();
    let lid = train_lid(&source_train, &source_dev, &config.lid, &config.lid_training, seed2)?;
    let decision = select_closest_language(&lid, &target.train)?;
    steps.push(ProvenanceStep {
        step: 2,
        name: "select_closest_language".into(),
        seed: seed2,
        schedule: Some(config.lid_training.schedule.clone()),
        epochs: 0,
        output_sha256: None,
        detail: json!({ "closest": decision.language, "scores": decision.scores }),
    });
    let closest = sources
        .iter()
        .find(|s| s.language() == decision.language)
        .ok_or_else(|| Error::State(format!("LID chose unknown language {}", decision.language)))?;

    // 3. Hybrid model trained from scratch on the closest language.
    let seed3 = config.step_seed(3);
    let closest_bn = hybrid_features(&stage1, closest)?;
    let closest_run = train_from_scratch(&config.model, &closest_bn, &config.hybrid, seed3)?;
    steps.push(ProvenanceStep {
        step: 3,
        name: "train_closest_language_model".into(),
        seed: seed3,
        schedule: Some(config.hybrid.schedule.clone()),
        epochs: closest_run.records.len(),
        output_sha256: Some(sha256_hex(&closest_run.model.to_bytes()?)),
        detail: json!({ "language": decision.language, "variant": config.model.variant }),
    });

    // 4. Final adaptation to the target.
    let seed4 = config.step_seed(4);
    let target_bn = hybrid_features(&stage1, target)?;
    let mode4 = head_mode(decision.language == target_tag);
    let final_run = adapt_network(closest_run.model, &target_bn.train, &target_bn.dev, mode4, &config.final_adapt, seed4)?;
    steps.push(ProvenanceStep {
        step: 4,
        name: "adapt_to_target".into(),
        seed: seed4,
        schedule: Some(config.final_adapt.schedule.clone()),
        epochs: final_run.records.len(),
        output_sha256: Some(sha256_hex(&final_run.model.to_bytes()?)),
        detail: json!({ "mode": mode4, "target": target_tag }),
    });

    let provenance = Provenance {
        donor_sha256: sha256_hex(&donor.to_bytes()?),
        target_language: target_tag,
        closest_language: decision.language.clone(),
        variant: config.model.variant,
        steps,
    };
    Ok(PipelineOutcome {
        model: final_run.model,
        stage1,
        decision,
        closest_records: closest_run.records,
        final_records: final_run.records,
        target_features: target_bn,
        provenance,
    })
}
