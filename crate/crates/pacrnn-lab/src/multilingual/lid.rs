use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::net::{stack_backward, stack_forward};
use crate::data::{stack_context, ContextSpec, Corpus, FrameTarget, Sequence};
use crate::error::{Error, Result};
use crate::layers::{ce_logit_gradient, Activation, AffineLayer, Parameterized, SoftmaxHead};
use crate::pacrnn::FrameOutput;
use crate::tensor::{Rng, Tensor};
use crate::trainer::{evaluate_sequences, train, ChunkLoss, Evaluation, FrameScorer, TrainOptions, Trainable};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LidConfig {
    #[serde(default)]
    pub context: Option<ContextSpec>,
    pub hidden: usize,
}

impl Default for LidConfig {
    fn default() -> Self {
        LidConfig { context: Some(ContextSpec { half_window: 2, step: 1 }), hidden: 64 }
    }
}

/// Frame-level language classifier: one sigmoid layer and a softmax over
/// source-language tags (kept in sorted order).
#[derive(Clone, Debug, PartialEq)]
pub struct LidModel {
    pub languages: Vec<String>,
    pub feature_dim: usize,
    pub context: Option<ContextSpec>,
    pub hidden: AffineLayer,
    pub head: SoftmaxHead,
}

impl LidModel {
    pub fn new(languages: &[String], feature_dim: usize, config: &LidConfig, rng: &mut Rng) -> Result<Self> {
        let mut languages = languages.to_vec();
        languages.sort();
        if languages.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("duplicate language tag in LID training set".into()));
        }
        if languages.is_empty() {
            return Err(Error::Data("LID needs at least one source language".into()));
        }
        let taps = config.context.map_or(1, |c| c.taps());
        let hidden = AffineLayer::new(rng, feature_dim * taps, config.hidden, Activation::Sigmoid)?;
        // A single language still gets a two-way softmax; the spare class is never a target.
        let head = SoftmaxHead::new(rng, config.hidden, languages.len().max(2))?;
        Ok(LidModel { languages, feature_dim, context: config.context, hidden, head })
    }

    fn stack(&self, features: &Tensor) -> Result<Tensor> {
        if features.rank() != 2 || features.cols() != self.feature_dim {
            return Err(Error::dimension("lid", format!("features {:?}, expected {} columns", features.shape(), self.feature_dim)));
        }
        match self.context {
            Some(c) if features.rows() > 0 => stack_context(features, c.half_window, c.step),
            _ => Ok(features.clone()),
        }
    }

    fn language_index(&self, tag: &str) -> Result<usize> {
        self.languages.binary_search_by(|l| l.as_str().cmp(tag)).map_err(|_| Error::Config(format!("unknown language {:?}", tag)))
    }

    pub fn sequences(&self, corpus: &Corpus) -> Result<Vec<Sequence>> {
        let label = self.language_index(&corpus.language)?;
        corpus
            .utterances
            .iter()
            .map(|u| {
                Ok(Sequence {
                    id: u.id.clone(),
                    features: self.stack(&u.features)?,
                    targets: vec![FrameTarget { state: Some(label), phoneme: None }; u.frames()],
                })
            })
            .collect()
    }

    /// Posterior over source languages for each frame of raw features.
    pub fn frame_posteriors(&self, features: &Tensor) -> Result<Vec<Vec<f64>>> {
        let stacked = self.stack(features)?;
        (0..stacked.rows())
            .map(|t| {
                let mut p = self.head.posterior(&self.hidden.forward(stacked.row(t))?)?;
                p.truncate(self.languages.len());
                Ok(p)
            })
            .collect()
    }

    /// Mean frame posterior over every frame of `corpus`. Each language's
    /// values are summed in sorted order, so the result does not depend on
    /// utterance order.
    pub fn mean_posterior(&self, corpus: &Corpus) -> Result<Vec<f64>> {
        let mut columns: Vec<Vec<f64>> = vec![Vec::new(); self.languages.len()];
        for u in &corpus.utterances {
            for p in self.frame_posteriors(&u.features)? {
                for (col, v) in columns.iter_mut().zip(p) {
                    col.push(v);
                }
            }
        }
        let frames = columns[0].len();
        if frames == 0 {
            return Err(Error::Data(format!("target corpus {} has no frames", corpus.language)));
        }
        Ok(columns
            .into_iter()
            .map(|mut col| {
                col.sort_by(f64::total_cmp);
                col.iter().sum::<f64>() / frames as f64
            })
            .collect())
    }
}

/// Language scores in tag order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LidDecision {
    pub language: String,
    pub scores: Vec<(String, f64)>,
}

/// Argmax of the mean posterior; ties go to the lexicographically first tag.
pub fn select_closest_language(lid: &LidModel, target: &Corpus) -> Result<LidDecision> {
    let mean = lid.mean_posterior(target)?;
    let mut best = 0;
    for (k, &v) in mean.iter().enumerate() {
        if v > mean[best] {
            best = k;
        }
    }
    Ok(LidDecision {
        language: lid.languages[best].clone(),
        scores: lid.languages.iter().cloned().zip(mean).collect(),
    })
}

impl Parameterized for LidModel {
    fn parameters(&self) -> Vec<&Tensor> {
        let mut v = self.hidden.parameters();
        v.extend(self.head.parameters());
        v
    }

    fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v = self.hidden.parameters_mut();
        v.extend(self.head.parameters_mut());
        v
    }
}

impl Trainable for LidModel {
    type Item = Sequence;
    type State = usize;

    fn item_frames(item: &Sequence) -> usize {
        item.frames()
    }

    fn fresh_state(&self) -> usize {
        0
    }

    fn state_position(state: &usize) -> usize {
        *state
    }

    fn chunk_gradient(&self, item: &Sequence, rows: Range<usize>, state: &mut usize, grads: &mut Self) -> Result<ChunkLoss> {
        let mut out = ChunkLoss::default();
        let layers = std::slice::from_ref(&self.hidden);
        *state += rows.len();
        for t in rows {
            let Some(label) = item.targets[t].state else { continue };
            let caches = stack_forward(layers, item.features.row(t))?;
            let posterior = self.head.posterior(&caches[0].output)?;
            out.loss -= posterior[label].ln();
            out.scored += 1;
            let d = self.head.backward_logits(&caches[0].output, &ce_logit_gradient(&posterior, label, 1.0), &mut grads.head);
            stack_backward(layers, &caches, d, std::slice::from_mut(&mut grads.hidden));
        }
        Ok(out)
    }
}

impl FrameScorer for LidModel {
    fn class_counts(&self) -> (usize, Option<usize>) {
        (self.head.classes(), None)
    }

    fn loss_weights(&self) -> (f64, f64) {
        (1.0, 0.0)
    }

    fn prepare(&self, _utt: &crate::data::Utterance) -> Result<Sequence> {
        Err(Error::State("LID sequences are built per corpus".into()))
    }

    fn score(&self, stacked: &Tensor) -> Result<Vec<FrameOutput>> {
        (0..stacked.rows())
            .map(|t| {
                let p = self.head.posterior(&self.hidden.forward(stacked.row(t))?)?;
                Ok(FrameOutput { state_posterior: Tensor::vector(p), phoneme_posterior: None })
            })
            .collect()
    }
}

/// Trains the classifier on pooled source corpora (raw features), scoring
/// the pooled dev corpora after each epoch.
pub fn train_lid(
    sources: &[Corpus],
    dev: &[Corpus],
    config: &LidConfig,
    options: &TrainOptions,
    init_seed: u64,
) -> Result<LidModel> {
    let languages: Vec<String> = sources.iter().map(|c| c.language.clone()).collect();
    let dim = sources
        .iter()
        .find_map(|c| c.feature_dim())
        .ok_or_else(|| Error::Data("LID training corpora are empty".into()))?;
    let lid = LidModel::new(&languages, dim, config, &mut Rng::new(init_seed))?;
    let mut items = Vec::new();
    for c in sources {
        items.extend(lid.sequences(c)?);
    }
    let mut dev_items = Vec::new();
    for c in dev {
        dev_items.extend(lid.sequences(c)?);
    }
    let dev_items = if dev_items.is_empty() { items.clone() } else { dev_items };
    let score = |m: &LidModel| -> Result<Evaluation> { evaluate_sequences(m, &dev_items) };
    Ok(train(lid, &items, score, options, |_, _| Ok(()))?.model)
}
