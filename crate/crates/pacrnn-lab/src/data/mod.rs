//! Synthetic corpora, the frame-level feature pipeline and the corpus file
//! format.

mod features;
mod io;
mod toy;

pub use features::{
    delay_labels, prepare, stack_context, trim_silence, ContextSpec, FeatureNormalizer, FrameTarget, InputSpec,
    Sequence,
};
pub use io::{read_corpus, read_corpus_from, write_corpus, write_corpus_to, CORPUS_MAGIC};
pub use toy::{generate_toy_corpus, ToyLanguageSpec, ToyParams};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// One utterance: `T x D` features with per-frame state and phoneme labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Utterance {
    pub id: String,
    pub language: String,
    pub features: Tensor,
    pub state_labels: Vec<usize>,
    pub phoneme_labels: Vec<usize>,
}

impl Utterance {
    pub fn frames(&self) -> usize {
        self.state_labels.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn validate(&self, state_classes: usize, phoneme_classes: usize) -> Result<()> {
        let t = self.features.rows();
        if self.state_labels.len() != t || self.phoneme_labels.len() != t {
            return Err(Error::Data(format!(
                "utterance {}: {} feature frames, {} state labels, {} phoneme labels",
                self.id,
                t,
                self.state_labels.len(),
                self.phoneme_labels.len()
            )));
        }
        if let Some(bad) = self.state_labels.iter().find(|&&s| s >= state_classes) {
            return Err(Error::label(
                format!("utterance {}", self.id),
                format!("state label {} outside {} classes", bad, state_classes),
            ));
        }
        if let Some(bad) = self.phoneme_labels.iter().find(|&&p| p >= phoneme_classes) {
            return Err(Error::label(
                format!("utterance {}", self.id),
                format!("phoneme label {} outside {} classes", bad, phoneme_classes),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    pub language: String,
    pub state_classes: usize,
    pub phoneme_classes: usize,
    pub silence_phoneme: Option<usize>,
    pub utterances: Vec<Utterance>,
}

impl Corpus {
    pub fn total_frames(&self) -> usize {
        self.utterances.iter().map(|u| u.frames()).sum()
    }

    pub fn feature_dim(&self) -> Option<usize> {
        self.utterances.first().map(|u| u.feature_dim())
    }

    pub fn validate(&self) -> Result<()> {
        let dim = self.feature_dim();
        for u in &self.utterances {
            u.validate(self.state_classes, self.phoneme_classes)?;
            if Some(u.feature_dim()) != dim {
                return Err(Error::Data(format!(
                    "utterance {} has feature dim {}, corpus uses {:?}",
                    u.id,
                    u.feature_dim(),
                    dim
                )));
            }
        }
        Ok(())
    }

    /// Replaces every utterance's features through `f`, keeping labels.
    pub fn map_features(&self, mut f: impl FnMut(&Utterance) -> Result<Tensor>) -> Result<Corpus> {
        let mut utterances = Vec::with_capacity(self.utterances.len());
        for u in &self.utterances {
            let features = f(u)?;
            if features.rows() != u.frames() {
                return Err(Error::dimension(
                    "map_features",
                    format!("utterance {} changed frame count {} -> {}", u.id, u.frames(), features.rows()),
                ));
            }
            utterances.push(Utterance { features, ..u.clone() });
        }
        Ok(Corpus { utterances, ..self.clone_header() })
    }

    pub fn clone_header(&self) -> Corpus {
        Corpus {
            language: self.language.clone(),
            state_classes: self.state_classes,
            phoneme_classes: self.phoneme_classes,
            silence_phoneme: self.silence_phoneme,
            utterances: Vec::new(),
        }
    }

    /// Silence trimming applied to every utterance; all-silence utterances are dropped.
    pub fn trim_silence(&self, margin: usize) -> Result<Corpus> {
        let silence = self
            .silence_phoneme
            .ok_or_else(|| Error::Data(format!("corpus {} declares no silence phoneme", self.language)))?;
        let utterances = self
            .utterances
            .iter()
            .map(|u| trim_silence(u, silence, margin))
            .filter(|u| u.frames() > 0)
            .collect();
        Ok(Corpus { utterances, ..self.clone_header() })
    }
}
