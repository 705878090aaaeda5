use crate::data::{prepare, Corpus, Sequence, Utterance};
use crate::error::{Error, Result};
use crate::pacrnn::{frame_error_rate, FrameOutput, Model};
use crate::tensor::Tensor;

/// Per-frame posteriors plus the conventions needed to score them.
pub trait FrameScorer {
    /// State and phoneme class counts; the phoneme count is `None` when the
    /// scorer has no prediction output.
    fn class_counts(&self) -> (usize, Option<usize>);
    fn loss_weights(&self) -> (f64, f64);
    fn prepare(&self, utt: &Utterance) -> Result<Sequence>;
    fn score(&self, features: &Tensor) -> Result<Vec<FrameOutput>>;
}

impl FrameScorer for Model {
    fn class_counts(&self) -> (usize, Option<usize>) {
        (self.config.state_classes, self.prediction.as_ref().map(|_| self.config.phoneme_classes))
    }

    fn loss_weights(&self) -> (f64, f64) {
        self.config.loss_weights()
    }

    fn prepare(&self, utt: &Utterance) -> Result<Sequence> {
        prepare(utt, &self.config.input, self.config.horizon)
    }

    fn score(&self, features: &Tensor) -> Result<Vec<FrameOutput>> {
        self.forward_utterance(features)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Evaluation {
    /// Mean `-J` per scored frame.
    pub loss: f64,
    pub fer: f64,
    pub frames: usize,
    pub errors: usize,
}

pub fn evaluate(scorer: &impl FrameScorer, corpus: &Corpus) -> Result<Evaluation> {
    let (states, phones) = scorer.class_counts();
    if corpus.state_classes != states || phones.is_some_and(|p| p != corpus.phoneme_classes) {
        return Err(Error::Config(format!(
            "corpus has {} states / {} phonemes, scorer expects {} / {}",
            corpus.state_classes,
            corpus.phoneme_classes,
            states,
            phones.map_or("-".to_string(), |p| p.to_string())
        )));
    }
    let seqs = corpus.utterances.iter().map(|u| scorer.prepare(u)).collect::<Result<Vec<_>>>()?;
    evaluate_sequences(scorer, &seqs)
}

/// Skip frames (no state target) are excluded from both numbers.
pub fn evaluate_sequences(scorer: &impl FrameScorer, seqs: &[Sequence]) -> Result<Evaluation> {
    let (ws, wp) = scorer.loss_weights();
    let mut loss = 0.0;
    let mut frames = 0;
    let mut errors = 0;
    for seq in seqs {
        let outputs = scorer.score(&seq.features)?;
        if outputs.len() != seq.targets.len() {
            return Err(Error::State(format!("{}: {} outputs for {} targets", seq.id, outputs.len(), seq.targets.len())));
        }
        for (out, target) in outputs.iter().zip(&seq.targets) {
            let Some(s) = target.state else { continue };
            if ws != 0.0 {
                loss -= ws * posterior_at(&out.state_posterior, s, &seq.id)?.ln();
            }
            if let (Some(l), Some(p), true) = (target.phoneme, &out.phoneme_posterior, wp != 0.0) {
                loss -= wp * posterior_at(p, l, &seq.id)?.ln();
            }
        }
        let (e, n) = frame_error_rate(&outputs, &seq.targets);
        errors += e;
        frames += n;
    }
    if frames == 0 {
        return Err(Error::Data("evaluation set has no scored frames".into()));
    }
    Ok(Evaluation { loss: loss / frames as f64, fer: errors as f64 / frames as f64, frames, errors })
}

fn posterior_at(p: &Tensor, label: usize, id: &str) -> Result<f64> {
    p.data()
        .get(label)
        .copied()
        .ok_or_else(|| Error::label(id.to_string(), format!("label {} outside {} classes", label, p.len())))
}
