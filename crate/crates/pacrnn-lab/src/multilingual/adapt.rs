use serde::{Deserialize, Serialize};

use super::net::MultiHeadNet;
use super::sbn::continue_multilingual;
use crate::data::Corpus;
use crate::error::{Error, Result};
use crate::pacrnn::Model;
use crate::tensor::Rng;
use crate::trainer::{train_model, TrainOptions, TrainRun};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdaptMode {
    /// Fine-tune with the existing output layer(s).
    KeepHead,
    /// Fresh randomly initialised output layer(s) for the target inventory.
    #[default]
    ReplaceHead,
}

/// Networks that can be carried over to a new language.
pub trait Adaptable: Sized {
    /// Applies the head policy without training.
    fn retarget(self, target: &Corpus, mode: AdaptMode, rng: &mut Rng) -> Result<Self>;
    fn fine_tune(self, train: &Corpus, dev: &Corpus, options: &TrainOptions) -> Result<TrainRun<Self>>;
}

impl Adaptable for Model {
    fn retarget(mut self, target: &Corpus, mode: AdaptMode, rng: &mut Rng) -> Result<Self> {
        if target.feature_dim().is_some_and(|d| d != self.config.feature_dim) {
            return Err(Error::Config(format!(
                "target features have {} dims, model reads {}",
                target.feature_dim().unwrap_or(0),
                self.config.feature_dim
            )));
        }
        match mode {
            AdaptMode::KeepHead => {
                let phones_match = self.prediction.is_none() || target.phoneme_classes == self.config.phoneme_classes;
                if target.state_classes != self.config.state_classes || !phones_match {
                    return Err(Error::Config(format!(
                        "keep_head needs matching classes: target {} / {}, model {} / {}",
                        target.state_classes, target.phoneme_classes, self.config.state_classes, self.config.phoneme_classes
                    )));
                }
            }
            AdaptMode::ReplaceHead => self.replace_heads(target.state_classes, target.phoneme_classes, rng)?,
        }
        Ok(self)
    }

    fn fine_tune(self, train: &Corpus, dev: &Corpus, options: &TrainOptions) -> Result<TrainRun<Self>> {
        train_model(self, train, dev, options, |_, _| Ok(()))
    }
}

impl Adaptable for MultiHeadNet {
    fn retarget(mut self, target: &Corpus, mode: AdaptMode, rng: &mut Rng) -> Result<Self> {
        match mode {
            AdaptMode::KeepHead => {
                let head = self.head(&target.language)?;
                if head.classes() != target.state_classes {
                    return Err(Error::Config(format!(
                        "keep_head needs matching classes: target {} has {}, head has {}",
                        target.language,
                        target.state_classes,
                        head.classes()
                    )));
                }
            }
            AdaptMode::ReplaceHead => {
                self.heads.clear();
                self.add_head(&target.language, target.state_classes, rng)?;
            }
        }
        Ok(self)
    }

    fn fine_tune(self, train: &Corpus, dev: &Corpus, options: &TrainOptions) -> Result<TrainRun<Self>> {
        continue_multilingual(self, std::slice::from_ref(train), std::slice::from_ref(dev), options)
    }
}

/// Hidden layers always start from `net`. With `max_epochs == 0` only the
/// head policy is applied.
pub fn adapt_network<N: Adaptable>(
    net: N,
    train: &Corpus,
    dev: &Corpus,
    mode: AdaptMode,
    options: &TrainOptions,
    head_seed: u64,
) -> Result<TrainRun<N>> {
    let net = net.retarget(train, mode, &mut Rng::new(head_seed))?;
    if options.schedule.max_epochs == 0 {
        return Ok(TrainRun { model: net, records: Vec::new() });
    }
    net.fine_tune(train, dev, options)
}
