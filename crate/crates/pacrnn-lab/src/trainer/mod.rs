//! Truncated-BPTT training with momentum SGD and a dev-driven learning-rate
//! schedule.
//!
//! The first epoch runs at the base rate without momentum. From the second
//! epoch the rate is multiplied by the ramp factor and momentum switches on.
//! After that the rate is halved every time the dev loss fails to beat the
//! best so far, until it drops below `base / 64` or the epoch cap is reached.

mod batches;
mod eval;
mod schedule;

use std::ops::Range;

use serde::{Deserialize, Serialize};

pub use batches::{make_batches, BpttPlan, ChunkBatch, ChunkMember};
pub use eval::{evaluate, evaluate_sequences, Evaluation, FrameScorer};
pub use schedule::{sgd_update, GradientScale, Phase, Schedule, ScheduleConfig, Velocity, TOY_CLIP_NORM};

use crate::data::{prepare, Corpus, Sequence};
use crate::error::{Error, Result};
use crate::layers::Parameterized;
use crate::pacrnn::{Model, RecurrentState};
use crate::tensor::Rng;

/// Loss `-J` summed over a chunk and the number of frames that carried a
/// state target.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ChunkLoss {
    pub loss: f64,
    pub scored: usize,
}

/// Anything the epoch loop can train: a parameter set that accumulates
/// gradients chunk by chunk while carrying per-utterance state.
pub trait Trainable: Parameterized + Clone {
    type Item;
    type State;

    fn item_frames(item: &Self::Item) -> usize;
    fn fresh_state(&self) -> Self::State;
    /// Frames already consumed by `state`.
    fn state_position(state: &Self::State) -> usize;
    /// Forward over `rows` from `state`, backward truncated at `rows.start`,
    /// gradients added into `grads`.
    fn chunk_gradient(&self, item: &Self::Item, rows: Range<usize>, state: &mut Self::State, grads: &mut Self) -> Result<ChunkLoss>;
}

impl Trainable for Model {
    type Item = Sequence;
    type State = RecurrentState;

    fn item_frames(item: &Sequence) -> usize {
        item.frames()
    }

    fn fresh_state(&self) -> RecurrentState {
        self.new_state()
    }

    fn state_position(state: &RecurrentState) -> usize {
        state.frames_seen
    }

    fn chunk_gradient(&self, item: &Sequence, rows: Range<usize>, state: &mut RecurrentState, grads: &mut Model) -> Result<ChunkLoss> {
        let targets = &item.targets[rows.clone()];
        let tape = self.forward_tape(&item.features, rows, state)?;
        let loss = self.backward_tape(&tape, targets, grads)?;
        Ok(ChunkLoss { loss, scored: targets.iter().filter(|t| t.state.is_some()).count() })
    }
}

/// Runs one chunk-batch. `states[k]` belongs to `batch.members[k]` and must
/// sit exactly at the chunk start; members are accumulated in order.
pub fn train_chunk<M: Trainable>(
    model: &M,
    items: &[M::Item],
    batch: &ChunkBatch,
    states: &mut [M::State],
    grads: &mut M,
) -> Result<ChunkLoss> {
    if states.len() != batch.members.len() {
        return Err(Error::State(format!("{} carried states for {} chunk members", states.len(), batch.members.len())));
    }
    let mut total = ChunkLoss::default();
    for (member, state) in batch.members.iter().zip(states.iter_mut()) {
        if member.active == 0 {
            continue;
        }
        let item = items.get(member.item).ok_or_else(|| Error::State(format!("chunk refers to missing item {}", member.item)))?;
        let position = M::state_position(state);
        if position != batch.start {
            return Err(Error::State(format!(
                "item {} state is at frame {} but chunk starts at {}",
                member.item, position, batch.start
            )));
        }
        let part = model.chunk_gradient(item, batch.start..batch.start + member.active, state, grads)?;
        total.loss += part.loss;
        total.scored += part.scored;
    }
    Ok(total)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainOptions {
    pub plan: BpttPlan,
    pub schedule: ScheduleConfig,
    /// Seeds the per-epoch utterance shuffle.
    pub seed: u64,
}

/// One line of the metrics log. `train_j` is the mean per-frame objective
/// accumulated while training the epoch; `dev_j` and `dev_fer` are measured
/// after it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub train_j: f64,
    pub dev_j: f64,
    pub dev_fer: f64,
}

#[derive(Clone, Debug)]
pub struct TrainRun<M> {
    pub model: M,
    pub records: Vec<EpochRecord>,
}

impl<M> TrainRun<M> {
    pub fn epochs_to_threshold(&self, fer: f64) -> Option<usize> {
        epochs_to_threshold(&self.records, fer)
    }

    pub fn final_dev_fer(&self) -> Option<f64> {
        self.records.last().map(|r| r.dev_fer)
    }
}

/// First epoch whose dev FER is at or below `fer`.
pub fn epochs_to_threshold(records: &[EpochRecord], fer: f64) -> Option<usize> {
    records.iter().find(|r| r.dev_fer <= fer).map(|r| r.epoch)
}

fn clear<P: Parameterized>(p: &mut P) {
    for t in p.parameters_mut() {
        t.fill(0.0);
    }
}

fn rescale<P: Parameterized>(p: &mut P, factor: f64) {
    for t in p.parameters_mut() {
        t.scale(factor);
    }
}

fn global_norm<P: Parameterized>(p: &P) -> f64 {
    p.parameters().iter().map(|t| t.sum_squares()).sum::<f64>().sqrt()
}

/// The epoch loop. `dev` scores the model after every epoch; `on_epoch` sees
/// each record together with the model that produced it.
pub fn train<M: Trainable>(
    mut model: M,
    items: &[M::Item],
    mut dev: impl FnMut(&M) -> Result<Evaluation>,
    options: &TrainOptions,
    mut on_epoch: impl FnMut(&EpochRecord, &M) -> Result<()>,
) -> Result<TrainRun<M>> {
    options.plan.validate()?;
    if items.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    let mut schedule = Schedule::new(options.schedule.clone())?;
    let lengths: Vec<usize> = items.iter().map(M::item_frames).collect();
    let shuffle = Rng::new(options.seed);
    let mut velocity = Velocity::zeros_for(&model);
    let mut grads = model.zeros_like();
    let mut records = Vec::new();
    while !schedule.finished {
        let epoch = schedule.epoch;
        let (lr, momentum) = (schedule.learning_rate, schedule.momentum);
        let batches = make_batches(&lengths, &options.plan, &mut shuffle.fork(epoch as u64));
        let mut states: Vec<M::State> = Vec::new();
        let mut total = ChunkLoss::default();
        for batch in &batches {
            if batch.chunk == 0 {
                states = batch.members.iter().map(|_| model.fresh_state()).collect();
            }
            clear(&mut grads);
            let part = train_chunk(&model, items, batch, &mut states, &mut grads)?;
            total.loss += part.loss;
            total.scored += part.scored;
            if part.scored == 0 {
                continue;
            }
            if options.schedule.gradient_scale == GradientScale::Mean {
                rescale(&mut grads, 1.0 / part.scored as f64);
            }
            if let Some(limit) = options.schedule.clip_norm {
                let norm = global_norm(&grads);
                if norm > limit {
                    rescale(&mut grads, limit / norm);
                }
            }
            sgd_update(&mut model, &grads, &mut velocity, lr, momentum)?;
        }
        let eval = dev(&model)?;
        let record = EpochRecord {
            epoch,
            learning_rate: lr,
            momentum,
            train_j: -total.loss / total.scored.max(1) as f64,
            dev_j: -eval.loss,
            dev_fer: eval.fer,
        };
        on_epoch(&record, &model)?;
        records.push(record);
        schedule.advance(eval.loss);
    }
    Ok(TrainRun { model, records })
}

fn check_classes(model: &Model, corpus: &Corpus, role: &str) -> Result<()> {
    let cfg = &model.config;
    if corpus.state_classes != cfg.state_classes || (model.prediction.is_some() && corpus.phoneme_classes != cfg.phoneme_classes) {
        return Err(Error::Config(format!(
            "{} corpus has {} states / {} phonemes, model expects {} / {}",
            role, corpus.state_classes, corpus.phoneme_classes, cfg.state_classes, cfg.phoneme_classes
        )));
    }
    Ok(())
}

/// Model-ready sequences of a corpus under the model's input convention.
pub fn prepare_corpus(model: &Model, corpus: &Corpus) -> Result<Vec<Sequence>> {
    corpus.utterances.iter().map(|u| prepare(u, &model.config.input, model.config.horizon)).collect()
}

/// Trains an acoustic model on `train`, scoring `dev` after every epoch.
pub fn train_model(
    model: Model,
    train_corpus: &Corpus,
    dev_corpus: &Corpus,
    options: &TrainOptions,
    on_epoch: impl FnMut(&EpochRecord, &Model) -> Result<()>,
) -> Result<TrainRun<Model>> {
    check_classes(&model, train_corpus, "training")?;
    check_classes(&model, dev_corpus, "dev")?;
    let train_seqs = prepare_corpus(&model, train_corpus)?;
    let dev_seqs = prepare_corpus(&model, dev_corpus)?;
    train(model, &train_seqs, |m: &Model| evaluate_sequences(m, &dev_seqs), options, on_epoch)
}
