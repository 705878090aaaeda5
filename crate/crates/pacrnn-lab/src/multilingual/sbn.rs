use std::collections::BTreeSet;

use super::net::{bn_corpus, MultiHeadNet, MultiHeadSpec, TaggedSequence};
use crate::data::{Corpus, FeatureNormalizer};
use crate::error::{Error, Result};
use crate::tensor::Rng;
use crate::trainer::{evaluate_sequences, train, Evaluation, TrainOptions, TrainRun};

fn check_tags(corpora: &[Corpus]) -> Result<()> {
    if corpora.is_empty() {
        return Err(Error::Data("no corpora given".into()));
    }
    let mut seen = BTreeSet::new();
    for c in corpora {
        if !seen.insert(c.language.as_str()) {
            return Err(Error::Config(format!("duplicate language tag {:?}", c.language)));
        }
    }
    Ok(())
}

/// Pooled dev score over several languages, each through its own head.
pub fn evaluate_multilingual(net: &MultiHeadNet, dev: &[Corpus]) -> Result<Evaluation> {
    let mut total = Evaluation { loss: 0.0, fer: 0.0, frames: 0, errors: 0 };
    for corpus in dev {
        let seqs: Vec<_> = net.tag_corpus(corpus)?.into_iter().map(|t| t.sequence).collect();
        let e = evaluate_sequences(&net.scorer(&corpus.language), &seqs)?;
        total.loss += e.loss * e.frames as f64;
        total.frames += e.frames;
        total.errors += e.errors;
    }
    if total.frames == 0 {
        return Err(Error::Data("dev corpora have no scored frames".into()));
    }
    total.loss /= total.frames as f64;
    total.fer = total.errors as f64 / total.frames as f64;
    Ok(total)
}

/// Pools `train` (one corpus per language) into a freshly initialised
/// network with one head per language.
pub fn train_multilingual(
    train_sets: &[Corpus],
    dev_sets: &[Corpus],
    spec: &MultiHeadSpec,
    options: &TrainOptions,
    init_seed: u64,
) -> Result<TrainRun<MultiHeadNet>> {
    check_tags(train_sets)?;
    let heads: Vec<(String, usize)> = train_sets.iter().map(|c| (c.language.clone(), c.state_classes)).collect();
    let net = MultiHeadNet::new(spec, &heads, &mut Rng::new(init_seed))?;
    continue_multilingual(net, train_sets, dev_sets, options)
}

/// Trains an existing network on pooled corpora; every corpus needs a head.
pub fn continue_multilingual(
    net: MultiHeadNet,
    train_sets: &[Corpus],
    dev_sets: &[Corpus],
    options: &TrainOptions,
) -> Result<TrainRun<MultiHeadNet>> {
    check_tags(train_sets)?;
    let mut items: Vec<TaggedSequence> = Vec::new();
    for c in train_sets {
        items.extend(net.tag_corpus(c)?);
    }
    for c in dev_sets {
        net.tag_corpus(c)?;
    }
    train(net, &items, |n: &MultiHeadNet| evaluate_multilingual(n, dev_sets), options, |_, _| Ok(()))
}

/// Bottleneck features normalised to zero mean and unit variance with the
/// corpus's own statistics.
pub fn normalized_bn_corpus(net: &MultiHeadNet, corpus: &Corpus) -> Result<Corpus> {
    let bn = bn_corpus(net, corpus)?;
    FeatureNormalizer::fit(&bn)?.apply_corpus(&bn)
}

/// Two cascaded bottleneck networks; the second reads context-stacked
/// bottleneck features of the first.
#[derive(Clone, Debug, PartialEq)]
pub struct SbnPipeline {
    pub stage1: MultiHeadNet,
    pub stage2: MultiHeadNet,
}

impl SbnPipeline {
    pub fn new(stage1: MultiHeadNet, stage2: MultiHeadNet) -> Result<Self> {
        if stage2.spec.feature_dim != stage1.bn_width() {
            return Err(Error::dimension(
                "sbn",
                format!("stage 2 reads {} features, stage 1 bottleneck has {}", stage2.spec.feature_dim, stage1.bn_width()),
            ));
        }
        Ok(SbnPipeline { stage1, stage2 })
    }

    /// Stage-2 bottleneck features of a raw-feature corpus, each stage's
    /// output normalised with the corpus's own statistics.
    pub fn corpus_features(&self, corpus: &Corpus) -> Result<Corpus> {
        normalized_bn_corpus(&self.stage2, &normalized_bn_corpus(&self.stage1, corpus)?)
    }

    /// Trains both stages multilingually: stage 1 on raw features, then stage
    /// 2 on normalised stage-1 bottleneck features.
    pub fn train(
        train_sets: &[Corpus],
        dev_sets: &[Corpus],
        stage1: &MultiHeadSpec,
        stage2: &MultiHeadSpec,
        options: &TrainOptions,
        init_seed: u64,
    ) -> Result<SbnPipeline> {
        let s1 = train_multilingual(train_sets, dev_sets, stage1, options, init_seed)?.model;
        let bn_train = train_sets.iter().map(|c| normalized_bn_corpus(&s1, c)).collect::<Result<Vec<_>>>()?;
        let bn_dev = dev_sets.iter().map(|c| normalized_bn_corpus(&s1, c)).collect::<Result<Vec<_>>>()?;
        let spec2 = MultiHeadSpec { feature_dim: s1.bn_width(), ..stage2.clone() };
        let s2 = train_multilingual(&bn_train, &bn_dev, &spec2, options, init_seed.wrapping_add(1))?.model;
        SbnPipeline::new(s1, s2)
    }
}
