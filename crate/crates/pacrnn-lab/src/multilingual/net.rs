use std::collections::BTreeMap;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::data::{prepare, stack_context, ContextSpec, Corpus, InputSpec, Sequence, Utterance};
use crate::error::{Error, Result};
use crate::layers::{ce_logit_gradient, Activation, AffineCache, AffineLayer, Parameterized, SoftmaxHead};
use crate::pacrnn::FrameOutput;
use crate::tensor::{Rng, Tensor};
use crate::trainer::{ChunkLoss, FrameScorer, Trainable};

/// Shape of one bottleneck network: sigmoid layers, a linear bottleneck,
/// more sigmoid layers, then one softmax head per language.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MultiHeadSpec {
    pub feature_dim: usize,
    #[serde(default)]
    pub context: Option<ContextSpec>,
    pub hidden: Vec<usize>,
    pub bottleneck: usize,
    pub post: Vec<usize>,
}

impl Default for MultiHeadSpec {
    fn default() -> Self {
        MultiHeadSpec {
            feature_dim: 24,
            context: Some(ContextSpec { half_window: 3, step: 1 }),
            hidden: vec![1500, 1500],
            bottleneck: 80,
            post: vec![1500],
        }
    }
}

impl MultiHeadSpec {
    pub fn toy(feature_dim: usize) -> Self {
        MultiHeadSpec { feature_dim, hidden: vec![64], bottleneck: 16, post: vec![64], ..MultiHeadSpec::default() }
    }

    pub fn input(&self) -> InputSpec {
        InputSpec { context: self.context, label_delay: 0 }
    }

    pub fn input_width(&self) -> usize {
        self.input().input_width(self.feature_dim)
    }

    pub fn validate(&self) -> Result<()> {
        if self.feature_dim == 0 {
            return Err(Error::parameter("feature_dim", "must be positive"));
        }
        if let Some(c) = self.context {
            c.validate()?;
        }
        if self.bottleneck == 0 {
            return Err(Error::parameter("bottleneck", "must be positive"));
        }
        if self.hidden.iter().chain(&self.post).any(|&w| w == 0) {
            return Err(Error::parameter("hidden", "layer widths must be positive"));
        }
        Ok(())
    }
}

pub(crate) fn stack_forward(layers: &[AffineLayer], x: &[f64]) -> Result<Vec<AffineCache>> {
    let mut caches: Vec<AffineCache> = Vec::with_capacity(layers.len());
    for layer in layers {
        let input = caches.last().map_or(x, |c| &c.output);
        let c = layer.forward_cached(input)?;
        caches.push(c);
    }
    Ok(caches)
}

pub(crate) fn stack_backward(layers: &[AffineLayer], caches: &[AffineCache], mut d: Vec<f64>, grads: &mut [AffineLayer]) -> Vec<f64> {
    for ((layer, cache), g) in layers.iter().zip(caches).zip(grads.iter_mut()).rev() {
        d = layer.backward(cache, &d, g);
    }
    d
}

fn build_stack(rng: &mut Rng, inputs: usize, widths: &[usize], activation: Activation) -> Result<Vec<AffineLayer>> {
    let mut layers = Vec::with_capacity(widths.len());
    let mut width = inputs;
    for &w in widths {
        layers.push(AffineLayer::new(rng, width, w, activation)?);
        width = w;
    }
    Ok(layers)
}

/// Shared bottleneck network with one softmax head per language tag.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiHeadNet {
    pub spec: MultiHeadSpec,
    pub hidden: Vec<AffineLayer>,
    pub bottleneck: AffineLayer,
    pub post: Vec<AffineLayer>,
    pub heads: BTreeMap<String, SoftmaxHead>,
}

/// A training sequence routed to the head of `language`.
#[derive(Clone, Debug, PartialEq)]
pub struct TaggedSequence {
    pub language: String,
    pub sequence: Sequence,
}

struct FrameCache {
    hidden: Vec<AffineCache>,
    bottleneck: AffineCache,
    post: Vec<AffineCache>,
}

impl FrameCache {
    fn top(&self) -> &[f64] {
        self.post.last().map_or(&self.bottleneck.output, |c| &c.output)
    }
}

impl MultiHeadNet {
    /// `heads` lists `(language, state classes)`; tags must be unique.
    pub fn new(spec: &MultiHeadSpec, heads: &[(String, usize)], rng: &mut Rng) -> Result<Self> {
        spec.validate()?;
        let hidden = build_stack(rng, spec.input_width(), &spec.hidden, Activation::Sigmoid)?;
        let below = spec.hidden.last().copied().unwrap_or(spec.input_width());
        let bottleneck = AffineLayer::new(rng, below, spec.bottleneck, Activation::Linear)?;
        let post = build_stack(rng, spec.bottleneck, &spec.post, Activation::Sigmoid)?;
        let mut net = MultiHeadNet { spec: spec.clone(), hidden, bottleneck, post, heads: BTreeMap::new() };
        for (language, classes) in heads {
            net.add_head(language, *classes, rng)?;
        }
        Ok(net)
    }

    pub fn top_width(&self) -> usize {
        self.spec.post.last().copied().unwrap_or(self.spec.bottleneck)
    }

    pub fn add_head(&mut self, language: &str, classes: usize, rng: &mut Rng) -> Result<()> {
        if self.heads.contains_key(language) {
            return Err(Error::Config(format!("duplicate language tag {:?}", language)));
        }
        let head = SoftmaxHead::new(rng, self.top_width(), classes)?;
        self.heads.insert(language.to_string(), head);
        Ok(())
    }

    pub fn head(&self, language: &str) -> Result<&SoftmaxHead> {
        self.heads.get(language).ok_or_else(|| Error::Config(format!("network has no head for language {:?}", language)))
    }

    pub fn input_width(&self) -> usize {
        self.spec.input_width()
    }

    pub fn bn_width(&self) -> usize {
        self.spec.bottleneck
    }

    fn frame(&self, x: &[f64]) -> Result<FrameCache> {
        if x.len() != self.input_width() {
            return Err(Error::dimension(
                "bottleneck network",
                format!("frame width {} but network expects {}", x.len(), self.input_width()),
            ));
        }
        let hidden = stack_forward(&self.hidden, x)?;
        let bottleneck = self.bottleneck.forward_cached(hidden.last().map_or(x, |c| &c.output))?;
        let post = stack_forward(&self.post, &bottleneck.output)?;
        Ok(FrameCache { hidden, bottleneck, post })
    }

    /// Stacks raw features the way the network was trained.
    pub fn stack_input(&self, features: &Tensor) -> Result<Tensor> {
        if features.rank() != 2 || features.cols() != self.spec.feature_dim {
            return Err(Error::dimension(
                "bottleneck network",
                format!("features {:?} but network reads {} columns", features.shape(), self.spec.feature_dim),
            ));
        }
        match self.spec.context {
            Some(c) if features.rows() > 0 => stack_context(features, c.half_window, c.step),
            _ if features.rows() == 0 => Ok(Tensor::zeros(&[0, self.input_width()])),
            _ => Ok(features.clone()),
        }
    }

    /// Linear bottleneck activations of already-stacked input rows.
    pub fn bottleneck_rows(&self, stacked: &Tensor) -> Result<Tensor> {
        let mut data = Vec::with_capacity(stacked.rows() * self.bn_width());
        for t in 0..stacked.rows() {
            data.extend(self.frame(stacked.row(t))?.bottleneck.output);
        }
        Tensor::matrix(stacked.rows(), self.bn_width(), data)
    }

    /// Per-frame class posteriors of `language`'s head over stacked rows.
    pub fn posteriors(&self, language: &str, stacked: &Tensor) -> Result<Vec<FrameOutput>> {
        let head = self.head(language)?;
        (0..stacked.rows())
            .map(|t| {
                let f = self.frame(stacked.row(t))?;
                Ok(FrameOutput { state_posterior: Tensor::vector(head.posterior(f.top())?), phoneme_posterior: None })
            })
            .collect()
    }

    /// Model-ready training items for one corpus, routed to its language head.
    pub fn tag_corpus(&self, corpus: &Corpus) -> Result<Vec<TaggedSequence>> {
        let head = self.head(&corpus.language)?;
        if head.classes() != corpus.state_classes {
            return Err(Error::Config(format!(
                "corpus {} has {} states, head has {}",
                corpus.language,
                corpus.state_classes,
                head.classes()
            )));
        }
        corpus
            .utterances
            .iter()
            .map(|u| {
                Ok(TaggedSequence { language: corpus.language.clone(), sequence: prepare(u, &self.spec.input(), 0)? })
            })
            .collect()
    }

    /// One language head viewed as a frame scorer.
    pub fn scorer<'a>(&'a self, language: &'a str) -> HeadScorer<'a> {
        HeadScorer { net: self, language }
    }
}

/// Extracts bottleneck features from raw utterance features.
pub fn extract_bn(net: &MultiHeadNet, features: &Tensor) -> Result<Tensor> {
    net.bottleneck_rows(&net.stack_input(features)?)
}

/// The same corpus with every utterance's features replaced by the
/// network's bottleneck output.
pub fn bn_corpus(net: &MultiHeadNet, corpus: &Corpus) -> Result<Corpus> {
    corpus.map_features(|u: &Utterance| extract_bn(net, &u.features))
}

impl Parameterized for MultiHeadNet {
    fn parameters(&self) -> Vec<&Tensor> {
        let mut v: Vec<&Tensor> = Vec::new();
        for l in self.hidden.iter().chain([&self.bottleneck]).chain(&self.post) {
            v.extend(l.parameters());
        }
        for h in self.heads.values() {
            v.extend(h.parameters());
        }
        v
    }

    fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v: Vec<&mut Tensor> = Vec::new();
        for l in self.hidden.iter_mut().chain([&mut self.bottleneck]).chain(self.post.iter_mut()) {
            v.extend(l.parameters_mut());
        }
        for h in self.heads.values_mut() {
            v.extend(h.parameters_mut());
        }
        v
    }
}

impl Trainable for MultiHeadNet {
    type Item = TaggedSequence;
    type State = usize;

    fn item_frames(item: &TaggedSequence) -> usize {
        item.sequence.frames()
    }

    fn fresh_state(&self) -> usize {
        0
    }

    fn state_position(state: &usize) -> usize {
        *state
    }

    fn chunk_gradient(&self, item: &TaggedSequence, rows: Range<usize>, state: &mut usize, grads: &mut Self) -> Result<ChunkLoss> {
        let head = self.head(&item.language)?;
        let mut out = ChunkLoss::default();
        let n = rows.len();
        for t in rows {
            let Some(label) = item.sequence.targets[t].state else { continue };
            if label >= head.classes() {
                return Err(Error::label(
                    format!("{} frame {}", item.sequence.id, t),
                    format!("state label {} outside {} classes", label, head.classes()),
                ));
            }
            let f = self.frame(item.sequence.features.row(t))?;
            let posterior = head.posterior(f.top())?;
            out.loss -= posterior[label].ln();
            out.scored += 1;
            let dlogits = ce_logit_gradient(&posterior, label, 1.0);
            let g_head = grads.heads.get_mut(&item.language).ok_or_else(|| Error::State("gradient net lacks a head".into()))?;
            let d_top = head.backward_logits(f.top(), &dlogits, g_head);
            let d_bn = stack_backward(&self.post, &f.post, d_top, &mut grads.post);
            let d_hidden = self.bottleneck.backward(&f.bottleneck, &d_bn, &mut grads.bottleneck);
            stack_backward(&self.hidden, &f.hidden, d_hidden, &mut grads.hidden);
        }
        *state += n;
        Ok(out)
    }
}

pub struct HeadScorer<'a> {
    net: &'a MultiHeadNet,
    language: &'a str,
}

impl FrameScorer for HeadScorer<'_> {
    fn class_counts(&self) -> (usize, Option<usize>) {
        (self.net.heads.get(self.language).map_or(0, |h| h.classes()), None)
    }

    fn loss_weights(&self) -> (f64, f64) {
        (1.0, 0.0)
    }

    fn prepare(&self, utt: &Utterance) -> Result<Sequence> {
        prepare(utt, &self.net.spec.input(), 0)
    }

    fn score(&self, features: &Tensor) -> Result<Vec<FrameOutput>> {
        self.net.posteriors(self.language, features)
    }
}

pub const MULTIHEAD_KIND: &str = "multihead-net";

#[derive(Serialize, Deserialize)]
struct StoredHeads {
    spec: MultiHeadSpec,
    heads: Vec<(String, usize)>,
}

impl MultiHeadNet {
    pub fn manifest(&self) -> crate::serialize::Manifest {
        use crate::serialize::layer;
        let mut layers = Vec::new();
        for (i, l) in self.hidden.iter().enumerate() {
            layers.push(layer(format!("hidden.{}", i), "affine-sigmoid", &[("weights", &l.weights), ("bias", &l.bias)]));
        }
        layers.push(layer("bottleneck", "affine-linear", &[("weights", &self.bottleneck.weights), ("bias", &self.bottleneck.bias)]));
        for (i, l) in self.post.iter().enumerate() {
            layers.push(layer(format!("post.{}", i), "affine-sigmoid", &[("weights", &l.weights), ("bias", &l.bias)]));
        }
        for (tag, h) in &self.heads {
            layers.push(layer(format!("head.{}", tag), "softmax", &[("weights", &h.weights), ("bias", &h.bias)]));
        }
        let stored = StoredHeads {
            spec: self.spec.clone(),
            heads: self.heads.iter().map(|(t, h)| (t.clone(), h.classes())).collect(),
        };
        crate::serialize::Manifest {
            kind: MULTIHEAD_KIND.into(),
            config: serde_json::to_value(stored).expect("spec serialises"),
            layers,
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        crate::serialize::encode(&self.manifest(), &self.parameters())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (manifest, tensors) = crate::serialize::decode(bytes)?;
        if manifest.kind != MULTIHEAD_KIND {
            return Err(Error::Format { offset: 20, detail: format!("file holds a {:?}, not a {}", manifest.kind, MULTIHEAD_KIND) });
        }
        let stored: StoredHeads = serde_json::from_value(manifest.config)
            .map_err(|e| Error::Format { offset: 20, detail: format!("embedded spec: {}", e) })?;
        let mut net = MultiHeadNet::new(&stored.spec, &stored.heads, &mut Rng::new(0))?;
        crate::serialize::load_into(net.parameters_mut(), tensors)?;
        Ok(net)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
