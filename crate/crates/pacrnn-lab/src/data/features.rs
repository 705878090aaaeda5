use serde::{Deserialize, Serialize};

use super::{Corpus, Utterance};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Sparse context window: taps at `-half_window, -half_window + step, ..., +half_window`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContextSpec {
    pub half_window: usize,
    pub step: usize,
}

impl ContextSpec {
    /// ±15 frames sampled every 5th frame: 7 taps.
    pub const STACKED_BOTTLENECK: ContextSpec = ContextSpec { half_window: 15, step: 5 };

    pub fn validate(&self) -> Result<()> {
        if self.step == 0 || self.half_window % self.step != 0 {
            return Err(Error::parameter(
                "context",
                format!("half_window {} must be a multiple of a positive step {}", self.half_window, self.step),
            ));
        }
        Ok(())
    }

    pub fn offsets(&self) -> Vec<isize> {
        let h = self.half_window as isize;
        (-h..=h).step_by(self.step.max(1)).collect()
    }

    pub fn taps(&self) -> usize {
        2 * (self.half_window / self.step.max(1)) + 1
    }
}

/// Stacks the frames at each context offset (clamped to the utterance edges)
/// into one row per frame. The frame rate is unchanged.
pub fn stack_context(features: &Tensor, half_window: usize, step: usize) -> Result<Tensor> {
    let spec = ContextSpec { half_window, step };
    spec.validate()?;
    if features.rank() != 2 {
        return Err(Error::dimension("stack_context", format!("expected T x D, got {:?}", features.shape())));
    }
    let (t_len, dim) = (features.rows(), features.cols());
    let offsets = spec.offsets();
    let width = offsets.len() * dim;
    let mut out = Vec::with_capacity(t_len * width);
    for t in 0..t_len {
        for &off in &offsets {
            let src = (t as isize + off).clamp(0, t_len as isize - 1) as usize;
            out.extend_from_slice(features.row(src));
        }
    }
    Tensor::matrix(t_len, width, out)
}

/// Shifts labels later by `delay` frames; the first `delay` frames become
/// skip frames (`None`) that are excluded from the loss.
pub fn delay_labels(labels: &[usize], delay: usize) -> Result<Vec<Option<usize>>> {
    if delay > 0 && delay >= labels.len() {
        return Err(Error::Data(format!("label delay {} leaves no frames in a {}-frame utterance", delay, labels.len())));
    }
    Ok((0..labels.len()).map(|t| if t >= delay { Some(labels[t - delay]) } else { None }).collect())
}

/// Keeps silence frames only within `margin` frames of a non-silence frame.
pub fn trim_silence(utt: &Utterance, silence_phoneme: usize, margin: usize) -> Utterance {
    let t_len = utt.frames();
    let speech: Vec<usize> = (0..t_len).filter(|&t| utt.phoneme_labels[t] != silence_phoneme).collect();
    let mut keep = vec![false; t_len];
    // Distance to the nearest speech frame via two sweeps.
    let mut last: Option<usize> = None;
    for t in 0..t_len {
        if utt.phoneme_labels[t] != silence_phoneme {
            last = Some(t);
        }
        if let Some(s) = last {
            keep[t] |= t - s <= margin;
        }
    }
    let mut next: Option<usize> = None;
    for t in (0..t_len).rev() {
        if utt.phoneme_labels[t] != silence_phoneme {
            next = Some(t);
        }
        if let Some(s) = next {
            keep[t] |= s - t <= margin;
        }
    }
    if speech.is_empty() {
        keep.iter_mut().for_each(|k| *k = false);
    }
    let dim = utt.feature_dim();
    let mut data = Vec::new();
    let mut states = Vec::new();
    let mut phones = Vec::new();
    for t in (0..t_len).filter(|&t| keep[t]) {
        data.extend_from_slice(utt.features.row(t));
        states.push(utt.state_labels[t]);
        phones.push(utt.phoneme_labels[t]);
    }
    Utterance {
        id: utt.id.clone(),
        language: utt.language.clone(),
        features: Tensor::matrix(states.len(), dim, data).expect("row-aligned copy"),
        state_labels: states,
        phoneme_labels: phones,
    }
}

/// Per-dimension global mean/variance normalisation fitted on one corpus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureNormalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl FeatureNormalizer {
    pub fn fit(corpus: &Corpus) -> Result<Self> {
        let dim = corpus.feature_dim().ok_or_else(|| Error::Data("cannot normalise an empty corpus".into()))?;
        let mut sum = vec![0.0; dim];
        let mut sq = vec![0.0; dim];
        let mut n = 0usize;
        for u in &corpus.utterances {
            for t in 0..u.frames() {
                for (k, v) in u.features.row(t).iter().enumerate() {
                    sum[k] += v;
                    sq[k] += v * v;
                }
                n += 1;
            }
        }
        if n == 0 {
            return Err(Error::Data("cannot normalise a corpus without frames".into()));
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
        let std = sq
            .iter()
            .zip(&mean)
            .map(|(s, m)| (s / n as f64 - m * m).max(0.0).sqrt().max(1e-8))
            .collect();
        Ok(FeatureNormalizer { mean, std })
    }

    pub fn apply(&self, features: &Tensor) -> Result<Tensor> {
        if features.cols() != self.mean.len() {
            return Err(Error::dimension(
                "normalise",
                format!("{} columns but normaliser has {}", features.cols(), self.mean.len()),
            ));
        }
        let mut out = features.clone();
        for t in 0..out.rows() {
            for (k, v) in out.row_mut(t).iter_mut().enumerate() {
                *v = (*v - self.mean[k]) / self.std[k];
            }
        }
        Ok(out)
    }

    pub fn apply_corpus(&self, corpus: &Corpus) -> Result<Corpus> {
        corpus.map_features(|u| self.apply(&u.features))
    }
}

/// How raw utterance features become model input.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InputSpec {
    /// A missing key means no stacking, so that configs written without
    /// the key read back unchanged.
    #[serde(default)]
    pub context: Option<ContextSpec>,
    pub label_delay: usize,
}

impl Default for InputSpec {
    fn default() -> Self {
        InputSpec { context: Some(ContextSpec::STACKED_BOTTLENECK), label_delay: 0 }
    }
}

impl InputSpec {
    /// Single frames with labels delayed by 5, the recurrent-baseline input.
    pub fn delayed_frames() -> Self {
        InputSpec { context: None, label_delay: 5 }
    }

    pub fn input_width(&self, feature_dim: usize) -> usize {
        self.context.map_or(1, |c| c.taps()) * feature_dim
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FrameTarget {
    pub state: Option<usize>,
    pub phoneme: Option<usize>,
}

impl FrameTarget {
    pub const SKIP: FrameTarget = FrameTarget { state: None, phoneme: None };

    pub fn is_skip(&self) -> bool {
        self.state.is_none()
    }
}

/// Model-ready utterance: input rows plus per-frame targets.
#[derive(Clone, Debug, PartialEq)]
pub struct Sequence {
    pub id: String,
    pub features: Tensor,
    pub targets: Vec<FrameTarget>,
}

impl Sequence {
    pub fn frames(&self) -> usize {
        self.targets.len()
    }

    pub fn scored_frames(&self) -> usize {
        self.targets.iter().filter(|t| !t.is_skip()).count()
    }
}

/// Applies context stacking and label delay. The prediction target of frame
/// `t` is the (delayed) phoneme label at `min(t + horizon, T - 1)`.
pub fn prepare(utt: &Utterance, input: &InputSpec, horizon: usize) -> Result<Sequence> {
    let features = match input.context {
        Some(c) if utt.frames() > 0 => stack_context(&utt.features, c.half_window, c.step)?,
        Some(c) => Tensor::zeros(&[0, c.taps() * utt.feature_dim()]),
        None => utt.features.clone(),
    };
    let t_len = utt.frames();
    let states = delay_labels(&utt.state_labels, input.label_delay)?;
    let phones = delay_labels(&utt.phoneme_labels, input.label_delay)?;
    let targets = (0..t_len)
        .map(|t| match states[t] {
            None => FrameTarget::SKIP,
            Some(s) => FrameTarget { state: Some(s), phoneme: phones[(t + horizon).min(t_len - 1)] },
        })
        .collect();
    Ok(Sequence { id: utt.id.clone(), features, targets })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn utt_from(phones: &[usize], dim: usize) -> Utterance {
        let t = phones.len();
        Utterance {
            id: "u".into(),
            language: "x".into(),
            features: Tensor::matrix(t, dim, (0..t * dim).map(|v| v as f64).collect()).unwrap(),
            state_labels: phones.iter().map(|p| p * 3).collect(),
            phoneme_labels: phones.to_vec(),
        }
    }

    #[test]
    fn stack_context_widths_and_edges() {
        let f = Tensor::matrix(40, 80, vec![0.5; 40 * 80]).unwrap();
        let s = stack_context(&f, 15, 5).unwrap();
        assert_eq!(s.shape(), &[40, 560]);
        assert!((0..40).all(|t| s.row(t) == s.row(0)));

        let one = Tensor::matrix(1, 2, vec![1.0, 2.0]).unwrap();
        let s = stack_context(&one, 15, 5).unwrap();
        assert_eq!(s.row(0), [1.0, 2.0].repeat(7).as_slice());
        assert!(stack_context(&one, 15, 4).is_err());
    }

    #[test]
    fn stack_context_offsets() {
        let f = Tensor::matrix(50, 1, (0..50).map(|v| v as f64).collect()).unwrap();
        let s = stack_context(&f, 15, 5).unwrap();
        assert_eq!(s.row(20), &[5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 35.0]);
        assert_eq!(s.row(2), &[0.0, 0.0, 0.0, 2.0, 7.0, 12.0, 17.0]);
    }

    #[test]
    fn delay_cases() {
        let labels = vec![3, 1, 4, 1, 5, 9, 2, 6];
        assert_eq!(delay_labels(&labels, 0).unwrap(), labels.iter().map(|&l| Some(l)).collect::<Vec<_>>());
        let d = delay_labels(&labels, 5).unwrap();
        assert!(d[..5].iter().all(|l| l.is_none()));
        assert_eq!(&d[5..], &[Some(3), Some(1), Some(4)]);
        assert!(matches!(delay_labels(&labels, 8), Err(Error::Data(_))));
    }

    #[test]
    fn delayed_preparation_scores_t_minus_delay_frames() {
        let u = utt_from(&[1; 30], 2);
        let seq = prepare(&u, &InputSpec::delayed_frames(), 1).unwrap();
        assert_eq!(seq.scored_frames(), 25);
        assert_eq!(seq.features.shape(), &[30, 2]);
    }

    #[test]
    fn prediction_target_clamps_at_end() {
        let u = utt_from(&[0, 1, 2, 3], 1);
        let seq = prepare(&u, &InputSpec { context: None, label_delay: 0 }, 2).unwrap();
        let phones: Vec<_> = seq.targets.iter().map(|t| t.phoneme.unwrap()).collect();
        assert_eq!(phones, vec![2, 3, 3, 3]);
    }

    #[test]
    fn trim_silence_margin_rule() {
        let mut phones = vec![0; 10];
        phones.extend(vec![1; 20]);
        phones.extend(vec![0; 10]);
        let trimmed = trim_silence(&utt_from(&phones, 2), 0, 5);
        let mut expect = vec![0; 5];
        expect.extend(vec![1; 20]);
        expect.extend(vec![0; 5]);
        assert_eq!(trimmed.phoneme_labels, expect);
        assert_eq!(trimmed.features.row(0), utt_from(&phones, 2).features.row(5));

        let speech = utt_from(&[1, 2, 1, 2], 1);
        assert_eq!(trim_silence(&speech, 0, 5), speech);

        let silent = trim_silence(&utt_from(&[0; 12], 1), 0, 5);
        assert_eq!(silent.frames(), 0);
    }

    #[test]
    fn normaliser_zero_mean_unit_variance() {
        let corpus = Corpus {
            language: "x".into(),
            state_classes: 30,
            phoneme_classes: 10,
            silence_phoneme: Some(0),
            utterances: vec![utt_from(&[1, 2, 3, 4, 5], 3)],
        };
        let n = FeatureNormalizer::fit(&corpus).unwrap();
        let out = n.apply_corpus(&corpus).unwrap();
        let f = &out.utterances[0].features;
        for k in 0..3 {
            let col: Vec<f64> = (0..5).map(|t| f.get(t, k)).collect();
            let m = col.iter().sum::<f64>() / 5.0;
            let v = col.iter().map(|c| (c - m).powi(2)).sum::<f64>() / 5.0;
            assert!(m.abs() < 1e-12 && (v - 1.0).abs() < 1e-9);
        }
    }

    proptest! {
        #[test]
        fn stacking_is_local(t_len in 1usize..60, row in 0usize..60, seed in 0u64..100) {
            let row = row % t_len;
            let mut rng = crate::tensor::Rng::new(seed);
            let data: Vec<f64> = (0..t_len * 2).map(|_| rng.normal()).collect();
            let f = Tensor::matrix(t_len, 2, data.clone()).unwrap();
            let base = stack_context(&f, 15, 5).unwrap();
            // Perturb every frame farther than 15 from `row`.
            let mut far = data.clone();
            for t in 0..t_len {
                if (t as isize - row as isize).abs() > 15 {
                    far[2 * t] += 100.0;
                    far[2 * t + 1] -= 100.0;
                }
            }
            let moved = stack_context(&Tensor::matrix(t_len, 2, far).unwrap(), 15, 5).unwrap();
            prop_assert_eq!(base.row(row), moved.row(row));
        }

        #[test]
        fn trimming_is_idempotent(phones in proptest::collection::vec(0usize..3, 0..80), margin in 0usize..8) {
            let u = utt_from(&phones, 1);
            let once = trim_silence(&u, 0, margin);
            let twice = trim_silence(&once, 0, margin);
            prop_assert_eq!(once.phoneme_labels.iter().filter(|&&p| p != 0).count(),
                            phones.iter().filter(|&&p| p != 0).count());
            prop_assert_eq!(once, twice);
        }
    }
}
