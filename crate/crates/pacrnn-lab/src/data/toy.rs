use serde::{Deserialize, Serialize};

use super::{Corpus, Utterance};
use crate::error::{Error, Result};
use crate::tensor::{Rng, Tensor};

/// Compact generator parameters for a toy phoneme-HMM language.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToyParams {
    pub language: String,
    pub phoneme_count: usize,
    pub states_per_phoneme: usize,
    pub feature_dim: usize,
    /// Probability mass on each phoneme's preferred successor.
    pub dominant_successor: f64,
    /// Spread of the per-phoneme emission centres.
    pub phoneme_spread: f64,
    /// Spread of each state's centre around its phoneme centre.
    pub state_spread: f64,
    /// Standard deviation of the per-frame emission noise.
    pub noise_std: f64,
    pub stay_probability: f64,
    pub silence_stay_probability: f64,
    /// Seed of the emission/transition parameters (not of sampling).
    pub param_seed: u64,
}

impl Default for ToyParams {
    fn default() -> Self {
        ToyParams {
            language: "toy".into(),
            phoneme_count: 10,
            states_per_phoneme: 3,
            feature_dim: 24,
            dominant_successor: 0.8,
            phoneme_spread: 1.0,
            state_spread: 0.5,
            noise_std: 1.5,
            stay_probability: 0.6,
            silence_stay_probability: 0.8,
            param_seed: 1,
        }
    }
}

/// Fully specified toy language: a phoneme bigram chain where every phoneme
/// runs through `states_per_phoneme` left-to-right states with geometric
/// dwell, and every state emits diagonal Gaussian frames.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyLanguageSpec {
    pub language: String,
    pub phoneme_count: usize,
    pub states_per_phoneme: usize,
    pub feature_dim: usize,
    pub transitions: Vec<Vec<f64>>,
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<Vec<f64>>,
    pub stay_probability: f64,
    pub silence_stay_probability: f64,
    pub silence_phoneme: usize,
    /// Sampling seed.
    pub seed: u64,
}

impl ToyLanguageSpec {
    pub fn from_params(p: &ToyParams) -> Result<Self> {
        if p.phoneme_count < 2 || p.states_per_phoneme == 0 || p.feature_dim == 0 {
            return Err(Error::Spec(format!(
                "need >= 2 phonemes, >= 1 state and >= 1 feature dim (got {}, {}, {})",
                p.phoneme_count, p.states_per_phoneme, p.feature_dim
            )));
        }
        let mut rng = Rng::new(p.param_seed);
        let n = p.phoneme_count;
        // Preferred successors: a random cyclic order, so no phoneme prefers itself.
        let mut order: Vec<usize> = (0..n).collect();
        rng.shuffle(&mut order);
        let mut successor = vec![0; n];
        for k in 0..n {
            successor[order[k]] = order[(k + 1) % n];
        }
        let rest = (1.0 - p.dominant_successor) / (n as f64 - 2.0).max(1.0);
        let transitions = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        if j == i {
                            0.0
                        } else if j == successor[i] {
                            if n == 2 { 1.0 } else { p.dominant_successor }
                        } else {
                            rest
                        }
                    })
                    .collect()
            })
            .collect();
        let mut means = Vec::with_capacity(n * p.states_per_phoneme);
        for _ in 0..n {
            let centre: Vec<f64> = (0..p.feature_dim).map(|_| p.phoneme_spread * rng.normal()).collect();
            for _ in 0..p.states_per_phoneme {
                means.push(centre.iter().map(|c| c + p.state_spread * rng.normal()).collect());
            }
        }
        let variances = vec![vec![p.noise_std * p.noise_std; p.feature_dim]; n * p.states_per_phoneme];
        let spec = ToyLanguageSpec {
            language: p.language.clone(),
            phoneme_count: n,
            states_per_phoneme: p.states_per_phoneme,
            feature_dim: p.feature_dim,
            transitions,
            means,
            variances,
            stay_probability: p.stay_probability,
            silence_stay_probability: p.silence_stay_probability,
            silence_phoneme: 0,
            seed: p.param_seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn state_count(&self) -> usize {
        self.phoneme_count * self.states_per_phoneme
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        ToyLanguageSpec { seed, ..self.clone() }
    }

    /// A related language: every emission mean is moved by `magnitude`
    /// times standard normal noise. Larger magnitude means a more distant
    /// relative.
    pub fn perturbed(&self, language: &str, magnitude: f64, seed: u64) -> Self {
        let mut rng = Rng::new(seed);
        let means = self
            .means
            .iter()
            .map(|m| m.iter().map(|v| v + magnitude * rng.normal()).collect())
            .collect();
        ToyLanguageSpec { language: language.to_string(), means, seed, ..self.clone() }
    }

    /// Conditional entropy (nats) of the next phoneme under the stationary
    /// distribution of the bigram chain.
    pub fn next_phoneme_entropy(&self) -> f64 {
        let n = self.phoneme_count;
        let mut pi = vec![1.0 / n as f64; n];
        for _ in 0..500 {
            let mut next = vec![0.0; n];
            for i in 0..n {
                for j in 0..n {
                    next[j] += pi[i] * self.transitions[i][j];
                }
            }
            pi = next;
        }
        (0..n)
            .map(|i| {
                let h: f64 = self.transitions[i].iter().filter(|&&p| p > 0.0).map(|p| -p * p.ln()).sum();
                pi[i] * h
            })
            .sum()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.phoneme_count;
        if self.transitions.len() != n || self.transitions.iter().any(|r| r.len() != n) {
            return Err(Error::Spec(format!("transition matrix must be {}x{}", n, n)));
        }
        for (i, row) in self.transitions.iter().enumerate() {
            if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                return Err(Error::Spec(format!("row {} has a probability outside [0,1]", i)));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-9 {
                return Err(Error::Spec(format!("transition row {} sums to {}", i, s)));
            }
            if row[i] >= 1.0 {
                return Err(Error::Spec(format!("phoneme {} is absorbing with no exit", i)));
            }
        }
        let states = self.state_count();
        if self.means.len() != states || self.variances.len() != states {
            return Err(Error::Spec(format!("need {} emission means and variances", states)));
        }
        for (m, v) in self.means.iter().zip(&self.variances) {
            if m.len() != self.feature_dim || v.len() != self.feature_dim {
                return Err(Error::Spec("emission parameter width differs from feature_dim".into()));
            }
            if v.iter().any(|&x| !(x > 0.0)) {
                return Err(Error::Spec("variances must be positive".into()));
            }
        }
        for (name, p) in [("stay_probability", self.stay_probability), ("silence_stay_probability", self.silence_stay_probability)] {
            if !(0.0..1.0).contains(&p) {
                return Err(Error::Spec(format!("{} must be in [0,1), got {}", name, p)));
            }
        }
        if self.silence_phoneme >= n {
            return Err(Error::Spec(format!("silence phoneme {} outside {} phonemes", self.silence_phoneme, n)));
        }
        let entropy = self.next_phoneme_entropy();
        if !(entropy < (n as f64).ln() - 1e-9) {
            return Err(Error::Spec(format!(
                "next-phoneme entropy {:.4} is not below ln({}) = {:.4}; prediction targets would be unlearnable",
                entropy,
                n,
                (n as f64).ln()
            )));
        }
        Ok(())
    }
}

/// Samples `utterance_count` utterances with lengths uniform in
/// `length_range` (inclusive). Each utterance starts in silence.
pub fn generate_toy_corpus(
    spec: &ToyLanguageSpec,
    utterance_count: usize,
    length_range: (usize, usize),
) -> Result<Corpus> {
    spec.validate()?;
    let (lo, hi) = length_range;
    if lo == 0 || lo > hi {
        return Err(Error::parameter("length_range", format!("invalid range {}..={}", lo, hi)));
    }
    let mut rng = Rng::new(spec.seed);
    let stds: Vec<Vec<f64>> = spec.variances.iter().map(|v| v.iter().map(|x| x.sqrt()).collect()).collect();
    let mut utterances = Vec::with_capacity(utterance_count);
    for u in 0..utterance_count {
        let t_len = lo + rng.below(hi - lo + 1);
        let mut features = Vec::with_capacity(t_len * spec.feature_dim);
        let mut states = Vec::with_capacity(t_len);
        let mut phones = Vec::with_capacity(t_len);
        let mut phoneme = spec.silence_phoneme;
        'outer: loop {
            let stay = if phoneme == spec.silence_phoneme {
                spec.silence_stay_probability
            } else {
                spec.stay_probability
            };
            for s in 0..spec.states_per_phoneme {
                let state = phoneme * spec.states_per_phoneme + s;
                loop {
                    if states.len() == t_len {
                        break 'outer;
                    }
                    for (m, sd) in spec.means[state].iter().zip(&stds[state]) {
                        features.push(m + sd * rng.normal());
                    }
                    states.push(state);
                    phones.push(phoneme);
                    if rng.next_f64() >= stay {
                        break;
                    }
                }
            }
            phoneme = rng.categorical(&spec.transitions[phoneme]);
        }
        utterances.push(Utterance {
            id: format!("{}-{:05}", spec.language, u),
            language: spec.language.clone(),
            features: Tensor::matrix(t_len, spec.feature_dim, features)?,
            state_labels: states,
            phoneme_labels: phones,
        });
    }
    Ok(Corpus {
        language: spec.language.clone(),
        state_classes: spec.state_count(),
        phoneme_classes: spec.phoneme_count,
        silence_phoneme: Some(spec.silence_phoneme),
        utterances,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_spec_is_valid_and_learnable() {
        let spec = ToyLanguageSpec::from_params(&ToyParams::default()).unwrap();
        assert_eq!(spec.state_count(), 30);
        assert!(spec.next_phoneme_entropy() < 0.5 * (10f64).ln());
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = ToyLanguageSpec::from_params(&ToyParams::default()).unwrap();
        let a = generate_toy_corpus(&spec, 5, (80, 200)).unwrap();
        let b = generate_toy_corpus(&spec, 5, (80, 200)).unwrap();
        assert_eq!(a, b);
        let c = generate_toy_corpus(&spec.with_seed(99), 5, (80, 200)).unwrap();
        assert_ne!(a, c);
        assert!(a.utterances.iter().all(|u| (80..=200).contains(&u.frames())));
    }

    #[test]
    fn labels_are_consistent() {
        let spec = ToyLanguageSpec::from_params(&ToyParams::default()).unwrap();
        let corpus = generate_toy_corpus(&spec, 10, (80, 200)).unwrap();
        corpus.validate().unwrap();
        for u in &corpus.utterances {
            for (s, p) in u.state_labels.iter().zip(&u.phoneme_labels) {
                assert_eq!(s / 3, *p);
            }
        }
    }

    #[test]
    fn degenerate_specs_are_rejected() {
        let mut spec = ToyLanguageSpec::from_params(&ToyParams::default()).unwrap();
        spec.transitions[2] = (0..10).map(|j| if j == 2 { 1.0 } else { 0.0 }).collect();
        assert!(matches!(generate_toy_corpus(&spec, 1, (10, 10)), Err(Error::Spec(_))));

        let mut uniform = ToyLanguageSpec::from_params(&ToyParams::default()).unwrap();
        uniform.transitions = vec![vec![0.1; 10]; 10];
        assert!(matches!(uniform.validate(), Err(Error::Spec(_))));

        let mut bad_var = ToyLanguageSpec::from_params(&ToyParams::default()).unwrap();
        bad_var.variances[0][0] = 0.0;
        assert!(bad_var.validate().is_err());
    }

    #[test]
    fn bigram_statistics_match_spec() {
        let params = ToyParams { feature_dim: 1, ..ToyParams::default() };
        let spec = ToyLanguageSpec::from_params(&params).unwrap().with_seed(17);
        let corpus = generate_toy_corpus(&spec, 2500, (400, 400)).unwrap();
        let n = spec.phoneme_count;
        let mut counts = vec![vec![0usize; n]; n];
        let mut tokens = 0;
        for u in &corpus.utterances {
            let mut prev = u.phoneme_labels[0];
            tokens += 1;
            for &p in &u.phoneme_labels[1..] {
                if p != prev {
                    counts[prev][p] += 1;
                    tokens += 1;
                    prev = p;
                }
            }
        }
        assert!(tokens >= 100_000, "only {} tokens", tokens);
        for i in 0..n {
            let total: usize = counts[i].iter().sum();
            for j in 0..n {
                let empirical = counts[i][j] as f64 / total as f64;
                assert!((empirical - spec.transitions[i][j]).abs() < 0.02, "({}, {}): {} vs {}", i, j, empirical, spec.transitions[i][j]);
            }
        }
    }
}
