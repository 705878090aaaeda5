use super::config::PacRnnConfig;
use super::state::RecurrentState;
use crate::data::{FrameTarget, Sequence};
use crate::error::{Error, Result};
use crate::layers::{
    ce_logit_gradient, Activation, AffineCache, AffineLayer, LstmCache, LstmCell, Parameterized, SoftmaxHead,
};
use crate::tensor::{Rng, Tensor};

/// Layers that produce the correction-side hidden representation (the
/// baseline's whole hidden stack).
#[derive(Clone, Debug, PartialEq)]
pub enum Encoder {
    Dnn(Vec<AffineLayer>),
    Lstm(Vec<LstmCell>),
}

/// Projection of the correction output plus the prediction DNN.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionNet {
    /// Linear projection of the correction hidden output (`h^corr`).
    pub projection: AffineLayer,
    pub hidden: AffineLayer,
    /// Linear bottleneck whose outputs (`h^pred`) are fed back.
    pub bottleneck: AffineLayer,
    pub head: SoftmaxHead,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: PacRnnConfig,
    pub encoder: Encoder,
    pub state_head: SoftmaxHead,
    pub prediction: Option<PredictionNet>,
}

/// Posteriors emitted for one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameOutput {
    pub state_posterior: Tensor,
    /// Absent for the DNN and LSTM baselines.
    pub phoneme_posterior: Option<Tensor>,
}

#[derive(Clone, Debug)]
enum EncoderCache {
    Dnn(Vec<AffineCache>),
    Lstm(Vec<LstmCache>),
}

#[derive(Clone, Debug)]
struct PredictionCache {
    projection: AffineCache,
    hidden: AffineCache,
    bottleneck: AffineCache,
    posterior: Vec<f64>,
}

#[derive(Clone, Debug)]
struct FrameCache {
    encoder: EncoderCache,
    state_posterior: Vec<f64>,
    prediction: Option<PredictionCache>,
}

impl FrameCache {
    fn top(&self) -> &[f64] {
        match &self.encoder {
            EncoderCache::Dnn(c) => &c.last().expect("non-empty encoder").output,
            EncoderCache::Lstm(c) => &c.last().expect("non-empty encoder").h,
        }
    }

    fn output(&self) -> FrameOutput {
        FrameOutput {
            state_posterior: Tensor::vector(self.state_posterior.clone()),
            phoneme_posterior: self.prediction.as_ref().map(|p| Tensor::vector(p.posterior.clone())),
        }
    }
}

/// Forward record of a run of consecutive frames, consumed by backward.
#[derive(Clone, Debug, Default)]
pub struct Tape {
    frames: Vec<FrameCache>,
}

impl Tape {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn outputs(&self) -> Vec<FrameOutput> {
        self.frames.iter().map(FrameCache::output).collect()
    }
}

fn at_stage(stage: &'static str) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::Dimension { context, detail } => Error::Dimension { context: format!("{} ({})", stage, context), detail },
        other => other,
    }
}

/// Allocates and initialises every parameter of the configured variant.
pub fn build_model(config: &PacRnnConfig, rng: &mut Rng) -> Result<Model> {
    config.validate()?;
    let widths = config.encoder_widths();
    let mut fan_in = config.correction_input_width();
    let encoder = if config.encoder_is_lstm() {
        let mut cells = Vec::with_capacity(widths.len());
        for &w in widths {
            cells.push(LstmCell::new(rng, fan_in, w, config.forget_bias)?);
            fan_in = w;
        }
        Encoder::Lstm(cells)
    } else {
        let mut layers = Vec::with_capacity(widths.len());
        for &w in widths {
            layers.push(AffineLayer::new(rng, fan_in, w, Activation::Sigmoid)?);
            fan_in = w;
        }
        Encoder::Dnn(layers)
    };
    let top = fan_in;
    let state_head = SoftmaxHead::new(rng, top, config.state_classes)?;
    let prediction = if config.variant.has_prediction() {
        let projection = AffineLayer::new(rng, top, config.projection, Activation::Linear)?;
        let hidden = AffineLayer::new(rng, config.prediction_input_width(), config.pred_hidden, Activation::Sigmoid)?;
        let bottleneck = AffineLayer::new(rng, config.pred_hidden, config.pred_bottleneck, Activation::Linear)?;
        let head = SoftmaxHead::new(rng, config.pred_bottleneck, config.phoneme_classes)?;
        Some(PredictionNet { projection, hidden, bottleneck, head })
    } else {
        None
    };
    Ok(Model { config: config.clone(), encoder, state_head, prediction })
}

impl Model {
    pub fn variant(&self) -> super::config::Variant {
        self.config.variant
    }

    pub fn new_state(&self) -> RecurrentState {
        RecurrentState::new(&self.config)
    }

    pub fn input_width(&self) -> usize {
        self.config.input_width()
    }

    /// Width of the first encoder layer's input.
    pub fn correction_input_width(&self) -> usize {
        match &self.encoder {
            Encoder::Dnn(layers) => layers[0].inputs(),
            Encoder::Lstm(cells) => cells[0].inputs(),
        }
    }

    fn step(&self, o: &[f64], state: &mut RecurrentState) -> Result<FrameCache> {
        if o.len() != self.input_width() {
            return Err(Error::dimension(
                "input",
                format!("frame width {} but model expects {}", o.len(), self.input_width()),
            ));
        }
        // (1) x_t from the prediction history, (2) correction network on [o_t | x_t].
        let corr_in: Vec<f64> = if self.prediction.is_some() {
            let mut v = o.to_vec();
            v.extend(state.pred_history.iter().flatten());
            v
        } else {
            o.to_vec()
        };
        let encoder = match &self.encoder {
            Encoder::Dnn(layers) => {
                let mut caches: Vec<AffineCache> = Vec::with_capacity(layers.len());
                for layer in layers {
                    let input = caches.last().map_or(&corr_in, |c| &c.output);
                    let c = layer.forward_cached(input).map_err(at_stage("correction"))?;
                    caches.push(c);
                }
                EncoderCache::Dnn(caches)
            }
            Encoder::Lstm(cells) => {
                if state.lstm_state.len() != cells.len() {
                    return Err(Error::State(format!(
                        "recurrent state holds {} LSTM layers, model has {}",
                        state.lstm_state.len(),
                        cells.len()
                    )));
                }
                let mut caches: Vec<LstmCache> = Vec::with_capacity(cells.len());
                for (k, cell) in cells.iter().enumerate() {
                    let input = caches.last().map_or(&corr_in, |c| &c.h);
                    let (h, c) = &state.lstm_state[k];
                    let cache = cell.step(input, h, c).map_err(at_stage("correction"))?;
                    state.lstm_state[k] = (cache.h.clone(), cache.c.clone());
                    caches.push(cache);
                }
                EncoderCache::Lstm(caches)
            }
        };
        let mut frame = FrameCache { encoder, state_posterior: Vec::new(), prediction: None };
        frame.state_posterior = self.state_head.posterior(frame.top()).map_err(at_stage("state head"))?;
        if let Some(p) = &self.prediction {
            // (3) project h^corr_t and push, (4) gather y_t, (5) prediction network on [o_t | y_t].
            let projection = p.projection.forward_cached(frame.top()).map_err(at_stage("projection"))?;
            state.push_correction(projection.output.clone());
            let mut pred_in = o.to_vec();
            pred_in.extend(state.corr_history.iter().flatten());
            let hidden = p.hidden.forward_cached(&pred_in).map_err(at_stage("prediction"))?;
            let bottleneck = p.bottleneck.forward_cached(&hidden.output).map_err(at_stage("bottleneck"))?;
            let posterior = p.head.posterior(&bottleneck.output).map_err(at_stage("phoneme head"))?;
            state.push_prediction(bottleneck.output.clone());
            frame.prediction = Some(PredictionCache { projection, hidden, bottleneck, posterior });
        }
        state.frames_seen += 1;
        Ok(frame)
    }

    /// One frame of the recurrent loop; `state` is advanced in place.
    pub fn forward_step(&self, o_t: &Tensor, state: &mut RecurrentState) -> Result<FrameOutput> {
        Ok(self.step(o_t.data(), state)?.output())
    }

    /// Per-frame outputs over model-ready input rows, starting from a fresh state.
    pub fn forward_utterance(&self, features: &Tensor) -> Result<Vec<FrameOutput>> {
        let mut state = self.new_state();
        self.forward_rows(features, 0..features.rows(), &mut state)
    }

    /// Outputs for `rows` of `features` continuing from `state`.
    pub fn forward_rows(
        &self,
        features: &Tensor,
        rows: std::ops::Range<usize>,
        state: &mut RecurrentState,
    ) -> Result<Vec<FrameOutput>> {
        rows.map(|t| Ok(self.step(features.row(t), state)?.output())).collect()
    }

    /// Forward over `rows` recording everything backward needs.
    pub fn forward_tape(
        &self,
        features: &Tensor,
        rows: std::ops::Range<usize>,
        state: &mut RecurrentState,
    ) -> Result<Tape> {
        let frames = rows.map(|t| self.step(features.row(t), state)).collect::<Result<_>>()?;
        Ok(Tape { frames })
    }

    /// Loss `-J` of taped frames against `targets`; skip frames contribute nothing.
    pub fn tape_loss(&self, tape: &Tape, targets: &[FrameTarget]) -> Result<f64> {
        if tape.len() != targets.len() {
            return Err(Error::State(format!("tape has {} frames, {} targets given", tape.len(), targets.len())));
        }
        let (ws, wp) = self.config.loss_weights();
        let mut loss = 0.0;
        for (t, (frame, target)) in tape.frames.iter().zip(targets).enumerate() {
            loss += frame_loss(frame, target, t, ws, wp, &self.config)?;
        }
        Ok(loss)
    }

    /// Backpropagates `-J` through the taped frames, accumulating into
    /// `grads`, and returns the loss. Gradient does not flow into the state
    /// the tape started from (truncation at the tape boundary).
    pub fn backward_tape(&self, tape: &Tape, targets: &[FrameTarget], grads: &mut Model) -> Result<f64> {
        let loss = self.tape_loss(tape, targets)?;
        let (ws, wp) = self.config.loss_weights();
        let n = tape.len();
        let cfg = &self.config;
        let slots = cfg.correction_slots();
        let mut d_bottleneck: Vec<Vec<f64>> = vec![vec![0.0; cfg.pred_bottleneck]; if self.prediction.is_some() { n } else { 0 }];
        let mut d_projection: Vec<Vec<f64>> = vec![vec![0.0; cfg.projection]; if self.prediction.is_some() { n } else { 0 }];
        let mut lstm_carry: Vec<(Vec<f64>, Vec<f64>)> = match &self.encoder {
            Encoder::Lstm(cells) => cells.iter().map(|c| (vec![0.0; c.cells()], vec![0.0; c.cells()])).collect(),
            Encoder::Dnn(_) => Vec::new(),
        };
        let input_width = self.input_width();

        for t in (0..n).rev() {
            let frame = &tape.frames[t];
            let target = &targets[t];
            let mut d_top = vec![0.0; frame.top().len()];

            if let (Some(p), Some(pc)) = (&self.prediction, &frame.prediction) {
                let g = grads.prediction.as_mut().ok_or_else(|| Error::State("gradient model lacks a prediction network".into()))?;
                let mut d_bn = std::mem::take(&mut d_bottleneck[t]);
                if let (Some(label), true) = (target.phoneme, wp != 0.0) {
                    check_label(label, cfg.phoneme_classes, t, "phoneme")?;
                    let dlogits = ce_logit_gradient(&pc.posterior, label, wp);
                    let dx = p.head.backward_logits(&pc.bottleneck.output, &dlogits, &mut g.head);
                    add_into(&mut d_bn, &dx);
                }
                let d_hidden = p.bottleneck.backward(&pc.bottleneck, &d_bn, &mut g.bottleneck);
                let d_pred_in = p.hidden.backward(&pc.hidden, &d_hidden, &mut g.hidden);
                // y_t slot k holds frame t + k + 1 - slots.
                for k in 0..slots {
                    let tau = t as isize + k as isize + 1 - slots as isize;
                    if tau >= 0 {
                        let seg = &d_pred_in[input_width + k * cfg.projection..input_width + (k + 1) * cfg.projection];
                        add_into(&mut d_projection[tau as usize], seg);
                    }
                }
                let d_proj = std::mem::take(&mut d_projection[t]);
                let dx = p.projection.backward(&pc.projection, &d_proj, &mut g.projection);
                add_into(&mut d_top, &dx);
            }

            if let (Some(label), true) = (target.state, ws != 0.0) {
                check_label(label, cfg.state_classes, t, "state")?;
                let dlogits = ce_logit_gradient(&frame.state_posterior, label, ws);
                let dx = self.state_head.backward_logits(frame.top(), &dlogits, &mut grads.state_head);
                add_into(&mut d_top, &dx);
            }

            let d_corr_in = match (&self.encoder, &frame.encoder, &mut grads.encoder) {
                (Encoder::Dnn(layers), EncoderCache::Dnn(caches), Encoder::Dnn(g)) => {
                    let mut d = d_top;
                    for k in (0..layers.len()).rev() {
                        d = layers[k].backward(&caches[k], &d, &mut g[k]);
                    }
                    d
                }
                (Encoder::Lstm(cells), EncoderCache::Lstm(caches), Encoder::Lstm(g)) => {
                    let mut d = d_top;
                    for k in (0..cells.len()).rev() {
                        let (dh_next, dc_next) = &lstm_carry[k];
                        let dh: Vec<f64> = d.iter().zip(dh_next).map(|(a, b)| a + b).collect();
                        let (dx, dh_prev, dc_prev) = cells[k].backward(&caches[k], &dh, dc_next, &mut g[k]);
                        lstm_carry[k] = (dh_prev, dc_prev);
                        d = dx;
                    }
                    d
                }
                _ => return Err(Error::State("gradient model encoder does not match the model".into())),
            };

            if self.prediction.is_some() {
                // x_t slot k holds frame t - T_corr + k.
                for k in 0..cfg.t_corr {
                    let tau = t as isize - cfg.t_corr as isize + k as isize;
                    if tau >= 0 {
                        let seg = &d_corr_in[input_width + k * cfg.pred_bottleneck..input_width + (k + 1) * cfg.pred_bottleneck];
                        add_into(&mut d_bottleneck[tau as usize], seg);
                    }
                }
            }
        }
        Ok(loss)
    }

    /// Full-unroll loss `-J` of a sequence from a fresh state.
    pub fn sequence_loss(&self, seq: &Sequence) -> Result<f64> {
        let mut state = self.new_state();
        let tape = self.forward_tape(&seq.features, 0..seq.frames(), &mut state)?;
        self.tape_loss(&tape, &seq.targets)
    }

    /// Full-unroll loss and gradient (accumulated into `grads`).
    pub fn loss_and_gradient(&self, seq: &Sequence, grads: &mut Model) -> Result<f64> {
        let mut state = self.new_state();
        let tape = self.forward_tape(&seq.features, 0..seq.frames(), &mut state)?;
        self.backward_tape(&tape, &seq.targets, grads)
    }

    /// Replaces the output heads with freshly initialised ones for new class
    /// inventories; hidden layers are untouched.
    pub fn replace_heads(&mut self, state_classes: usize, phoneme_classes: usize, rng: &mut Rng) -> Result<()> {
        self.state_head = SoftmaxHead::new(rng, self.state_head.inputs(), state_classes)?;
        self.config.state_classes = state_classes;
        if let Some(p) = &mut self.prediction {
            p.head = SoftmaxHead::new(rng, p.head.inputs(), phoneme_classes)?;
        }
        self.config.phoneme_classes = phoneme_classes;
        Ok(())
    }
}

fn check_label(label: usize, classes: usize, t: usize, what: &str) -> Result<()> {
    if label >= classes {
        return Err(Error::label(
            format!("frame {}", t),
            format!("{} label {} outside {} classes", what, label, classes),
        ));
    }
    Ok(())
}

fn frame_loss(frame: &FrameCache, target: &FrameTarget, t: usize, ws: f64, wp: f64, cfg: &PacRnnConfig) -> Result<f64> {
    let mut loss = 0.0;
    if let Some(s) = target.state {
        if ws != 0.0 {
            check_label(s, cfg.state_classes, t, "state")?;
            loss -= ws * frame.state_posterior[s].ln();
        }
    }
    if let (Some(l), Some(p)) = (target.phoneme, &frame.prediction) {
        if wp != 0.0 {
            check_label(l, cfg.phoneme_classes, t, "phoneme")?;
            loss -= wp * p.posterior[l].ln();
        }
    }
    Ok(loss)
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

impl Parameterized for Model {
    fn parameters(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        match &self.encoder {
            Encoder::Dnn(layers) => layers.iter().for_each(|l| out.extend(l.parameters())),
            Encoder::Lstm(cells) => cells.iter().for_each(|c| out.extend(c.parameters())),
        }
        out.extend(self.state_head.parameters());
        if let Some(p) = &self.prediction {
            out.extend(p.projection.parameters());
            out.extend(p.hidden.parameters());
            out.extend(p.bottleneck.parameters());
            out.extend(p.head.parameters());
        }
        out
    }

    fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        match &mut self.encoder {
            Encoder::Dnn(layers) => layers.iter_mut().for_each(|l| out.extend(l.parameters_mut())),
            Encoder::Lstm(cells) => cells.iter_mut().for_each(|c| out.extend(c.parameters_mut())),
        }
        out.extend(self.state_head.parameters_mut());
        if let Some(p) = &mut self.prediction {
            out.extend(p.projection.parameters_mut());
            out.extend(p.hidden.parameters_mut());
            out.extend(p.bottleneck.parameters_mut());
            out.extend(p.head.parameters_mut());
        }
        out
    }
}

/// Eq.-3-style joint log-likelihood
/// `J = sum_t alpha ln p_corr(s_t) + (1 - alpha) ln p_pred(l_{min(t+n, T-1)})`.
///
/// Outputs without a phoneme posterior (baselines) contribute `ln p_corr(s_t)`
/// with weight 1.
pub fn joint_loss(
    outputs: &[FrameOutput],
    state_labels: &[usize],
    phoneme_labels: &[usize],
    alpha: f64,
    horizon: usize,
) -> Result<f64> {
    let t_len = outputs.len();
    if state_labels.len() != t_len || phoneme_labels.len() != t_len {
        return Err(Error::label(
            "joint_loss",
            format!(
                "{} outputs but {} state labels and {} phoneme labels",
                t_len,
                state_labels.len(),
                phoneme_labels.len()
            ),
        ));
    }
    let mut j = 0.0;
    for (t, out) in outputs.iter().enumerate() {
        let s = state_labels[t];
        if s >= out.state_posterior.len() {
            return Err(Error::label(format!("frame {}", t), format!("state label {} out of range", s)));
        }
        match &out.phoneme_posterior {
            Some(pp) => {
                let l = phoneme_labels[(t + horizon).min(t_len - 1)];
                if l >= pp.len() {
                    return Err(Error::label(format!("frame {}", t), format!("phoneme label {} out of range", l)));
                }
                if alpha != 0.0 {
                    j += alpha * out.state_posterior.data()[s].ln();
                }
                if alpha != 1.0 {
                    j += (1.0 - alpha) * pp.data()[l].ln();
                }
            }
            None => j += out.state_posterior.data()[s].ln(),
        }
    }
    Ok(j)
}

/// Fraction of scored frames whose state argmax differs from the target.
pub fn frame_error_rate(outputs: &[FrameOutput], targets: &[FrameTarget]) -> (usize, usize) {
    let mut errors = 0;
    let mut frames = 0;
    for (o, t) in outputs.iter().zip(targets) {
        if let Some(s) = t.state {
            frames += 1;
            if o.state_posterior.argmax() != s {
                errors += 1;
            }
        }
    }
    (errors, frames)
}
