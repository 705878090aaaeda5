use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{ContextSpec, InputSpec};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "dnn")]
    Dnn,
    #[serde(rename = "lstm")]
    Lstm,
    #[serde(rename = "pacrnn-dnn")]
    PacRnnDnn,
    #[serde(rename = "pacrnn-lstm")]
    PacRnnLstm,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Dnn, Variant::Lstm, Variant::PacRnnDnn, Variant::PacRnnLstm];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Dnn => "dnn",
            Variant::Lstm => "lstm",
            Variant::PacRnnDnn => "pacrnn-dnn",
            Variant::PacRnnLstm => "pacrnn-lstm",
        }
    }

    pub fn has_prediction(self) -> bool {
        matches!(self, Variant::PacRnnDnn | Variant::PacRnnLstm)
    }

    pub fn is_recurrent(self) -> bool {
        self != Variant::Dnn
    }

    /// Input convention: the LSTM baseline reads single frames with labels
    /// delayed by 5; every other variant reads ±15/step-5 stacked context.
    pub fn default_input(self) -> InputSpec {
        match self {
            Variant::Lstm => InputSpec::delayed_frames(),
            _ => InputSpec { context: Some(ContextSpec::STACKED_BOTTLENECK), label_delay: 0 },
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown variant {:?}", s)))
    }
}

/// How many projected correction vectors feed the prediction network.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HistorySpan {
    /// Frames `t - T_pred - 1 ..= t`: `T_pred + 2` slots.
    Literal,
    /// Frames `t - T_pred ..= t`: `T_pred + 1` slots.
    Window,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LstmCellKind {
    /// Input/forget/output gates, tanh candidate, no peepholes, no projection.
    ForgetGateNoPeephole,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PacRnnConfig {
    pub variant: Variant,
    /// Raw per-frame feature dimension before context stacking.
    pub feature_dim: usize,
    pub input: InputSpec,
    pub state_classes: usize,
    pub phoneme_classes: usize,
    /// Prediction bottleneck frames stacked for the correction network.
    pub t_corr: usize,
    /// Context size of the correction history seen by the prediction network.
    pub t_pred: usize,
    pub history_span: HistorySpan,
    /// Weight of the correction log-likelihood in the joint objective.
    pub alpha: f64,
    /// Prediction horizon in frames.
    pub horizon: usize,
    pub pred_hidden: usize,
    pub pred_bottleneck: usize,
    pub projection: usize,
    pub corr_dnn_hidden: Vec<usize>,
    pub corr_lstm_cells: Vec<usize>,
    pub dnn_hidden: Vec<usize>,
    pub lstm_cells: Vec<usize>,
    pub forget_bias: f64,
    pub cell_kind: LstmCellKind,
}

impl Default for PacRnnConfig {
    /// Full-size architecture.
    fn default() -> Self {
        PacRnnConfig {
            variant: Variant::PacRnnDnn,
            feature_dim: 80,
            input: InputSpec::default(),
            state_classes: 2500,
            phoneme_classes: 40,
            t_corr: 10,
            t_pred: 1,
            history_span: HistorySpan::Literal,
            alpha: 0.8,
            horizon: 1,
            pred_hidden: 2048,
            pred_bottleneck: 80,
            projection: 500,
            corr_dnn_hidden: vec![2048, 2048],
            corr_lstm_cells: vec![1024],
            dnn_hidden: vec![1024; 3],
            lstm_cells: vec![512; 3],
            forget_bias: 1.0,
            cell_kind: LstmCellKind::ForgetGateNoPeephole,
        }
    }
}

impl PacRnnConfig {
    /// Full-size configuration of `variant` with its default input convention.
    pub fn full(variant: Variant, feature_dim: usize, state_classes: usize, phoneme_classes: usize) -> Self {
        PacRnnConfig {
            variant,
            feature_dim,
            input: variant.default_input(),
            state_classes,
            phoneme_classes,
            ..PacRnnConfig::default()
        }
    }

    /// Desk-scale widths: the same topology with every layer shrunk so that
    /// toy-corpus training runs in seconds per epoch on one core.
    pub fn toy(variant: Variant, feature_dim: usize, state_classes: usize, phoneme_classes: usize) -> Self {
        PacRnnConfig {
            pred_hidden: 64,
            pred_bottleneck: 8,
            projection: 16,
            corr_dnn_hidden: vec![96, 96],
            corr_lstm_cells: vec![96],
            dnn_hidden: vec![96; 3],
            lstm_cells: vec![64; 3],
            ..PacRnnConfig::full(variant, feature_dim, state_classes, phoneme_classes)
        }
    }

    pub fn input_width(&self) -> usize {
        self.input.input_width(self.feature_dim)
    }

    /// Slots of projected correction output gathered into `y_t`.
    pub fn correction_slots(&self) -> usize {
        match self.history_span {
            HistorySpan::Literal => self.t_pred + 2,
            HistorySpan::Window => self.t_pred + 1,
        }
    }

    /// Weights of the state and phoneme log-likelihood terms. Baselines have
    /// no prediction network and score the state term alone.
    pub fn loss_weights(&self) -> (f64, f64) {
        if self.variant.has_prediction() {
            (self.alpha, 1.0 - self.alpha)
        } else {
            (1.0, 0.0)
        }
    }

    /// Width of the layers that feed the state softmax.
    pub fn encoder_widths(&self) -> &[usize] {
        match self.variant {
            Variant::Dnn => &self.dnn_hidden,
            Variant::Lstm => &self.lstm_cells,
            Variant::PacRnnDnn => &self.corr_dnn_hidden,
            Variant::PacRnnLstm => &self.corr_lstm_cells,
        }
    }

    pub fn encoder_is_lstm(&self) -> bool {
        matches!(self.variant, Variant::Lstm | Variant::PacRnnLstm)
    }

    /// Input width of the first encoder layer: `[o_t | x_t]` for PAC variants.
    pub fn correction_input_width(&self) -> usize {
        let extra = if self.variant.has_prediction() { self.t_corr * self.pred_bottleneck } else { 0 };
        self.input_width() + extra
    }

    pub fn prediction_input_width(&self) -> usize {
        self.input_width() + self.correction_slots() * self.projection
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: usize| {
            if v == 0 {
                Err(Error::parameter(name, "must be positive"))
            } else {
                Ok(())
            }
        };
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::parameter("alpha", format!("{} outside [0, 1]", self.alpha)));
        }
        positive("feature_dim", self.feature_dim)?;
        if self.state_classes < 2 {
            return Err(Error::parameter("state_classes", "need at least 2"));
        }
        if let Some(c) = self.input.context {
            c.validate()?;
        }
        let widths = self.encoder_widths();
        let field = match self.variant {
            Variant::Dnn => "dnn_hidden",
            Variant::Lstm => "lstm_cells",
            Variant::PacRnnDnn => "corr_dnn_hidden",
            Variant::PacRnnLstm => "corr_lstm_cells",
        };
        if widths.is_empty() {
            return Err(Error::parameter(field, "needs at least one layer"));
        }
        if widths.iter().any(|&w| w == 0) {
            return Err(Error::parameter(field, "layer widths must be positive"));
        }
        if self.variant.has_prediction() {
            positive("t_corr", self.t_corr)?;
            positive("horizon", self.horizon)?;
            positive("pred_hidden", self.pred_hidden)?;
            positive("pred_bottleneck", self.pred_bottleneck)?;
            positive("projection", self.projection)?;
            if self.phoneme_classes < 2 {
                return Err(Error::parameter("phoneme_classes", "need at least 2"));
            }
        }
        Ok(())
    }
}
