use std::collections::VecDeque;

use super::config::PacRnnConfig;
use crate::tensor::Tensor;

/// Everything carried from one frame to the next, and across BPTT chunk
/// boundaries: the last `T_corr` prediction bottleneck outputs, the last
/// correction-context slots of projected correction outputs, and the
/// `(h, c)` pair of each LSTM layer. Slots before the utterance start are
/// zero vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct RecurrentState {
    pub pred_history: VecDeque<Vec<f64>>,
    pub corr_history: VecDeque<Vec<f64>>,
    pub lstm_state: Vec<(Vec<f64>, Vec<f64>)>,
    pub frames_seen: usize,
}

impl RecurrentState {
    pub fn new(config: &PacRnnConfig) -> Self {
        let (pred, corr) = if config.variant.has_prediction() {
            (
                (0..config.t_corr).map(|_| vec![0.0; config.pred_bottleneck]).collect(),
                (0..config.correction_slots()).map(|_| vec![0.0; config.projection]).collect(),
            )
        } else {
            (VecDeque::new(), VecDeque::new())
        };
        let lstm_state = if config.encoder_is_lstm() {
            config.encoder_widths().iter().map(|&w| (vec![0.0; w], vec![0.0; w])).collect()
        } else {
            Vec::new()
        };
        RecurrentState { pred_history: pred, corr_history: corr, lstm_state, frames_seen: 0 }
    }

    pub(crate) fn push_prediction(&mut self, bottleneck: Vec<f64>) {
        if self.pred_history.pop_front().is_some() {
            self.pred_history.push_back(bottleneck);
        }
    }

    pub(crate) fn push_correction(&mut self, projected: Vec<f64>) {
        if self.corr_history.pop_front().is_some() {
            self.corr_history.push_back(projected);
        }
    }

    /// `x_t`: prediction bottleneck outputs of frames `t - T_corr ..= t - 1`,
    /// oldest first.
    pub fn gather_prediction_context(&self) -> Tensor {
        Tensor::vector(self.pred_history.iter().flatten().copied().collect())
    }

    /// `y_t`: projected correction outputs ending with the current frame,
    /// oldest first. Call after the current frame's projection was pushed.
    pub fn gather_correction_context(&self) -> Tensor {
        Tensor::vector(self.corr_history.iter().flatten().copied().collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pacrnn::config::Variant;

    fn full_size_state() -> RecurrentState {
        RecurrentState::new(&PacRnnConfig::full(Variant::PacRnnDnn, 80, 30, 10))
    }

    #[test]
    fn capacities_and_zero_padding() {
        let s = full_size_state();
        assert_eq!(s.pred_history.len(), 10);
        assert_eq!(s.corr_history.len(), 3);
        let x = s.gather_prediction_context();
        assert_eq!(x.len(), 800);
        assert!(x.data().iter().all(|&v| v == 0.0));
        assert_eq!(s.gather_correction_context().len(), 1500);
    }

    #[test]
    fn prediction_context_order() {
        let mut s = full_size_state();
        for k in 0..10 {
            s.push_prediction(vec![k as f64; 80]);
        }
        let x = s.gather_prediction_context();
        for k in 0..10 {
            assert!(x.data()[k * 80..(k + 1) * 80].iter().all(|&v| v == k as f64));
        }
        assert_eq!(s.pred_history.len(), 10);
    }

    #[test]
    fn correction_context_order_and_first_frame() {
        let mut s = full_size_state();
        s.push_correction(vec![1.0; 500]);
        let y = s.gather_correction_context();
        assert!(y.data()[..1000].iter().all(|&v| v == 0.0));
        assert!(y.data()[1000..].iter().all(|&v| v == 1.0));
        s.push_correction(vec![2.0; 500]);
        s.push_correction(vec![3.0; 500]);
        let y = s.gather_correction_context();
        for (k, chunk) in y.data().chunks(500).enumerate() {
            assert!(chunk.iter().all(|&v| v == (k + 1) as f64));
        }
    }

    #[test]
    fn baselines_carry_only_lstm_state() {
        let s = RecurrentState::new(&PacRnnConfig::full(Variant::Lstm, 24, 30, 10));
        assert!(s.pred_history.is_empty() && s.corr_history.is_empty());
        assert_eq!(s.lstm_state.len(), 3);
        let d = RecurrentState::new(&PacRnnConfig::full(Variant::Dnn, 24, 30, 10));
        assert!(d.lstm_state.is_empty());
    }
}
