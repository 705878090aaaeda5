//! Small fixtures shared by unit tests.

use crate::data::{FrameTarget, InputSpec, Sequence};
use crate::pacrnn::{HistorySpan, LstmCellKind, PacRnnConfig, Variant};
use crate::tensor::{Rng, Tensor};

pub(crate) fn tiny_config(variant: Variant) -> PacRnnConfig {
    PacRnnConfig {
        variant,
        feature_dim: 3,
        input: InputSpec { context: None, label_delay: 0 },
        state_classes: 4,
        phoneme_classes: 3,
        t_corr: 3,
        t_pred: 1,
        history_span: HistorySpan::Literal,
        alpha: 0.8,
        horizon: 1,
        pred_hidden: 5,
        pred_bottleneck: 2,
        projection: 2,
        corr_dnn_hidden: vec![5, 4],
        corr_lstm_cells: vec![4],
        dnn_hidden: vec![5, 4],
        lstm_cells: vec![4, 3],
        forget_bias: 1.0,
        cell_kind: LstmCellKind::ForgetGateNoPeephole,
    }
}

pub(crate) fn random_sequence(rng: &mut Rng, frames: usize, cfg: &PacRnnConfig) -> Sequence {
    let width = cfg.input_width();
    let features = Tensor::matrix(frames, width, (0..frames * width).map(|_| rng.normal()).collect()).unwrap();
    let phones: Vec<usize> = (0..frames).map(|_| rng.below(cfg.phoneme_classes)).collect();
    let targets = (0..frames)
        .map(|t| FrameTarget { state: Some(rng.below(cfg.state_classes)), phoneme: Some(phones[(t + cfg.horizon).min(frames - 1)]) })
        .collect();
    Sequence { id: format!("s{}", frames), features, targets }
}
