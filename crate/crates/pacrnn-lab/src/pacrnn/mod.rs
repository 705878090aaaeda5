//! The four acoustic-model variants: DNN and stacked-LSTM baselines, and the
//! prediction-adaptation-correction RNN with a DNN or LSTM correction model.
//!
//! Per frame, a PAC model runs:
//!
//! 1. `x_t`: the last `T_corr` prediction bottleneck outputs, oldest first;
//! 2. the correction network on `[o_t | x_t]`, giving the state posterior and
//!    its top hidden output;
//! 3. a linear projection of that output, pushed into the correction history;
//! 4. `y_t`: the correction history ending at frame `t`;
//! 5. the prediction network on `[o_t | y_t]`, giving the phoneme posterior
//!    for frame `t + n` and a bottleneck output pushed for frame `t + 1`.
//!
//! Training maximises `sum_t alpha ln p_corr(s_t) + (1 - alpha) ln p_pred(l_{t+n})`;
//! internally the loss is its negation.

mod config;
mod io;
mod model;
mod state;

pub use config::{HistorySpan, LstmCellKind, PacRnnConfig, Variant};
pub use io::MODEL_KIND;
pub use model::{build_model, frame_error_rate, joint_loss, Encoder, FrameOutput, Model, PredictionNet, Tape};
pub use state::RecurrentState;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{ContextSpec, FrameTarget, InputSpec, Sequence};
    use crate::error::Error;
    use crate::layers::{flat_get, flat_set, Parameterized};
    use crate::tensor::{Rng, Tensor};
    use crate::testutil::{random_sequence, tiny_config};

    #[test]
    fn full_size_correction_input() {
        let cfg = PacRnnConfig::full(Variant::PacRnnDnn, 24, 30, 10);
        let model = build_model(&cfg, &mut Rng::new(1)).unwrap();
        assert_eq!(model.correction_input_width(), 7 * 24 + 80 * 10);
        assert_eq!(model.prediction.as_ref().unwrap().hidden.inputs(), 7 * 24 + 1500);
    }

    #[test]
    fn dnn_baseline_has_three_1024_layers() {
        let model = build_model(&PacRnnConfig::full(Variant::Dnn, 24, 30, 10), &mut Rng::new(1)).unwrap();
        match &model.encoder {
            Encoder::Dnn(layers) => {
                assert_eq!(layers.len(), 3);
                assert!(layers.iter().all(|l| l.outputs() == 1024));
            }
            _ => panic!("dnn baseline must be feed-forward"),
        }
        assert!(model.prediction.is_none());
    }

    #[test]
    fn same_seed_same_parameters() {
        for v in Variant::ALL {
            let cfg = tiny_config(v);
            let a = build_model(&cfg, &mut Rng::new(5)).unwrap();
            let b = build_model(&cfg, &mut Rng::new(5)).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn invalid_config_names_field() {
        let cfg = PacRnnConfig { pred_bottleneck: 0, ..tiny_config(Variant::PacRnnDnn) };
        assert!(matches!(build_model(&cfg, &mut Rng::new(1)), Err(Error::Parameter { ref name, .. }) if name == "pred_bottleneck"));
    }

    #[test]
    fn forward_step_contracts() {
        let mut rng = Rng::new(2);
        for v in Variant::ALL {
            let cfg = tiny_config(v);
            let model = build_model(&cfg, &mut rng).unwrap();
            let mut state = model.new_state();
            let before = state.clone();
            let out = model.forward_step(&Tensor::vector(vec![0.1, -0.2, 0.3]), &mut state).unwrap();
            assert!((out.state_posterior.data().iter().sum::<f64>() - 1.0).abs() < 1e-9);
            match (v.has_prediction(), &out.phoneme_posterior) {
                (true, Some(p)) => assert!((p.data().iter().sum::<f64>() - 1.0).abs() < 1e-9),
                (false, None) => {
                    assert_eq!(state.pred_history, before.pred_history);
                    assert_eq!(state.corr_history, before.corr_history);
                }
                _ => panic!("{} phoneme posterior presence wrong", v),
            }
            let err = model.forward_step(&Tensor::vector(vec![0.0; 4]), &mut state).unwrap_err();
            assert!(matches!(err, Error::Dimension { .. }));
        }
    }

    #[test]
    fn empty_utterance_has_empty_output() {
        let model = build_model(&tiny_config(Variant::PacRnnLstm), &mut Rng::new(1)).unwrap();
        assert!(model.forward_utterance(&Tensor::zeros(&[0, 3])).unwrap().is_empty());
    }

    #[test]
    fn joint_loss_worked_example() {
        let out = FrameOutput {
            state_posterior: Tensor::vector(vec![0.5, 0.5]),
            phoneme_posterior: Some(Tensor::vector(vec![0.25, 0.75])),
        };
        let j = joint_loss(&[out.clone()], &[0], &[0], 0.8, 1).unwrap();
        let direct = 0.8 * 0.5f64.ln() + 0.2 * 0.25f64.ln();
        assert!((j - direct).abs() < 1e-12);
        assert!((j + 0.83178).abs() < 1e-5);
        let j1 = joint_loss(&[out.clone()], &[0], &[0], 1.0, 1).unwrap();
        assert!((j1 - 0.5f64.ln()).abs() < 1e-12);
        assert!(matches!(joint_loss(&[out], &[0, 1], &[0], 0.8, 1), Err(Error::Label { .. })));
    }

    #[test]
    fn joint_loss_matches_tape_loss() {
        let mut rng = Rng::new(8);
        let cfg = tiny_config(Variant::PacRnnDnn);
        let model = build_model(&cfg, &mut rng).unwrap();
        let features = Tensor::matrix(5, 3, (0..15).map(|_| rng.normal()).collect()).unwrap();
        let states = vec![0, 1, 2, 3, 0];
        let phones = vec![2, 0, 1, 1, 2];
        let outputs = model.forward_utterance(&features).unwrap();
        let j = joint_loss(&outputs, &states, &phones, cfg.alpha, cfg.horizon).unwrap();
        let targets = (0..5)
            .map(|t| FrameTarget { state: Some(states[t]), phoneme: Some(phones[(t + 1).min(4)]) })
            .collect();
        let loss = model.sequence_loss(&Sequence { id: "x".into(), features, targets }).unwrap();
        assert!((j + loss).abs() < 1e-12);
    }

    /// Central differences on every parameter of every variant, full unroll.
    #[test]
    fn end_to_end_gradient_check() {
        let h = 1e-5;
        for v in Variant::ALL {
            let cfg = tiny_config(v);
            let mut rng = Rng::new(40);
            let model = build_model(&cfg, &mut rng).unwrap();
            let seqs: Vec<Sequence> = (0..2).map(|_| random_sequence(&mut rng, 6, &cfg)).collect();
            let mut grads = model.zeros_like();
            for s in &seqs {
                model.loss_and_gradient(s, &mut grads).unwrap();
            }
            let total = |m: &Model| seqs.iter().map(|s| m.sequence_loss(s).unwrap()).sum::<f64>();
            let mut worst = 0.0f64;
            for i in 0..model.parameter_count() {
                let orig = flat_get(&model, i);
                let mut m = model.clone();
                flat_set(&mut m, i, orig + h);
                let up = total(&m);
                flat_set(&mut m, i, orig - h);
                let down = total(&m);
                let numeric = (up - down) / (2.0 * h);
                let analytic = flat_get(&grads, i);
                worst = worst.max((numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-3));
            }
            assert!(worst < 1e-5, "{}: worst relative error {}", v, worst);
        }
    }

    #[test]
    fn causality_is_exact() {
        let mut rng = Rng::new(12);
        for v in Variant::ALL {
            let cfg = tiny_config(v);
            let model = build_model(&cfg, &mut rng).unwrap();
            let base = random_sequence(&mut rng, 8, &cfg);
            let out = model.forward_utterance(&base.features).unwrap();
            for t in 0..8 {
                let mut f = base.features.clone();
                for k in t + 1..8 {
                    f.row_mut(k).iter_mut().for_each(|x| *x += 3.0);
                }
                let out2 = model.forward_utterance(&f).unwrap();
                assert_eq!(out[..=t], out2[..=t], "{} frame {}", v, t);
            }
        }
    }

    #[test]
    fn chunked_forward_equals_whole() {
        let mut rng = Rng::new(13);
        for v in Variant::ALL {
            let cfg = tiny_config(v);
            let model = build_model(&cfg, &mut rng).unwrap();
            let seq = random_sequence(&mut rng, 11, &cfg);
            let whole = model.forward_utterance(&seq.features).unwrap();
            let mut state = model.new_state();
            let mut chunked = model.forward_rows(&seq.features, 0..4, &mut state).unwrap();
            chunked.extend(model.forward_rows(&seq.features, 4..8, &mut state).unwrap());
            chunked.extend(model.forward_rows(&seq.features, 8..11, &mut state).unwrap());
            assert_eq!(whole, chunked);
        }
    }

    #[test]
    fn alpha_extremes_zero_the_opposite_head() {
        let mut rng = Rng::new(14);
        for v in [Variant::PacRnnDnn, Variant::PacRnnLstm] {
            for alpha in [0.0, 1.0] {
                let cfg = PacRnnConfig { alpha, ..tiny_config(v) };
                let model = build_model(&cfg, &mut rng).unwrap();
                let seq = random_sequence(&mut rng, 7, &cfg);
                let mut g = model.zeros_like();
                model.loss_and_gradient(&seq, &mut g).unwrap();
                let pred_head = &g.prediction.as_ref().unwrap().head;
                let state_head = &g.state_head;
                let zero = |t: &Tensor| t.data().iter().all(|&x| x == 0.0);
                if alpha == 1.0 {
                    assert!(zero(&pred_head.weights) && zero(&pred_head.bias));
                    assert!(!zero(&state_head.weights));
                } else {
                    assert!(zero(&state_head.weights) && zero(&state_head.bias));
                    assert!(!zero(&pred_head.weights));
                }
            }
        }
    }

    #[test]
    fn argmax_survives_logit_shift() {
        let mut rng = Rng::new(15);
        let cfg = tiny_config(Variant::Dnn);
        let mut model = build_model(&cfg, &mut rng).unwrap();
        let seq = random_sequence(&mut rng, 5, &cfg);
        let before: Vec<usize> = model.forward_utterance(&seq.features).unwrap().iter().map(|o| o.state_posterior.argmax()).collect();
        model.state_head.bias.data_mut().iter_mut().for_each(|b| *b += 7.5);
        let after: Vec<usize> = model.forward_utterance(&seq.features).unwrap().iter().map(|o| o.state_posterior.argmax()).collect();
        assert_eq!(before, after);
    }

    #[test]
    fn model_file_round_trip() {
        for v in Variant::ALL {
            let cfg = PacRnnConfig { input: InputSpec { context: Some(ContextSpec { half_window: 2, step: 1 }), label_delay: 0 }, ..tiny_config(v) };
            let model = build_model(&cfg, &mut Rng::new(3)).unwrap();
            let bytes = model.to_bytes().unwrap();
            assert_eq!(Model::from_bytes(&bytes).unwrap(), model);
            let mut bad = bytes.clone();
            bad[0] = b'X';
            assert!(matches!(Model::from_bytes(&bad), Err(Error::Format { .. })));
            assert!(Model::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        }
    }

    #[test]
    fn frame_error_rate_counts_mismatches() {
        let outs: Vec<FrameOutput> = [[0.9, 0.1], [0.2, 0.8], [0.6, 0.4]]
            .iter()
            .map(|p| FrameOutput { state_posterior: Tensor::vector(p.to_vec()), phoneme_posterior: None })
            .collect();
        let targets = vec![
            FrameTarget { state: Some(0), phoneme: None },
            FrameTarget { state: Some(0), phoneme: None },
            FrameTarget::SKIP,
        ];
        assert_eq!(frame_error_rate(&outs, &targets), (1, 2));
    }
}
