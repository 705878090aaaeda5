use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::Parameterized;
use crate::pacrnn::Variant;
use crate::tensor::Tensor;

/// How the per-chunk gradient is normalised before the learning rate is
/// applied.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GradientScale {
    /// Gradient summed over every unmasked frame of the chunk-batch.
    Sum,
    /// Summed gradient divided by the number of scored frames.
    Mean,
}

pub const TOY_CLIP_NORM: f64 = 0.3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleConfig {
    /// First-epoch learning rate.
    pub base_lr: f64,
    /// Factor applied to the learning rate from the second epoch on.
    pub ramp: f64,
    /// Momentum from the second epoch on; the first epoch uses none.
    pub momentum: f64,
    /// A dev loss counts as an improvement only if it beats the best so far
    /// by more than this.
    pub tolerance: f64,
    /// Training stops once the rate falls below `base_lr / floor_divisor`.
    pub floor_divisor: f64,
    pub max_epochs: usize,
    pub gradient_scale: GradientScale,
    /// Optional cap on the global gradient norm of each update.
    pub clip_norm: Option<f64>,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig::feed_forward()
    }
}

impl ScheduleConfig {
    pub fn feed_forward() -> Self {
        ScheduleConfig {
            base_lr: 0.1,
            ramp: 10.0,
            momentum: 0.9,
            tolerance: 1e-6,
            floor_divisor: 64.0,
            max_epochs: 30,
            gradient_scale: GradientScale::Sum,
            clip_norm: None,
        }
    }

    /// Recurrent models run at a tenth of the feed-forward rates.
    pub fn recurrent() -> Self {
        ScheduleConfig { base_lr: 0.01, ..ScheduleConfig::feed_forward() }
    }

    /// The DNN baseline is the only variant on feed-forward rates.
    pub fn for_variant(variant: Variant) -> Self {
        match variant {
            Variant::Dnn => ScheduleConfig::feed_forward(),
            _ => ScheduleConfig::recurrent(),
        }
    }

    /// Variant rates with the gradient norm capped, for desk-scale corpora
    /// where a handful of summed-gradient updates per epoch would otherwise
    /// either stall or blow up.
    pub fn toy(variant: Variant) -> Self {
        ScheduleConfig { clip_norm: Some(TOY_CLIP_NORM), ..ScheduleConfig::for_variant(variant) }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return Err(Error::parameter("base_lr", "must be positive"));
        }
        if !(self.ramp > 0.0) {
            return Err(Error::parameter("ramp", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::parameter("momentum", "must lie in [0, 1)"));
        }
        if !(self.floor_divisor >= 1.0) {
            return Err(Error::parameter("floor_divisor", "must be at least 1"));
        }
        if self.max_epochs == 0 {
            return Err(Error::parameter("max_epochs", "must be at least 1"));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return Err(Error::parameter("clip_norm", "must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Warmup,
    Main,
    Halving,
}

/// Learning-rate state between epochs.
#[derive(Clone, Debug, PartialEq)]
pub struct Schedule {
    pub config: ScheduleConfig,
    /// 1-based index of the next epoch to run.
    pub epoch: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub dev_losses: Vec<f64>,
    pub phase: Phase,
    pub finished: bool,
}

impl Schedule {
    pub fn new(config: ScheduleConfig) -> Result<Self> {
        config.validate()?;
        Ok(Schedule {
            learning_rate: config.base_lr,
            momentum: 0.0,
            epoch: 1,
            dev_losses: Vec::new(),
            phase: Phase::Warmup,
            finished: false,
            config,
        })
    }

    pub fn best_dev_loss(&self) -> Option<f64> {
        self.dev_losses.iter().copied().reduce(f64::min)
    }

    /// Records the dev loss of the epoch just run and sets up the next one.
    pub fn advance(&mut self, dev_loss: f64) {
        let best = self.best_dev_loss();
        self.dev_losses.push(dev_loss);
        if self.phase == Phase::Warmup {
            self.learning_rate = self.config.base_lr * self.config.ramp;
            self.momentum = self.config.momentum;
            self.phase = Phase::Main;
        } else if best.is_some_and(|b| !(dev_loss < b - self.config.tolerance)) {
            self.learning_rate *= 0.5;
            self.phase = Phase::Halving;
        }
        self.epoch += 1;
        if self.learning_rate < self.config.base_lr / self.config.floor_divisor || self.epoch > self.config.max_epochs {
            self.finished = true;
        }
    }
}

/// Momentum accumulator, one tensor per parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Velocity {
    pub tensors: Vec<Tensor>,
}

impl Velocity {
    pub fn zeros_for<P: Parameterized>(params: &P) -> Self {
        Velocity { tensors: params.parameters().into_iter().map(|t| Tensor::zeros(t.shape())).collect() }
    }
}

/// `v <- momentum * v - lr * grad; params <- params + v`, with `grad` the
/// gradient of the loss `-J`. This is ascent on `J`.
pub fn sgd_update<P: Parameterized>(params: &mut P, grads: &P, velocity: &mut Velocity, lr: f64, momentum: f64) -> Result<()> {
    let gs = grads.parameters();
    let ps = params.parameters_mut();
    if ps.len() != gs.len() || ps.len() != velocity.tensors.len() {
        return Err(Error::State("parameter, gradient and velocity tensor counts differ".into()));
    }
    for ((p, g), v) in ps.into_iter().zip(gs).zip(velocity.tensors.iter_mut()) {
        if p.shape() != g.shape() || p.shape() != v.shape() {
            return Err(Error::dimension("sgd update", format!("shapes {:?}, {:?}, {:?}", p.shape(), g.shape(), v.shape())));
        }
        for ((pv, gv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(v.data_mut()) {
            *vv = momentum * *vv - lr * gv;
            *pv += *vv;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::{Activation, AffineLayer};

    fn layer(w: f64) -> AffineLayer {
        AffineLayer::from_parts(Tensor::matrix(1, 1, vec![w]).unwrap(), Tensor::vector(vec![0.0]), Activation::Linear).unwrap()
    }

    #[test]
    fn feed_forward_ramp_after_first_epoch() {
        let mut s = Schedule::new(ScheduleConfig::feed_forward()).unwrap();
        assert_eq!((s.learning_rate, s.momentum), (0.1, 0.0));
        s.advance(5.0);
        assert!((s.learning_rate - 1.0).abs() < 1e-15);
        assert_eq!(s.momentum, 0.9);
    }

    #[test]
    fn recurrent_rates_are_a_tenth() {
        for v in [Variant::Lstm, Variant::PacRnnDnn, Variant::PacRnnLstm] {
            let mut s = Schedule::new(ScheduleConfig::for_variant(v)).unwrap();
            assert_eq!(s.learning_rate, 0.01);
            s.advance(1.0);
            assert!((s.learning_rate - 0.1).abs() < 1e-15);
        }
    }

    #[test]
    fn halves_on_third_evaluation() {
        let mut s = Schedule::new(ScheduleConfig::feed_forward()).unwrap();
        s.advance(5.0);
        s.advance(4.0);
        assert!((s.learning_rate - 1.0).abs() < 1e-15);
        s.advance(4.1);
        assert!((s.learning_rate - 0.5).abs() < 1e-15);
        assert_eq!(s.phase, Phase::Halving);
        // Within tolerance of the best is not an improvement.
        s.advance(4.0 - 1e-7);
        assert!((s.learning_rate - 0.25).abs() < 1e-15);
    }

    #[test]
    fn stops_at_floor_or_cap() {
        let mut s = Schedule::new(ScheduleConfig::feed_forward()).unwrap();
        s.advance(1.0);
        let mut n = 1;
        while !s.finished {
            s.advance(2.0);
            n += 1;
        }
        // 1.0 -> 0.5 -> ... -> 1/1024 < 0.1/64 after ten halvings.
        assert_eq!(n, 11);
        let mut capped = Schedule::new(ScheduleConfig { max_epochs: 3, ..ScheduleConfig::feed_forward() }).unwrap();
        for loss in [3.0, 2.0, 1.0] {
            assert!(!capped.finished);
            capped.advance(loss);
        }
        assert!(capped.finished);
    }

    #[test]
    fn momentum_zero_is_plain_sgd() {
        let mut p = layer(1.0);
        let g = layer(0.5);
        let mut v = Velocity::zeros_for(&p);
        sgd_update(&mut p, &g, &mut v, 0.2, 0.0).unwrap();
        assert!((p.weights.data()[0] - 0.9).abs() < 1e-15);
        assert_eq!(v.tensors[0].data()[0], -0.2 * 0.5);
    }

    #[test]
    fn two_momentum_steps_displace_by_2_9() {
        let mut p = layer(0.0);
        let g = layer(1.0);
        let mut v = Velocity::zeros_for(&p);
        for _ in 0..2 {
            sgd_update(&mut p, &g, &mut v, 0.1, 0.9).unwrap();
        }
        assert!((p.weights.data()[0] + 0.1 * 2.9).abs() < 1e-15);
    }

    #[test]
    fn step_is_linear_in_lr() {
        let g = layer(0.37);
        let step = |lr: f64| {
            let mut p = layer(0.0);
            let mut v = Velocity::zeros_for(&p);
            sgd_update(&mut p, &g, &mut v, lr, 0.0).unwrap();
            p.weights.data()[0]
        };
        assert_eq!(step(0.25) * 4.0, step(1.0));
    }

    #[test]
    fn bad_config_is_rejected() {
        assert!(Schedule::new(ScheduleConfig { momentum: 1.0, ..Default::default() }).is_err());
        assert!(Schedule::new(ScheduleConfig { base_lr: 0.0, ..Default::default() }).is_err());
    }
}
