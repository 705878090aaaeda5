use super::Parameterized;
use crate::error::{Error, Result};
use crate::tensor::{add_outer, matvec_into, matvec_t_acc, softmax_in_place, uniform_init, Rng, Tensor};

/// Output layer producing class posteriors.
#[derive(Clone, Debug, PartialEq)]
pub struct SoftmaxHead {
    pub weights: Tensor,
    pub bias: Tensor,
}

#[derive(Clone, Debug)]
pub struct SoftmaxOutput {
    pub loss: f64,
    pub posterior: Tensor,
}

impl SoftmaxHead {
    pub fn new(rng: &mut Rng, inputs: usize, classes: usize) -> Result<Self> {
        if classes < 2 {
            return Err(Error::parameter("classes", format!("softmax head needs at least 2 classes, got {}", classes)));
        }
        if inputs == 0 {
            return Err(Error::parameter("head inputs", "zero input width"));
        }
        let scale = 1.0 / (inputs as f64).sqrt();
        Ok(SoftmaxHead {
            weights: uniform_init(rng, &[classes, inputs], scale)?,
            bias: Tensor::zeros(&[classes]),
        })
    }

    pub fn from_parts(weights: Tensor, bias: Tensor) -> Result<Self> {
        if weights.rank() != 2 || weights.rows() < 2 || bias.len() != weights.rows() {
            return Err(Error::dimension(
                "softmax head",
                format!("weights {:?} with bias {:?}", weights.shape(), bias.shape()),
            ));
        }
        Ok(SoftmaxHead { weights, bias })
    }

    pub fn classes(&self) -> usize {
        self.weights.rows()
    }

    pub fn inputs(&self) -> usize {
        self.weights.cols()
    }

    pub fn posterior(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.inputs() {
            return Err(Error::dimension(
                "softmax head",
                format!("input length {} but head expects {}", x.len(), self.inputs()),
            ));
        }
        let mut logits = vec![0.0; self.classes()];
        matvec_into(self.weights.data(), self.inputs(), x, &mut logits);
        for (l, b) in logits.iter_mut().zip(self.bias.data()) {
            *l += b;
        }
        softmax_in_place(&mut logits);
        Ok(logits)
    }

    /// Cross-entropy of `label` under the head's posterior.
    pub fn softmax_ce(&self, x: &Tensor, label: usize) -> Result<SoftmaxOutput> {
        if label >= self.classes() {
            return Err(Error::label(
                "softmax_ce",
                format!("label {} outside {} classes", label, self.classes()),
            ));
        }
        let p = self.posterior(x.data())?;
        Ok(SoftmaxOutput { loss: -p[label].ln(), posterior: Tensor::vector(p) })
    }

    /// Backward from logit gradients; accumulates into `grads`, returns dL/dx.
    pub fn backward_logits(&self, x: &[f64], dlogits: &[f64], grads: &mut SoftmaxHead) -> Vec<f64> {
        add_outer(grads.weights.data_mut(), dlogits, x);
        for (b, d) in grads.bias.data_mut().iter_mut().zip(dlogits) {
            *b += d;
        }
        let mut dx = vec![0.0; self.inputs()];
        matvec_t_acc(self.weights.data(), self.inputs(), dlogits, &mut dx);
        dx
    }
}

/// Gradient of `weight * -ln p[label]` with respect to the logits.
pub(crate) fn ce_logit_gradient(posterior: &[f64], label: usize, weight: f64) -> Vec<f64> {
    posterior
        .iter()
        .enumerate()
        .map(|(k, &p)| weight * (p - if k == label { 1.0 } else { 0.0 }))
        .collect()
}

impl Parameterized for SoftmaxHead {
    fn parameters(&self) -> Vec<&Tensor> {
        vec![&self.weights, &self.bias]
    }

    fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.weights, &mut self.bias]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::{flat_get, flat_set};

    #[test]
    fn uniform_posterior_costs_ln2() {
        let head = SoftmaxHead::from_parts(Tensor::zeros(&[2, 3]), Tensor::zeros(&[2])).unwrap();
        let out = head.softmax_ce(&Tensor::vector(vec![1.0, 2.0, 3.0]), 1).unwrap();
        assert!((out.loss - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((out.posterior.data().iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn half_posterior_costs_ln2() {
        // Three classes with logits ln(2), 0, 0 give posterior [0.5, 0.25, 0.25].
        let head = SoftmaxHead::from_parts(Tensor::zeros(&[3, 1]), Tensor::vector(vec![2f64.ln(), 0.0, 0.0])).unwrap();
        let out = head.softmax_ce(&Tensor::vector(vec![0.0]), 0).unwrap();
        assert!((out.posterior.data()[0] - 0.5).abs() < 1e-12);
        assert!((out.loss - 0.693147).abs() < 1e-6);
    }

    #[test]
    fn random_head_matches_direct_formula() {
        let mut rng = Rng::new(31);
        let mut head = SoftmaxHead::new(&mut rng, 5, 4).unwrap();
        head.bias = uniform_init(&mut rng, &[4], 1.0).unwrap();
        let x: Vec<f64> = (0..5).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let out = head.softmax_ce(&Tensor::vector(x.clone()), 2).unwrap();
        let logits: Vec<f64> = (0..4)
            .map(|k| head.bias.data()[k] + (0..5).map(|j| head.weights.get(k, j) * x[j]).sum::<f64>())
            .collect();
        let z: f64 = logits.iter().map(|l| l.exp()).sum();
        assert!((out.loss - (z.ln() - logits[2])).abs() < 1e-12);
        assert!(out.loss >= 0.0);
    }

    #[test]
    fn bad_label_and_class_count() {
        let mut rng = Rng::new(1);
        let head = SoftmaxHead::new(&mut rng, 2, 3).unwrap();
        assert!(matches!(head.softmax_ce(&Tensor::vector(vec![0.0, 0.0]), 3), Err(Error::Label { .. })));
        assert!(matches!(SoftmaxHead::new(&mut rng, 2, 1), Err(Error::Parameter { .. })));
    }

    #[test]
    fn gradient_check() {
        let step = 1e-5;
        for point in 0..20u64 {
            let mut rng = Rng::new(500 + point);
            let mut head = SoftmaxHead::new(&mut rng, 4, 3).unwrap();
            head.bias = uniform_init(&mut rng, &[3], 1.0).unwrap();
            let x: Vec<f64> = (0..4).map(|_| rng.uniform(-1.0, 1.0)).collect();
            let label = rng.below(3);
            let xt = Tensor::vector(x.clone());
            let p = head.posterior(&x).unwrap();
            let mut g = head.zeros_like();
            head.backward_logits(&x, &ce_logit_gradient(&p, label, 1.0), &mut g);
            for i in 0..head.parameter_count() {
                let orig = flat_get(&head, i);
                let mut h = head.clone();
                flat_set(&mut h, i, orig + step);
                let up = h.softmax_ce(&xt, label).unwrap().loss;
                flat_set(&mut h, i, orig - step);
                let down = h.softmax_ce(&xt, label).unwrap().loss;
                let numeric = (up - down) / (2.0 * step);
                let analytic = flat_get(&g, i);
                let rel = (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-3);
                assert!(rel < 1e-6, "param {} rel {}", i, rel);
            }
        }
    }
}
