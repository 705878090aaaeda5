use serde::{Deserialize, Serialize};

use super::{sigmoid, Parameterized};
use crate::error::{Error, Result};
use crate::tensor::{add_outer, matvec_into, matvec_t_acc, uniform_init, Rng, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Sigmoid,
    Tanh,
    Linear,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Sigmoid => sigmoid(z),
            Activation::Tanh => z.tanh(),
            Activation::Linear => z,
        }
    }

    /// Derivative expressed through the activation output `y`.
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Tanh => 1.0 - y * y,
            Activation::Linear => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
            Activation::Linear => "linear",
        }
    }
}

/// `activation(W x + b)`.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineLayer {
    pub weights: Tensor,
    pub bias: Tensor,
    pub activation: Activation,
}

#[derive(Clone, Debug)]
pub struct AffineCache {
    pub input: Vec<f64>,
    pub output: Vec<f64>,
}

impl AffineLayer {
    /// Weights uniform in `±1/sqrt(fan_in)`, zero bias.
    pub fn new(rng: &mut Rng, inputs: usize, outputs: usize, activation: Activation) -> Result<Self> {
        if inputs == 0 || outputs == 0 {
            return Err(Error::parameter(
                "affine width",
                format!("{}x{} layer has a zero dimension", outputs, inputs),
            ));
        }
        let scale = 1.0 / (inputs as f64).sqrt();
        Ok(AffineLayer {
            weights: uniform_init(rng, &[outputs, inputs], scale)?,
            bias: Tensor::zeros(&[outputs]),
            activation,
        })
    }

    pub fn from_parts(weights: Tensor, bias: Tensor, activation: Activation) -> Result<Self> {
        if weights.rank() != 2 || bias.rank() != 1 || bias.len() != weights.rows() {
            return Err(Error::dimension(
                "affine layer",
                format!("weights {:?} incompatible with bias {:?}", weights.shape(), bias.shape()),
            ));
        }
        Ok(AffineLayer { weights, bias, activation })
    }

    pub fn inputs(&self) -> usize {
        self.weights.cols()
    }

    pub fn outputs(&self) -> usize {
        self.weights.rows()
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.inputs() {
            return Err(Error::dimension(
                "affine forward",
                format!("input length {} but layer expects {}", x.len(), self.inputs()),
            ));
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut out = vec![0.0; self.outputs()];
        matvec_into(self.weights.data(), self.inputs(), x, &mut out);
        for (o, b) in out.iter_mut().zip(self.bias.data()) {
            *o = self.activation.apply(*o + b);
        }
        Ok(out)
    }

    pub fn forward_tensor(&self, x: &Tensor) -> Result<Tensor> {
        Ok(Tensor::vector(self.forward(x.data())?))
    }

    pub fn forward_cached(&self, x: &[f64]) -> Result<AffineCache> {
        let output = self.forward(x)?;
        Ok(AffineCache { input: x.to_vec(), output })
    }

    /// Accumulates parameter gradients into `grads` and returns dL/dx.
    pub fn backward(&self, cache: &AffineCache, upstream: &[f64], grads: &mut AffineLayer) -> Vec<f64> {
        let dz: Vec<f64> = upstream
            .iter()
            .zip(&cache.output)
            .map(|(&g, &y)| g * self.activation.derivative_from_output(y))
            .collect();
        add_outer(grads.weights.data_mut(), &dz, &cache.input);
        for (b, d) in grads.bias.data_mut().iter_mut().zip(&dz) {
            *b += d;
        }
        let mut dx = vec![0.0; self.inputs()];
        matvec_t_acc(self.weights.data(), self.inputs(), &dz, &mut dx);
        dx
    }
}

impl Parameterized for AffineLayer {
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

    fn probe_loss(out: &[f64], probe: &[f64]) -> f64 {
        out.iter().zip(probe).map(|(a, b)| a * b).sum()
    }

    #[test]
    fn identity_and_zero_cases() {
        let eye = AffineLayer::from_parts(
            Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap(),
            Tensor::zeros(&[2]),
            Activation::Linear,
        )
        .unwrap();
        assert_eq!(eye.forward(&[0.3, -2.0]).unwrap(), vec![0.3, -2.0]);

        let zero = AffineLayer::from_parts(Tensor::zeros(&[3, 2]), Tensor::zeros(&[3]), Activation::Sigmoid).unwrap();
        assert_eq!(zero.forward(&[5.0, -1.0]).unwrap(), vec![0.5, 0.5, 0.5]);
        assert!(matches!(zero.forward(&[1.0]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn matches_scalar_loop() {
        let mut rng = Rng::new(11);
        for act in [Activation::Sigmoid, Activation::Tanh, Activation::Linear] {
            let layer = AffineLayer::new(&mut rng, 6, 4, act).unwrap();
            let mut layer = layer;
            layer.bias = uniform_init(&mut rng, &[4], 0.5).unwrap();
            let x: Vec<f64> = (0..6).map(|_| rng.uniform(-1.0, 1.0)).collect();
            let y = layer.forward(&x).unwrap();
            for i in 0..4 {
                let mut z = layer.bias.data()[i];
                for j in 0..6 {
                    z += layer.weights.get(i, j) * x[j];
                }
                let expect = match act {
                    Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
                    Activation::Tanh => z.tanh(),
                    Activation::Linear => z,
                };
                assert!((y[i] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn linear_input_gradient_is_transpose_product() {
        let mut rng = Rng::new(5);
        let layer = AffineLayer::new(&mut rng, 3, 2, Activation::Linear).unwrap();
        let cache = layer.forward_cached(&[0.1, 0.2, 0.3]).unwrap();
        let upstream = [0.7, -1.1];
        let mut g = layer.zeros_like();
        let dx = layer.backward(&cache, &upstream, &mut g);
        let expect = layer.weights.transpose().unwrap().matmul(&Tensor::matrix(2, 1, upstream.to_vec()).unwrap()).unwrap();
        assert_eq!(dx, expect.data());
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = Rng::new(6);
        let layer = AffineLayer::new(&mut rng, 3, 2, Activation::Sigmoid).unwrap();
        let cache = layer.forward_cached(&[0.1, 0.2, 0.3]).unwrap();
        let mut g = layer.zeros_like();
        layer.backward(&cache, &[0.0, 0.0], &mut g);
        assert!(g.parameters().iter().all(|t| t.data().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn gradient_check_all_activations() {
        let h = 1e-5;
        for act in [Activation::Sigmoid, Activation::Tanh, Activation::Linear] {
            for point in 0..20u64 {
                let mut rng = Rng::new(100 + point);
                let mut layer = AffineLayer::new(&mut rng, 4, 3, act).unwrap();
                layer.bias = uniform_init(&mut rng, &[3], 0.5).unwrap();
                let x: Vec<f64> = (0..4).map(|_| rng.uniform(-1.0, 1.0)).collect();
                let probe: Vec<f64> = (0..3).map(|_| rng.uniform(-1.0, 1.0)).collect();
                let cache = layer.forward_cached(&x).unwrap();
                let mut g = layer.zeros_like();
                let dx = layer.backward(&cache, &probe, &mut g);
                for i in 0..layer.parameter_count() {
                    let orig = flat_get(&layer, i);
                    let mut l = layer.clone();
                    flat_set(&mut l, i, orig + h);
                    let up = probe_loss(&l.forward(&x).unwrap(), &probe);
                    flat_set(&mut l, i, orig - h);
                    let down = probe_loss(&l.forward(&x).unwrap(), &probe);
                    let numeric = (up - down) / (2.0 * h);
                    let analytic = flat_get(&g, i);
                    let rel = (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-3);
                    assert!(rel < 1e-6, "{:?} param {} rel {}", act, i, rel);
                }
                for j in 0..4 {
                    let mut xp = x.clone();
                    xp[j] += h;
                    let up = probe_loss(&layer.forward(&xp).unwrap(), &probe);
                    xp[j] -= 2.0 * h;
                    let down = probe_loss(&layer.forward(&xp).unwrap(), &probe);
                    let numeric = (up - down) / (2.0 * h);
                    let rel = (numeric - dx[j]).abs() / numeric.abs().max(dx[j].abs()).max(1e-3);
                    assert!(rel < 1e-6);
                }
            }
        }
    }
}
