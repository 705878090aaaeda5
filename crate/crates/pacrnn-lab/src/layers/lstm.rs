use super::{sigmoid, Parameterized};
use crate::error::{Error, Result};
use crate::tensor::{add_outer, matvec_into, matvec_t_acc, uniform_init, Rng, Tensor};

/// Forget-gate LSTM without peepholes or projection.
///
/// Gate blocks are stacked along the rows of every parameter tensor in the
/// order input, forget, output, candidate: rows `0..H` are the input gate,
/// `H..2H` the forget gate, `2H..3H` the output gate and `3H..4H` the
/// candidate.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmCell {
    pub input_weights: Tensor,
    pub recurrent_weights: Tensor,
    pub bias: Tensor,
    cells: usize,
}

#[derive(Clone, Debug)]
pub struct LstmCache {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub c_prev: Vec<f64>,
    /// Activated gates, `[i | f | o | g]`.
    pub gates: Vec<f64>,
    pub c: Vec<f64>,
    pub tanh_c: Vec<f64>,
    pub h: Vec<f64>,
}

impl LstmCell {
    pub fn new(rng: &mut Rng, inputs: usize, cells: usize, forget_bias: f64) -> Result<Self> {
        if inputs == 0 || cells == 0 {
            return Err(Error::parameter("lstm width", format!("{} inputs, {} cells", inputs, cells)));
        }
        let scale = 1.0 / ((inputs + cells) as f64).sqrt();
        let mut bias = Tensor::zeros(&[4 * cells]);
        bias.data_mut()[cells..2 * cells].iter_mut().for_each(|b| *b = forget_bias);
        Ok(LstmCell {
            input_weights: uniform_init(rng, &[4 * cells, inputs], scale)?,
            recurrent_weights: uniform_init(rng, &[4 * cells, cells], scale)?,
            bias,
            cells,
        })
    }

    pub fn from_parts(input_weights: Tensor, recurrent_weights: Tensor, bias: Tensor) -> Result<Self> {
        let cells = recurrent_weights.cols();
        let ok = input_weights.rank() == 2
            && recurrent_weights.rank() == 2
            && input_weights.rows() == 4 * cells
            && recurrent_weights.rows() == 4 * cells
            && bias.rank() == 1
            && bias.len() == 4 * cells;
        if !ok {
            return Err(Error::dimension(
                "lstm cell",
                format!(
                    "input {:?}, recurrent {:?}, bias {:?} are not four gate blocks of one width",
                    input_weights.shape(),
                    recurrent_weights.shape(),
                    bias.shape()
                ),
            ));
        }
        Ok(LstmCell { input_weights, recurrent_weights, bias, cells })
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn inputs(&self) -> usize {
        self.input_weights.cols()
    }

    pub fn step(&self, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> Result<LstmCache> {
        let h = self.cells;
        if x.len() != self.inputs() {
            return Err(Error::dimension(
                "lstm step",
                format!("input length {} but cell expects {}", x.len(), self.inputs()),
            ));
        }
        if h_prev.len() != h || c_prev.len() != h {
            return Err(Error::dimension(
                "lstm step",
                format!("state widths ({}, {}) but cell width {}", h_prev.len(), c_prev.len(), h),
            ));
        }
        let mut z = vec![0.0; 4 * h];
        matvec_into(self.input_weights.data(), self.inputs(), x, &mut z);
        let mut zr = vec![0.0; 4 * h];
        matvec_into(self.recurrent_weights.data(), h, h_prev, &mut zr);
        let mut gates = vec![0.0; 4 * h];
        for k in 0..4 * h {
            let pre = z[k] + zr[k] + self.bias.data()[k];
            gates[k] = if k < 3 * h { sigmoid(pre) } else { pre.tanh() };
        }
        let mut c = vec![0.0; h];
        let mut tanh_c = vec![0.0; h];
        let mut hv = vec![0.0; h];
        for j in 0..h {
            let (i, f, o, g) = (gates[j], gates[h + j], gates[2 * h + j], gates[3 * h + j]);
            c[j] = f * c_prev[j] + i * g;
            tanh_c[j] = c[j].tanh();
            hv[j] = o * tanh_c[j];
        }
        Ok(LstmCache {
            x: x.to_vec(),
            h_prev: h_prev.to_vec(),
            c_prev: c_prev.to_vec(),
            gates,
            c,
            tanh_c,
            h: hv,
        })
    }

    /// Tensor-level single step returning `(h, c)`.
    pub fn step_tensors(&self, x: &Tensor, h_prev: &Tensor, c_prev: &Tensor) -> Result<(Tensor, Tensor)> {
        let cache = self.step(x.data(), h_prev.data(), c_prev.data())?;
        Ok((Tensor::vector(cache.h), Tensor::vector(cache.c)))
    }

    /// Backward through one step given dL/dh (total, including recurrent
    /// contributions) and dL/dc arriving from the next step. Returns
    /// `(dx, dh_prev, dc_prev)`.
    pub fn backward(
        &self,
        cache: &LstmCache,
        dh: &[f64],
        dc_next: &[f64],
        grads: &mut LstmCell,
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let h = self.cells;
        let mut dz = vec![0.0; 4 * h];
        let mut dc_prev = vec![0.0; h];
        for j in 0..h {
            let (i, f, o, g) = (cache.gates[j], cache.gates[h + j], cache.gates[2 * h + j], cache.gates[3 * h + j]);
            let tc = cache.tanh_c[j];
            let dc = dh[j] * o * (1.0 - tc * tc) + dc_next[j];
            let d_o = dh[j] * tc;
            let d_i = dc * g;
            let d_g = dc * i;
            let d_f = dc * cache.c_prev[j];
            dc_prev[j] = dc * f;
            dz[j] = d_i * i * (1.0 - i);
            dz[h + j] = d_f * f * (1.0 - f);
            dz[2 * h + j] = d_o * o * (1.0 - o);
            dz[3 * h + j] = d_g * (1.0 - g * g);
        }
        add_outer(grads.input_weights.data_mut(), &dz, &cache.x);
        add_outer(grads.recurrent_weights.data_mut(), &dz, &cache.h_prev);
        for (b, d) in grads.bias.data_mut().iter_mut().zip(&dz) {
            *b += d;
        }
        let mut dx = vec![0.0; self.inputs()];
        matvec_t_acc(self.input_weights.data(), self.inputs(), &dz, &mut dx);
        let mut dh_prev = vec![0.0; h];
        matvec_t_acc(self.recurrent_weights.data(), h, &dz, &mut dh_prev);
        (dx, dh_prev, dc_prev)
    }
}

impl Parameterized for LstmCell {
    fn parameters(&self) -> Vec<&Tensor> {
        vec![&self.input_weights, &self.recurrent_weights, &self.bias]
    }

    fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.input_weights, &mut self.recurrent_weights, &mut self.bias]
    }
}
