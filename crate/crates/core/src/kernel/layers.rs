use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use super::params::Parameterized;
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Returns `W x + b`.
pub fn dense_affine(x: &[f64], w: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    if w.cols() != x.len() {
        return Err(Error::dim("dense_affine", w.shape_str(), format!("x of {}", x.len())));
    }
    if w.rows() != b.len() {
        return Err(Error::dim("dense_affine", w.shape_str(), format!("b of {}", b.len())));
    }
    let mut out = b.to_vec();
    w.add_matvec_into(x, &mut out);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Matrix,
    pub bias: Matrix,
}

/// Forward record for one dense application.
#[derive(Debug, Clone)]
pub struct DenseTape {
    input: Vec<f64>,
}

impl Dense {
    pub fn new(inputs: usize, outputs: usize, rng: &mut Rng) -> Self {
        Self {
            weight: Matrix::glorot(outputs, inputs, rng),
            bias: Matrix::zeros(outputs, 1),
        }
    }

    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weight: Matrix::zeros(outputs, inputs),
            bias: Matrix::zeros(outputs, 1),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.cols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.rows()
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        dense_affine(x, &self.weight, self.bias.data())
    }

    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, DenseTape)> {
        let y = self.apply(x)?;
        Ok((y, DenseTape { input: x.to_vec() }))
    }

    /// Accumulates parameter gradients into `grad` and returns `∂L/∂x`.
    pub fn backward(&self, tape: DenseTape, dy: &[f64], grad: &mut Dense) -> Vec<f64> {
        grad.weight.add_outer(dy, &tape.input);
        for (g, d) in grad.bias.data_mut().iter_mut().zip(dy) {
            *g += d;
        }
        let mut dx = vec![0.0; self.inputs()];
        self.weight.add_transpose_matvec_into(dy, &mut dx);
        dx
    }
}

impl Parameterized for Dense {
    fn tensors(&self) -> Vec<(String, &Matrix)> {
        vec![("weight".into(), &self.weight), ("bias".into(), &self.bias)]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        vec![&mut self.weight, &mut self.bias]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
    Sigmoid,
}

impl Activation {
    #[inline]
    pub fn eval(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => sigmoid(x),
        }
    }

    /// Derivative expressed through the activation output.
    #[inline]
    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
        }
    }

    pub fn apply_in_place(self, x: &mut [f64]) {
        if self != Activation::Identity {
            x.iter_mut().for_each(|v| *v = self.eval(*v));
        }
    }

    /// Backward through the activation given its output.
    pub fn backward(self, output: &[f64], dy: &[f64]) -> Vec<f64> {
        output
            .iter()
            .zip(dy)
            .map(|(&y, &d)| d * self.derivative_from_output(y))
            .collect()
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn activation(kind: Activation, x: &[f64]) -> Vec<f64> {
    let mut y = x.to_vec();
    kind.apply_in_place(&mut y);
    y
}

/// Inverted dropout: surviving units are scaled by `1 / (1 - rate)` so the
/// expected activation is unchanged and evaluation is the identity.
pub fn dropout_mask(len: usize, rate: f64, rng: &mut Rng) -> Vec<f64> {
    let keep = 1.0 - rate;
    (0..len)
        .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
        .collect()
}
