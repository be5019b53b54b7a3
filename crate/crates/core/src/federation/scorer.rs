use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{Activation, LayerSpec, Matrix, Mlp, MlpTape, Parameterized};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorerConfig {
    pub hidden: Vec<usize>,
    pub dropout: f64,
}

impl Default for ScorerConfig {
    fn default() -> Self {
        Self {
            hidden: vec![128, 64, 32],
            dropout: 0.1,
        }
    }
}

/// Fraud scorer `s(z_o, z_b, x)`: relu layers with dropout and a sigmoid output.
#[derive(Debug, Clone, PartialEq)]
pub struct Scorer {
    pub mlp: Mlp,
    dim: usize,
}

#[derive(Debug)]
pub struct ScoreTape {
    mlp: MlpTape,
}

/// Gradients of the loss with respect to the three scorer inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct InputGrads {
    pub z_o: Vec<f64>,
    pub z_b: Vec<f64>,
    pub x: Vec<f64>,
}

impl Scorer {
    pub fn new(config: &ScorerConfig, dim: usize, x_width: usize, rng: &mut Rng) -> Self {
        let mut specs: Vec<LayerSpec> = config
            .hidden
            .iter()
            .map(|&w| LayerSpec::new(w, Activation::Relu, config.dropout))
            .collect();
        specs.push(LayerSpec::new(1, Activation::Sigmoid, 0.0));
        Self {
            mlp: Mlp::new(2 * dim + x_width, &specs, rng),
            dim,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn x_width(&self) -> usize {
        self.mlp.inputs() - 2 * self.dim
    }

    fn input(&self, z_o: &[f64], z_b: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        if z_o.len() != self.dim || z_b.len() != self.dim {
            return Err(Error::dim("score", format!("profiles of {}", self.dim), format!("{} and {}", z_o.len(), z_b.len())));
        }
        if x.len() != self.x_width() {
            return Err(Error::dim("score", format!("features of {}", self.x_width()), x.len()));
        }
        let mut v = Vec::with_capacity(self.mlp.inputs());
        v.extend_from_slice(z_o);
        v.extend_from_slice(z_b);
        v.extend_from_slice(x);
        Ok(v)
    }

    /// Evaluation-mode score in `(0, 1)`.
    pub fn score(&self, z_o: &[f64], z_b: &[f64], x: &[f64]) -> Result<f64> {
        Ok(self.mlp.infer(&self.input(z_o, z_b, x)?)?[0])
    }

    pub fn forward(&self, z_o: &[f64], z_b: &[f64], x: &[f64], rng: Option<&mut Rng>) -> Result<(f64, ScoreTape)> {
        let (y, mlp) = self.mlp.forward(&self.input(z_o, z_b, x)?, rng)?;
        Ok((y[0], ScoreTape { mlp }))
    }

    /// Accumulates parameter gradients for upstream `∂L/∂p` and splits the input gradient.
    pub fn backward(&self, tape: &mut ScoreTape, dp: f64, grad: &mut Scorer) -> Result<InputGrads> {
        let d = self.mlp.backward(&mut tape.mlp, &[dp], &mut grad.mlp)?;
        let m = self.dim;
        Ok(InputGrads {
            z_o: d[..m].to_vec(),
            z_b: d[m..2 * m].to_vec(),
            x: d[2 * m..].to_vec(),
        })
    }
}

impl Parameterized for Scorer {
    fn tensors(&self) -> Vec<(String, &Matrix)> {
        self.mlp.tensors()
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        self.mlp.tensors_mut()
    }
}

/// Learnable map from a partner bank's released profile into the acting
/// bank's embedding space: one relu layer then tanh.
#[derive(Debug, Clone, PartialEq)]
pub struct PreProcessor {
    pub mlp: Mlp,
}

impl PreProcessor {
    pub fn new(input_dim: usize, hidden: usize, output_dim: usize, rng: &mut Rng) -> Self {
        Self {
            mlp: Mlp::new(
                input_dim,
                &[
                    LayerSpec::new(hidden, Activation::Relu, 0.0),
                    LayerSpec::new(output_dim, Activation::Tanh, 0.0),
                ],
                rng,
            ),
        }
    }
}

impl Parameterized for PreProcessor {
    fn tensors(&self) -> Vec<(String, &Matrix)> {
        self.mlp.tensors()
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        self.mlp.tensors_mut()
    }
}

/// `(loss, ∂L/∂p)` of binary cross-entropy for a scored sample.
pub fn bce_loss(p: f64, label: u8) -> (f64, f64) {
    crate::kernel::bce(p, label as f64)
}
