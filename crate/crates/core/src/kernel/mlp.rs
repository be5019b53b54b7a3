use serde::{Deserialize, Serialize};

use super::layers::{dropout_mask, Activation, Dense, DenseTape};
use super::matrix::Matrix;
use super::params::Parameterized;
use crate::error::{Error, Result};
use crate::rng::Rng;

/// One hidden or output layer of a perceptron.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub width: usize,
    pub activation: Activation,
    /// Dropout applied after the activation; 0 disables it.
    pub dropout: f64,
}

impl LayerSpec {
    pub const fn new(width: usize, activation: Activation, dropout: f64) -> Self {
        Self {
            width,
            activation,
            dropout,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Dense>,
    specs: Vec<LayerSpec>,
}

#[derive(Debug)]
struct LayerRecord {
    dense: DenseTape,
    activated: Vec<f64>,
    mask: Option<Vec<f64>>,
}

/// Forward record of an [`Mlp`]; consumed by exactly one backward pass.
#[derive(Debug)]
pub struct MlpTape {
    records: Option<Vec<LayerRecord>>,
}

impl Mlp {
    pub fn new(inputs: usize, specs: &[LayerSpec], rng: &mut Rng) -> Self {
        let mut layers = Vec::with_capacity(specs.len());
        let mut width = inputs;
        for s in specs {
            layers.push(Dense::new(width, s.width, rng));
            width = s.width;
        }
        Self {
            layers,
            specs: specs.to_vec(),
        }
    }

    pub fn inputs(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn outputs(&self) -> usize {
        self.layers.last().map(Dense::outputs).unwrap_or(0)
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn specs(&self) -> &[LayerSpec] {
        &self.specs
    }

    /// Evaluation-mode forward pass without a tape.
    pub fn infer(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut h = x.to_vec();
        for (layer, spec) in self.layers.iter().zip(&self.specs) {
            let mut y = layer.bias.data().to_vec();
            layer.weight.add_matvec_into(&h, &mut y);
            spec.activation.apply_in_place(&mut y);
            h = y;
        }
        Ok(h)
    }

    /// Recording forward pass. Dropout is active only when `rng` is given.
    pub fn forward(&self, x: &[f64], mut rng: Option<&mut Rng>) -> Result<(Vec<f64>, MlpTape)> {
        self.check_input(x)?;
        let mut records = Vec::with_capacity(self.layers.len());
        let mut h = x.to_vec();
        for (layer, spec) in self.layers.iter().zip(&self.specs) {
            let (mut y, dense) = layer.forward(&h)?;
            spec.activation.apply_in_place(&mut y);
            let activated = y.clone();
            let mask = match rng.as_deref_mut() {
                Some(r) if spec.dropout > 0.0 => {
                    let m = dropout_mask(y.len(), spec.dropout, r);
                    y.iter_mut().zip(&m).for_each(|(v, k)| *v *= k);
                    Some(m)
                }
                _ => None,
            };
            records.push(LayerRecord {
                dense,
                activated,
                mask,
            });
            h = y;
        }
        Ok((h, MlpTape {
            records: Some(records),
        }))
    }

    /// Accumulates parameter gradients into `grad`; returns `∂L/∂x`.
    pub fn backward(&self, tape: &mut MlpTape, dy: &[f64], grad: &mut Mlp) -> Result<Vec<f64>> {
        let records = tape.records.take().ok_or(Error::TapeConsumed)?;
        if dy.len() != self.outputs() {
            return Err(Error::dim("Mlp::backward", self.outputs(), dy.len()));
        }
        let mut d = dy.to_vec();
        for (((layer, spec), rec), g) in self
            .layers
            .iter()
            .zip(&self.specs)
            .zip(records)
            .zip(grad.layers.iter_mut())
            .rev()
        {
            if let Some(mask) = &rec.mask {
                d.iter_mut().zip(mask).for_each(|(v, k)| *v *= k);
            }
            let dz = spec.activation.backward(&rec.activated, &d);
            d = layer.backward(rec.dense, &dz, g);
        }
        Ok(d)
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.inputs() {
            return Err(Error::dim(
                "Mlp::forward",
                format!("input width {}", self.inputs()),
                format!("vector of {}", x.len()),
            ));
        }
        Ok(())
    }
}

impl Parameterized for Mlp {
    fn tensors(&self) -> Vec<(String, &Matrix)> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| {
                [
                    (format!("layer{i}.weight"), &l.weight),
                    (format!("layer{i}.bias"), &l.bias),
                ]
            })
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn net() -> Mlp {
        Mlp::new(
            3,
            &[
                LayerSpec::new(5, Activation::Relu, 0.2),
                LayerSpec::new(2, Activation::Tanh, 0.0),
            ],
            &mut stream(11, &[]),
        )
    }

    #[test]
    fn infer_matches_forward_without_dropout() {
        let m = net();
        let x = [0.3, -0.1, 0.9];
        let (y, _) = m.forward(&x, None).unwrap();
        assert_eq!(y, m.infer(&x).unwrap());
    }

    #[test]
    fn dropout_forward_is_reproducible() {
        let m = net();
        let x = [0.3, -0.1, 0.9];
        let a = m.forward(&x, Some(&mut stream(5, &[]))).unwrap().0;
        let b = m.forward(&x, Some(&mut stream(5, &[]))).unwrap().0;
        assert_eq!(a, b);
    }

    #[test]
    fn double_backward_is_rejected() {
        let m = net();
        let (_, mut tape) = m.forward(&[0.1, 0.2, 0.3], None).unwrap();
        let mut g = m.zeros_like();
        m.backward(&mut tape, &[1.0, 1.0], &mut g).unwrap();
        assert!(matches!(m.backward(&mut tape, &[1.0, 1.0], &mut g), Err(Error::TapeConsumed)));
    }

    #[test]
    fn zero_cotangent_gives_zero_gradients() {
        let m = net();
        let (_, mut tape) = m.forward(&[0.1, 0.2, 0.3], None).unwrap();
        let mut g = m.zeros_like();
        let dx = m.backward(&mut tape, &[0.0, 0.0], &mut g).unwrap();
        assert!(dx.iter().all(|&v| v == 0.0));
        assert!(g.flatten().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn wrong_input_width_is_a_dimension_error() {
        assert!(matches!(net().infer(&[1.0]), Err(Error::Dimension { .. })));
    }
}
