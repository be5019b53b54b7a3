//! Per-bank sequence encoders: a recurrent cell over account events followed
//! by a publication head (two relu layers with dropout, then tanh) and an ℓ1
//! clip. The backward encoder shares the architecture, has its own weights
//! and reads events newest first.

mod contrastive;
mod pretrain;

use serde::{Deserialize, Serialize};

pub use contrastive::{contrastive_loss, ContrastiveGrad};
pub use pretrain::{pretrain_bank, retrieval_accuracy, retrieval_accuracy_at, EncoderPair, PretrainConfig, PretrainReport};

use crate::error::{Error, Result};
use crate::kernel::{Activation, CellKind, LayerSpec, Matrix, Mlp, MlpTape, ParamBundle, Parameterized, Recurrent, SequenceTape};
use crate::ldp::{clip_l1, clip_l1_backward};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub cell: CellKind,
    pub hidden: usize,
    pub head: [usize; 2],
    /// Embedding dimension m.
    pub dim: usize,
    pub dropout: f64,
    pub clip_radius: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            cell: CellKind::Simple,
            hidden: 32,
            head: [64, 32],
            dim: 8,
            dropout: 0.1,
            clip_radius: 0.5,
        }
    }
}

impl EncoderConfig {
    pub fn head_specs(&self) -> [LayerSpec; 3] {
        [
            LayerSpec::new(self.head[0], Activation::Relu, self.dropout),
            LayerSpec::new(self.head[1], Activation::Relu, self.dropout),
            LayerSpec::new(self.dim, Activation::Tanh, 0.0),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    pub cell: Recurrent,
    pub head: Mlp,
    pub clip_radius: f64,
}

/// Forward record of one embedding; consumed by one backward pass.
#[derive(Debug)]
pub struct EncoderTape {
    seq: SequenceTape,
    head: MlpTape,
    pre_clip: Vec<f64>,
}

/// Input for an empty sequence: all zeros except the trailing no-history marker.
pub fn reserved_event(width: usize) -> Vec<f64> {
    let mut v = vec![0.0; width];
    if let Some(last) = v.last_mut() {
        *last = 1.0;
    }
    v
}

impl Encoder {
    pub fn new(config: &EncoderConfig, inputs: usize, rng: &mut Rng) -> Self {
        let cell = Recurrent::new(config.cell, inputs, config.hidden, rng);
        let head = Mlp::new(config.hidden, &config.head_specs(), rng);
        Self {
            cell,
            head,
            clip_radius: config.clip_radius,
        }
    }

    pub fn inputs(&self) -> usize {
        self.cell.inputs()
    }

    pub fn dim(&self) -> usize {
        self.head.outputs()
    }

    fn resolve<'a>(&self, events: &'a [Vec<f64>]) -> std::borrow::Cow<'a, [Vec<f64>]> {
        if events.is_empty() {
            std::borrow::Cow::Owned(vec![reserved_event(self.inputs())])
        } else {
            std::borrow::Cow::Borrowed(events)
        }
    }

    /// `ψ(X_{≤t})` in evaluation mode. Events are oldest first.
    pub fn embed_sequence(&self, events: &[Vec<f64>]) -> Result<Vec<f64>> {
        let h = self.cell.run(&self.resolve(events))?;
        let y = self.head.infer(&h)?;
        Ok(clip_l1(&y, self.clip_radius))
    }

    /// Backward-direction embedding of a future window given oldest first.
    pub fn embed_reversed(&self, events: &[Vec<f64>]) -> Result<Vec<f64>> {
        let rev: Vec<Vec<f64>> = events.iter().rev().cloned().collect();
        self.embed_sequence(&rev)
    }

    /// Recording pass; dropout in the head is active when `rng` is given.
    pub fn forward(&self, events: &[Vec<f64>], rng: Option<&mut Rng>) -> Result<(Vec<f64>, EncoderTape)> {
        let (h, seq) = self.cell.forward(&self.resolve(events))?;
        let (y, head) = self.head.forward(&h, rng)?;
        let z = clip_l1(&y, self.clip_radius);
        Ok((z, EncoderTape {
            seq,
            head,
            pre_clip: y,
        }))
    }

    pub fn forward_reversed(&self, events: &[Vec<f64>], rng: Option<&mut Rng>) -> Result<(Vec<f64>, EncoderTape)> {
        let rev: Vec<Vec<f64>> = events.iter().rev().cloned().collect();
        self.forward(&rev, rng)
    }

    /// Accumulates `(∂L/∂z)·(∂z/∂ω)` into `grad`.
    pub fn backward(&self, tape: &mut EncoderTape, dz: &[f64], grad: &mut Encoder) -> Result<()> {
        if dz.len() != self.dim() {
            return Err(Error::dim("Encoder::backward", self.dim(), dz.len()));
        }
        let dy = clip_l1_backward(&tape.pre_clip, dz, self.clip_radius);
        let dh = self.head.backward(&mut tape.head, &dy, &mut grad.head)?;
        self.cell.backward(&mut tape.seq, &dh, &mut grad.cell)?;
        Ok(())
    }

    pub fn to_tagged_bundle(&self, bank: u32) -> ParamBundle {
        self.to_bundle()
            .with_tag("bank", bank)
            .with_tag("m", self.dim())
            .with_tag("cell", format!("{:?}", self.cell.kind()).to_lowercase())
    }
}

impl Parameterized for Encoder {
    fn tensors(&self) -> Vec<(String, &Matrix)> {
        let mut t: Vec<(String, &Matrix)> = self.cell.tensors().into_iter().map(|(n, m)| (format!("cell.{n}"), m)).collect();
        t.extend(self.head.tensors().into_iter().map(|(n, m)| (format!("head.{n}"), m)));
        t
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut t = self.cell.tensors_mut();
        t.extend(self.head.tensors_mut());
        t
    }
}
