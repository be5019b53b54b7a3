//! Recurrent cells: the simple cell `z_i = σ(W x_i + U z_{i-1} + b)` and a
//! vanilla LSTM, each with hand-derived backpropagation through time.

use serde::{Deserialize, Serialize};

use super::layers::{sigmoid, Activation};
use super::matrix::Matrix;
use super::params::Parameterized;
use crate::error::{Error, Result};
use crate::rng::Rng;

/// `σ(W x + U z_prev + b)`; the `U` term is omitted when `z_prev` is absent.
pub fn rnn_cell(
    x: &[f64],
    z_prev: Option<&[f64]>,
    w: &Matrix,
    u: &Matrix,
    b: &[f64],
    sigma: Activation,
) -> Result<Vec<f64>> {
    if w.cols() != x.len() || w.rows() != b.len() {
        return Err(Error::dim("rnn_cell", w.shape_str(), format!("x of {}, b of {}", x.len(), b.len())));
    }
    let mut a = b.to_vec();
    w.add_matvec_into(x, &mut a);
    if let Some(z) = z_prev {
        if u.cols() != z.len() || u.rows() != b.len() {
            return Err(Error::dim("rnn_cell", u.shape_str(), format!("z_prev of {}", z.len())));
        }
        u.add_matvec_into(z, &mut a);
    }
    sigma.apply_in_place(&mut a);
    Ok(a)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RnnCell {
    pub w: Matrix,
    pub u: Matrix,
    pub b: Matrix,
    pub activation: Activation,
}

#[derive(Debug)]
struct RnnStep {
    x: Vec<f64>,
    prev: Option<Vec<f64>>,
    out: Vec<f64>,
}

impl RnnCell {
    pub fn new(inputs: usize, hidden: usize, activation: Activation, rng: &mut Rng) -> Self {
        Self {
            w: Matrix::glorot(hidden, inputs, rng),
            u: Matrix::glorot(hidden, hidden, rng),
            b: Matrix::zeros(hidden, 1),
            activation,
        }
    }

    pub fn hidden(&self) -> usize {
        self.w.rows()
    }

    pub fn inputs(&self) -> usize {
        self.w.cols()
    }

    fn step(&self, x: &[f64], prev: Option<&[f64]>) -> Vec<f64> {
        let mut a = self.b.data().to_vec();
        self.w.add_matvec_into(x, &mut a);
        if let Some(z) = prev {
            self.u.add_matvec_into(z, &mut a);
        }
        self.activation.apply_in_place(&mut a);
        a
    }

    /// Returns `(dx, dz_prev)`.
    fn step_backward(&self, rec: &RnnStep, dz: &[f64], grad: &mut RnnCell) -> (Vec<f64>, Vec<f64>) {
        let da = self.activation.backward(&rec.out, dz);
        grad.w.add_outer(&da, &rec.x);
        for (g, d) in grad.b.data_mut().iter_mut().zip(&da) {
            *g += d;
        }
        let mut dx = vec![0.0; self.inputs()];
        self.w.add_transpose_matvec_into(&da, &mut dx);
        let mut dprev = vec![0.0; self.hidden()];
        if let Some(p) = &rec.prev {
            grad.u.add_outer(&da, p);
            self.u.add_transpose_matvec_into(&da, &mut dprev);
        }
        (dx, dprev)
    }
}

impl Parameterized for RnnCell {
    fn tensors(&self) -> Vec<(String, &Matrix)> {
        vec![("W".into(), &self.w), ("U".into(), &self.u), ("b".into(), &self.b)]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        vec![&mut self.w, &mut self.u, &mut self.b]
    }
}

/// Vanilla LSTM parameters with gate rows stacked as `[input; forget; candidate; output]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmCell {
    pub w: Matrix,
    pub u: Matrix,
    pub b: Matrix,
}

#[derive(Debug)]
struct LstmStep {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    i: Vec<f64>,
    f: Vec<f64>,
    g: Vec<f64>,
    o: Vec<f64>,
    tanh_c: Vec<f64>,
}

/// One LSTM step. `w` is `4h x in`, `u` is `4h x h`, `b` has `4h` entries.
pub fn lstm_cell(
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
    params: &LstmCell,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let h = params.hidden();
    if params.w.cols() != x.len() || h_prev.len() != h || c_prev.len() != h {
        return Err(Error::dim(
            "lstm_cell",
            params.w.shape_str(),
            format!("x of {}, h of {}, c of {}", x.len(), h_prev.len(), c_prev.len()),
        ));
    }
    let rec = params.step(x, h_prev, c_prev);
    let hidden = rec.o.iter().zip(&rec.tanh_c).map(|(o, t)| o * t).collect();
    let c = params.cell_state(&rec);
    Ok((hidden, c))
}

impl LstmCell {
    pub fn new(inputs: usize, hidden: usize, rng: &mut Rng) -> Self {
        let mut b = Matrix::zeros(4 * hidden, 1);
        // Forget-gate bias of 1 is the usual starting point.
        for k in hidden..2 * hidden {
            b.data_mut()[k] = 1.0;
        }
        Self {
            w: Matrix::glorot(4 * hidden, inputs, rng),
            u: Matrix::glorot(4 * hidden, hidden, rng),
            b,
        }
    }

    pub fn hidden(&self) -> usize {
        self.u.cols()
    }

    pub fn inputs(&self) -> usize {
        self.w.cols()
    }

    fn step(&self, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> LstmStep {
        let h = self.hidden();
        let mut a = self.b.data().to_vec();
        self.w.add_matvec_into(x, &mut a);
        self.u.add_matvec_into(h_prev, &mut a);
        let i: Vec<f64> = a[..h].iter().map(|&v| sigmoid(v)).collect();
        let f: Vec<f64> = a[h..2 * h].iter().map(|&v| sigmoid(v)).collect();
        let g: Vec<f64> = a[2 * h..3 * h].iter().map(|&v| v.tanh()).collect();
        let o: Vec<f64> = a[3 * h..].iter().map(|&v| sigmoid(v)).collect();
        let tanh_c = (0..h).map(|k| (f[k] * c_prev[k] + i[k] * g[k]).tanh()).collect();
        LstmStep {
            x: x.to_vec(),
            h_prev: h_prev.to_vec(),
            c_prev: c_prev.to_vec(),
            i,
            f,
            g,
            o,
            tanh_c,
        }
    }

    fn cell_state(&self, rec: &LstmStep) -> Vec<f64> {
        (0..self.hidden())
            .map(|k| rec.f[k] * rec.c_prev[k] + rec.i[k] * rec.g[k])
            .collect()
    }

    /// Returns `(dx, dh_prev, dc_prev)`.
    fn step_backward(
        &self,
        rec: &LstmStep,
        dh: &[f64],
        dc_next: &[f64],
        grad: &mut LstmCell,
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let h = self.hidden();
        let mut da = vec![0.0; 4 * h];
        let mut dc_prev = vec![0.0; h];
        for k in 0..h {
            let (i, f, g, o, t) = (rec.i[k], rec.f[k], rec.g[k], rec.o[k], rec.tanh_c[k]);
            let d_o = dh[k] * t;
            let dc = dc_next[k] + dh[k] * o * (1.0 - t * t);
            da[k] = dc * g * i * (1.0 - i);
            da[h + k] = dc * rec.c_prev[k] * f * (1.0 - f);
            da[2 * h + k] = dc * i * (1.0 - g * g);
            da[3 * h + k] = d_o * o * (1.0 - o);
            dc_prev[k] = dc * f;
        }
        grad.w.add_outer(&da, &rec.x);
        grad.u.add_outer(&da, &rec.h_prev);
        for (gb, d) in grad.b.data_mut().iter_mut().zip(&da) {
            *gb += d;
        }
        let mut dx = vec![0.0; self.inputs()];
        self.w.add_transpose_matvec_into(&da, &mut dx);
        let mut dh_prev = vec![0.0; h];
        self.u.add_transpose_matvec_into(&da, &mut dh_prev);
        (dx, dh_prev, dc_prev)
    }
}

impl Parameterized for LstmCell {
    fn tensors(&self) -> Vec<(String, &Matrix)> {
        vec![("W".into(), &self.w), ("U".into(), &self.u), ("b".into(), &self.b)]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        vec![&mut self.w, &mut self.u, &mut self.b]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    Simple,
    Lstm,
}

/// A recurrent cell unrolled over a whole sequence.
#[derive(Debug, Clone, PartialEq)]
pub enum Recurrent {
    Simple(RnnCell),
    Lstm(LstmCell),
}

#[derive(Debug)]
enum SeqSteps {
    Simple(Vec<RnnStep>),
    Lstm(Vec<LstmStep>),
}

/// Forward record of a full sequence pass.
#[derive(Debug)]
pub struct SequenceTape {
    steps: Option<SeqSteps>,
}

impl Recurrent {
    pub fn new(kind: CellKind, inputs: usize, hidden: usize, rng: &mut Rng) -> Self {
        match kind {
            CellKind::Simple => Recurrent::Simple(RnnCell::new(inputs, hidden, Activation::Tanh, rng)),
            CellKind::Lstm => Recurrent::Lstm(LstmCell::new(inputs, hidden, rng)),
        }
    }

    pub fn kind(&self) -> CellKind {
        match self {
            Recurrent::Simple(_) => CellKind::Simple,
            Recurrent::Lstm(_) => CellKind::Lstm,
        }
    }

    pub fn hidden(&self) -> usize {
        match self {
            Recurrent::Simple(c) => c.hidden(),
            Recurrent::Lstm(c) => c.hidden(),
        }
    }

    pub fn inputs(&self) -> usize {
        match self {
            Recurrent::Simple(c) => c.inputs(),
            Recurrent::Lstm(c) => c.inputs(),
        }
    }

    fn check(&self, inputs: &[Vec<f64>]) -> Result<()> {
        if inputs.is_empty() {
            return Err(Error::Usage("recurrent pass over an empty sequence".into()));
        }
        if let Some(x) = inputs.iter().find(|x| x.len() != self.inputs()) {
            return Err(Error::dim(
                "Recurrent::run",
                format!("cell input width {}", self.inputs()),
                format!("event of {}", x.len()),
            ));
        }
        Ok(())
    }

    /// Final hidden state without recording.
    pub fn run(&self, inputs: &[Vec<f64>]) -> Result<Vec<f64>> {
        self.check(inputs)?;
        match self {
            Recurrent::Simple(cell) => {
                let mut z = cell.step(&inputs[0], None);
                for x in &inputs[1..] {
                    z = cell.step(x, Some(&z));
                }
                Ok(z)
            }
            Recurrent::Lstm(cell) => {
                let n = cell.hidden();
                let (mut h, mut c) = (vec![0.0; n], vec![0.0; n]);
                for x in inputs {
                    let rec = cell.step(x, &h, &c);
                    c = cell.cell_state(&rec);
                    h = rec.o.iter().zip(&rec.tanh_c).map(|(o, t)| o * t).collect();
                }
                Ok(h)
            }
        }
    }

    pub fn forward(&self, inputs: &[Vec<f64>]) -> Result<(Vec<f64>, SequenceTape)> {
        self.check(inputs)?;
        match self {
            Recurrent::Simple(cell) => {
                let mut steps: Vec<RnnStep> = Vec::with_capacity(inputs.len());
                for x in inputs {
                    let prev = steps.last().map(|s| s.out.clone());
                    let out = cell.step(x, prev.as_deref());
                    steps.push(RnnStep {
                        x: x.clone(),
                        prev,
                        out,
                    });
                }
                let z = steps.last().expect("non-empty").out.clone();
                Ok((z, SequenceTape {
                    steps: Some(SeqSteps::Simple(steps)),
                }))
            }
            Recurrent::Lstm(cell) => {
                let n = cell.hidden();
                let (mut h, mut c) = (vec![0.0; n], vec![0.0; n]);
                let mut steps = Vec::with_capacity(inputs.len());
                for x in inputs {
                    let rec = cell.step(x, &h, &c);
                    c = cell.cell_state(&rec);
                    h = rec.o.iter().zip(&rec.tanh_c).map(|(o, t)| o * t).collect();
                    steps.push(rec);
                }
                Ok((h, SequenceTape {
                    steps: Some(SeqSteps::Lstm(steps)),
                }))
            }
        }
    }

    /// Backpropagation through time from `∂L/∂h_final`; returns per-step input gradients.
    pub fn backward(&self, tape: &mut SequenceTape, dh_final: &[f64], grad: &mut Recurrent) -> Result<Vec<Vec<f64>>> {
        let steps = tape.steps.take().ok_or(Error::TapeConsumed)?;
        if dh_final.len() != self.hidden() {
            return Err(Error::dim("Recurrent::backward", self.hidden(), dh_final.len()));
        }
        match (self, steps, grad) {
            (Recurrent::Simple(cell), SeqSteps::Simple(steps), Recurrent::Simple(g)) => {
                let mut dxs = vec![Vec::new(); steps.len()];
                let mut dz = dh_final.to_vec();
                for (t, rec) in steps.iter().enumerate().rev() {
                    let (dx, dprev) = cell.step_backward(rec, &dz, g);
                    dxs[t] = dx;
                    dz = dprev;
                }
                Ok(dxs)
            }
            (Recurrent::Lstm(cell), SeqSteps::Lstm(steps), Recurrent::Lstm(g)) => {
                let mut dxs = vec![Vec::new(); steps.len()];
                let mut dh = dh_final.to_vec();
                let mut dc = vec![0.0; cell.hidden()];
                for (t, rec) in steps.iter().enumerate().rev() {
                    let (dx, dh_prev, dc_prev) = cell.step_backward(rec, &dh, &dc, g);
                    dxs[t] = dx;
                    dh = dh_prev;
                    dc = dc_prev;
                }
                Ok(dxs)
            }
            _ => Err(Error::Usage("gradient buffer cell kind differs from the model".into())),
        }
    }
}

impl Parameterized for Recurrent {
    fn tensors(&self) -> Vec<(String, &Matrix)> {
        match self {
            Recurrent::Simple(c) => c.tensors(),
            Recurrent::Lstm(c) => c.tensors(),
        }
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        match self {
            Recurrent::Simple(c) => c.tensors_mut(),
            Recurrent::Lstm(c) => c.tensors_mut(),
        }
    }
}
