//! Randomized finite-difference checks for every differentiable operation.
//! Each check draws one configuration, compares the analytic gradient of a
//! scalar probe against central differences, and returns the worst relative
//! error.

use ldpfraud::encoder::{contrastive_loss, Encoder, EncoderConfig};
use ldpfraud::federation::{bce_loss, Scorer, ScorerConfig};
use ldpfraud::kernel::{
    bce, finite_difference_grad, max_relative_error, mse, softmax_cross_entropy, Activation, CellKind, Dense,
    LayerSpec, Mlp, Parameterized, Recurrent,
};
use ldpfraud::ldp::{clip_l1, clip_l1_backward};
use ldpfraud::rng::{stream, Rng};
use rand::Rng as _;

pub const STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;
pub const TRIALS: usize = 100;
/// Gradients smaller than this in magnitude are compared absolutely. At
/// `h = 1e-5` the central difference carries round-off near `2e-11 |L|`, so
/// entries below about `1e-6` cannot be resolved to the relative tolerance.
pub const FLOOR: f64 = 1e-6;

pub struct OpResult {
    pub op: &'static str,
    pub trials: usize,
    pub worst: f64,
}

impl OpResult {
    pub fn passed(&self) -> bool {
        self.trials >= TRIALS && self.worst <= TOLERANCE
    }
}

type Check = fn(&mut Rng) -> f64;

pub const OPS: [(&str, Check); 12] = [
    ("dense", dense),
    ("relu", relu),
    ("tanh", tanh),
    ("sigmoid", sigmoid),
    ("mse", mse_loss),
    ("bce", bce_scalar),
    ("softmax_ce", softmax_ce),
    ("rnn_cell", rnn),
    ("lstm_cell", lstm),
    ("publication_head", publication_head),
    ("contrastive", contrastive),
    ("score_pipeline", score_pipeline),
];

pub fn run(op: &'static str, check: Check, seed: u64) -> OpResult {
    let tags: Vec<u64> = op.bytes().map(u64::from).collect();
    let mut rng = stream(seed, &tags);
    let worst = (0..TRIALS).map(|_| check(&mut rng)).fold(0.0, f64::max);
    OpResult { op, trials: TRIALS, worst }
}

pub fn run_all(seed: u64) -> Vec<OpResult> {
    OPS.iter().map(|&(op, check)| run(op, check, seed)).collect()
}

fn uniform(rng: &mut Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn probe(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn compare(analytic: &[f64], f: impl FnMut(&[f64]) -> f64, at: &[f64]) -> f64 {
    let numeric = finite_difference_grad(f, at, STEP);
    max_relative_error(analytic, &numeric, FLOOR)
}

fn randomize<P: Parameterized>(p: &mut P, rng: &mut Rng) {
    let flat = uniform(rng, p.num_params());
    p.load_flat(&flat).unwrap();
}

fn with_params<P: Parameterized>(p: &P, flat: &[f64]) -> P {
    let mut q = p.clone();
    q.load_flat(flat).unwrap();
    q
}

fn dense(rng: &mut Rng) -> f64 {
    let (n_in, n_out) = (rng.random_range(1..7), rng.random_range(1..7));
    let mut layer = Dense::new(n_in, n_out, rng);
    randomize(&mut layer, rng);
    let x = uniform(rng, n_in);
    let dy = uniform(rng, n_out);
    let (_, tape) = layer.forward(&x).unwrap();
    let mut g = layer.zeros_like();
    let dx = layer.backward(tape, &dy, &mut g);
    let params = layer.flatten();
    let e_w = compare(&g.flatten(), |p| probe(&with_params(&layer, p).apply(&x).unwrap(), &dy), &params);
    let e_x = compare(&dx, |v| probe(&layer.apply(v).unwrap(), &dy), &x);
    e_w.max(e_x)
}

fn elementwise(rng: &mut Rng, act: Activation) -> f64 {
    let n = rng.random_range(1..10);
    let x = uniform(rng, n);
    let dy = uniform(rng, n);
    let y: Vec<f64> = x.iter().map(|&v| act.eval(v)).collect();
    let dx = act.backward(&y, &dy);
    compare(&dx, |v| v.iter().zip(&dy).map(|(&a, d)| act.eval(a) * d).sum(), &x)
}

fn relu(rng: &mut Rng) -> f64 {
    elementwise(rng, Activation::Relu)
}

fn tanh(rng: &mut Rng) -> f64 {
    elementwise(rng, Activation::Tanh)
}

fn sigmoid(rng: &mut Rng) -> f64 {
    elementwise(rng, Activation::Sigmoid)
}

fn mse_loss(rng: &mut Rng) -> f64 {
    let n = rng.random_range(1..10);
    let (pred, target) = (uniform(rng, n), uniform(rng, n));
    let (_, g) = mse(&pred, &target).unwrap();
    compare(&g, |p| mse(p, &target).unwrap().0, &pred)
}

fn bce_scalar(rng: &mut Rng) -> f64 {
    let p = rng.random_range(0.02..0.98);
    let y = if rng.random_bool(0.5) { 1.0 } else { 0.0 };
    let (_, g) = bce(p, y);
    compare(&[g], |v| bce(v[0], y).0, &[p])
}

fn softmax_ce(rng: &mut Rng) -> f64 {
    let n = rng.random_range(2..8);
    let logits = uniform(rng, n);
    let class = rng.random_range(0..n);
    let (_, g) = softmax_cross_entropy(&logits, class).unwrap();
    compare(&g, |l| softmax_cross_entropy(l, class).unwrap().0, &logits)
}

fn recurrent(rng: &mut Rng, kind: CellKind) -> f64 {
    let (n_in, hidden, len) = (rng.random_range(1..5), rng.random_range(1..6), rng.random_range(1..5));
    let mut cell = Recurrent::new(kind, n_in, hidden, rng);
    randomize(&mut cell, rng);
    let xs: Vec<Vec<f64>> = (0..len).map(|_| uniform(rng, n_in)).collect();
    let dh = uniform(rng, hidden);
    let (_, mut tape) = cell.forward(&xs).unwrap();
    let mut g = cell.zeros_like();
    let dxs = cell.backward(&mut tape, &dh, &mut g).unwrap();
    let e_w = compare(&g.flatten(), |p| probe(&with_params(&cell, p).run(&xs).unwrap(), &dh), &cell.flatten());
    let flat_x: Vec<f64> = xs.concat();
    let e_x = compare(
        &dxs.concat(),
        |v| {
            let seq: Vec<Vec<f64>> = v.chunks(n_in).map(<[f64]>::to_vec).collect();
            probe(&cell.run(&seq).unwrap(), &dh)
        },
        &flat_x,
    );
    e_w.max(e_x)
}

fn rnn(rng: &mut Rng) -> f64 {
    recurrent(rng, CellKind::Simple)
}

fn lstm(rng: &mut Rng) -> f64 {
    recurrent(rng, CellKind::Lstm)
}

/// Two relu layers with dropout, a tanh layer and the ℓ1 clip. The dropout
/// mask is held fixed by replaying a cloned stream.
fn publication_head(rng: &mut Rng) -> f64 {
    let hidden = rng.random_range(1..6);
    let dim = rng.random_range(1..6);
    let specs = [
        LayerSpec::new(rng.random_range(1..8), Activation::Relu, 0.2),
        LayerSpec::new(rng.random_range(1..8), Activation::Relu, 0.2),
        LayerSpec::new(dim, Activation::Tanh, 0.0),
    ];
    let radius = rng.random_range(0.1..2.0);
    let mut head = Mlp::new(hidden, &specs, rng);
    randomize(&mut head, rng);
    let h = uniform(rng, hidden);
    let dz = uniform(rng, dim);
    let mask: Rng = stream(rng.random(), &[]);
    let eval = |m: &Mlp, x: &[f64]| {
        let (y, _) = m.forward(x, Some(&mut mask.clone())).unwrap();
        probe(&clip_l1(&y, radius), &dz)
    };
    let (y, mut tape) = head.forward(&h, Some(&mut mask.clone())).unwrap();
    let dy = clip_l1_backward(&y, &dz, radius);
    let mut g = head.zeros_like();
    let dh = head.backward(&mut tape, &dy, &mut g).unwrap();
    let e_w = compare(&g.flatten(), |p| eval(&with_params(&head, p), &h), &head.flatten());
    let e_h = compare(&dh, |v| eval(&head, v), &h);
    e_w.max(e_h)
}

fn contrastive(rng: &mut Rng) -> f64 {
    let m = rng.random_range(1..6);
    let k = rng.random_range(1..6);
    let tau = rng.random_range(0.05..1.0);
    let include = rng.random_bool(0.5);
    let mut all = uniform(rng, m * (k + 2));
    all.iter_mut().for_each(|v| *v *= 0.5);
    let loss = |v: &[f64]| {
        let negs: Vec<Vec<f64>> = v[2 * m..].chunks(m).map(<[f64]>::to_vec).collect();
        contrastive_loss(&v[..m], &v[m..2 * m], &negs, tau, include).unwrap()
    };
    let g = loss(&all);
    let analytic: Vec<f64> = g
        .d_anchor
        .iter()
        .chain(&g.d_positive)
        .chain(g.d_negatives.iter().flatten())
        .copied()
        .collect();
    compare(&analytic, |v| loss(v).loss, &all)
}

/// Originating and beneficiary encoders feeding the scorer under BCE, checked
/// with respect to every parameter of all three networks.
fn score_pipeline(rng: &mut Rng) -> f64 {
    let cell = if rng.random_bool(0.5) { CellKind::Simple } else { CellKind::Lstm };
    let width = rng.random_range(2..5);
    let cfg = EncoderConfig {
        cell,
        hidden: rng.random_range(2..5),
        head: [rng.random_range(2..6), rng.random_range(2..6)],
        dim: rng.random_range(1..4),
        dropout: 0.0,
        clip_radius: 0.5,
    };
    let scorer_cfg = ScorerConfig {
        hidden: vec![rng.random_range(2..6), rng.random_range(2..6)],
        dropout: 0.0,
    };
    let x_width = rng.random_range(1..4);
    let mut enc_o = Encoder::new(&cfg, width, rng);
    let mut enc_b = Encoder::new(&cfg, width, rng);
    let mut scorer = Scorer::new(&scorer_cfg, cfg.dim, x_width, rng);
    randomize(&mut enc_o, rng);
    randomize(&mut enc_b, rng);
    randomize(&mut scorer, rng);
    let hist_o: Vec<Vec<f64>> = (0..rng.random_range(1..4)).map(|_| uniform(rng, width)).collect();
    let hist_b: Vec<Vec<f64>> = (0..rng.random_range(1..4)).map(|_| uniform(rng, width)).collect();
    let x = uniform(rng, x_width);
    let label = rng.random_range(0..2u8);

    let (z_o, mut t_o) = enc_o.forward(&hist_o, None).unwrap();
    let (z_b, mut t_b) = enc_b.forward(&hist_b, None).unwrap();
    let (p, mut t_s) = scorer.forward(&z_o, &z_b, &x, None).unwrap();
    let (_, dp) = bce_loss(p, label);
    let mut g_s = scorer.zeros_like();
    let dz = scorer.backward(&mut t_s, dp, &mut g_s).unwrap();
    let mut g_o = enc_o.zeros_like();
    let mut g_b = enc_b.zeros_like();
    enc_o.backward(&mut t_o, &dz.z_o, &mut g_o).unwrap();
    enc_b.backward(&mut t_b, &dz.z_b, &mut g_b).unwrap();

    let (n_o, n_b) = (enc_o.num_params(), enc_b.num_params());
    let params = [enc_o.flatten(), enc_b.flatten(), scorer.flatten()].concat();
    let analytic = [g_o.flatten(), g_b.flatten(), g_s.flatten()].concat();
    compare(
        &analytic,
        |v| {
            let eo = with_params(&enc_o, &v[..n_o]);
            let eb = with_params(&enc_b, &v[n_o..n_o + n_b]);
            let s = with_params(&scorer, &v[n_o + n_b..]);
            let p = s
                .score(&eo.embed_sequence(&hist_o).unwrap(), &eb.embed_sequence(&hist_b).unwrap(), &x)
                .unwrap();
            bce_loss(p, label).0
        },
        &params,
    )
}
