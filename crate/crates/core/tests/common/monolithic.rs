//! Single-process reference for one training step: every network lives in
//! one place, gradients come from one backward pass per sample, and the
//! update rules are written out directly as plain SGD.

use ldpfraud::data::Corpus;
use ldpfraud::encoder::Encoder;
use ldpfraud::federation::{PreProcessor, Scorer};
use ldpfraud::kernel::Parameterized;

/// Derivative of `-(y ln p + (1-y) ln(1-p))` with respect to `p`.
fn bce_grad(p: f64, y: f64) -> f64 {
    -y / p + (1.0 - y) / (1.0 - p)
}

fn sgd<P: Parameterized>(model: &mut P, grad: &P, lr: f64, divisor: f64) {
    let updated: Vec<f64> = model
        .flatten()
        .iter()
        .zip(grad.flatten())
        .map(|(w, g)| w - lr * g / divisor)
        .collect();
    model.load_flat(&updated).unwrap();
}

/// End-to-end step: scorer over both parties' embeddings, with each
/// encoder's gradient summed over every role it played.
pub fn end_to_end_step(corpus: &Corpus, encoders: &mut [Encoder], scorer: &mut Scorer, batch: &[usize], lr: f64, gamma: f64) {
    let mut g_scorer = scorer.zeros_like();
    let mut g_enc: Vec<Encoder> = encoders.iter().map(|e| e.zeros_like()).collect();
    let mut roles = vec![0usize; encoders.len()];
    for &i in batch {
        let tx = &corpus.transactions()[i];
        let (bo, bb) = (tx.ordering_bank as usize, tx.beneficiary_bank as usize);
        let ao = corpus.account(tx.ordering_account).unwrap();
        let ab = corpus.account(tx.beneficiary_account).unwrap();
        let (zo, mut to) = encoders[bo].forward(&corpus.history_events(ao, tx.timestamp), None).unwrap();
        let (zb, mut tb) = encoders[bb].forward(&corpus.history_events(ab, tx.timestamp), None).unwrap();
        let (p, mut tape) = scorer.forward(&zo, &zb, &corpus.transaction_features(i), None).unwrap();
        let d = scorer.backward(&mut tape, bce_grad(p, tx.label as f64), &mut g_scorer).unwrap();
        encoders[bo].backward(&mut to, &d.z_o, &mut g_enc[bo]).unwrap();
        encoders[bb].backward(&mut tb, &d.z_b, &mut g_enc[bb]).unwrap();
        roles[bo] += 1;
        roles[bb] += 1;
    }
    sgd(scorer, &g_scorer, lr, batch.len() as f64);
    for (b, enc) in encoders.iter_mut().enumerate() {
        if roles[b] > 0 {
            sgd(enc, &g_enc[b], lr, roles[b] as f64 + gamma);
        }
    }
}

/// Transfer-learning step for `acting`: frozen encoders, the beneficiary
/// embedding mapped through the pre-processor of its bank.
pub fn transfer_step(
    corpus: &Corpus,
    encoders: &[Encoder],
    scorer: &mut Scorer,
    pres: &mut [PreProcessor],
    batch: &[usize],
    lr: f64,
    gamma: f64,
) {
    let mut g_scorer = scorer.zeros_like();
    let mut g_pre: Vec<PreProcessor> = pres.iter().map(|p| p.zeros_like()).collect();
    let mut uses = vec![0usize; pres.len()];
    for &i in batch {
        let tx = &corpus.transactions()[i];
        let (bo, bb) = (tx.ordering_bank as usize, tx.beneficiary_bank as usize);
        let ao = corpus.account(tx.ordering_account).unwrap();
        let ab = corpus.account(tx.beneficiary_account).unwrap();
        let zo = encoders[bo].embed_sequence(&corpus.history_events(ao, tx.timestamp)).unwrap();
        let zb = encoders[bb].embed_sequence(&corpus.history_events(ab, tx.timestamp)).unwrap();
        let (r, mut pre_tape) = pres[bb].mlp.forward(&zb, None).unwrap();
        let (p, mut tape) = scorer.forward(&zo, &r, &corpus.transaction_features(i), None).unwrap();
        let d = scorer.backward(&mut tape, bce_grad(p, tx.label as f64), &mut g_scorer).unwrap();
        pres[bb].mlp.backward(&mut pre_tape, &d.z_b, &mut g_pre[bb].mlp).unwrap();
        uses[bb] += 1;
    }
    sgd(scorer, &g_scorer, lr, batch.len() as f64);
    for (b, pre) in pres.iter_mut().enumerate() {
        if uses[b] > 0 {
            sgd(pre, &g_pre[b], lr, uses[b] as f64 + gamma);
        }
    }
}

/// Noise-free, dropout-free configuration with plain SGD and micro-batches of 8.
pub fn exact_config(protocol: ldpfraud::federation::Protocol) -> ldpfraud::federation::TrainConfig {
    use ldpfraud::federation::{ScorerConfig, TrainConfig};
    TrainConfig {
        protocol,
        epsilon: vec![f64::INFINITY],
        batch_size: 64,
        micro_batch: 8,
        lr: 0.05,
        optimizer: ldpfraud::kernel::OptimizerKind::Sgd,
        dropout: false,
        scorer: ScorerConfig {
            hidden: vec![12, 8],
            dropout: 0.0,
        },
        preprocessor_hidden: 6,
        ..TrainConfig::default()
    }
}

/// Largest relative parameter difference between one orchestrated step over
/// 64 samples from three banks and [`end_to_end_step`].
pub fn orchestrated_deviation(cell: ldpfraud::kernel::CellKind, seed: u64) -> f64 {
    use ldpfraud::federation::{build_orchestrated, Protocol, Trace};
    let c = super::corpus(3, seed);
    let cfg = exact_config(Protocol::Orchestrated);
    let mut fed = build_orchestrated(&c, super::encoders(&c, cell, seed), &cfg).unwrap();
    let mut encs: Vec<_> = fed.banks.iter().map(|b| b.encoder.clone()).collect();
    let mut scorer = fed.orchestrator.scorer.clone();
    let batch: Vec<usize> = (100..164).collect();
    fed.step(&c, &batch, 0, &cfg.step_settings(), &mut Trace::disabled()).unwrap();
    end_to_end_step(&c, &mut encs, &mut scorer, &batch, cfg.lr, cfg.gamma);
    fed.banks
        .iter()
        .zip(&encs)
        .map(|(bank, enc)| super::max_rel_diff(&bank.encoder.flatten(), &enc.flatten()))
        .fold(super::max_rel_diff(&fed.orchestrator.scorer.flatten(), &scorer.flatten()), f64::max)
}

/// Same comparison for one peer-to-peer step against [`transfer_step`].
pub fn p2p_deviation(cell: ldpfraud::kernel::CellKind, seed: u64) -> f64 {
    use ldpfraud::federation::{build_p2p, Protocol, Trace};
    let c = super::corpus(3, seed);
    let cfg = exact_config(Protocol::P2p);
    let encs = super::encoders(&c, cell, seed);
    let mut p2p = build_p2p(&c, encs.clone(), &cfg).unwrap();
    let mut scorer = p2p.scorer.clone();
    let mut pres: Vec<_> = (0..3).map(|b| p2p.preprocessor(b).unwrap().clone()).collect();
    let batch: Vec<usize> = p2p.eligible(&c, c.train_range()).into_iter().take(64).collect();
    assert_eq!(batch.len(), 64);
    p2p.step(&c, &batch, 0, &cfg.step_settings(), &mut Trace::disabled()).unwrap();
    transfer_step(&c, &encs, &mut scorer, &mut pres, &batch, cfg.lr, cfg.gamma);
    (0..3u32)
        .map(|b| super::max_rel_diff(&p2p.preprocessor(b).unwrap().flatten(), &pres[b as usize].flatten()))
        .fold(super::max_rel_diff(&p2p.scorer.flatten(), &scorer.flatten()), f64::max)
}
