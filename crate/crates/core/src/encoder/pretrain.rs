use rand::seq::{index, SliceRandom};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{contrastive_loss, Encoder, EncoderConfig};
use crate::data::{Account, BankId, Corpus};
use crate::error::{Error, Result};
use crate::kernel::{dot, Optimizer, OptimizerKind, Parameterized};
use crate::rng::{stream, tags, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainConfig {
    /// Negatives per anchor.
    pub k: usize,
    pub tau: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub include_positive: bool,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            k: 8,
            tau: 0.1,
            epochs: 10,
            batch_size: 1024,
            lr: 0.001,
            include_positive: false,
            seed: 7,
        }
    }
}

/// Forward encoder ψ and backward encoder φ of one bank.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderPair {
    pub psi: Encoder,
    pub phi: Encoder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainReport {
    pub bank: BankId,
    pub accounts: usize,
    /// Mean contrastive loss per epoch.
    pub epoch_losses: Vec<f64>,
}

/// Training-period stream length of each of the bank's accounts.
fn eligible_accounts<'a>(corpus: &'a Corpus, bank: BankId) -> Vec<(&'a Account, usize)> {
    let txs = corpus.transactions();
    let end = corpus.train_end();
    corpus
        .dataset
        .accounts
        .iter()
        .filter(|a| a.bank == bank)
        .filter_map(|a| {
            let s = corpus.index.stream(a.id);
            let n = s.partition_point(|&i| txs[i as usize].timestamp <= end);
            (n >= 2).then_some((a, n))
        })
        .collect()
}

/// Contrastive dual-encoder pretraining on one bank's training-period streams.
pub fn pretrain_bank(
    corpus: &Corpus,
    bank: BankId,
    encoder: &EncoderConfig,
    config: &PretrainConfig,
) -> Result<(EncoderPair, PretrainReport)> {
    if config.k == 0 {
        return Err(Error::Config("at least one negative is required".into()));
    }
    let accounts = eligible_accounts(corpus, bank);
    if accounts.len() < config.k + 1 {
        return Err(Error::Config(format!(
            "bank {bank} has {} accounts with two or more training events; {} are needed for {} negatives",
            accounts.len(),
            config.k + 1,
            config.k
        )));
    }
    let batch = config.batch_size.min(accounts.len());
    if batch < config.k + 1 {
        return Err(Error::Config(format!("batch size {batch} cannot supply {} negatives", config.k)));
    }

    let width = corpus.event_width();
    let mut init = stream(config.seed, &[tags::INIT, tags::PRETRAIN, bank as u64]);
    let mut pair = EncoderPair {
        psi: Encoder::new(encoder, width, &mut init),
        phi: Encoder::new(encoder, width, &mut init),
    };
    let mut opt_psi = Optimizer::new(OptimizerKind::Adam, pair.psi.num_params());
    let mut opt_phi = Optimizer::new(OptimizerKind::Adam, pair.phi.num_params());
    let mut rng = stream(config.seed, &[tags::PRETRAIN, bank as u64]);
    let max_len = corpus.index.max_len();

    let mut order: Vec<usize> = (0..accounts.len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let (mut total, mut batches) = (0.0, 0usize);
        for chunk in order.chunks(batch) {
            if chunk.len() < config.k + 1 {
                continue;
            }
            let windows: Vec<_> = chunk
                .iter()
                .map(|&i| {
                    let (acc, n) = accounts[i];
                    let split = rng.random_range(1..n);
                    let past = split.saturating_sub(max_len)..split;
                    let future = split..(split + max_len).min(n);
                    (acc, past, future)
                })
                .collect();
            total += contrastive_step(corpus, &mut pair, &windows, config, &mut rng, &mut opt_psi, &mut opt_phi)?;
            batches += 1;
        }
        epoch_losses.push(total / batches.max(1) as f64);
    }
    Ok((pair, PretrainReport {
        bank,
        accounts: accounts.len(),
        epoch_losses,
    }))
}

type Window<'a> = (&'a Account, std::ops::Range<usize>, std::ops::Range<usize>);

fn contrastive_step(
    corpus: &Corpus,
    pair: &mut EncoderPair,
    windows: &[Window<'_>],
    config: &PretrainConfig,
    rng: &mut Rng,
    opt_psi: &mut Optimizer,
    opt_phi: &mut Optimizer,
) -> Result<f64> {
    let n = windows.len();
    let mut anchors = Vec::with_capacity(n);
    let mut futures = Vec::with_capacity(n);
    for (acc, past, future) in windows {
        let p = corpus.events_or_marker(acc, past.clone());
        let f = corpus.events_or_marker(acc, future.clone());
        anchors.push(pair.psi.forward(&p, Some(rng))?);
        futures.push(pair.phi.forward_reversed(&f, Some(rng))?);
    }

    let m = pair.psi.dim();
    let mut d_anchor = vec![vec![0.0; m]; n];
    let mut d_future = vec![vec![0.0; m]; n];
    let mut loss = 0.0;
    let scale = 1.0 / n as f64;
    for i in 0..n {
        let picks: Vec<usize> = index::sample(rng, n - 1, config.k)
            .into_iter()
            .map(|j| if j >= i { j + 1 } else { j })
            .collect();
        let negatives: Vec<Vec<f64>> = picks.iter().map(|&j| futures[j].0.clone()).collect();
        let g = contrastive_loss(&anchors[i].0, &futures[i].0, &negatives, config.tau, config.include_positive)?;
        loss += g.loss * scale;
        d_anchor[i].iter_mut().zip(&g.d_anchor).for_each(|(a, b)| *a += b * scale);
        d_future[i].iter_mut().zip(&g.d_positive).for_each(|(a, b)| *a += b * scale);
        for (&j, dn) in picks.iter().zip(&g.d_negatives) {
            d_future[j].iter_mut().zip(dn).for_each(|(a, b)| *a += b * scale);
        }
    }

    let mut g_psi = pair.psi.zeros_like();
    let mut g_phi = pair.phi.zeros_like();
    for ((_, tape), d) in anchors.iter_mut().zip(&d_anchor) {
        pair.psi.backward(tape, d, &mut g_psi)?;
    }
    for ((_, tape), d) in futures.iter_mut().zip(&d_future) {
        pair.phi.backward(tape, d, &mut g_phi)?;
    }
    opt_psi.step(&mut pair.psi, &g_psi, config.lr)?;
    opt_phi.step(&mut pair.phi, &g_phi, config.lr)?;
    Ok(loss)
}

/// Fraction of the bank's accounts whose validation-period future is ranked
/// first among itself and `k` other accounts' futures by `ψ(past)·φ(future)`.
/// Returns `(accuracy, evaluated accounts)`.
pub fn retrieval_accuracy(corpus: &Corpus, bank: BankId, pair: &EncoderPair, k: usize, seed: u64) -> Result<(f64, usize)> {
    retrieval_accuracy_at(corpus, bank, pair, k, seed, corpus.train_end(), i64::MAX)
}

/// Retrieval with the past/future boundary at `t` and futures truncated after `end`.
pub fn retrieval_accuracy_at(
    corpus: &Corpus,
    bank: BankId,
    pair: &EncoderPair,
    k: usize,
    seed: u64,
    t: i64,
    end: i64,
) -> Result<(f64, usize)> {
    let mut rows = Vec::new();
    for acc in corpus.dataset.accounts.iter().filter(|a| a.bank == bank) {
        let fut_range = corpus.index.future_range(corpus.transactions(), acc.id, t);
        if fut_range.is_empty() || corpus.transactions()[corpus.index.stream(acc.id)[fut_range.start] as usize].timestamp > end {
            continue;
        }
        let z = pair.psi.embed_sequence(&corpus.history_events(acc, t))?;
        let f = pair.phi.embed_reversed(&corpus.future_events(acc, t, end))?;
        rows.push((z, f));
    }
    if rows.len() < k + 1 {
        return Err(Error::Config(format!("bank {bank} has only {} validation accounts", rows.len())));
    }
    let mut rng = stream(seed, &[tags::PRETRAIN, 0xEE, bank as u64]);
    let mut hits = 0usize;
    for (i, (z, f)) in rows.iter().enumerate() {
        let own = dot(z, f);
        let beaten = index::sample(&mut rng, rows.len() - 1, k)
            .into_iter()
            .map(|j| if j >= i { j + 1 } else { j })
            .any(|j| dot(z, &rows[j].1) >= own);
        if !beaten {
            hits += 1;
        }
    }
    Ok((hits as f64 / rows.len() as f64, rows.len()))
}
