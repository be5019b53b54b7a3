#![allow(dead_code)]

pub mod gradcheck;
pub mod monolithic;
pub mod oracles;

use ldpfraud::data::{generate, Corpus, GeneratorConfig};
use ldpfraud::encoder::{Encoder, EncoderConfig};
use ldpfraud::kernel::{CellKind, Parameterized};
use ldpfraud::rng::stream;

pub fn small_data(banks: u32, seed: u64) -> GeneratorConfig {
    GeneratorConfig {
        banks,
        accounts_per_bank: 30,
        transactions: 3000,
        fraud_rate: 0.02,
        seed,
        ..GeneratorConfig::default()
    }
}

pub fn corpus(banks: u32, seed: u64) -> Corpus {
    let cfg = small_data(banks, seed);
    Corpus::new(generate(&cfg).unwrap(), 0.75, 8, cfg.regions as usize).unwrap()
}

pub fn encoder_config(cell: CellKind) -> EncoderConfig {
    EncoderConfig {
        cell,
        hidden: 6,
        head: [8, 6],
        dim: 4,
        dropout: 0.0,
        clip_radius: 0.5,
    }
}

pub fn encoders(corpus: &Corpus, cell: CellKind, seed: u64) -> Vec<Encoder> {
    (0..corpus.num_banks())
        .map(|b| Encoder::new(&encoder_config(cell), corpus.event_width(), &mut stream(seed, &[b as u64])))
        .collect()
}

/// Largest `|a - b| / max(|a|, |b|)` over paired parameters; exact zeros compare as 0.
pub fn max_rel_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let scale = x.abs().max(y.abs());
            if scale == 0.0 {
                0.0
            } else {
                (x - y).abs() / scale
            }
        })
        .fold(0.0, f64::max)
}

pub fn flat<P: Parameterized>(p: &P) -> Vec<f64> {
    p.flatten()
}
