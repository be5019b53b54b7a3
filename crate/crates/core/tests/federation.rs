mod common;

use common::monolithic::{self, exact_config};
use common::{corpus, encoders, flat, max_rel_diff};
use ldpfraud::federation::{
    build_orchestrated, build_p2p, train, PartyId, Protocol, Role, Trace, TrainConfig, ALLOWED_KINDS,
};
use ldpfraud::kernel::{CellKind, OptimizerKind, Parameterized};
use ldpfraud::ldp::PrivateProfile;
use ldpfraud::Error;

#[test]
fn orchestrated_step_matches_end_to_end_training() {
    for cell in [CellKind::Simple, CellKind::Lstm] {
        let c = corpus(3, 11);
        let cfg = exact_config(Protocol::Orchestrated);
        let mut fed = build_orchestrated(&c, encoders(&c, cell, 5), &cfg).unwrap();
        let mut encs: Vec<_> = fed.banks.iter().map(|b| b.encoder.clone()).collect();
        let mut scorer = fed.orchestrator.scorer.clone();

        let batch: Vec<usize> = (100..164).collect();
        fed.step(&c, &batch, 0, &cfg.step_settings(), &mut Trace::disabled()).unwrap();
        monolithic::end_to_end_step(&c, &mut encs, &mut scorer, &batch, cfg.lr, cfg.gamma);

        let d = max_rel_diff(&flat(&fed.orchestrator.scorer), &flat(&scorer));
        assert!(d <= 1e-6, "{cell:?} scorer differs by {d}");
        for (bank, enc) in fed.banks.iter().zip(&encs) {
            let d = max_rel_diff(&flat(&bank.encoder), &flat(enc));
            assert!(d <= 1e-6, "{cell:?} bank {} differs by {d}", bank.id);
            assert_ne!(flat(&bank.encoder), flat(&encoders(&c, cell, 5)[bank.id as usize]));
        }
    }
}

#[test]
fn bank_playing_both_roles_averages_over_two_and_bystanders_stay_put() {
    let c = corpus(3, 12);
    let i = (0..c.train_range().end)
        .find(|&i| {
            let t = &c.transactions()[i];
            t.ordering_bank == 1 && t.beneficiary_bank == 1
        })
        .expect("an intra-bank transaction");
    let cfg = TrainConfig {
        batch_size: 8,
        micro_batch: 8,
        ..exact_config(Protocol::Orchestrated)
    };
    let initial = encoders(&c, CellKind::Simple, 6);
    let mut fed = build_orchestrated(&c, initial.clone(), &cfg).unwrap();
    let mut encs = initial.clone();
    let mut scorer = fed.orchestrator.scorer.clone();
    fed.step(&c, &[i], 0, &cfg.step_settings(), &mut Trace::disabled()).unwrap();
    monolithic::end_to_end_step(&c, &mut encs, &mut scorer, &[i], cfg.lr, cfg.gamma);

    assert!(max_rel_diff(&flat(&fed.banks[1].encoder), &flat(&encs[1])) <= 1e-6);
    assert_ne!(flat(&fed.banks[1].encoder), flat(&initial[1]));
    for b in [0, 2] {
        assert_eq!(flat(&fed.banks[b].encoder), flat(&initial[b]), "bank {b} was not involved");
    }
}

#[test]
fn transfer_step_matches_single_process_reference() {
    let c = corpus(3, 13);
    let cfg = exact_config(Protocol::P2p);
    let encs = encoders(&c, CellKind::Lstm, 7);
    let mut p2p = build_p2p(&c, encs.clone(), &cfg).unwrap();
    let mut scorer = p2p.scorer.clone();
    let mut pres: Vec<_> = (0..3).map(|b| p2p.preprocessor(b).unwrap().clone()).collect();

    let batch: Vec<usize> = p2p.eligible(&c, c.train_range()).into_iter().take(64).collect();
    assert_eq!(batch.len(), 64);
    p2p.step(&c, &batch, 0, &cfg.step_settings(), &mut Trace::disabled()).unwrap();
    monolithic::transfer_step(&c, &encs, &mut scorer, &mut pres, &batch, cfg.lr, cfg.gamma);

    assert!(max_rel_diff(&flat(&p2p.scorer), &flat(&scorer)) <= 1e-6);
    for b in 0..3u32 {
        let d = max_rel_diff(&flat(p2p.preprocessor(b).unwrap()), &flat(&pres[b as usize]));
        assert!(d <= 1e-6, "pre-processor {b} differs by {d}");
    }
    for (bank, enc) in p2p.banks.iter().zip(&encs) {
        assert_eq!(flat(&bank.encoder), flat(enc), "encoders are frozen");
    }
}

#[test]
fn transfer_step_rejects_foreign_transactions() {
    let c = corpus(3, 14);
    let cfg = exact_config(Protocol::P2p);
    let mut p2p = build_p2p(&c, encoders(&c, CellKind::Simple, 1), &cfg).unwrap();
    let foreign = (0..c.train_range().end)
        .find(|&i| c.transactions()[i].ordering_bank != 0)
        .unwrap();
    let err = p2p.step(&c, &[foreign], 0, &cfg.step_settings(), &mut Trace::disabled()).unwrap_err();
    assert!(matches!(err, Error::Protocol(_)), "{err}");
}

#[test]
fn gradient_for_unknown_sample_is_a_protocol_error() {
    let c = corpus(3, 15);
    let cfg = exact_config(Protocol::Orchestrated);
    let mut fed = build_orchestrated(&c, encoders(&c, CellKind::Simple, 2), &cfg).unwrap();
    let err = fed.banks[0].take_tape(123_456, Role::Ordering).unwrap_err();
    assert!(matches!(err, Error::Protocol(_)));
}

#[test]
fn parallel_step_reproduces_sequential_step() {
    let c = corpus(3, 16);
    for protocol in [Protocol::Orchestrated, Protocol::P2p] {
        let mut cfg = TrainConfig {
            epsilon: vec![2.0],
            dropout: true,
            optimizer: OptimizerKind::Adam,
            ..exact_config(protocol)
        };
        let run = |cfg: &TrainConfig| {
            let mut trace = Trace::in_memory();
            let mut small = cfg.clone();
            small.epochs = 1;
            small.negatives_per_epoch = Some(256);
            let (model, report) = train(&c, encoders(&c, CellKind::Lstm, 3), &small, &mut trace).unwrap();
            let mut params = flat(model.scorer());
            for b in model.banks() {
                params.extend(flat(&b.encoder));
            }
            (params, report.epoch_losses, trace.records().unwrap().to_vec())
        };
        cfg.parallel = false;
        let seq = run(&cfg);
        cfg.parallel = true;
        let par = run(&cfg);
        assert!(max_rel_diff(&seq.0, &par.0) <= 1e-12, "{protocol:?}");
        assert_eq!(seq.1, par.1);
        assert_eq!(seq.2, par.2);
    }
}

#[test]
fn same_seed_gives_identical_models() {
    let c = corpus(3, 17);
    let cfg = TrainConfig {
        epsilon: vec![1.0],
        epochs: 1,
        negatives_per_epoch: Some(128),
        ..exact_config(Protocol::Orchestrated)
    };
    let run = |seed: u64| {
        let cfg = TrainConfig { seed, ..cfg.clone() };
        let (m, r) = train(&c, encoders(&c, CellKind::Simple, 4), &cfg, &mut Trace::disabled()).unwrap();
        (m.scorer().to_bundle().to_bytes(), r)
    };
    assert_eq!(run(1), run(1));
    assert_ne!(run(1).0, run(2).0);
}

#[test]
fn only_privatized_profiles_and_gradients_cross_party_boundaries() {
    let c = corpus(3, 18);
    let cfg = TrainConfig {
        epsilon: vec![1.0],
        ..exact_config(Protocol::Orchestrated)
    };
    let mut fed = build_orchestrated(&c, encoders(&c, CellKind::Simple, 8), &cfg).unwrap();
    let batch: Vec<usize> = (200..264).collect();
    let mut trace = Trace::in_memory();
    fed.step(&c, &batch, 0, &cfg.step_settings(), &mut trace).unwrap();

    let records = trace.records().unwrap();
    let count = |k: &str| records.iter().filter(|r| r.kind == k).count();
    assert_eq!(count("profile_request"), 2 * batch.len());
    assert_eq!(count("private_profile"), 2 * batch.len());
    assert!(count("gradient") >= batch.len() && count("gradient") <= 2 * batch.len());
    for r in records {
        assert!(ALLOWED_KINDS.contains(&r.kind.as_str()));
        match r.kind.as_str() {
            "private_profile" => {
                let p = PrivateProfile::from_line(&r.payload).unwrap();
                assert_eq!(r.sender, PartyId::Bank(p.bank).to_string());
                assert_eq!(r.receiver, "orchestrator");
                assert_eq!(p.mechanism, "laplace");
                assert_eq!(p.epsilon, 1.0);
                assert_eq!(p.account_ref.len(), 16, "accounts travel as opaque references");
            }
            "gradient" => {
                assert_eq!(r.sender, "orchestrator");
                assert!(r.receiver.starts_with("bank:"));
            }
            _ => {
                assert_eq!(r.sender, "orchestrator");
                assert!(r.receiver.starts_with("bank:"));
            }
        }
    }
}

#[test]
fn released_profiles_differ_from_clean_embeddings() {
    let c = corpus(3, 19);
    let cfg = TrainConfig {
        epsilon: vec![1.0],
        ..exact_config(Protocol::Orchestrated)
    };
    let fed = build_orchestrated(&c, encoders(&c, CellKind::Simple, 9), &cfg).unwrap();
    let mut trace = Trace::in_memory();
    let model = ldpfraud::federation::Trained::Orchestrated(fed);
    let idx: Vec<usize> = (0..50).collect();
    let released = model.release_profiles(&c, &idx, 99, &cfg.step_settings(), &mut trace).unwrap();
    for (&i, v) in idx.iter().zip(&released) {
        let tx = &c.transactions()[i];
        let bank = &model.banks()[tx.ordering_bank as usize];
        let clean = bank.clean_embedding(&c, tx.ordering_account, tx.timestamp).unwrap();
        assert_ne!(&clean, v);
    }
    assert_eq!(trace.records().unwrap().iter().filter(|r| r.kind == "private_profile").count(), 50);
}

/// Wall time of one orchestrated step, best of three.
fn step_seconds(n: usize) -> f64 {
    let c = corpus(3, 20);
    let cfg = TrainConfig {
        batch_size: n,
        ..exact_config(Protocol::Orchestrated)
    };
    let batch: Vec<usize> = (0..n).collect();
    (0..3)
        .map(|_| {
            let mut fed = build_orchestrated(&c, encoders(&c, CellKind::Lstm, 10), &cfg).unwrap();
            let t = std::time::Instant::now();
            fed.step(&c, &batch, 0, &cfg.step_settings(), &mut Trace::disabled()).unwrap();
            t.elapsed().as_secs_f64()
        })
        .fold(f64::INFINITY, f64::min)
}

#[test]
fn step_cost_grows_linearly_with_batch_size() {
    let ratio = step_seconds(2048) / step_seconds(1024);
    assert!((1.6..=2.6).contains(&ratio), "time ratio {ratio}");
}
