use rand::distr::weighted::WeightedIndex;
use rand::Rng as _;
use rand_distr::{Distribution, LogNormal, Normal};

use super::{Account, Dataset, FlagCategory, GeneratorConfig, Transaction};
use crate::error::Result;
use crate::rng::{stream, tags, Rng};

/// 2024-01-01T00:00:00Z; every timestamp lies strictly after it.
pub const EPOCH_START: i64 = 1_704_067_200;

const FLAG_WEIGHTS: [f64; 3] = [0.95, 0.035, 0.015];
const AMOUNT_SPREAD: f64 = 0.5;
const HOME_CURRENCY_PROB: f64 = 0.9;
const PAYEES_PER_ACCOUNT: usize = 3;
const PREFERRED_PAYEE_PROB: f64 = 0.6;

/// Generates a dataset; identical configs produce identical datasets.
pub fn generate(config: &GeneratorConfig) -> Result<Dataset> {
    config.validate()?;
    let mut rng = stream(config.seed, &[tags::DATASET]);
    let accounts = make_accounts(config, &mut rng);
    let mut transactions = make_transactions(config, &accounts, &mut rng);
    inject_fraud(config, &accounts, &mut transactions, &mut rng);
    Ok(Dataset {
        accounts,
        transactions,
    })
}

fn make_accounts(config: &GeneratorConfig, rng: &mut Rng) -> Vec<Account> {
    let region_weights: Vec<f64> = (0..config.regions).map(|r| 0.6f64.powi(r as i32)).collect();
    let region_dist = WeightedIndex::new(&region_weights).expect("positive weights");
    let flag_dist = WeightedIndex::new(FLAG_WEIGHTS).expect("positive weights");
    let activity = LogNormal::new(0.0, 0.75).expect("valid");
    let spread = Normal::new(0.0, 0.8).expect("valid");

    let mut accounts = Vec::with_capacity(config.num_accounts());
    for bank in 0..config.banks {
        for _ in 0..config.accounts_per_bank {
            let region = region_dist.sample(rng) as u32;
            let flag = FlagCategory::from_index(flag_dist.sample(rng)).expect("index in range");
            let home_currency = if rng.random::<f64>() < 0.85 {
                region % config.currencies
            } else {
                rng.random_range(0..config.currencies)
            };
            accounts.push(Account {
                id: accounts.len() as u64,
                bank,
                region_token: region,
                flag,
                mean_log_amount: 3.5 + 0.4 * region as f64 + spread.sample(rng),
                activity_rate: activity.sample(rng),
                home_currency,
                preferred_merchants: [
                    rng.random_range(0..config.merchants),
                    rng.random_range(0..config.merchants),
                ],
            });
        }
    }
    accounts
}

fn make_transactions(config: &GeneratorConfig, accounts: &[Account], rng: &mut Rng) -> Vec<Transaction> {
    let weights: Vec<f64> = accounts.iter().map(|a| a.activity_rate).collect();
    let pick = WeightedIndex::new(&weights).expect("positive activity");
    let noise = Normal::new(0.0, AMOUNT_SPREAD).expect("valid");
    let horizon = config.horizon_days as f64 * 86_400.0;

    // Latent recurring payees, drawn by activity like any other counterparty.
    let payees: Vec<[usize; PAYEES_PER_ACCOUNT]> = accounts
        .iter()
        .map(|a| {
            std::array::from_fn(|_| loop {
                let p = pick.sample(rng);
                if accounts[p].id != a.id || accounts.len() < 2 {
                    break p;
                }
            })
        })
        .collect();

    // Conditioned on its event count, each account's Poisson stream has
    // uniformly scattered event times, i.e. exponential inter-arrivals.
    let mut raw: Vec<(f64, Transaction)> = Vec::with_capacity(config.transactions);
    for _ in 0..config.transactions {
        let oi = pick.sample(rng);
        let o = &accounts[oi];
        let b = if rng.random::<f64>() < PREFERRED_PAYEE_PROB {
            &accounts[payees[oi][rng.random_range(0..PAYEES_PER_ACCOUNT)]]
        } else {
            loop {
                let cand = &accounts[pick.sample(rng)];
                if cand.id != o.id {
                    break cand;
                }
            }
        };
        let time = rng.random::<f64>() * horizon;
        let amount = (o.mean_log_amount + noise.sample(rng)).exp();
        let u: f64 = rng.random();
        let merchant = if u < 0.5 {
            o.preferred_merchants[0]
        } else if u < 0.8 {
            o.preferred_merchants[1]
        } else {
            rng.random_range(0..config.merchants)
        };
        let currency = if rng.random::<f64>() < HOME_CURRENCY_PROB {
            o.home_currency
        } else {
            rng.random_range(0..config.currencies)
        };
        raw.push((time, Transaction {
            id: 0,
            timestamp: 0,
            amount,
            currency_token: currency,
            ordering_account: o.id,
            beneficiary_account: b.id,
            ordering_bank: o.bank,
            beneficiary_bank: b.bank,
            merchant_token: merchant,
            label: 0,
        }));
    }
    raw.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut last = EPOCH_START;
    raw.into_iter()
        .enumerate()
        .map(|(i, (time, mut t))| {
            let ts = (EPOCH_START + 1 + time as i64).max(last + 1);
            last = ts;
            t.id = i as u64 + 1;
            t.timestamp = ts;
            t
        })
        .collect()
}

fn inject_fraud(config: &GeneratorConfig, accounts: &[Account], txs: &mut [Transaction], rng: &mut Rng) {
    let noise = Normal::new(0.0, AMOUNT_SPREAD).expect("valid");
    let mut flagged: Vec<usize> = (0..txs.len())
        .filter(|&i| accounts[txs[i].ordering_account as usize].flag.is_flagged())
        .collect();
    let mut any: Vec<usize> = (0..txs.len()).collect();

    // Swap-remove sampling without replacement from either pool.
    let take = |pool: &mut Vec<usize>, rng: &mut Rng, txs: &[Transaction]| -> Option<usize> {
        while !pool.is_empty() {
            let k = rng.random_range(0..pool.len());
            let idx = pool.swap_remove(k);
            if txs[idx].label == 0 {
                return Some(idx);
            }
        }
        None
    };

    for _ in 0..config.fraud_count() {
        let use_flagged = rng.random::<f64>() < config.flag_correlation;
        let idx = if use_flagged {
            take(&mut flagged, rng, txs).or_else(|| take(&mut any, rng, txs))
        } else {
            take(&mut any, rng, txs)
        };
        let Some(idx) = idx else { break };
        let t = &mut txs[idx];
        let o = &accounts[t.ordering_account as usize];
        t.label = 1;
        t.amount = (o.mean_log_amount + config.fraud_amount_shift + noise.sample(rng)).exp();
        t.merchant_token = rng.random_range(0..config.merchants);
        t.currency_token = rng.random_range(0..config.currencies);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> GeneratorConfig {
        GeneratorConfig {
            banks: 3,
            accounts_per_bank: 40,
            transactions: 5000,
            fraud_rate: 0.01,
            seed,
            ..GeneratorConfig::default()
        }
    }

    #[test]
    fn same_seed_same_dataset() {
        assert_eq!(generate(&small(7)).unwrap(), generate(&small(7)).unwrap());
        assert_ne!(generate(&small(7)).unwrap(), generate(&small(8)).unwrap());
    }

    #[test]
    fn structural_invariants_hold() {
        let cfg = small(3);
        let d = generate(&cfg).unwrap();
        let horizon_end = EPOCH_START + cfg.horizon_days as i64 * 86_400 + cfg.transactions as i64;
        for w in d.transactions.windows(2) {
            assert!(w[0].timestamp < w[1].timestamp);
        }
        for t in &d.transactions {
            assert_ne!(t.ordering_account, t.beneficiary_account);
            assert_eq!(d.account(t.ordering_account).unwrap().bank, t.ordering_bank);
            assert_eq!(d.account(t.beneficiary_account).unwrap().bank, t.beneficiary_bank);
            assert!(t.amount > 0.0 && t.amount.is_finite());
            assert!(t.timestamp > EPOCH_START && t.timestamp <= horizon_end);
            assert!(t.merchant_token < cfg.merchants && t.currency_token < cfg.currencies);
        }
        for a in &d.accounts {
            assert!(a.region_token < cfg.regions);
        }
        assert_eq!(d.fraud_count(), cfg.fraud_count());
    }

    #[test]
    fn fraud_concentrates_on_flagged_accounts() {
        let d = generate(&GeneratorConfig {
            flag_correlation: 1.0,
            ..small(5)
        })
        .unwrap();
        for t in d.transactions.iter().filter(|t| t.label == 1) {
            assert!(d.account(t.ordering_account).unwrap().flag.is_flagged());
        }
    }
}
