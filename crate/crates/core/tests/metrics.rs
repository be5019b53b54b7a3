mod common;

use common::oracles::{auc_roc_pairs, average_precision_thresholds, max_deviation, tpr_at_fpr_thresholds};
use ldpfraud::metrics::{aggregate_repeats, auc_roc, average_precision, binary_metrics, curve_metrics};
use proptest::prelude::*;

#[test]
fn library_agrees_with_brute_force_oracles() {
    for (metric, dev) in max_deviation(1000, 99) {
        assert!(dev <= 1e-12, "{metric} deviates by {dev:e}");
    }
}

#[test]
fn hand_computed_small_case() {
    let scores = [0.9, 0.8, 0.8, 0.3, 0.1];
    let labels = [1, 0, 1, 0, 1];
    // Pairs: (0.9 beats both negatives) 2, (0.8 ties one, beats one) 1.5, (0.1 beats none) 0.
    assert!((auc_roc(&scores, &labels).unwrap() - 3.5 / 6.0).abs() < 1e-15);
    // Thresholds 0.9, 0.8, 0.1 reach recall 1/3, 2/3, 1 at precision 1, 2/3, 3/5.
    let ap = (1.0 + 2.0 / 3.0 + 3.0 / 5.0) / 3.0;
    assert!((average_precision(&scores, &labels).unwrap() - ap).abs() < 1e-15);
}

#[test]
fn f_score_without_positive_predictions_is_flagged() {
    let r = binary_metrics(&[0, 0, 0], &[1, 0, 1]).unwrap();
    assert_eq!(r.f_score, 0.0);
    assert!(r.f_undefined);
}

#[test]
fn single_class_sets_are_rejected() {
    assert!(curve_metrics(&[0.1, 0.2], &[1, 1]).is_err());
    assert!(curve_metrics(&[0.1, 0.2], &[0, 0]).is_err());
}

proptest! {
    #[test]
    fn ranking_metrics_are_invariant_to_monotone_rescaling(
        raw in prop::collection::vec((0.0f64..1.0, any::<bool>()), 2..200),
    ) {
        let mut labels: Vec<u8> = raw.iter().map(|&(_, l)| l as u8).collect();
        labels[0] = 1;
        labels[1] = 0;
        let scores: Vec<f64> = raw.iter().map(|&(s, _)| s).collect();
        let squashed: Vec<f64> = scores.iter().map(|s| s.powi(3) * 5.0 - 2.0).collect();
        prop_assert_eq!(auc_roc(&scores, &labels).unwrap(), auc_roc(&squashed, &labels).unwrap());
        prop_assert_eq!(average_precision(&scores, &labels).unwrap(), average_precision(&squashed, &labels).unwrap());
        prop_assert!((auc_roc(&scores, &labels).unwrap() - auc_roc_pairs(&scores, &labels)).abs() <= 1e-12);
    }

    #[test]
    fn curves_stay_in_the_unit_interval(
        raw in prop::collection::vec((0.0f64..1.0, any::<bool>()), 2..200),
        theta in 0.0f64..1.0,
    ) {
        let mut labels: Vec<u8> = raw.iter().map(|&(_, l)| l as u8).collect();
        labels[0] = 1;
        labels[1] = 0;
        let scores: Vec<f64> = raw.iter().map(|&(s, _)| s).collect();
        let ap = average_precision_thresholds(&scores, &labels);
        let tpr = tpr_at_fpr_thresholds(&scores, &labels, theta);
        prop_assert!((0.0..=1.0).contains(&ap));
        prop_assert!((0.0..=1.0).contains(&tpr));
    }

    #[test]
    fn repeat_interval_brackets_the_mean(samples in prop::collection::vec(-10.0f64..10.0, 2..20)) {
        let s = aggregate_repeats(&samples).unwrap();
        prop_assert!(s.ci_low <= s.mean && s.mean <= s.ci_high);
    }
}
