use ldpfraud_demo::{curves, privacy_loss, release_histogram};

#[test]
fn histogram_follows_the_laplace_density() {
    let h = release_histogram(1.0, 3.0, 200_000, 20, 9).unwrap();
    assert_eq!(h.centre(), 0.5, "values are clipped to the radius");
    let counts = h.counts();
    let expected = h.expected();
    // Pearson chi-square with 19 degrees of freedom; 0.999 quantile is 43.8.
    let chi2: f64 = counts.iter().zip(&expected).map(|(o, e)| (o - e).powi(2) / e).sum();
    assert!(chi2 < 43.8, "chi-square {chi2}");
    let inside: f64 = counts.iter().sum();
    // Mass beyond five scales is e^-5.
    assert!((inside / 200_000.0 - (1.0 - (-5.0f64).exp())).abs() < 0.002);
}

#[test]
fn privacy_loss_is_bounded_and_attained() {
    let eps = 2.0;
    let curve = privacy_loss(eps, 0.5, -0.5, -3.0, 3.0, 61).unwrap();
    assert!(curve.iter().all(|&l| l.abs() <= eps + 1e-12));
    assert!((curve[35] - eps).abs() < 1e-12, "o = 0.5 attains the bound");
    assert!((curve[0] + eps).abs() < 1e-12);
    let interior = privacy_loss(eps, 0.1, -0.1, -1.0, 1.0, 3).unwrap();
    assert!(interior.iter().all(|&l| l.abs() <= eps * 0.2 + 1e-12));
}

#[test]
fn curves_match_a_hand_worked_case() {
    let c = curves("0.9, 0.8 0.8 0.3 0.1", "1 0 1 0 1").unwrap();
    assert_eq!(c.fpr(), vec![0.0, 0.0, 0.5, 1.0, 1.0]);
    assert_eq!(c.tpr(), vec![0.0, 1.0 / 3.0, 2.0 / 3.0, 2.0 / 3.0, 1.0]);
    assert_eq!(c.precision(), vec![1.0, 2.0 / 3.0, 0.5, 0.6]);
    assert!((c.auc_roc() - 3.5 / 6.0).abs() < 1e-15);
}

#[test]
fn bad_inputs_are_reported() {
    assert!(release_histogram(f64::INFINITY, 0.0, 10, 10, 1).is_err());
    assert!(release_histogram(-1.0, 0.0, 10, 10, 1).is_err());
    assert!(privacy_loss(1.0, 0.0, 0.1, 1.0, 1.0, 10).is_err());
    assert!(curves("0.1 x", "1 0").is_err());
    assert!(curves("0.1 0.2", "1 2").is_err());
    assert!(curves("0.1 0.2", "1 1").is_err());
}
