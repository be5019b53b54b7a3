/// Central-difference gradient `(f(ω + h eᵢ) − f(ω − h eᵢ)) / 2h`.
pub fn finite_difference_grad<F: FnMut(&[f64]) -> f64>(mut f: F, params: &[f64], h: f64) -> Vec<f64> {
    assert!(h > 0.0, "finite-difference step must be positive");
    let mut w = params.to_vec();
    (0..w.len())
        .map(|i| {
            let orig = w[i];
            w[i] = orig + h;
            let up = f(&w);
            w[i] = orig - h;
            let down = f(&w);
            w[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Largest coordinate-wise relative error, with a floor on the denominator so
/// coordinates whose true gradient is ~0 are compared absolutely.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_function_has_zero_gradient() {
        let g = finite_difference_grad(|_| 3.0, &[1.0, 2.0], 1e-5);
        assert_eq!(g, vec![0.0, 0.0]);
    }

    #[test]
    fn quadratic_gradient_is_twice_omega() {
        let w = [0.3, -1.2, 2.5];
        let g = finite_difference_grad(|x| x.iter().map(|v| v * v).sum(), &w, 1e-5);
        for (gi, wi) in g.iter().zip(w) {
            assert!((gi - 2.0 * wi).abs() < 1e-8);
        }
    }
}
