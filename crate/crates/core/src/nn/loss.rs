//! Mean squared error over a batch: the per-sample average over output
//! coordinates, then averaged over the batch.

/// `mean_s mean_j (pred - target)^2`.
pub fn mse(pred: &[f64], target: &[f64]) -> f64 {
    assert_eq!(pred.len(), target.len(), "mse shape");
    assert!(!pred.is_empty());
    pred.iter()
        .zip(target)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / pred.len() as f64
}

/// Gradient of [`mse`] with respect to `pred`.
pub fn mse_grad(pred: &[f64], target: &[f64]) -> Vec<f64> {
    assert_eq!(pred.len(), target.len(), "mse shape");
    let n = pred.len() as f64;
    pred.iter()
        .zip(target)
        .map(|(p, t)| 2.0 * (p - t) / n)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_computed_value() {
        // Errors 1 and -2 over 4 entries: (1 + 4) / 4.
        let pred = [1.0, 0.0, 3.0, 5.0];
        let target = [0.0, 0.0, 3.0, 7.0];
        assert_eq!(mse(&pred, &target), 1.25);
        assert_eq!(mse(&pred, &pred), 0.0);
    }

    #[test]
    fn grad_matches_finite_differences() {
        let target = [0.3, -0.7, 1.1];
        let pred = [0.0, 0.5, 2.0];
        let g = mse_grad(&pred, &target);
        let h = 1e-7;
        for i in 0..pred.len() {
            let mut up = pred;
            up[i] += h;
            let mut down = pred;
            down[i] -= h;
            let numeric = (mse(&up, &target) - mse(&down, &target)) / (2.0 * h);
            assert!((g[i] - numeric).abs() < 1e-8, "{} vs {numeric}", g[i]);
        }
    }
}
