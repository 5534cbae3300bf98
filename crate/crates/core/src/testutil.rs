//! Small statistical helpers used by validation tests and tooling.

/// Two-sided Kolmogorov-Smirnov p-value for `samples` against the uniform
/// distribution on [lo, hi], using the asymptotic Kolmogorov distribution
/// with Stephens' small-sample correction.
pub fn ks_uniform_pvalue(samples: &[f64], lo: f64, hi: f64) -> f64 {
    assert!(!samples.is_empty() && hi > lo);
    let mut xs: Vec<f64> = samples.iter().map(|&x| (x - lo) / (hi - lo)).collect();
    xs.sort_unstable_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in xs.iter().enumerate() {
        let cdf = x.clamp(0.0, 1.0);
        let upper = (i as f64 + 1.0) / n - cdf;
        let lower = cdf - i as f64 / n;
        d = d.max(upper).max(lower);
    }
    let lambda = (n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d;
    kolmogorov_q(lambda)
}

/// Q(lambda) = 2 * sum_{k>=1} (-1)^{k-1} exp(-2 k^2 lambda^2).
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-8 {
        return 1.0;
    }
    let mut sum = 0.0f64;
    let mut sign = 1.0f64;
    for k in 1..=100 {
        let term = (-2.0 * (k as f64).powi(2) * lambda * lambda).exp();
        sum += sign * term;
        sign = -sign;
        if term < 1e-12 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    #[test]
    fn uniform_samples_get_high_pvalue() {
        let mut rng = StdRng::seed_from_u64(1);
        let xs: Vec<f64> = (0..5000).map(|_| rng.gen_range(-3.0..3.0)).collect();
        assert!(ks_uniform_pvalue(&xs, -3.0, 3.0) > 0.01);
    }

    #[test]
    fn clearly_nonuniform_samples_get_tiny_pvalue() {
        let xs: Vec<f64> = (0..5000).map(|i| -3.0 + 3.0 * (i as f64 / 5000.0)).collect();
        assert!(ks_uniform_pvalue(&xs, -3.0, 3.0) < 1e-6);
        let clumped: Vec<f64> = (0..5000).map(|i| (i % 10) as f64 * 0.01).collect();
        assert!(ks_uniform_pvalue(&clumped, -3.0, 3.0) < 1e-6);
    }

    #[test]
    fn q_function_reference_values() {
        // Q(0.8275) ~ 0.5 and Q(1.2238) ~ 0.1 (standard KS tables).
        assert!((kolmogorov_q(0.8275) - 0.5).abs() < 5e-3);
        assert!((kolmogorov_q(1.2238) - 0.1).abs() < 5e-3);
    }
}
