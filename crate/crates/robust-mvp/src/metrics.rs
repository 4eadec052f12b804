//! Performance metrics on return series.
//!
//! Cumulative returns here are running sums of per-period returns (excess
//! returns compose additively in this evaluation convention).

/// Mean of a slice (0 for empty input).
pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation with the `1/(n-1)` normalization.
pub fn sample_sd(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    let ss: f64 = values.iter().map(|v| (v - m).powi(2)).sum();
    (ss / (values.len() - 1) as f64).sqrt()
}

/// Realized Sharpe ratio `mean / sd` of a return series; 0 when the series
/// has no dispersion.
pub fn realized_sharpe(returns: &[f64]) -> f64 {
    let sd = sample_sd(returns);
    if sd == 0.0 {
        0.0
    } else {
        mean(returns) / sd
    }
}

/// Maximum drawdown of the cumulative-sum path: the largest drop from any
/// earlier running-sum level to any later one. Nonnegative; exactly 0 for a
/// nondecreasing path.
pub fn max_drawdown(returns: &[f64]) -> f64 {
    let mut cum = 0.0;
    let mut peak = f64::NEG_INFINITY;
    let mut worst = 0.0f64;
    for &r in returns {
        cum += r;
        peak = peak.max(cum);
        worst = worst.max(peak - cum);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mdd_hand_example() {
        // Cumulative path 0.1, -0.1, -0.05: peak 0.1 then trough -0.1.
        let mdd = max_drawdown(&[0.1, -0.2, 0.05]);
        assert!((mdd - 0.2).abs() < 1e-15);
    }

    #[test]
    fn mdd_nondecreasing_path_is_zero() {
        assert_eq!(max_drawdown(&[0.01, 0.0, 0.02, 0.005]), 0.0);
        assert_eq!(max_drawdown(&[]), 0.0);
    }

    #[test]
    fn mdd_matches_all_pairs_brute_force() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(77);
        for _ in 0..200 {
            let n = rng.random_range(1..=50);
            let returns: Vec<f64> = (0..n)
                .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal) * 0.02)
                .collect();
            let mut cum = Vec::with_capacity(n);
            let mut acc = 0.0;
            for &r in &returns {
                acc += r;
                cum.push(acc);
            }
            let mut brute = 0.0f64;
            for t1 in 0..n {
                for t2 in t1..n {
                    brute = brute.max(cum[t1] - cum[t2]);
                }
            }
            assert_eq!(max_drawdown(&returns), brute);
        }
    }

    #[test]
    fn sd_and_sharpe() {
        let r = [0.01, 0.03, 0.02];
        let m = mean(&r);
        assert!((m - 0.02).abs() < 1e-15);
        assert!((sample_sd(&r) - 0.01).abs() < 1e-15);
        assert!((realized_sharpe(&r) - 2.0).abs() < 1e-12);
        assert_eq!(realized_sharpe(&[0.01, 0.01]), 0.0);
    }
}
