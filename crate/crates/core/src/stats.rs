//! Population statistics and z-scores for single-channel series.

use serde::{Deserialize, Serialize};

use crate::series::{AnalyticsError, TimeSeries};

/// Moment summary of one series. All moments are population moments
/// (divide by `n`, not `n - 1`); `mode` is the most frequent value with
/// ties broken by the smallest value; `unit_root_stat` is the lag-0
/// Dickey-Fuller t-statistic of the regression of the first difference
/// on the lagged level (no intercept).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatSummary {
    pub mean: f64,
    pub variance: f64,
    pub std_dev: f64,
    pub minimum: f64,
    pub maximum: f64,
    pub skewness: f64,
    pub mode: f64,
    pub unit_root_stat: f64,
    /// Set when the series has (numerically) zero variance; skewness is
    /// reported as 0 in that case.
    pub degenerate: bool,
}

/// Numerical zero-variance guard: treats variance at or below the square of
/// `1e-12 * scale` as zero, where `scale` covers the magnitude of the data.
pub(crate) fn is_zero_variance(variance: f64, minimum: f64, maximum: f64) -> bool {
    let scale = minimum.abs().max(maximum.abs()).max(1.0);
    variance <= (1e-12 * scale) * (1e-12 * scale)
}

/// Population mean/variance/skewness in one pass (Welford-style updates for
/// the second and third central moments).
fn online_moments(xs: &[f64]) -> (f64, f64, f64) {
    let mut mean = 0.0;
    let mut m2 = 0.0;
    let mut m3 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let n = (i + 1) as f64;
        let delta = x - mean;
        let delta_n = delta / n;
        let term1 = delta * delta_n * (n - 1.0);
        m3 += term1 * delta_n * (n - 2.0) - 3.0 * delta_n * m2;
        m2 += term1;
        mean += delta_n;
    }
    let n = xs.len() as f64;
    (mean, m2 / n, m3 / n)
}

/// Most frequent value; ties resolved to the smallest value. Values compare
/// by their exact floating-point representation.
fn mode_of(xs: &[f64]) -> f64 {
    let mut sorted: Vec<f64> = xs.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let mut best = sorted[0];
    let mut best_count = 0usize;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i + 1;
        while j < sorted.len() && sorted[j].total_cmp(&sorted[i]).is_eq() {
            j += 1;
        }
        if j - i > best_count {
            best_count = j - i;
            best = sorted[i];
        }
        i = j;
    }
    best
}

/// Lag-0 Dickey-Fuller t-statistic: regress `x[t] - x[t-1]` on `x[t-1]`
/// without intercept and return `delta_hat / SE(delta_hat)`.
fn dickey_fuller_t(xs: &[f64]) -> f64 {
    let t_obs = xs.len() - 1;
    let mut sxx = 0.0;
    let mut sxd = 0.0;
    for t in 1..xs.len() {
        let lag = xs[t - 1];
        let diff = xs[t] - xs[t - 1];
        sxx += lag * lag;
        sxd += lag * diff;
    }
    if sxx == 0.0 {
        return 0.0;
    }
    let delta_hat = sxd / sxx;
    let mut rss = 0.0;
    for t in 1..xs.len() {
        let resid = (xs[t] - xs[t - 1]) - delta_hat * xs[t - 1];
        rss += resid * resid;
    }
    if t_obs < 2 {
        return 0.0;
    }
    let s2 = rss / (t_obs - 1) as f64;
    let se = (s2 / sxx).sqrt();
    if se == 0.0 {
        return 0.0;
    }
    delta_hat / se
}

/// Population moment summary of a single-channel series of length >= 2.
pub fn compute_statistics(series: &TimeSeries) -> Result<StatSummary, AnalyticsError> {
    let xs = series.single_channel()?;
    if xs.len() < 2 {
        return Err(AnalyticsError::DegenerateInput(
            "statistics need at least 2 samples".into(),
        ));
    }
    let (mean, variance, third) = online_moments(xs);
    let minimum = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let maximum = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let degenerate = is_zero_variance(variance, minimum, maximum);
    let std_dev = if degenerate { 0.0 } else { variance.sqrt() };
    let skewness = if degenerate {
        0.0
    } else {
        third / (variance * std_dev)
    };
    Ok(StatSummary {
        mean,
        variance: if degenerate { 0.0 } else { variance },
        std_dev,
        minimum,
        maximum,
        skewness,
        mode: mode_of(xs),
        unit_root_stat: dickey_fuller_t(xs),
        degenerate,
    })
}

/// Z-score of every sample under the population mean/std of the series.
/// Positions are 0-based here; human-facing reports index from 1.
pub fn zscores(series: &TimeSeries) -> Result<Vec<f64>, AnalyticsError> {
    let summary = compute_statistics(series)?;
    if summary.degenerate {
        return Err(AnalyticsError::DegenerateInput(
            "z-scores require nonzero variance".into(),
        ));
    }
    let xs = series.single_channel()?;
    Ok(xs
        .iter()
        .map(|x| (x - summary.mean) / summary.std_dev)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testdata::iops_series;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn iops_series_moments_match_worked_values() {
        let s = iops_series();
        let st = compute_statistics(&s).unwrap();
        assert_eq!(st.mean, 19.75);
        assert!(close(st.variance, 24.19, 0.01), "variance {}", st.variance);
        assert!(close(st.std_dev, 4.92, 0.01));
        assert_eq!(st.minimum, 7.0);
        assert_eq!(st.maximum, 26.0);
        assert!(close(st.skewness, -0.92, 0.01), "skew {}", st.skewness);
        assert!(!st.degenerate);
        // 18.5, 21.0 and 26.0 each appear twice; smallest wins the tie.
        assert_eq!(st.mode, 18.5);
    }

    #[test]
    fn iops_zscores_match_worked_values() {
        let zs = zscores(&iops_series()).unwrap();
        // 1-based indices 13, 4, 16.
        assert!(close(zs[12], -2.59, 0.01), "z13 {}", zs[12]);
        assert!(close(zs[3], 1.27, 0.01));
        assert!(close(zs[15], 1.27, 0.01));
    }

    #[test]
    fn constant_series_is_degenerate() {
        let s = TimeSeries::new(vec![5.0; 4]).unwrap();
        let st = compute_statistics(&s).unwrap();
        assert_eq!(st.mean, 5.0);
        assert_eq!(st.variance, 0.0);
        assert_eq!(st.skewness, 0.0);
        assert!(st.degenerate);
        assert!(zscores(&s).is_err());
    }

    #[test]
    fn small_series_hand_computed_moments() {
        let s = TimeSeries::new(vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let st = compute_statistics(&s).unwrap();
        assert!(close(st.mean, 2.5, 1e-12));
        assert!(close(st.variance, 1.25, 1e-12));
        assert!(close(st.skewness, 0.0, 1e-12));
        // Hand-derived: t = 2 * sqrt(3) for the pure ramp 1..4.
        assert!(close(st.unit_root_stat, 2.0 * 3.0_f64.sqrt(), 1e-9));
    }

    #[test]
    fn too_short_series_rejected() {
        let s = TimeSeries::new(vec![1.0]).unwrap();
        assert!(matches!(
            compute_statistics(&s),
            Err(AnalyticsError::DegenerateInput(_))
        ));
    }

    #[test]
    fn standardized_series_has_zero_mean_unit_std() {
        let s = iops_series();
        let zs = zscores(&s).unwrap();
        let zt = TimeSeries::new(zs).unwrap();
        let st = compute_statistics(&zt).unwrap();
        assert!(close(st.mean, 0.0, 1e-12));
        assert!(close(st.std_dev, 1.0, 1e-12));
    }

    /// Plain two-pass recomputation, deliberately avoiding the online
    /// updates the implementation uses.
    fn two_pass_oracle(xs: &[f64]) -> (f64, f64, f64) {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let variance = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        let std = variance.sqrt();
        let skewness = if std == 0.0 {
            0.0
        } else {
            xs.iter()
                .map(|x| {
                    let z = (x - mean) / std;
                    z * z * z
                })
                .sum::<f64>()
                / n
        };
        (mean, variance, skewness)
    }

    #[test]
    fn moments_match_two_pass_oracle_on_random_series() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(0x0ac1e);
        let rel = |a: f64, b: f64| (a - b).abs() <= 1e-9 * b.abs().max(1.0);
        for _ in 0..1000 {
            let n = rng.gen_range(2..=256);
            let scale = 10f64.powi(rng.gen_range(-2..=3));
            let xs: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0) * scale).collect();
            let s = TimeSeries::new(xs.clone()).unwrap();
            let st = compute_statistics(&s).unwrap();
            let (mean, variance, skewness) = two_pass_oracle(&xs);
            assert!(rel(st.mean, mean), "mean {} vs {}", st.mean, mean);
            assert!(
                rel(st.variance, variance),
                "var {} vs {}",
                st.variance,
                variance
            );
            assert!(
                rel(st.skewness, skewness),
                "skew {} vs {}",
                st.skewness,
                skewness
            );
            assert_eq!(st.minimum, xs.iter().copied().fold(f64::INFINITY, f64::min));
            assert_eq!(
                st.maximum,
                xs.iter().copied().fold(f64::NEG_INFINITY, f64::max)
            );
            assert!(st.minimum <= st.mean && st.mean <= st.maximum);
            assert!(rel(st.std_dev * st.std_dev, st.variance));
        }
    }

    #[test]
    fn negating_series_negates_skewness_and_shift_preserves_it() {
        let s = iops_series();
        let st = compute_statistics(&s).unwrap();
        let neg = TimeSeries::new(s.values().iter().map(|v| -v).collect()).unwrap();
        let stn = compute_statistics(&neg).unwrap();
        assert!(close(st.skewness, -stn.skewness, 1e-9));
        let shifted = TimeSeries::new(s.values().iter().map(|v| v + 100.0).collect()).unwrap();
        let sts = compute_statistics(&shifted).unwrap();
        assert!(close(st.variance, sts.variance, 1e-9));
        assert!(close(st.skewness, sts.skewness, 1e-9));
    }
}
