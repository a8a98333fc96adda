//! Trend classification over four least-squares segment slopes.

use serde::{Deserialize, Serialize};

use crate::series::{AnalyticsError, TimeSeries};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrendClass {
    Upward,
    Downward,
    Stable,
    Mixed,
}

/// Least-squares slope of `ys` against sample index 0..len.
fn ls_slope(ys: &[f64]) -> f64 {
    let n = ys.len() as f64;
    let x_mean = (n - 1.0) / 2.0;
    let y_mean = ys.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, &y) in ys.iter().enumerate() {
        let dx = i as f64 - x_mean;
        num += dx * (y - y_mean);
        den += dx * dx;
    }
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Classify with the default slope threshold `0.01 * range / length`.
pub fn classify_trend(series: &TimeSeries) -> Result<TrendClass, AnalyticsError> {
    let xs = series.single_channel()?;
    if xs.len() < 4 {
        return Err(AnalyticsError::DegenerateInput(
            "trend needs at least 4 samples".into(),
        ));
    }
    let min = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let theta = 0.01 * (max - min) / xs.len() as f64;
    classify_trend_with(series, theta)
}

/// Classify with an explicit slope threshold. The series is split into four
/// equal-length segments (the last absorbs the remainder); all slopes above
/// `+theta` is upward, all below `-theta` downward, all within `±theta`
/// stable, anything else mixed.
pub fn classify_trend_with(series: &TimeSeries, theta: f64) -> Result<TrendClass, AnalyticsError> {
    let xs = series.single_channel()?;
    let n = xs.len();
    if n < 4 {
        return Err(AnalyticsError::DegenerateInput(
            "trend needs at least 4 samples".into(),
        ));
    }
    let seg = n / 4;
    let mut slopes = [0.0f64; 4];
    for (k, slope) in slopes.iter_mut().enumerate() {
        let start = k * seg;
        let end = if k == 3 { n } else { (k + 1) * seg };
        *slope = ls_slope(&xs[start..end]);
    }
    if slopes.iter().all(|s| *s > theta) {
        Ok(TrendClass::Upward)
    } else if slopes.iter().all(|s| *s < -theta) {
        Ok(TrendClass::Downward)
    } else if slopes.iter().all(|s| s.abs() <= theta) {
        Ok(TrendClass::Stable)
    } else {
        Ok(TrendClass::Mixed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testdata::iops_series;

    /// 24-point open-ended QA sample with a steady decline.
    fn oerqa_downtrend() -> TimeSeries {
        TimeSeries::new(vec![
            0.75, 0.74, 0.73, 0.72, 0.71, 0.69, 0.68, 0.66, 0.65, 0.63, 0.61, 0.58, 0.56, 0.54,
            0.52, 0.49, 0.47, 0.45, 0.44, 0.42, 0.41, 0.4, 0.4, 0.39,
        ])
        .unwrap()
    }

    #[test]
    fn steady_decline_is_downward() {
        assert_eq!(
            classify_trend(&oerqa_downtrend()).unwrap(),
            TrendClass::Downward
        );
    }

    #[test]
    fn constant_series_is_stable() {
        let s = TimeSeries::new(vec![3.0; 12]).unwrap();
        assert_eq!(classify_trend(&s).unwrap(), TrendClass::Stable);
    }

    #[test]
    fn iops_series_is_mixed() {
        assert_eq!(classify_trend(&iops_series()).unwrap(), TrendClass::Mixed);
    }

    #[test]
    fn ramp_is_upward_and_reverse_is_downward() {
        let up = TimeSeries::new((0..16).map(f64::from).collect()).unwrap();
        let down = TimeSeries::new((0..16).rev().map(f64::from).collect()).unwrap();
        assert_eq!(classify_trend(&up).unwrap(), TrendClass::Upward);
        assert_eq!(classify_trend(&down).unwrap(), TrendClass::Downward);
    }

    #[test]
    fn short_series_rejected() {
        let s = TimeSeries::new(vec![1.0, 2.0, 3.0]).unwrap();
        assert!(classify_trend(&s).is_err());
    }
}
