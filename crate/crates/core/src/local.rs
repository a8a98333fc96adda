//! Local feature detection: extrema, outliers, spikes, and abrupt changes.

use serde::{Deserialize, Serialize};

use crate::series::{AnalyticsError, TimeSeries};
use crate::stats::compute_statistics;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Peak,
    Trough,
    AbruptChange,
    Outlier,
    Spike,
    Jump,
}

/// One detected feature. `index` is 1-based, matching human-facing reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalFeature {
    pub kind: FeatureKind,
    pub index: usize,
    pub value: f64,
    pub z_score: f64,
}

/// Detect local features of a single-channel series.
///
/// * peaks/troughs: strict local extrema;
/// * outliers: `|z| >= z_threshold`;
/// * spikes: outliers whose both neighbors are non-outliers;
/// * abrupt changes / jumps: first differences with `|delta|` at least three
///   times the median absolute difference — an abrupt change when the next
///   difference reverts at least half of it, a jump when the new level holds.
///
/// The result is sorted by index.
pub fn detect_local_features(
    series: &TimeSeries,
    z_threshold: f64,
) -> Result<Vec<LocalFeature>, AnalyticsError> {
    let xs = series.single_channel()?;
    if xs.len() < 3 {
        return Err(AnalyticsError::DegenerateInput(
            "local features need at least 3 samples".into(),
        ));
    }
    if !z_threshold.is_finite() || z_threshold <= 0.0 {
        return Err(AnalyticsError::DegenerateInput(
            "z_threshold must be positive".into(),
        ));
    }
    let st = compute_statistics(series)?;
    let z = |i: usize| {
        if st.degenerate {
            0.0
        } else {
            (xs[i] - st.mean) / st.std_dev
        }
    };

    let mut out = Vec::new();
    for i in 1..xs.len() - 1 {
        if xs[i] > xs[i - 1] && xs[i] > xs[i + 1] {
            out.push((i, FeatureKind::Peak));
        } else if xs[i] < xs[i - 1] && xs[i] < xs[i + 1] {
            out.push((i, FeatureKind::Trough));
        }
    }

    let outlier = |i: usize| z(i).abs() >= z_threshold;
    for i in 0..xs.len() {
        if outlier(i) {
            out.push((i, FeatureKind::Outlier));
            if i > 0 && i + 1 < xs.len() && !outlier(i - 1) && !outlier(i + 1) {
                out.push((i, FeatureKind::Spike));
            }
        }
    }

    let mut diffs: Vec<f64> = xs.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    diffs.sort_by(f64::total_cmp);
    let med = if diffs.len() % 2 == 1 {
        diffs[diffs.len() / 2]
    } else {
        0.5 * (diffs[diffs.len() / 2 - 1] + diffs[diffs.len() / 2])
    };
    for i in 0..xs.len() - 1 {
        let delta = xs[i + 1] - xs[i];
        if delta.abs() >= 3.0 * med && delta.abs() > 0.0 {
            let reverts = i + 2 < xs.len() && {
                let next = xs[i + 2] - xs[i + 1];
                next.signum() == -delta.signum() && next.abs() >= 0.5 * delta.abs()
            };
            let kind = if reverts {
                FeatureKind::AbruptChange
            } else {
                FeatureKind::Jump
            };
            out.push((i + 1, kind));
        }
    }

    out.sort_by_key(|(i, kind)| (*i, *kind as usize));
    Ok(out
        .into_iter()
        .map(|(i, kind)| LocalFeature {
            kind,
            index: i + 1,
            value: xs[i],
            z_score: z(i),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testdata::iops_series;

    #[test]
    fn iops_outlier_triggers_at_2_5_sigma_but_not_3() {
        let feats = detect_local_features(&iops_series(), 2.5).unwrap();
        let outliers: Vec<_> = feats
            .iter()
            .filter(|f| f.kind == FeatureKind::Outlier)
            .collect();
        assert_eq!(outliers.len(), 1);
        assert_eq!(outliers[0].index, 13);
        assert_eq!(outliers[0].value, 7.0);
        assert!(feats
            .iter()
            .any(|f| f.kind == FeatureKind::Spike && f.index == 13));

        let feats3 = detect_local_features(&iops_series(), 3.0).unwrap();
        assert!(!feats3.iter().any(|f| f.kind == FeatureKind::Outlier));
    }

    #[test]
    fn iops_drop_and_rebound_flagged_as_abrupt() {
        let feats = detect_local_features(&iops_series(), 3.0).unwrap();
        // Drop to 7.0 at 1-based index 13 reverts at index 14.
        assert!(feats
            .iter()
            .any(|f| f.kind == FeatureKind::AbruptChange && f.index == 13));
    }

    #[test]
    fn monotone_series_has_no_extrema() {
        let s = TimeSeries::new((0..10).map(f64::from).collect()).unwrap();
        let feats = detect_local_features(&s, 3.0).unwrap();
        assert!(!feats
            .iter()
            .any(|f| matches!(f.kind, FeatureKind::Peak | FeatureKind::Trough)));
    }

    #[test]
    fn level_shift_is_a_jump() {
        let mut v = vec![1.0, 1.2, 0.9, 1.1, 1.0, 0.8];
        v.extend([9.0, 9.2, 8.9, 9.1, 9.0, 9.1]);
        let s = TimeSeries::new(v).unwrap();
        let feats = detect_local_features(&s, 10.0).unwrap();
        assert!(feats
            .iter()
            .any(|f| f.kind == FeatureKind::Jump && f.index == 7));
        assert!(!feats.iter().any(|f| f.kind == FeatureKind::AbruptChange));
    }

    #[test]
    fn indexes_are_one_based_and_sorted() {
        let feats = detect_local_features(&iops_series(), 2.5).unwrap();
        assert!(feats.windows(2).all(|w| w[0].index <= w[1].index));
        assert!(feats.iter().all(|f| f.index >= 1 && f.index <= 16));
    }

    #[test]
    fn invalid_inputs_rejected() {
        let s = TimeSeries::new(vec![1.0, 2.0]).unwrap();
        assert!(detect_local_features(&s, 2.0).is_err());
        let ok = TimeSeries::new(vec![1.0, 2.0, 3.0]).unwrap();
        assert!(detect_local_features(&ok, 0.0).is_err());
    }
}
