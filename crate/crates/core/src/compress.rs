//! Compact representations: full DFT spectrum, one-level Haar wavelet,
//! per-window means and modes.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::series::{AnalyticsError, TimeSeries};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompressionKind {
    Dft,
    DwtHaar,
    SegmentMean { window: usize },
    SegmentMode { window: usize },
}

impl CompressionKind {
    pub fn window(&self) -> Option<usize> {
        match self {
            Self::SegmentMean { window } | Self::SegmentMode { window } => Some(*window),
            _ => None,
        }
    }
}

/// Compressed form of a series.
///
/// * `dft`: the full unnormalized complex spectrum, interleaved re/im
///   (`coefficients.len() == 2 * n`);
/// * `dwt_haar`: one decomposition level after zero-padding to the next
///   power of two — approximation coefficients first, then details; the
///   number of padded zeros is recorded so the inverse can drop them;
/// * `segment_mean` / `segment_mode`: `ceil(n / window)` per-window
///   aggregates, the last window possibly partial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressedRepr {
    pub kind: CompressionKind,
    pub coefficients: Vec<f64>,
    pub padding: usize,
}

pub fn compress(
    series: &TimeSeries,
    kind: CompressionKind,
) -> Result<CompressedRepr, AnalyticsError> {
    let xs = series.single_channel()?;
    match kind {
        CompressionKind::Dft => Ok(CompressedRepr {
            kind,
            coefficients: dft(xs),
            padding: 0,
        }),
        CompressionKind::DwtHaar => {
            let (coefficients, padding) = haar_forward(xs);
            Ok(CompressedRepr {
                kind,
                coefficients,
                padding,
            })
        }
        CompressionKind::SegmentMean { window } => {
            check_window(window, xs.len())?;
            let coefficients = xs
                .chunks(window)
                .map(|c| c.iter().sum::<f64>() / c.len() as f64)
                .collect();
            Ok(CompressedRepr {
                kind,
                coefficients,
                padding: 0,
            })
        }
        CompressionKind::SegmentMode { window } => {
            check_window(window, xs.len())?;
            let coefficients = xs.chunks(window).map(mode_of).collect();
            Ok(CompressedRepr {
                kind,
                coefficients,
                padding: 0,
            })
        }
    }
}

fn check_window(window: usize, len: usize) -> Result<(), AnalyticsError> {
    if window == 0 || window > len {
        return Err(AnalyticsError::InvalidWindow { window, len });
    }
    Ok(())
}

fn mode_of(xs: &[f64]) -> f64 {
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut best = sorted[0];
    let mut best_count = 0;
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

fn dft(xs: &[f64]) -> Vec<f64> {
    let mut buf: Vec<Complex<f64>> = xs.iter().map(|&x| Complex::new(x, 0.0)).collect();
    FftPlanner::new()
        .plan_fft_forward(buf.len())
        .process(&mut buf);
    buf.iter().flat_map(|c| [c.re, c.im]).collect()
}

fn haar_forward(xs: &[f64]) -> (Vec<f64>, usize) {
    let padded_len = xs.len().next_power_of_two();
    let padding = padded_len - xs.len();
    let mut padded = xs.to_vec();
    padded.resize(padded_len, 0.0);
    let half = padded_len / 2;
    let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
    let mut coefficients = vec![0.0; padded_len];
    for k in 0..half {
        coefficients[k] = (padded[2 * k] + padded[2 * k + 1]) * inv_sqrt2;
        coefficients[half + k] = (padded[2 * k] - padded[2 * k + 1]) * inv_sqrt2;
    }
    (coefficients, padding)
}

/// Reconstruct the original samples from a one-level Haar representation.
pub fn haar_inverse(repr: &CompressedRepr) -> Result<Vec<f64>, AnalyticsError> {
    if !matches!(repr.kind, CompressionKind::DwtHaar) {
        return Err(AnalyticsError::DegenerateInput(
            "haar_inverse needs a dwt_haar representation".into(),
        ));
    }
    let padded_len = repr.coefficients.len();
    if padded_len == 0 || !padded_len.is_multiple_of(2) {
        return Err(AnalyticsError::DegenerateInput(
            "haar coefficients must come in approximation/detail pairs".into(),
        ));
    }
    let half = padded_len / 2;
    let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
    let mut out = vec![0.0; padded_len];
    for k in 0..half {
        let a = repr.coefficients[k];
        let d = repr.coefficients[half + k];
        out[2 * k] = (a + d) * inv_sqrt2;
        out[2 * k + 1] = (a - d) * inv_sqrt2;
    }
    out.truncate(padded_len - repr.padding);
    Ok(out)
}

/// Squared DFT magnitudes summed over all bins, divided by n. Equals the
/// energy of the input per Parseval.
pub fn dft_energy(repr: &CompressedRepr) -> Result<f64, AnalyticsError> {
    if !matches!(repr.kind, CompressionKind::Dft) {
        return Err(AnalyticsError::DegenerateInput(
            "dft_energy needs a dft representation".into(),
        ));
    }
    let n = repr.coefficients.len() / 2;
    let sum: f64 = repr
        .coefficients
        .chunks_exact(2)
        .map(|c| c[0] * c[0] + c[1] * c[1])
        .sum();
    Ok(sum / n as f64)
}
