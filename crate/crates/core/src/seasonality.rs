//! Seasonality classification: autocorrelation period detection followed by
//! waveform template matching, with overrides for piecewise-constant and
//! white-noise series.

use serde::{Deserialize, Serialize};

use crate::series::{AnalyticsError, TimeSeries};
use crate::stats::is_zero_variance;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeasonalityClass {
    None,
    Sine,
    Square,
    Triangular,
    Sawtooth,
    Stepwise,
    Composite,
    Random,
    Segmented,
}

/// Calibration constants for the classifier. The defaults are the ones used
/// throughout the toolkit; both cutoffs are exposed because they are tuning
/// knobs, not derived quantities.
#[derive(Debug, Clone, Copy)]
pub struct SeasonalityConfig {
    /// Minimum autocorrelation a lag must reach to count as a period.
    pub autocorr_threshold: f64,
    /// Minimum normalized cross-correlation for a template to win.
    pub template_threshold: f64,
}

impl Default for SeasonalityConfig {
    fn default() -> Self {
        Self {
            autocorr_threshold: 0.5,
            template_threshold: 0.7,
        }
    }
}

/// Normalized autocorrelation for lags `0..=max_lag`.
fn autocorrelations(xs: &[f64], max_lag: usize) -> Vec<f64> {
    let n = xs.len();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let denom: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
    let mut acf = Vec::with_capacity(max_lag + 1);
    for lag in 0..=max_lag {
        if denom == 0.0 {
            acf.push(if lag == 0 { 1.0 } else { 0.0 });
            continue;
        }
        let mut num = 0.0;
        for t in 0..n - lag {
            num += (xs[t] - mean) * (xs[t + lag] - mean);
        }
        acf.push(num / denom);
    }
    acf
}

/// Upper 5% chi-squared critical values for 1..=10 degrees of freedom.
const CHI2_CRIT_05: [f64; 10] = [
    3.841, 5.991, 7.815, 9.488, 11.070, 12.592, 14.067, 15.507, 16.919, 18.307,
];

/// Ljung-Box test at the 5% level over up to 10 lags; true means the series
/// is indistinguishable from white noise.
fn is_white_noise(acf: &[f64], n: usize) -> bool {
    let h = (acf.len() - 1).min(10);
    if h == 0 {
        return true;
    }
    let nf = n as f64;
    let mut q = 0.0;
    for (lag, &r) in acf.iter().enumerate().take(h + 1).skip(1) {
        q += r * r / (nf - lag as f64);
    }
    q *= nf * (nf + 2.0);
    q < CHI2_CRIT_05[h - 1]
}

struct RunStructure {
    /// Run levels in series order.
    levels: Vec<f64>,
    /// Start index of each run.
    starts: Vec<usize>,
    /// Fraction of samples sitting in constant runs of length >= 2.
    coverage: f64,
    distinct_levels: usize,
}

fn run_structure(xs: &[f64]) -> RunStructure {
    let scale = xs.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1.0);
    let tol = 1e-9 * scale;
    let mut levels = Vec::new();
    let mut starts = Vec::new();
    let mut covered = 0usize;
    let mut i = 0;
    while i < xs.len() {
        let mut j = i + 1;
        while j < xs.len() && (xs[j] - xs[i]).abs() <= tol {
            j += 1;
        }
        levels.push(xs[i]);
        starts.push(i);
        if j - i >= 2 {
            covered += j - i;
        }
        i = j;
    }
    let mut sorted = levels.clone();
    sorted.sort_by(|a, b| a.total_cmp(b));
    sorted.dedup_by(|a, b| (*a - *b).abs() <= tol);
    RunStructure {
        distinct_levels: sorted.len(),
        coverage: covered as f64 / xs.len() as f64,
        levels,
        starts,
    }
}

fn is_monotone(levels: &[f64]) -> bool {
    levels.windows(2).all(|w| w[1] >= w[0]) || levels.windows(2).all(|w| w[1] <= w[0])
}

#[derive(Debug, Clone, Copy)]
enum Template {
    Sine,
    Square,
    Triangular,
    Sawtooth,
}

fn template_value(kind: Template, k: usize, period: usize) -> f64 {
    let phase = (k % period) as f64 / period as f64;
    match kind {
        Template::Sine => (2.0 * std::f64::consts::PI * phase).sin(),
        Template::Square => {
            if phase < 0.5 {
                1.0
            } else {
                -1.0
            }
        }
        Template::Triangular => 1.0 - 4.0 * (phase - 0.5).abs(),
        Template::Sawtooth => 2.0 * phase - 1.0,
    }
}

/// Pearson correlation of `xs` against the template tiled at `period`,
/// maximized over all phase shifts.
fn template_similarity(xs: &[f64], kind: Template, period: usize) -> f64 {
    let n = xs.len();
    let x_mean = xs.iter().sum::<f64>() / n as f64;
    let x_var: f64 = xs.iter().map(|x| (x - x_mean) * (x - x_mean)).sum();
    if x_var == 0.0 {
        return 0.0;
    }
    let mut best = f64::NEG_INFINITY;
    for shift in 0..period {
        let tv: Vec<f64> = (0..n)
            .map(|k| template_value(kind, k + shift, period))
            .collect();
        let t_mean = tv.iter().sum::<f64>() / n as f64;
        let t_var: f64 = tv.iter().map(|t| (t - t_mean) * (t - t_mean)).sum();
        if t_var == 0.0 {
            continue;
        }
        let num: f64 = xs
            .iter()
            .zip(&tv)
            .map(|(x, t)| (x - x_mean) * (t - t_mean))
            .sum();
        best = best.max(num / (x_var.sqrt() * t_var.sqrt()));
    }
    best
}

/// Dominant period: the smallest lag >= 2 that is a local autocorrelation
/// peak within 95% of the global maximum; falls back to the argmax.
fn dominant_period(acf: &[f64]) -> Option<(usize, f64)> {
    let max_lag = acf.len() - 1;
    if max_lag < 2 {
        return None;
    }
    let (mut best_lag, mut best_r) = (2, acf[2]);
    for (lag, &r) in acf.iter().enumerate().take(max_lag + 1).skip(3) {
        if r > best_r {
            best_r = r;
            best_lag = lag;
        }
    }
    for lag in 2..=max_lag {
        let left_ok = acf[lag] >= acf[lag - 1];
        let right_ok = lag == max_lag || acf[lag] >= acf[lag + 1];
        if left_ok && right_ok && acf[lag] >= 0.95 * best_r {
            return Some((lag, acf[lag]));
        }
    }
    Some((best_lag, best_r))
}

/// Classify with [`SeasonalityConfig::default`].
pub fn classify_seasonality(series: &TimeSeries) -> Result<SeasonalityClass, AnalyticsError> {
    classify_seasonality_with(series, &SeasonalityConfig::default())
}

pub fn classify_seasonality_with(
    series: &TimeSeries,
    cfg: &SeasonalityConfig,
) -> Result<SeasonalityClass, AnalyticsError> {
    let xs = series.single_channel()?;
    let n = xs.len();
    if n < 8 {
        return Err(AnalyticsError::DegenerateInput(
            "seasonality needs at least 8 samples".into(),
        ));
    }
    let min = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
    if is_zero_variance(var, min, max) {
        return Ok(SeasonalityClass::None);
    }

    let acf = autocorrelations(xs, n / 2);
    let Some((period, peak_r)) = dominant_period(&acf) else {
        return Ok(SeasonalityClass::None);
    };
    if peak_r <= cfg.autocorr_threshold {
        return Ok(SeasonalityClass::None);
    }

    // A detected peak can still be a small-sample artifact of noise.
    if is_white_noise(&acf, n) {
        return Ok(SeasonalityClass::Random);
    }

    // Piecewise-constant series never fit the smooth templates. Two-level
    // signals are left to the square template.
    let runs = run_structure(xs);
    if runs.coverage >= 0.9 && runs.distinct_levels >= 3 {
        let in_period: Vec<f64> = runs
            .starts
            .iter()
            .zip(&runs.levels)
            .filter(|(s, _)| **s < period)
            .map(|(_, l)| *l)
            .collect();
        let levels = if in_period.len() >= 2 {
            in_period
        } else {
            runs.levels.clone()
        };
        return Ok(if is_monotone(&levels) {
            SeasonalityClass::Stepwise
        } else {
            SeasonalityClass::Segmented
        });
    }

    let candidates = [
        (Template::Sine, SeasonalityClass::Sine),
        (Template::Square, SeasonalityClass::Square),
        (Template::Triangular, SeasonalityClass::Triangular),
        (Template::Sawtooth, SeasonalityClass::Sawtooth),
    ];
    let mut best_class = SeasonalityClass::Composite;
    let mut best_sim = f64::NEG_INFINITY;
    for (tpl, class) in candidates {
        let sim = template_similarity(xs, tpl, period);
        if sim > best_sim {
            best_sim = sim;
            best_class = class;
        }
    }
    if best_sim < cfg.template_threshold {
        return Ok(SeasonalityClass::Composite);
    }
    Ok(best_class)
}
