//! Pairwise similarity and distance measures between two single-channel
//! series.
//!
//! Histogram-based measures (KL divergence, mutual information) use 10 bins;
//! KL adds 1e-9 smoothing mass per bin. Hamming, Jaccard and edit distance
//! operate on the sign-of-first-difference symbolization of the inputs.
//! Lengths must match for every kind except DTW, EMD, and edit distance.

use serde::{Deserialize, Serialize};

use crate::series::{AnalyticsError, TimeSeries};
use crate::stats::is_zero_variance;

const HIST_BINS: usize = 10;
const KL_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasureKind {
    Pearson,
    Covariance,
    Euclidean,
    Manhattan,
    Cosine,
    Dtw,
    KlDivergence,
    Emd,
    MutualInfo,
    GrangerF,
    Hamming,
    Jaccard,
    Mahalanobis,
    EditDistance,
}

impl MeasureKind {
    /// Kinds that require equal-length inputs.
    pub fn is_length_strict(self) -> bool {
        !matches!(self, Self::Dtw | Self::Emd | Self::EditDistance)
    }
}

pub fn pairwise_measure(
    a: &TimeSeries,
    b: &TimeSeries,
    kind: MeasureKind,
) -> Result<f64, AnalyticsError> {
    let xs = a.single_channel()?;
    let ys = b.single_channel()?;
    if kind.is_length_strict() && xs.len() != ys.len() {
        return Err(AnalyticsError::LengthMismatch(xs.len(), ys.len()));
    }
    match kind {
        MeasureKind::Pearson => pearson(xs, ys),
        MeasureKind::Covariance => Ok(covariance(xs, ys)),
        MeasureKind::Euclidean => Ok(xs
            .iter()
            .zip(ys)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()),
        MeasureKind::Manhattan => Ok(xs.iter().zip(ys).map(|(x, y)| (x - y).abs()).sum()),
        MeasureKind::Cosine => cosine(xs, ys),
        MeasureKind::Dtw => Ok(dtw(xs, ys)),
        MeasureKind::KlDivergence => Ok(kl_divergence(xs, ys)),
        MeasureKind::Emd => Ok(emd(xs, ys)),
        MeasureKind::MutualInfo => Ok(mutual_info(xs, ys)),
        MeasureKind::GrangerF => granger_f(xs, ys),
        MeasureKind::Hamming => Ok(hamming(&symbolize(xs), &symbolize(ys))),
        MeasureKind::Jaccard => Ok(jaccard(&symbolize(xs), &symbolize(ys))),
        MeasureKind::Mahalanobis => mahalanobis(xs, ys),
        MeasureKind::EditDistance => Ok(edit_distance(&symbolize(xs), &symbolize(ys))),
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn population_var(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64
}

fn covariance(xs: &[f64], ys: &[f64]) -> f64 {
    let (mx, my) = (mean(xs), mean(ys));
    xs.iter()
        .zip(ys)
        .map(|(x, y)| (x - mx) * (y - my))
        .sum::<f64>()
        / xs.len() as f64
}

fn range_of(xs: &[f64]) -> (f64, f64) {
    let min = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (min, max)
}

fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64, AnalyticsError> {
    let (vx, vy) = (population_var(xs), population_var(ys));
    let (min_x, max_x) = range_of(xs);
    let (min_y, max_y) = range_of(ys);
    if is_zero_variance(vx, min_x, max_x) || is_zero_variance(vy, min_y, max_y) {
        return Err(AnalyticsError::DegenerateInput(
            "pearson requires nonzero variance in both inputs".into(),
        ));
    }
    Ok(covariance(xs, ys) / (vx.sqrt() * vy.sqrt()))
}

fn cosine(xs: &[f64], ys: &[f64]) -> Result<f64, AnalyticsError> {
    let nx: f64 = xs.iter().map(|x| x * x).sum::<f64>().sqrt();
    let ny: f64 = ys.iter().map(|y| y * y).sum::<f64>().sqrt();
    if nx == 0.0 || ny == 0.0 {
        return Err(AnalyticsError::DegenerateInput(
            "cosine is undefined for a zero vector".into(),
        ));
    }
    Ok(xs.iter().zip(ys).map(|(x, y)| x * y).sum::<f64>() / (nx * ny))
}

/// Classic dynamic-time-warping cost with absolute-difference local cost and
/// a full warping window.
fn dtw(xs: &[f64], ys: &[f64]) -> f64 {
    let (n, m) = (xs.len(), ys.len());
    let mut prev = vec![f64::INFINITY; m + 1];
    let mut curr = vec![f64::INFINITY; m + 1];
    prev[0] = 0.0;
    for i in 1..=n {
        curr[0] = f64::INFINITY;
        for j in 1..=m {
            let cost = (xs[i - 1] - ys[j - 1]).abs();
            curr[j] = cost + prev[j].min(curr[j - 1]).min(prev[j - 1]);
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[m]
}

fn histogram(xs: &[f64], min: f64, max: f64) -> [f64; HIST_BINS] {
    let mut counts = [0.0; HIST_BINS];
    let range = max - min;
    for &x in xs {
        let bin = if range == 0.0 {
            0
        } else {
            (((x - min) / range) * HIST_BINS as f64).floor() as usize
        };
        counts[bin.min(HIST_BINS - 1)] += 1.0;
    }
    counts
}

/// KL(P || Q) over shared 10-bin histograms with epsilon smoothing.
fn kl_divergence(xs: &[f64], ys: &[f64]) -> f64 {
    let (min_x, max_x) = range_of(xs);
    let (min_y, max_y) = range_of(ys);
    let (min, max) = (min_x.min(min_y), max_x.max(max_y));
    let ca = histogram(xs, min, max);
    let cb = histogram(ys, min, max);
    let na = xs.len() as f64 + HIST_BINS as f64 * KL_EPS;
    let nb = ys.len() as f64 + HIST_BINS as f64 * KL_EPS;
    let mut kl = 0.0;
    for i in 0..HIST_BINS {
        let p = (ca[i] + KL_EPS) / na;
        let q = (cb[i] + KL_EPS) / nb;
        kl += p * (p / q).ln();
    }
    kl.max(0.0)
}

/// First Wasserstein distance between the empirical distributions, computed
/// as the integral of the absolute CDF difference. For equal sample counts
/// this equals the L1 distance between the sorted samples scaled by 1/n.
fn emd(xs: &[f64], ys: &[f64]) -> f64 {
    let mut a: Vec<f64> = xs.to_vec();
    let mut b: Vec<f64> = ys.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let mut grid: Vec<f64> = a.iter().chain(b.iter()).copied().collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let cdf = |sorted: &[f64], x: f64| {
        // count of samples <= x
        sorted.partition_point(|v| *v <= x) as f64 / sorted.len() as f64
    };
    let mut total = 0.0;
    for w in grid.windows(2) {
        total += (cdf(&a, w[0]) - cdf(&b, w[0])).abs() * (w[1] - w[0]);
    }
    total
}

/// Mutual information over a 10x10 joint histogram, each margin binned over
/// its own range. Zero cells contribute nothing.
fn mutual_info(xs: &[f64], ys: &[f64]) -> f64 {
    let (min_x, max_x) = range_of(xs);
    let (min_y, max_y) = range_of(ys);
    let n = xs.len() as f64;
    let bin = |x: f64, min: f64, max: f64| {
        if max == min {
            0
        } else {
            ((((x - min) / (max - min)) * HIST_BINS as f64).floor() as usize).min(HIST_BINS - 1)
        }
    };
    let mut joint = [[0.0f64; HIST_BINS]; HIST_BINS];
    for (&x, &y) in xs.iter().zip(ys) {
        joint[bin(x, min_x, max_x)][bin(y, min_y, max_y)] += 1.0;
    }
    let mut px = [0.0; HIST_BINS];
    let mut py = [0.0; HIST_BINS];
    for i in 0..HIST_BINS {
        for j in 0..HIST_BINS {
            px[i] += joint[i][j] / n;
            py[j] += joint[i][j] / n;
        }
    }
    let mut mi = 0.0;
    for i in 0..HIST_BINS {
        for j in 0..HIST_BINS {
            let pij = joint[i][j] / n;
            if pij > 0.0 {
                mi += pij * (pij / (px[i] * py[j])).ln();
            }
        }
    }
    mi.max(0.0)
}

/// Solve a small symmetric positive system by Gaussian elimination with
/// partial pivoting. Returns None when the system is numerically singular.
fn solve(mut m: Vec<Vec<f64>>, mut rhs: Vec<f64>) -> Option<Vec<f64>> {
    let n = rhs.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
        if m[pivot][col].abs() < 1e-12 {
            return None;
        }
        m.swap(col, pivot);
        rhs.swap(col, pivot);
        let pivot_row = m[col].clone();
        for row in col + 1..n {
            let f = m[row][col] / pivot_row[col];
            for (cell, p) in m[row][col..].iter_mut().zip(&pivot_row[col..]) {
                *cell -= f * p;
            }
            rhs[row] -= f * rhs[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut s = rhs[row];
        for k in row + 1..n {
            s -= m[row][k] * x[k];
        }
        x[row] = s / m[row][row];
    }
    Some(x)
}

fn ols_rss(rows: &[Vec<f64>], targets: &[f64]) -> Option<f64> {
    let k = rows[0].len();
    let mut xtx = vec![vec![0.0; k]; k];
    let mut xty = vec![0.0; k];
    for (row, &t) in rows.iter().zip(targets) {
        for i in 0..k {
            for j in 0..k {
                xtx[i][j] += row[i] * row[j];
            }
            xty[i] += row[i] * t;
        }
    }
    let beta = solve(xtx, xty)?;
    let mut rss = 0.0;
    for (row, &t) in rows.iter().zip(targets) {
        let fit: f64 = row.iter().zip(&beta).map(|(r, b)| r * b).sum();
        rss += (t - fit) * (t - fit);
    }
    Some(rss)
}

/// Lag-1 Granger F-statistic for the hypothesis that `a` helps predict `b`:
/// compares `b[t] ~ 1 + b[t-1]` against `b[t] ~ 1 + b[t-1] + a[t-1]`.
fn granger_f(a: &[f64], b: &[f64]) -> Result<f64, AnalyticsError> {
    let n = a.len();
    if n < 5 {
        return Err(AnalyticsError::DegenerateInput(
            "granger_f needs at least 5 samples".into(),
        ));
    }
    let t_obs = n - 1;
    let mut rows_r = Vec::with_capacity(t_obs);
    let mut rows_u = Vec::with_capacity(t_obs);
    let mut targets = Vec::with_capacity(t_obs);
    for t in 1..n {
        rows_r.push(vec![1.0, b[t - 1]]);
        rows_u.push(vec![1.0, b[t - 1], a[t - 1]]);
        targets.push(b[t]);
    }
    let rss_r = ols_rss(&rows_r, &targets).ok_or_else(|| {
        AnalyticsError::DegenerateInput("granger_f restricted regression is singular".into())
    })?;
    let rss_u = ols_rss(&rows_u, &targets).ok_or_else(|| {
        AnalyticsError::DegenerateInput("granger_f unrestricted regression is singular".into())
    })?;
    let scale: f64 = targets.iter().map(|t| t * t).sum::<f64>().max(1.0);
    if rss_u <= 1e-12 * scale {
        return Err(AnalyticsError::DegenerateInput(
            "granger_f unrestricted regression fits perfectly".into(),
        ));
    }
    Ok(((rss_r - rss_u).max(0.0) / 1.0) / (rss_u / (t_obs - 3) as f64))
}

/// Sign of the first difference: the shared symbolization for the symbolic
/// measures, since those distances are not defined on raw reals.
fn symbolize(xs: &[f64]) -> Vec<i8> {
    xs.windows(2)
        .map(|w| {
            let d = w[1] - w[0];
            if d > 0.0 {
                1
            } else if d < 0.0 {
                -1
            } else {
                0
            }
        })
        .collect()
}

/// Fraction of differing positions between the two symbol sequences.
fn hamming(a: &[i8], b: &[i8]) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    let diff = a.iter().zip(b).filter(|(x, y)| x != y).count();
    diff as f64 / a.len() as f64
}

/// Jaccard similarity over position-symbol pairs: matching positions over
/// the union of both sequences' positions.
fn jaccard(a: &[i8], b: &[i8]) -> f64 {
    if a.is_empty() {
        return 1.0;
    }
    let matches = a.iter().zip(b).filter(|(x, y)| x == y).count() as f64;
    let union = (2 * a.len()) as f64 - matches;
    matches / union
}

fn edit_distance(a: &[i8], b: &[i8]) -> f64 {
    let (n, m) = (a.len(), b.len());
    let mut prev: Vec<usize> = (0..=m).collect();
    let mut curr = vec![0usize; m + 1];
    for i in 1..=n {
        curr[0] = i;
        for j in 1..=m {
            let sub = prev[j - 1] + usize::from(a[i - 1] != b[j - 1]);
            curr[j] = sub.min(prev[j] + 1).min(curr[j - 1] + 1);
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[m] as f64
}

/// Root-mean-square difference between the series, whitened by the variance
/// of the difference implied by the 2x2 covariance of the joint sample:
/// `sqrt(mean((a-b)^2) / (var(a) + var(b) - 2 cov(a,b)))`.
fn mahalanobis(xs: &[f64], ys: &[f64]) -> Result<f64, AnalyticsError> {
    if xs == ys {
        return Ok(0.0);
    }
    let (vx, vy) = (population_var(xs), population_var(ys));
    let (min_x, max_x) = range_of(xs);
    let (min_y, max_y) = range_of(ys);
    if is_zero_variance(vx, min_x, max_x) || is_zero_variance(vy, min_y, max_y) {
        return Err(AnalyticsError::DegenerateInput(
            "mahalanobis requires nonzero variance in both inputs".into(),
        ));
    }
    let var_diff = vx + vy - 2.0 * covariance(xs, ys);
    let scale = vx.max(vy);
    if var_diff <= 1e-12 * scale {
        return Err(AnalyticsError::DegenerateInput(
            "mahalanobis is undefined for perfectly correlated inputs".into(),
        ));
    }
    let msd = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / xs.len() as f64;
    Ok((msd / var_diff).sqrt())
}
