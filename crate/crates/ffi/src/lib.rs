//! C ABI over the toolkit's pure pieces: series statistics, preference
//! scoring and loss, verdict/numeric parsing, and confusion metrics.
//!
//! Conventions: every fallible function returns a [`TsadStatus`] and writes
//! its result through out-pointers; handles are opaque and freed with their
//! matching `_free` function; strings are NUL-terminated UTF-8. The header
//! is generated into `include/tsadkit.h` at build time.

use std::ffi::{c_char, CStr};

use tsadkit::eval::{confusion_metrics, ConfusionCounts};
use tsadkit::parse::{parse_ad_label, parse_numeric_list, AdLabel, NumericTask};
use tsadkit::stats::{compute_statistics, zscores};
use tsadkit::tkto::{composite_score, loss_terms, soft_label, FeedbackVector};
use tsadkit::TimeSeries;

/// Status codes returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TsadStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DegenerateInput = 3,
    InvalidUtf8 = 4,
    ParseFailure = 5,
}

/// Opaque single-channel series handle.
pub struct TsadSeries {
    inner: TimeSeries,
}

/// Population statistics of a series. `degenerate` is 1 when the series has
/// numerically zero variance (skewness is reported as 0 in that case).
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct TsadStats {
    pub mean: f64,
    pub variance: f64,
    pub std_dev: f64,
    pub minimum: f64,
    pub maximum: f64,
    pub skewness: f64,
    pub mode: f64,
    pub unit_root_stat: f64,
    pub degenerate: u8,
}

/// Anomaly-detection verdict parsed from free text.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TsadAdLabel {
    Normal = 0,
    Anomalous = 1,
    Unparsed = 2,
}

/// Which numeric-extraction contract applies.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TsadNumericTask {
    Forecast = 0,
    Imputation = 1,
}

/// Confusion-matrix derived percentages, rounded to two decimals. A metric
/// with a zero denominator is reported as 0.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct TsadConfusionMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub fpr: f64,
}

/// Build a series from `len` samples. On success writes a handle that must
/// be released with [`tsad_series_free`].
///
/// # Safety
/// `values` must point to `len` readable doubles; `out` must be a valid
/// out-pointer.
#[no_mangle]
pub unsafe extern "C" fn tsad_series_new(
    values: *const f64,
    len: usize,
    out: *mut *mut TsadSeries,
) -> TsadStatus {
    if values.is_null() || out.is_null() {
        return TsadStatus::NullPointer;
    }
    let slice = std::slice::from_raw_parts(values, len);
    match TimeSeries::new(slice.to_vec()) {
        Ok(inner) => {
            *out = Box::into_raw(Box::new(TsadSeries { inner }));
            TsadStatus::Ok
        }
        Err(_) => TsadStatus::InvalidArgument,
    }
}

/// Release a series handle; a NULL handle is a no-op.
///
/// # Safety
/// `series` must have come from [`tsad_series_new`] and not been freed.
#[no_mangle]
pub unsafe extern "C" fn tsad_series_free(series: *mut TsadSeries) {
    if !series.is_null() {
        drop(Box::from_raw(series));
    }
}

/// Number of samples in the series.
///
/// # Safety
/// `series` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn tsad_series_len(series: *const TsadSeries, out: *mut usize) -> TsadStatus {
    if series.is_null() || out.is_null() {
        return TsadStatus::NullPointer;
    }
    *out = (*series).inner.len();
    TsadStatus::Ok
}

/// Population statistics of the series (length >= 2 required).
///
/// # Safety
/// `series` must be a live handle and `out` a valid out-pointer.
#[no_mangle]
pub unsafe extern "C" fn tsad_series_stats(
    series: *const TsadSeries,
    out: *mut TsadStats,
) -> TsadStatus {
    if series.is_null() || out.is_null() {
        return TsadStatus::NullPointer;
    }
    match compute_statistics(&(*series).inner) {
        Ok(stats) => {
            *out = TsadStats {
                mean: stats.mean,
                variance: stats.variance,
                std_dev: stats.std_dev,
                minimum: stats.minimum,
                maximum: stats.maximum,
                skewness: stats.skewness,
                mode: stats.mode,
                unit_root_stat: stats.unit_root_stat,
                degenerate: u8::from(stats.degenerate),
            };
            TsadStatus::Ok
        }
        Err(_) => TsadStatus::DegenerateInput,
    }
}

/// Z-scores of every sample under the population moments. `out` must hold
/// exactly as many doubles as the series has samples.
///
/// # Safety
/// `series` must be a live handle; `out` must point to `len` writable
/// doubles.
#[no_mangle]
pub unsafe extern "C" fn tsad_series_zscores(
    series: *const TsadSeries,
    out: *mut f64,
    len: usize,
) -> TsadStatus {
    if series.is_null() || out.is_null() {
        return TsadStatus::NullPointer;
    }
    if len != (*series).inner.len() {
        return TsadStatus::InvalidArgument;
    }
    match zscores(&(*series).inner) {
        Ok(values) => {
            std::ptr::copy_nonoverlapping(values.as_ptr(), out, values.len());
            TsadStatus::Ok
        }
        Err(_) => TsadStatus::DegenerateInput,
    }
}

/// Composite quality score `S` from the feedback components. Pass
/// `has_d3 = 0` when no human preference score exists; the LLM-feedback
/// sum then stands alone.
///
/// # Safety
/// `out` must be a valid out-pointer.
#[no_mangle]
pub unsafe extern "C" fn tsad_composite_score(
    d0: f64,
    d1: f64,
    d2: f64,
    d3: f64,
    has_d3: u8,
    epsilon: f64,
    out: *mut f64,
) -> TsadStatus {
    if out.is_null() {
        return TsadStatus::NullPointer;
    }
    let feedback = match FeedbackVector::new(d0, d1, d2, (has_d3 != 0).then_some(d3)) {
        Ok(f) => f,
        Err(_) => return TsadStatus::InvalidArgument,
    };
    match composite_score(&feedback, epsilon) {
        Ok(score) => {
            *out = score;
            TsadStatus::Ok
        }
        Err(_) => TsadStatus::InvalidArgument,
    }
}

/// Continuous preference weight `alpha = sigmoid(kappa * (score - eta))`.
///
/// # Safety
/// `out` must be a valid out-pointer.
#[no_mangle]
pub unsafe extern "C" fn tsad_soft_label(
    score: f64,
    eta: f64,
    kappa: f64,
    out: *mut f64,
) -> TsadStatus {
    if out.is_null() {
        return TsadStatus::NullPointer;
    }
    if !(kappa.is_finite() && kappa > 0.0) || !score.is_finite() || !eta.is_finite() {
        return TsadStatus::InvalidArgument;
    }
    *out = soft_label(score, eta, kappa);
    TsadStatus::Ok
}

/// Preference loss on the log-probability ratio
/// `tau = logp_policy - logp_ref` under weight `alpha` and strength `beta`.
///
/// # Safety
/// `out` must be a valid out-pointer.
#[no_mangle]
pub unsafe extern "C" fn tsad_preference_loss(
    logp_policy: f64,
    logp_ref: f64,
    alpha: f64,
    beta: f64,
    out: *mut f64,
) -> TsadStatus {
    if out.is_null() {
        return TsadStatus::NullPointer;
    }
    if !logp_policy.is_finite() || !logp_ref.is_finite() {
        return TsadStatus::InvalidArgument;
    }
    if !(0.0..=1.0).contains(&alpha) || !(beta.is_finite() && beta > 0.0) {
        return TsadStatus::InvalidArgument;
    }
    *out = loss_terms(logp_policy - logp_ref, alpha, beta);
    TsadStatus::Ok
}

/// Resolve an anomaly-detection verdict from model output text.
///
/// # Safety
/// `text` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn tsad_parse_ad_label(
    text: *const c_char,
    out: *mut TsadAdLabel,
) -> TsadStatus {
    if text.is_null() || out.is_null() {
        return TsadStatus::NullPointer;
    }
    let Ok(text) = CStr::from_ptr(text).to_str() else {
        return TsadStatus::InvalidUtf8;
    };
    *out = match parse_ad_label(text) {
        AdLabel::Normal => TsadAdLabel::Normal,
        AdLabel::Anomalous => TsadAdLabel::Anomalous,
        AdLabel::Unparsed => TsadAdLabel::Unparsed,
    };
    TsadStatus::Ok
}

/// Extract a numeric prediction list from model output text. On success the
/// values are heap-allocated; release them with [`tsad_values_free`]. An
/// empty result (no parse, or a failed imputation) returns
/// `TSAD_STATUS_PARSE_FAILURE` with `out_len = 0`.
///
/// # Safety
/// `text` must be NUL-terminated; `out_values` and `out_len` must be valid
/// out-pointers.
#[no_mangle]
pub unsafe extern "C" fn tsad_parse_numeric_list(
    text: *const c_char,
    task: TsadNumericTask,
    out_values: *mut *mut f64,
    out_len: *mut usize,
) -> TsadStatus {
    if text.is_null() || out_values.is_null() || out_len.is_null() {
        return TsadStatus::NullPointer;
    }
    let Ok(text) = CStr::from_ptr(text).to_str() else {
        return TsadStatus::InvalidUtf8;
    };
    let task = match task {
        TsadNumericTask::Forecast => NumericTask::Forecast,
        TsadNumericTask::Imputation => NumericTask::Imputation,
    };
    let values = parse_numeric_list(text, task);
    *out_len = values.len();
    if values.is_empty() {
        *out_values = std::ptr::null_mut();
        return TsadStatus::ParseFailure;
    }
    let boxed = values.into_boxed_slice();
    *out_values = Box::into_raw(boxed) as *mut f64;
    TsadStatus::Ok
}

/// Release a buffer returned by [`tsad_parse_numeric_list`].
///
/// # Safety
/// `values`/`len` must match a successful earlier call exactly.
#[no_mangle]
pub unsafe extern "C" fn tsad_values_free(values: *mut f64, len: usize) {
    if !values.is_null() {
        drop(Box::from_raw(std::ptr::slice_from_raw_parts_mut(
            values, len,
        )));
    }
}

/// Accuracy/precision/recall/F1/FPR percentages from confusion counts.
///
/// # Safety
/// `out` must be a valid out-pointer.
#[no_mangle]
pub unsafe extern "C" fn tsad_confusion_metrics(
    tp: u64,
    tn: u64,
    fp: u64,
    fn_: u64,
    out: *mut TsadConfusionMetrics,
) -> TsadStatus {
    if out.is_null() {
        return TsadStatus::NullPointer;
    }
    let metrics = confusion_metrics(&ConfusionCounts::new(tp, tn, fp, fn_));
    *out = TsadConfusionMetrics {
        accuracy: metrics.accuracy,
        precision: metrics.precision,
        recall: metrics.recall,
        f1: metrics.f1,
        fpr: metrics.fpr,
    };
    TsadStatus::Ok
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn tsad_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}
