#ifndef TSADKIT_H
#define TSADKIT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible call.
 */
typedef enum TsadStatus {
  TsadStatus_Ok = 0,
  TsadStatus_NullPointer = 1,
  TsadStatus_InvalidArgument = 2,
  TsadStatus_DegenerateInput = 3,
  TsadStatus_InvalidUtf8 = 4,
  TsadStatus_ParseFailure = 5,
} TsadStatus;

/**
 * Anomaly-detection verdict parsed from free text.
 */
typedef enum TsadAdLabel {
  TsadAdLabel_Normal = 0,
  TsadAdLabel_Anomalous = 1,
  TsadAdLabel_Unparsed = 2,
} TsadAdLabel;

/**
 * Which numeric-extraction contract applies.
 */
typedef enum TsadNumericTask {
  TsadNumericTask_Forecast = 0,
  TsadNumericTask_Imputation = 1,
} TsadNumericTask;

/**
 * Opaque single-channel series handle.
 */
typedef struct TsadSeries TsadSeries;

/**
 * Population statistics of a series. `degenerate` is 1 when the series has
 * numerically zero variance (skewness is reported as 0 in that case).
 */
typedef struct TsadStats {
  double mean;
  double variance;
  double std_dev;
  double minimum;
  double maximum;
  double skewness;
  double mode;
  double unit_root_stat;
  uint8_t degenerate;
} TsadStats;

/**
 * Confusion-matrix derived percentages, rounded to two decimals. A metric
 * with a zero denominator is reported as 0.
 */
typedef struct TsadConfusionMetrics {
  double accuracy;
  double precision;
  double recall;
  double f1;
  double fpr;
} TsadConfusionMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Build a series from `len` samples. On success writes a handle that must
 * be released with [`tsad_series_free`].
 *
 * # Safety
 * `values` must point to `len` readable doubles; `out` must be a valid
 * out-pointer.
 */
enum TsadStatus tsad_series_new(const double *values, uintptr_t len, struct TsadSeries **out);

/**
 * Release a series handle; a NULL handle is a no-op.
 *
 * # Safety
 * `series` must have come from [`tsad_series_new`] and not been freed.
 */
void tsad_series_free(struct TsadSeries *series);

/**
 * Number of samples in the series.
 *
 * # Safety
 * `series` must be a live handle.
 */
enum TsadStatus tsad_series_len(const struct TsadSeries *series, uintptr_t *out);

/**
 * Population statistics of the series (length >= 2 required).
 *
 * # Safety
 * `series` must be a live handle and `out` a valid out-pointer.
 */
enum TsadStatus tsad_series_stats(const struct TsadSeries *series, struct TsadStats *out);

/**
 * Z-scores of every sample under the population moments. `out` must hold
 * exactly as many doubles as the series has samples.
 *
 * # Safety
 * `series` must be a live handle; `out` must point to `len` writable
 * doubles.
 */
enum TsadStatus tsad_series_zscores(const struct TsadSeries *series, double *out, uintptr_t len);

/**
 * Composite quality score `S` from the feedback components. Pass
 * `has_d3 = 0` when no human preference score exists; the LLM-feedback
 * sum then stands alone.
 *
 * # Safety
 * `out` must be a valid out-pointer.
 */
enum TsadStatus tsad_composite_score(double d0,
                                     double d1,
                                     double d2,
                                     double d3,
                                     uint8_t has_d3,
                                     double epsilon,
                                     double *out);

/**
 * Continuous preference weight `alpha = sigmoid(kappa * (score - eta))`.
 *
 * # Safety
 * `out` must be a valid out-pointer.
 */
enum TsadStatus tsad_soft_label(double score, double eta, double kappa, double *out);

/**
 * Preference loss on the log-probability ratio
 * `tau = logp_policy - logp_ref` under weight `alpha` and strength `beta`.
 *
 * # Safety
 * `out` must be a valid out-pointer.
 */
enum TsadStatus tsad_preference_loss(double logp_policy,
                                     double logp_ref,
                                     double alpha,
                                     double beta,
                                     double *out);

/**
 * Resolve an anomaly-detection verdict from model output text.
 *
 * # Safety
 * `text` must be a NUL-terminated string.
 */
enum TsadStatus tsad_parse_ad_label(const char *text, enum TsadAdLabel *out);

/**
 * Extract a numeric prediction list from model output text. On success the
 * values are heap-allocated; release them with [`tsad_values_free`]. An
 * empty result (no parse, or a failed imputation) returns
 * `TSAD_STATUS_PARSE_FAILURE` with `out_len = 0`.
 *
 * # Safety
 * `text` must be NUL-terminated; `out_values` and `out_len` must be valid
 * out-pointers.
 */
enum TsadStatus tsad_parse_numeric_list(const char *text,
                                        enum TsadNumericTask task,
                                        double **out_values,
                                        uintptr_t *out_len);

/**
 * Release a buffer returned by [`tsad_parse_numeric_list`].
 *
 * # Safety
 * `values`/`len` must match a successful earlier call exactly.
 */
void tsad_values_free(double *values, uintptr_t len);

/**
 * Accuracy/precision/recall/F1/FPR percentages from confusion counts.
 *
 * # Safety
 * `out` must be a valid out-pointer.
 */
enum TsadStatus tsad_confusion_metrics(uint64_t tp,
                                       uint64_t tn,
                                       uint64_t fp,
                                       uint64_t fn_,
                                       struct TsadConfusionMetrics *out);

/**
 * Library version as a static NUL-terminated string.
 */
const char *tsad_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TSADKIT_H */
