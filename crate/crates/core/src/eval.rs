//! Evaluation harness for model prediction dumps: per-sample parsing,
//! benchmark metrics, and optional LLM-judge scoring.
//!
//! Input is the prediction JSONL a generation run produces, one object per
//! line with fields `{prompt?, predict, label}`. "Anomalous" is the positive
//! class throughout. Unparseable predictions are never scored as wrong
//! verdicts; they count against the format score only.

use std::collections::BTreeMap;
use std::io::BufRead;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::backend::{Backend, BackendError, ChatMessage, ChatRequest, Role};
use crate::parse::{
    extract_json_payload, parse_ad_label, parse_numeric_list, AdLabel, NumericTask,
};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("no valid prediction records in {0}")]
    NoValidRecords(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("judge reply unparseable after retries")]
    Unjudged,
    #[error("backend error: {0}")]
    Backend(#[from] BackendError),
    #[error("{0}")]
    Invalid(String),
}

/// One line of a prediction dump.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictionRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt: Option<String>,
    pub predict: String,
    pub label: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn new(tp: u64, tn: u64, fp: u64, fn_: u64) -> Self {
        Self { tp, tn, fp, fn_ }
    }

    pub fn record(&mut self, predicted_positive: bool, truth_positive: bool) {
        match (predicted_positive, truth_positive) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }
}

/// Percentages rounded to two decimals. A metric whose denominator is zero
/// is reported as 0 and named in `flags`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfusionMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub fpr: f64,
    pub flags: Vec<String>,
}

fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

pub fn confusion_metrics(counts: &ConfusionCounts) -> ConfusionMetrics {
    let mut flags = Vec::new();
    let mut ratio = |name: &str, num: u64, den: u64| {
        if den == 0 {
            flags.push(format!("{name}_zero_denominator"));
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    let accuracy = ratio("accuracy", counts.tp + counts.tn, counts.total());
    let precision = ratio("precision", counts.tp, counts.tp + counts.fp);
    let recall = ratio("recall", counts.tp, counts.tp + counts.fn_);
    let fpr = ratio("fpr", counts.fp, counts.fp + counts.tn);
    let f1 = if precision + recall == 0.0 {
        flags.push("f1_zero_denominator".into());
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    ConfusionMetrics {
        accuracy: round2(accuracy * 100.0),
        precision: round2(precision * 100.0),
        recall: round2(recall * 100.0),
        f1: round2(f1 * 100.0),
        fpr: round2(fpr * 100.0),
        flags,
    }
}

/// Percentage of machine-parseable samples.
pub fn format_score(n_parsed: usize, n_total: usize) -> Result<f64, EvalError> {
    if n_total == 0 {
        return Err(EvalError::Invalid("format score needs n_total >= 1".into()));
    }
    Ok(round2(100.0 * n_parsed as f64 / n_total as f64))
}

/// Per-sample MAE threshold beyond which a sample is treated as an outlier
/// and excluded from the mean.
pub const MAE_EXCLUSION_LIMIT: f64 = 1000.0;

#[derive(Debug, Clone, Serialize)]
pub struct MaeReport {
    /// Mean over surviving samples; absent when nothing survived.
    pub mae: Option<f64>,
    pub fs: f64,
    pub n_excluded: usize,
    pub n_parsed: usize,
    pub n_total: usize,
    /// Per-sample MAE aligned with the input; `None` for unparsed samples.
    pub per_sample: Vec<Option<f64>>,
}

/// Score numeric predictions against ground truths: parse each prediction,
/// truncate both sides to the shorter length, exclude per-sample MAE above
/// [`MAE_EXCLUSION_LIMIT`], and average the survivors. Empty parses count
/// against the format score only.
pub fn mae_report(predictions: &[String], truths: &[Vec<f64>], task: NumericTask) -> MaeReport {
    let n_total = predictions.len();
    let mut per_sample = Vec::with_capacity(n_total);
    let mut n_parsed = 0;
    let mut n_excluded = 0;
    let mut sum = 0.0;
    let mut survivors = 0usize;
    for (i, predict) in predictions.iter().enumerate() {
        let values = parse_numeric_list(predict, task);
        let truth = truths.get(i).map(Vec::as_slice).unwrap_or(&[]);
        if values.is_empty() || truth.is_empty() {
            per_sample.push(None);
            continue;
        }
        n_parsed += 1;
        let len = values.len().min(truth.len());
        let mae = values[..len]
            .iter()
            .zip(&truth[..len])
            .map(|(p, t)| (p - t).abs())
            .sum::<f64>()
            / len as f64;
        per_sample.push(Some(mae));
        if mae > MAE_EXCLUSION_LIMIT {
            n_excluded += 1;
        } else {
            sum += mae;
            survivors += 1;
        }
    }
    MaeReport {
        mae: (survivors > 0).then(|| sum / survivors as f64),
        fs: if n_total == 0 {
            0.0
        } else {
            round2(100.0 * n_parsed as f64 / n_total as f64)
        },
        n_excluded,
        n_parsed,
        n_total,
        per_sample,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JudgeMode {
    Reasoning,
    Classification,
}

fn reasoning_judge_prompt(question: &str, student: &str, truth: &str) -> String {
    format!(
        "You are a time-series analysis expert. Your role is to rigorously and strictly evaluate a student's answer against the given question and the ground truth.\n\nScoring rules:\n- Fully correct -> return 1.\n- Completely incorrect -> return 0.\n- Partially correct -> return a decimal between 0 and 1 (e.g., 0.75).\n\nOutput constraints:\n- Output only one numeric value in the format: <score>.\n- Value must be in the range [0, 1], decimals allowed.\n- Do not include explanations or any additional fields.\n\nInputs:\n- Original question: {question}\n- Student answer: {student}\n- Ground truth: {truth}\n\nEvaluation Criteria (more lenient):\nFocus on core time-series concepts: trend, seasonality, anomalies, volatility, temporal patterns, units, directionality\n- If the answer is generally correct but lacks details -> 0.6-0.8.\n- If the answer has some errors but reasoning is reasonable -> 0.3-0.5.\n- If the answer is mostly off-topic but mentions relevant terms -> 0.1-0.2.\n\nReturn format reminder:\n- Output exactly: {{\"answer\": <score>}}"
    )
}

fn classification_judge_prompt(question: &str, student: &str, truth: &str) -> String {
    format!(
        "As a time series multi-class classification expert, assess if the student's answer matches the ground truth.\n\nRules:\n- Match -> 1.\n- Mismatch -> 0.\n\nOutput ONLY the score as a single integer (0 or 1). No explanations or extra text.\n\nInputs:\n- Original question: {question}\n- Student answer: {student}\n- Ground truth: {truth}"
    )
}

fn parse_judge_score(text: &str, mode: JudgeMode) -> Option<f64> {
    if let Some(payload) = extract_json_payload(text) {
        if let Some(score) = payload.get("answer").and_then(|v| {
            v.as_f64()
                .or_else(|| v.as_str().and_then(|s| s.trim().parse().ok()))
        }) {
            return normalize_judge_score(score, mode);
        }
    }
    let trimmed = text.trim();
    if let Ok(score) = trimmed.parse::<f64>() {
        return normalize_judge_score(score, mode);
    }
    None
}

fn normalize_judge_score(score: f64, mode: JudgeMode) -> Option<f64> {
    if !score.is_finite() {
        return None;
    }
    match mode {
        JudgeMode::Reasoning => Some(score.clamp(0.0, 1.0)),
        JudgeMode::Classification => {
            if score == 0.0 {
                Some(0.0)
            } else if score == 1.0 {
                Some(1.0)
            } else {
                None
            }
        }
    }
}

/// Grade one answer with the LLM judge. Reasoning mode returns a graded
/// score in [0, 1]; classification mode a strict 0/1 match. Two re-asks are
/// allowed before the sample counts as unjudged.
pub fn judge_score(
    question: &str,
    student: &str,
    truth: &str,
    mode: JudgeMode,
    backend: &Backend,
    model_id: &str,
) -> Result<f64, EvalError> {
    let prompt = match mode {
        JudgeMode::Reasoning => reasoning_judge_prompt(question, student, truth),
        JudgeMode::Classification => classification_judge_prompt(question, student, truth),
    };
    let request = ChatRequest::new(
        model_id,
        vec![ChatMessage {
            role: Role::User,
            content: prompt,
        }],
    );
    for _ in 0..3 {
        let reply = backend.complete(&request)?;
        if let Some(score) = parse_judge_score(&reply.text, mode) {
            return Ok(score);
        }
    }
    Err(EvalError::Unjudged)
}

fn numeric_fallback_prompt(student: &str) -> String {
    format!(
        "You are a time series analysis expert.\n\nObjective:\n- Extract the predicted future time-series values from the student's answer text.\n- Return them strictly as a valid Python list (e.g., [16.81, 18.09, 19.31, 20.25, 20.72]).\n- If the student's answer does not include explicit numeric predictions, return an empty list [].\n\nParsing & Robustness requirements:\n- Understand varied phrasings and formats (newlines, comma/space-separated, numbers embedded in sentences, additional commentary).\n- Return only the numeric list; no extra text, units, keys, or explanations.\n- Accept integers/floats/scientific notation; parse correctly.\n- If multiple candidate sequences appear, return the set that is explicitly presented as predictions; if this cannot be uniquely determined, return [].\n- If the answer provides ranges or uncertainty without explicit numbers, return [].\n- For lists with incomplete closing brackets, you should still parse them.\n- Return an empty list for results where imputation failed.\n\nStudent answer: {student}"
    )
}

/// LLM-assisted extraction for outputs the scripted tiers cannot parse.
fn judge_numeric_fallback(
    student: &str,
    task: NumericTask,
    backend: &Backend,
    model_id: &str,
) -> Vec<f64> {
    let request = ChatRequest::new(
        model_id,
        vec![ChatMessage {
            role: Role::User,
            content: numeric_fallback_prompt(student),
        }],
    );
    match backend.complete(&request) {
        Ok(reply) => parse_numeric_list(&reply.text, task),
        Err(_) => Vec::new(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalTask {
    Ad,
    MultiturnAd,
    Reasoning,
    Forecast,
    Imputation,
    Classification,
}

impl EvalTask {
    pub fn numeric_task(self) -> Option<NumericTask> {
        match self {
            Self::Forecast => Some(NumericTask::Forecast),
            Self::Imputation => Some(NumericTask::Imputation),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PerSample {
    pub id: usize,
    pub parsed: bool,
    pub value: serde_json::Value,
}

/// The report written for every run: metric map, parse accounting, and
/// per-sample outcomes.
#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub task: EvalTask,
    pub metrics: BTreeMap<String, f64>,
    pub flags: Vec<String>,
    pub n_total: usize,
    pub n_parsed: usize,
    pub n_excluded: usize,
    pub per_sample: Vec<PerSample>,
}

/// Optional judge wiring for the tasks that use one.
pub struct EvalContext<'a> {
    pub judge: Option<(&'a Backend, String)>,
}

impl EvalContext<'_> {
    pub fn offline() -> Self {
        EvalContext { judge: None }
    }
}

fn read_prediction_records(path: &Path) -> Result<Vec<Option<PredictionRecord>>, EvalError> {
    let file = std::fs::File::open(path).map_err(|e| {
        EvalError::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })?;
    let mut rows = Vec::new();
    let mut valid = 0usize;
    for (lineno, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<PredictionRecord>(&line) {
            Ok(record) => {
                valid += 1;
                rows.push(Some(record));
            }
            Err(err) => {
                eprintln!(
                    "warning: {} line {}: skipping malformed record: {err}",
                    path.display(),
                    lineno + 1
                );
                rows.push(None);
            }
        }
    }
    if valid == 0 {
        return Err(EvalError::NoValidRecords(path.display().to_string()));
    }
    Ok(rows)
}

/// Ground truths for numeric tasks: one JSONL line per record, either a bare
/// array, an object carrying one under `label`/`values`/`truth`, or a string
/// to run through the numeric parser.
fn read_ground_truths(path: &Path) -> Result<Vec<Vec<f64>>, EvalError> {
    let file = std::fs::File::open(path).map_err(|e| {
        EvalError::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })?;
    let mut truths = Vec::new();
    for line in std::io::BufReader::new(file).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        truths.push(truth_from_value(
            serde_json::from_str(&line).unwrap_or(serde_json::Value::String(line.clone())),
        ));
    }
    Ok(truths)
}

fn truth_from_value(value: serde_json::Value) -> Vec<f64> {
    match value {
        serde_json::Value::Array(items) => items.iter().filter_map(|v| v.as_f64()).collect(),
        serde_json::Value::String(s) => parse_numeric_list(&s, NumericTask::Forecast),
        serde_json::Value::Object(map) => ["label", "values", "truth", "ground_truth"]
            .iter()
            .find_map(|k| map.get(*k).cloned())
            .map(truth_from_value)
            .unwrap_or_default(),
        _ => Vec::new(),
    }
}

/// Run the task pipeline over a prediction dump and write the report JSON.
///
/// `output` may be an existing directory (the report lands there as
/// `results.json`) or a file path. Identical inputs produce byte-identical
/// reports.
pub fn evaluate_run(
    task: EvalTask,
    input: &Path,
    ground_truth_file: Option<&Path>,
    output: &Path,
    ctx: &EvalContext<'_>,
) -> Result<EvalReport, EvalError> {
    let rows = read_prediction_records(input)?;
    let report = match task {
        EvalTask::Ad | EvalTask::MultiturnAd => eval_ad(task, &rows),
        EvalTask::Reasoning => eval_reasoning(&rows, ctx)?,
        EvalTask::Forecast | EvalTask::Imputation => {
            let truths = match ground_truth_file {
                Some(path) => Some(read_ground_truths(path)?),
                None => None,
            };
            eval_numeric(task, &rows, truths, ctx)
        }
        EvalTask::Classification => eval_classification(&rows, ctx)?,
    };
    let out_path = resolve_output_path(output);
    let mut text = serde_json::to_string_pretty(&report).map_err(std::io::Error::from)?;
    text.push('\n');
    std::fs::write(&out_path, text)?;
    Ok(report)
}

fn resolve_output_path(output: &Path) -> PathBuf {
    if output.is_dir() {
        output.join("results.json")
    } else {
        output.to_path_buf()
    }
}

fn eval_ad(task: EvalTask, rows: &[Option<PredictionRecord>]) -> EvalReport {
    let mut counts = ConfusionCounts::default();
    let mut per_sample = Vec::with_capacity(rows.len());
    let mut n_parsed = 0;
    for (id, row) in rows.iter().enumerate() {
        let Some(record) = row else {
            per_sample.push(PerSample {
                id,
                parsed: false,
                value: serde_json::Value::Null,
            });
            continue;
        };
        let truth = parse_ad_label(&record.label);
        let predicted = parse_ad_label(&record.predict);
        if truth == AdLabel::Unparsed || predicted == AdLabel::Unparsed {
            if truth == AdLabel::Unparsed {
                eprintln!("warning: sample {id}: ground-truth label unparseable, skipped");
            }
            per_sample.push(PerSample {
                id,
                parsed: false,
                value: serde_json::Value::Null,
            });
            continue;
        }
        n_parsed += 1;
        counts.record(predicted == AdLabel::Anomalous, truth == AdLabel::Anomalous);
        per_sample.push(PerSample {
            id,
            parsed: true,
            value: serde_json::Value::String(predicted.to_string()),
        });
    }
    let cm = confusion_metrics(&counts);
    let mut metrics = BTreeMap::new();
    metrics.insert("accuracy".into(), cm.accuracy);
    metrics.insert("precision".into(), cm.precision);
    metrics.insert("recall".into(), cm.recall);
    metrics.insert("f1".into(), cm.f1);
    metrics.insert("fpr".into(), cm.fpr);
    metrics.insert(
        "fs".into(),
        format_score(n_parsed, rows.len().max(1)).unwrap_or(0.0),
    );
    EvalReport {
        task,
        metrics,
        flags: cm.flags,
        n_total: rows.len(),
        n_parsed,
        n_excluded: 0,
        per_sample,
    }
}

fn eval_reasoning(
    rows: &[Option<PredictionRecord>],
    ctx: &EvalContext<'_>,
) -> Result<EvalReport, EvalError> {
    let mut per_sample = Vec::with_capacity(rows.len());
    let mut n_parsed = 0;
    let mut scores = Vec::new();
    let mut flags = Vec::new();
    for (id, row) in rows.iter().enumerate() {
        let Some(record) = row else {
            per_sample.push(PerSample {
                id,
                parsed: false,
                value: serde_json::Value::Null,
            });
            continue;
        };
        match &ctx.judge {
            Some((backend, model)) => {
                let question = record.prompt.as_deref().unwrap_or("");
                match judge_score(
                    question,
                    &record.predict,
                    &record.label,
                    JudgeMode::Reasoning,
                    backend,
                    model,
                ) {
                    Ok(score) => {
                        n_parsed += 1;
                        scores.push(score);
                        per_sample.push(PerSample {
                            id,
                            parsed: true,
                            value: serde_json::json!(score),
                        });
                    }
                    Err(EvalError::Unjudged) => {
                        per_sample.push(PerSample {
                            id,
                            parsed: false,
                            value: serde_json::Value::Null,
                        });
                    }
                    Err(other) => return Err(other),
                }
            }
            None => {
                // offline: parse success means a JSON payload was extractable
                let parsed = extract_json_payload(&record.predict).is_some();
                if parsed {
                    n_parsed += 1;
                }
                per_sample.push(PerSample {
                    id,
                    parsed,
                    value: serde_json::Value::Null,
                });
            }
        }
    }
    let mut metrics = BTreeMap::new();
    metrics.insert(
        "fs".into(),
        format_score(n_parsed, rows.len().max(1)).unwrap_or(0.0),
    );
    if !scores.is_empty() {
        metrics.insert(
            "ls".into(),
            round2(100.0 * scores.iter().sum::<f64>() / scores.len() as f64),
        );
    } else if ctx.judge.is_some() {
        flags.push("ls_no_judged_samples".into());
    } else {
        flags.push("ls_requires_judge".into());
    }
    Ok(EvalReport {
        task: EvalTask::Reasoning,
        metrics,
        flags,
        n_total: rows.len(),
        n_parsed,
        n_excluded: 0,
        per_sample,
    })
}

fn eval_numeric(
    task: EvalTask,
    rows: &[Option<PredictionRecord>],
    truths: Option<Vec<Vec<f64>>>,
    ctx: &EvalContext<'_>,
) -> EvalReport {
    let numeric_task = task.numeric_task().expect("numeric task");
    let mut predictions = Vec::with_capacity(rows.len());
    let mut truth_rows = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        match row {
            Some(record) => {
                let mut predict = record.predict.clone();
                // optional LLM-assisted extraction when the tiers fail
                if let Some((backend, model)) = &ctx.judge {
                    if parse_numeric_list(&predict, numeric_task).is_empty() {
                        let rescued =
                            judge_numeric_fallback(&record.predict, numeric_task, backend, model);
                        if !rescued.is_empty() {
                            predict = serde_json::to_string(&rescued).unwrap_or(predict);
                        }
                    }
                }
                predictions.push(predict);
                truth_rows.push(match &truths {
                    Some(t) => t.get(i).cloned().unwrap_or_default(),
                    None => parse_numeric_list(&record.label, numeric_task),
                });
            }
            None => {
                predictions.push(String::new());
                truth_rows.push(Vec::new());
            }
        }
    }
    let mae = mae_report(&predictions, &truth_rows, numeric_task);
    let mut metrics = BTreeMap::new();
    let mut flags = Vec::new();
    metrics.insert("fs".into(), mae.fs);
    match mae.mae {
        Some(value) => {
            metrics.insert("mae".into(), round2(value));
        }
        None => flags.push("mae_no_surviving_samples".into()),
    }
    let per_sample = mae
        .per_sample
        .iter()
        .enumerate()
        .map(|(id, sample)| PerSample {
            id,
            parsed: sample.is_some(),
            value: sample
                .map(|m| serde_json::json!(m))
                .unwrap_or(serde_json::Value::Null),
        })
        .collect();
    EvalReport {
        task,
        metrics,
        flags,
        n_total: mae.n_total,
        n_parsed: mae.n_parsed,
        n_excluded: mae.n_excluded,
        per_sample,
    }
}

fn eval_classification(
    rows: &[Option<PredictionRecord>],
    ctx: &EvalContext<'_>,
) -> Result<EvalReport, EvalError> {
    let Some((backend, model)) = &ctx.judge else {
        return Err(EvalError::Config(
            "classification evaluation needs a judge backend (configure a mock script or an endpoint)".into(),
        ));
    };
    let mut per_sample = Vec::with_capacity(rows.len());
    let mut n_parsed = 0;
    let mut scores = Vec::new();
    for (id, row) in rows.iter().enumerate() {
        let Some(record) = row else {
            per_sample.push(PerSample {
                id,
                parsed: false,
                value: serde_json::Value::Null,
            });
            continue;
        };
        let question = record.prompt.as_deref().unwrap_or("");
        match judge_score(
            question,
            &record.predict,
            &record.label,
            JudgeMode::Classification,
            backend,
            model,
        ) {
            Ok(score) => {
                n_parsed += 1;
                scores.push(score);
                per_sample.push(PerSample {
                    id,
                    parsed: true,
                    value: serde_json::json!(score),
                });
            }
            Err(EvalError::Unjudged) => per_sample.push(PerSample {
                id,
                parsed: false,
                value: serde_json::Value::Null,
            }),
            Err(other) => return Err(other),
        }
    }
    let mut metrics = BTreeMap::new();
    let mut flags = Vec::new();
    metrics.insert(
        "fs".into(),
        format_score(n_parsed, rows.len().max(1)).unwrap_or(0.0),
    );
    if scores.is_empty() {
        flags.push("ls_no_judged_samples".into());
    } else {
        metrics.insert(
            "ls".into(),
            round2(100.0 * scores.iter().sum::<f64>() / scores.len() as f64),
        );
    }
    Ok(EvalReport {
        task: EvalTask::Classification,
        metrics,
        flags,
        n_total: rows.len(),
        n_parsed,
        n_excluded: 0,
        per_sample,
    })
}
