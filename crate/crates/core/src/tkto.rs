//! Preference scoring and the soft-label asymmetric loss used to prepare
//! RL datasets.
//!
//! Each question/answer pair carries a four-dimensional feedback vector
//! `d = [d0, d1, d2, d3]` (format 0-25, task correctness 0-50, fluency 0-25,
//! human preference 0-100). A weighted composite score maps through a
//! sigmoid into a continuous preference weight `alpha`, which mixes the
//! desirable and undesirable log-sigmoid losses on the policy/reference
//! log-probability ratio. This module computes scores, weights, and losses;
//! gradient updates belong to the downstream trainer, which consumes the
//! emitted JSONL.

use std::io::Write;
use std::path::Path;

use serde::de::Error as DeError;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::backend::{Backend, BackendError, ChatMessage, ChatRequest, Role};
use crate::parse::{parse_numeric_list, NumericTask};

#[derive(Debug, thiserror::Error)]
pub enum TktoError {
    #[error("feedback component out of range: {0}")]
    OutOfRange(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("batch is empty")]
    EmptyBatch,
    #[error("non-finite log-probability")]
    NonFiniteLogProb,
    #[error("judge reply unparseable after retries")]
    Unjudged,
    #[error("backend error: {0}")]
    Backend(#[from] BackendError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Quality scores for one pair. `d3` (human preference) is optional: when it
/// was never collected, the composite score falls back to the pure
/// LLM-feedback sum instead of imputing a fake value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeedbackVector {
    pub d0: f64,
    pub d1: f64,
    pub d2: f64,
    pub d3: Option<f64>,
}

impl FeedbackVector {
    pub fn new(d0: f64, d1: f64, d2: f64, d3: Option<f64>) -> Result<Self, TktoError> {
        let v = Self { d0, d1, d2, d3 };
        v.validate()?;
        Ok(v)
    }

    pub fn validate(&self) -> Result<(), TktoError> {
        let check = |name: &str, v: f64, hi: f64| {
            if (0.0..=hi).contains(&v) {
                Ok(())
            } else {
                Err(TktoError::OutOfRange(format!("{name}={v} not in [0,{hi}]")))
            }
        };
        check("d0", self.d0, 25.0)?;
        check("d1", self.d1, 50.0)?;
        check("d2", self.d2, 25.0)?;
        if let Some(d3) = self.d3 {
            check("d3", d3, 100.0)?;
        }
        Ok(())
    }
}

/// Serialized as a bare array: `[d0, d1, d2, d3]`, or three elements when no
/// human score exists.
impl Serialize for FeedbackVector {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self.d3 {
            Some(d3) => [self.d0, self.d1, self.d2, d3].serialize(serializer),
            None => [self.d0, self.d1, self.d2].serialize(serializer),
        }
    }
}

impl<'de> Deserialize<'de> for FeedbackVector {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = Vec::<f64>::deserialize(deserializer)?;
        let v = match raw.as_slice() {
            [d0, d1, d2] => Self {
                d0: *d0,
                d1: *d1,
                d2: *d2,
                d3: None,
            },
            [d0, d1, d2, d3] => Self {
                d0: *d0,
                d1: *d1,
                d2: *d2,
                d3: Some(*d3),
            },
            other => {
                return Err(DeError::custom(format!(
                    "feedback vector needs 3 or 4 components, got {}",
                    other.len()
                )))
            }
        };
        v.validate().map_err(DeError::custom)?;
        Ok(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TktoParams {
    /// Weight between LLM feedback and human preference.
    pub epsilon: f64,
    /// Threshold center of the soft label.
    pub eta: f64,
    /// Steepness of the soft label.
    pub kappa: f64,
    /// Strength of the log-ratio term in the loss.
    pub beta: f64,
}

impl Default for TktoParams {
    fn default() -> Self {
        Self {
            epsilon: 0.5,
            eta: 60.0,
            kappa: 0.1,
            beta: 0.1,
        }
    }
}

impl TktoParams {
    pub fn validate(&self) -> Result<(), TktoError> {
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(TktoError::InvalidParams("epsilon must lie in [0,1]".into()));
        }
        if !(self.kappa.is_finite() && self.kappa > 0.0)
            || !(self.beta.is_finite() && self.beta > 0.0)
        {
            return Err(TktoError::InvalidParams(
                "kappa and beta must be positive".into(),
            ));
        }
        if !self.eta.is_finite() {
            return Err(TktoError::InvalidParams("eta must be finite".into()));
        }
        Ok(())
    }
}

/// Composite quality score `S = eps * (d0 + d1 + d2) + (1 - eps) * d3`.
/// Without a human score the LLM-feedback sum stands alone (epsilon
/// renormalized to 1).
pub fn composite_score(d: &FeedbackVector, epsilon: f64) -> Result<f64, TktoError> {
    d.validate()?;
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(TktoError::InvalidParams("epsilon must lie in [0,1]".into()));
    }
    let llmf = d.d0 + d.d1 + d.d2;
    Ok(match d.d3 {
        Some(d3) => epsilon * llmf + (1.0 - epsilon) * d3,
        None => llmf,
    })
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Continuous preference weight `alpha = sigmoid(kappa * (S - eta))`.
pub fn soft_label(score: f64, eta: f64, kappa: f64) -> f64 {
    sigmoid(kappa * (score - eta))
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Loss on the scalar log-ratio `tau = logp_policy - logp_ref`:
/// `alpha * (-ln sigmoid(beta tau)) + (1 - alpha) * (-ln sigmoid(-beta tau))`.
pub fn loss_terms(tau: f64, alpha: f64, beta: f64) -> f64 {
    alpha * softplus(-beta * tau) + (1.0 - alpha) * softplus(beta * tau)
}

/// Analytic derivative of [`loss_terms`] with respect to `tau`.
pub fn loss_grad_tau(tau: f64, alpha: f64, beta: f64) -> f64 {
    -alpha * beta * sigmoid(-beta * tau) + (1.0 - alpha) * beta * sigmoid(beta * tau)
}

/// A judged pair ready for the loss. `alpha` always equals
/// `soft_label(composite_score(feedback))` by construction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoredPair {
    #[serde(rename = "x")]
    pub question: String,
    #[serde(rename = "y")]
    pub answer: String,
    #[serde(rename = "d")]
    pub feedback: FeedbackVector,
    pub alpha: f64,
    pub logp_policy: f64,
    pub logp_ref: f64,
}

impl ScoredPair {
    pub fn new(
        question: String,
        answer: String,
        feedback: FeedbackVector,
        logp_policy: f64,
        logp_ref: f64,
        params: &TktoParams,
    ) -> Result<Self, TktoError> {
        params.validate()?;
        let score = composite_score(&feedback, params.epsilon)?;
        Ok(Self {
            question,
            answer,
            feedback,
            alpha: soft_label(score, params.eta, params.kappa),
            logp_policy,
            logp_ref,
        })
    }

    pub fn tau(&self) -> f64 {
        self.logp_policy - self.logp_ref
    }
}

/// Loss of one pair under the given parameters.
pub fn tkto_loss(pair: &ScoredPair, params: &TktoParams) -> Result<f64, TktoError> {
    params.validate()?;
    if !pair.logp_policy.is_finite() || !pair.logp_ref.is_finite() {
        return Err(TktoError::NonFiniteLogProb);
    }
    Ok(loss_terms(pair.tau(), pair.alpha, params.beta))
}

/// Mean loss over a batch (compensated summation).
pub fn batch_loss(pairs: &[ScoredPair], params: &TktoParams) -> Result<f64, TktoError> {
    if pairs.is_empty() {
        return Err(TktoError::EmptyBatch);
    }
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for pair in pairs {
        let y = tkto_loss(pair, params)? - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    Ok(sum / pairs.len() as f64)
}

const JUDGE_SYSTEM_PROMPT: &str = "You are the highest-level expert in Time Series Task Evaluation, proficient in Forecasting, Classification, Imputation, Anomaly Detection, and Analysis.\nYour task is to strictly and precisely evaluate a student model's answer (student) based on the true answer (true) and question (X). The evaluation must be delivered in three scores: Format, Correctness, and Fluency.\n\n1) Scoring Criteria:\n1. Format Compliance (d_0): [0 - 25 points].\nRequirement: Check if student adheres completely to the predetermined output format (e.g., closed arrays, correct JSON structure, single label).\nZero Score: Any error causing automated processing failure (e.g., corrupted structure, extraneous text).\n2. Task Correctness (d_1): [0 - 50 points].\nRequirement: Evaluate the mathematical or logical deviation between student and true.\nForecasting/Imputation: Evaluate numerical deviation (e.g., RMSE < 10 is acceptable).\nClassification/Detection: Evaluate logical accuracy (matching true labels). This score reflects core task accuracy.\n3. Fluency and Readability (d_2): [0 - 25 points].\nRequirement: Evaluate overall readability, organization, and adherence to human-like expressive habits. Deduct points for redundancy or unnecessary internal thought processes.\n\n2) STRICT OUTPUT REQUIREMENT:\nYou MUST and ONLY return the three scores as a precise Python list (List). The order must strictly be: Format Score (d_0), Correctness Score (d_1), Fluency Score (d_2).\n\n3) Examples:\n- Perfect: [25.0, 48.5, 23.0]\n- Error: [0.0, 15.2, 18.0]\n\nYou must perform a strict / harsh and fair evaluation, forbidding any form of laziness or ambiguous judgment.";

pub fn build_judge_request(
    question: &str,
    answer: &str,
    ground_truth: &str,
    model_id: &str,
) -> ChatRequest {
    ChatRequest::new(
        model_id,
        vec![
            ChatMessage {
                role: Role::System,
                content: JUDGE_SYSTEM_PROMPT.to_string(),
            },
            ChatMessage {
                role: Role::User,
                content: format!(
                    "Question (X): {question}\nStudent answer (student): {answer}\nTrue answer (true): {ground_truth}"
                ),
            },
        ],
    )
}

/// Elicit the three LLM-feedback scores for a pair. The judge reply must be
/// a three-element numeric list in format/correctness/fluency order; values
/// are clamped to their ranges. Two re-asks are allowed before the pair is
/// flagged unjudged.
pub fn judge_feedback(
    question: &str,
    answer: &str,
    ground_truth: &str,
    backend: &Backend,
    model_id: &str,
) -> Result<(f64, f64, f64), TktoError> {
    let request = build_judge_request(question, answer, ground_truth, model_id);
    for _ in 0..3 {
        let reply = backend.complete(&request)?;
        let scores = parse_numeric_list(&reply.text, NumericTask::Forecast);
        if scores.len() == 3 {
            return Ok((
                scores[0].clamp(0.0, 25.0),
                scores[1].clamp(0.0, 50.0),
                scores[2].clamp(0.0, 25.0),
            ));
        }
    }
    Err(TktoError::Unjudged)
}

/// One output line of the RL dataset: the pair, its feedback, the composite
/// score, and the preference weight consumed by the trainer.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RlRecord {
    pub x: String,
    pub y: String,
    pub d: FeedbackVector,
    #[serde(rename = "S")]
    pub score: f64,
    pub alpha: f64,
}

/// Emit the RL dataset as JSONL, one record per judged pair. Returns the
/// number of lines written.
pub fn prepare_rl_dataset(
    pairs: &[(String, String, FeedbackVector)],
    params: &TktoParams,
    output_path: &Path,
) -> Result<usize, TktoError> {
    params.validate()?;
    let mut file = std::io::BufWriter::new(std::fs::File::create(output_path)?);
    let mut written = 0;
    for (question, answer, feedback) in pairs {
        let score = composite_score(feedback, params.epsilon)?;
        let record = RlRecord {
            x: question.clone(),
            y: answer.clone(),
            d: *feedback,
            score,
            alpha: soft_label(score, params.eta, params.kappa),
        };
        serde_json::to_writer(&mut file, &record).map_err(std::io::Error::from)?;
        file.write_all(b"\n")?;
        written += 1;
    }
    file.flush()?;
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{MockProvider, MockRule};

    fn fv(d0: f64, d1: f64, d2: f64, d3: Option<f64>) -> FeedbackVector {
        FeedbackVector::new(d0, d1, d2, d3).unwrap()
    }

    #[test]
    fn composite_score_examples() {
        assert_eq!(
            composite_score(&fv(25.0, 50.0, 25.0, Some(100.0)), 0.5).unwrap(),
            100.0
        );
        assert_eq!(
            composite_score(&fv(0.0, 0.0, 0.0, Some(0.0)), 0.3).unwrap(),
            0.0
        );
        assert_eq!(
            composite_score(&fv(20.0, 40.0, 20.0, Some(70.0)), 0.5).unwrap(),
            75.0
        );
        // missing human score: LLM feedback stands alone
        assert_eq!(
            composite_score(&fv(20.0, 40.0, 20.0, None), 0.5).unwrap(),
            80.0
        );
    }

    #[test]
    fn composite_score_is_linear_in_each_component() {
        let base = fv(10.0, 20.0, 10.0, Some(40.0));
        let eps = 0.3;
        let s0 = composite_score(&base, eps).unwrap();
        let bump = 5.0;
        for i in 0..4 {
            let mut d = base;
            let expected_gain = match i {
                0 => {
                    d.d0 += bump;
                    eps * bump
                }
                1 => {
                    d.d1 += bump;
                    eps * bump
                }
                2 => {
                    d.d2 += bump;
                    eps * bump
                }
                _ => {
                    d.d3 = Some(d.d3.unwrap() + bump);
                    (1.0 - eps) * bump
                }
            };
            let s1 = composite_score(&d, eps).unwrap();
            assert!((s1 - s0 - expected_gain).abs() < 1e-12, "component {i}");
        }
    }

    #[test]
    fn out_of_range_components_rejected() {
        assert!(FeedbackVector::new(26.0, 0.0, 0.0, None).is_err());
        assert!(FeedbackVector::new(0.0, 51.0, 0.0, None).is_err());
        assert!(FeedbackVector::new(0.0, 0.0, -0.1, None).is_err());
        assert!(FeedbackVector::new(0.0, 0.0, 0.0, Some(101.0)).is_err());
    }

    #[test]
    fn soft_label_center_and_tails() {
        assert_eq!(soft_label(60.0, 60.0, 0.1), 0.5);
        assert!((soft_label(100.0, 60.0, 0.1) - 0.98201).abs() < 1e-5);
        assert!((soft_label(0.0, 60.0, 0.1) - 0.00247).abs() < 1e-5);
        // strictly increasing
        let mut prev = soft_label(-1.0, 60.0, 0.1);
        for s in 0..=100 {
            let a = soft_label(s as f64, 60.0, 0.1);
            assert!(a > prev);
            prev = a;
        }
    }

    fn pair_with(alpha_feedback: FeedbackVector, logp_policy: f64, logp_ref: f64) -> ScoredPair {
        ScoredPair::new(
            "q".into(),
            "a".into(),
            alpha_feedback,
            logp_policy,
            logp_ref,
            &TktoParams::default(),
        )
        .unwrap()
    }

    #[test]
    fn loss_at_zero_tau_is_ln_two_for_all_alpha() {
        for alpha in [0.0, 0.25, 0.5, 0.75, 1.0] {
            let loss = loss_terms(0.0, alpha, 0.1);
            assert!(
                (loss - std::f64::consts::LN_2).abs() < 1e-12,
                "alpha {alpha}"
            );
        }
    }

    #[test]
    fn loss_numeric_spot_checks() {
        // independent evaluation via ln(1 + exp(..))
        let expected_d = (1.0f64 + (-0.1f64).exp()).ln();
        assert!((loss_terms(1.0, 1.0, 0.1) - expected_d).abs() < 1e-12);
        assert!((loss_terms(1.0, 1.0, 0.1) - 0.64439).abs() < 1e-5);
        let expected_u = (1.0f64 + (0.1f64).exp()).ln();
        assert!((loss_terms(1.0, 0.0, 0.1) - expected_u).abs() < 1e-12);
        assert!((loss_terms(1.0, 0.0, 0.1) - 0.74439).abs() < 1e-5);
    }

    #[test]
    fn branch_symmetry() {
        for i in 0..100 {
            let tau = -10.0 + i as f64 * 0.2;
            for beta in [0.05, 0.1, 0.2] {
                let desirable = loss_terms(tau, 1.0, beta);
                let undesirable = loss_terms(-tau, 0.0, beta);
                assert!((desirable - undesirable).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let h = 1e-5;
        for alpha in [0.0, 0.25, 0.5, 0.75, 1.0] {
            for i in 0..=40 {
                let tau = -10.0 + i as f64 * 0.5;
                let analytic = loss_grad_tau(tau, alpha, 0.1);
                let numeric =
                    (loss_terms(tau + h, alpha, 0.1) - loss_terms(tau - h, alpha, 0.1)) / (2.0 * h);
                assert!(
                    (analytic - numeric).abs() < 1e-6,
                    "tau {tau} alpha {alpha}: {analytic} vs {numeric}"
                );
            }
        }
    }

    #[test]
    fn monotonicity_in_alpha() {
        // raising alpha lowers the loss when tau > 0, raises it when tau < 0
        for &tau in &[0.5, 2.0, 7.5] {
            let mut prev = loss_terms(tau, 0.0, 0.1);
            for k in 1..=10 {
                let alpha = k as f64 / 10.0;
                let l = loss_terms(tau, alpha, 0.1);
                assert!(l < prev);
                prev = l;
            }
            let mut prev = loss_terms(-tau, 0.0, 0.1);
            for k in 1..=10 {
                let alpha = k as f64 / 10.0;
                let l = loss_terms(-tau, alpha, 0.1);
                assert!(l > prev);
                prev = l;
            }
        }
    }

    #[test]
    fn batch_loss_examples() {
        let params = TktoParams::default();
        let p = pair_with(fv(20.0, 40.0, 20.0, Some(70.0)), -10.0, -11.0);
        let single = batch_loss(std::slice::from_ref(&p), &params).unwrap();
        assert_eq!(single, tkto_loss(&p, &params).unwrap());
        let repeated: Vec<ScoredPair> = (0..7).map(|_| p.clone()).collect();
        assert!((batch_loss(&repeated, &params).unwrap() - single).abs() < 1e-12);
        assert!(matches!(
            batch_loss(&[], &params),
            Err(TktoError::EmptyBatch)
        ));
    }

    #[test]
    fn batch_loss_matches_naive_summation() {
        let params = TktoParams::default();
        let mut pairs = Vec::new();
        for i in 0..100 {
            let d = fv(
                (i % 26) as f64,
                (i % 51) as f64,
                ((i * 3) % 26) as f64,
                Some((i % 101) as f64),
            );
            pairs.push(pair_with(d, -5.0 + 0.11 * i as f64, -5.0 - 0.07 * i as f64));
        }
        let naive: f64 = pairs
            .iter()
            .map(|p| tkto_loss(p, &params).unwrap())
            .sum::<f64>()
            / pairs.len() as f64;
        assert!((batch_loss(&pairs, &params).unwrap() - naive).abs() < 1e-12);
    }

    #[test]
    fn non_finite_logp_rejected() {
        let mut p = pair_with(fv(25.0, 50.0, 25.0, Some(100.0)), -1.0, -1.0);
        p.logp_policy = f64::NAN;
        assert!(matches!(
            tkto_loss(&p, &TktoParams::default()),
            Err(TktoError::NonFiniteLogProb)
        ));
    }

    fn judge_backend(reply: &str) -> Backend {
        let rules = vec![MockRule {
            pattern: String::new(),
            response: Some(reply.to_string()),
            error: None,
            consume: false,
        }];
        Backend::new(Box::new(MockProvider::new(rules).unwrap()), 2)
            .with_base_backoff(std::time::Duration::from_millis(1))
    }

    #[test]
    fn judge_parses_score_lists() {
        let backend = judge_backend("[25.0, 48.5, 23.0]");
        let scores = judge_feedback("q", "a", "t", &backend, "judge").unwrap();
        assert_eq!(scores, (25.0, 48.5, 23.0));
        let backend = judge_backend("[0.0, 15.2, 18.0]");
        let scores = judge_feedback("q", "a", "t", &backend, "judge").unwrap();
        assert_eq!(scores, (0.0, 15.2, 18.0));
        // clamped into range
        let backend = judge_backend("[30.0, 60.0, 30.0]");
        let scores = judge_feedback("q", "a", "t", &backend, "judge").unwrap();
        assert_eq!(scores, (25.0, 50.0, 25.0));
    }

    #[test]
    fn unparseable_judge_reply_flags_unjudged_after_retries() {
        let backend = judge_backend("I would rather chat about something else");
        let err = judge_feedback("q", "a", "t", &backend, "judge").unwrap_err();
        assert!(matches!(err, TktoError::Unjudged));
        assert_eq!(backend.ledger()["judge"].calls, 3);
    }

    #[test]
    fn rl_dataset_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("rl.jsonl");
        let params = TktoParams::default();
        assert_eq!(prepare_rl_dataset(&[], &params, &out).unwrap(), 0);
        assert_eq!(std::fs::read_to_string(&out).unwrap(), "");

        let pairs = vec![
            (
                "q1".to_string(),
                "a1".to_string(),
                fv(25.0, 50.0, 25.0, Some(100.0)),
            ),
            (
                "q2".to_string(),
                "a2".to_string(),
                fv(10.0, 20.0, 5.0, None),
            ),
            (
                "q3".to_string(),
                "a3".to_string(),
                fv(20.0, 40.0, 20.0, Some(70.0)),
            ),
        ];
        assert_eq!(prepare_rl_dataset(&pairs, &params, &out).unwrap(), 3);
        let text = std::fs::read_to_string(&out).unwrap();
        let lines: Vec<RlRecord> = text
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0].score, 100.0);
        assert!((lines[0].alpha - 0.98201).abs() < 1e-5);
        for record in &lines {
            let score = composite_score(&record.d, params.epsilon).unwrap();
            assert_eq!(score, record.score);
            assert_eq!(soft_label(score, params.eta, params.kappa), record.alpha);
        }
    }

    #[test]
    fn minimum_at_zero_tau_for_even_alpha() {
        let at_zero = loss_terms(0.0, 0.5, 0.1);
        assert!((at_zero - std::f64::consts::LN_2).abs() < 1e-12);
        for i in 1..=50 {
            let tau = i as f64 * 0.4;
            assert!(loss_terms(tau, 0.5, 0.1) > at_zero);
            assert!(loss_terms(-tau, 0.5, 0.1) > at_zero);
        }
    }
}
