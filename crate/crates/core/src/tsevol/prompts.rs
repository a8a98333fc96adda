//! Prompt templates for the four-agent evolution loop.
//!
//! The renderings are part of the toolkit's contract: snapshot tests pin
//! them byte for byte, so edits here must update `tests/golden/` too.

use crate::backend::{ChatMessage, ChatRequest, Role};

use super::{AttributeFamily, EvolutionConfig, EvolveError};

const CONSULTANT_HEADER_ALL: &str =
    "You are Consultant tasked with generating one time-series-related question based on following seven analytical dimensions:";

const CONSULTANT_FOOTER: &str = "You should generate new questions from the given 'history' instruction data, and each question should be clear, relevant, and designed to guide deeper analysis or understanding of time-series data. Finish your response in English, and question must end with a question mark \"?\".";

const QUESTION_FORMAT: &str = "Please conduct an detailed anomaly detection analysis on the inputted time series data and raise a question with ONLY in valid JSON format. Format: {\"question\": \"A concise and valuable question, strictly limited to 100 words.\", \"summary\": \"Explain why you are asking this question, strictly limited to 200 words.\"}.";

/// The fixed terminal question closing every transcript.
pub const FINAL_VERDICT_QUESTION: &str = "Please determine whether there are anomalies in this time series given information above. You must respond ONLY in valid JSON format. Format: {\"answer\": \"Normal or Anomalous\", \"summary\": \"A concise and essential analytical process.\"}";

const CLIENT_SYSTEM: &str = "You are a time-series expert. Your task is to answer the given question based the 'history' instruction data in a strict, accurate, and concise manner. Finish your response in English.";

const INTERN_SYSTEM: &str = "You are a time-series expert. Your task is to answer the given question based on the given 'history' instruction data with deep reasoning if needed, but your response must remain strictly constrained.";

impl AttributeFamily {
    fn dimension_text(self) -> &'static str {
        match self {
            Self::Trend => "trend: used to describe the variation trends in historical data, including four types: upward, downward, stable, and mixed trends.",
            Self::Seasonality => "seasonality: used to describe the periodic fluctuation characteristics of historical data. It includes ten types: non-periodic, sinusoidal, square wave, triangular wave, sawtooth wave, stepwise, composite, random, and segmented patterns.",
            Self::Statistics => "statistics: used to quantify the numerical characteristics of historical data. It includes eight types: mean, variance, standard deviation, maximum, minimum, skewness, unit root test value, and mode.",
            Self::LocalFeatures => "local features: used to identify key points or abnormal behaviors in historical data, including peaks, troughs, mutation points, outliers, spikes, and jumps.",
            Self::Multivariate => "multivariate Relationships: the multivariate attribute includes 14 types: covariance matrix, Granger causality, mutual information, Dice coefficient, Pearson correlation coefficient, edit distance, Jaccard similarity, cosine similarity, Euclidean distance, Manhattan distance, DTW (Dynamic Time Warping), Mahalanobis distance, Hamming distance, KL divergence (Kullback-Leibler), Earth Mover's Distance (EMD), and TAD (Time Series Alignment Distance).",
            Self::Compression => "compressed representations: compression is used to generate compact representations of raw data by transforming historical data into new forms that enhance complexity. It includes four methods: Discrete Wavelet Transform (DWT), Discrete Fourier Transform (DFT), segmented averaging, and segmented mode extraction.",
            Self::Background => "background evolution: Extend and enhance the background context of non-time-series content.",
        }
    }
}

fn consultant_system(whitelist: &[AttributeFamily]) -> String {
    let header = if whitelist.len() == AttributeFamily::ALL.len() {
        CONSULTANT_HEADER_ALL.to_string()
    } else {
        format!(
            "You are Consultant tasked with generating one time-series-related question based on following {} analytical dimensions:",
            whitelist.len()
        )
    };
    let mut text = header;
    for (i, family) in whitelist.iter().enumerate() {
        text.push('\n');
        text.push_str(&format!("{}. {}", i + 1, family.dimension_text()));
    }
    text.push('\n');
    text.push_str(CONSULTANT_FOOTER);
    text
}

/// Which consultant call is being built.
pub enum ConsultantTurn<'a> {
    /// Round 0: the template-only opening question.
    Opening,
    /// Later rounds: inject the asked-question list and the latest reply so
    /// duplicates are avoided.
    Followup {
        question_history: &'a [String],
        last_answer: &'a str,
    },
    /// The fixed verdict template; history is irrelevant by design.
    FinalVerdict,
}

pub fn build_consultant_prompt(config: &EvolutionConfig, turn: ConsultantTurn) -> ChatRequest {
    let user = match turn {
        ConsultantTurn::Opening => QUESTION_FORMAT.to_string(),
        ConsultantTurn::Followup {
            question_history,
            last_answer,
        } => {
            let list = serde_json::to_string(question_history).unwrap_or_else(|_| "[]".into());
            format!(
                "Please consider the previous Answer and avoid asking duplicate Question List. Question List: {list}, Last Question Reply/Answer {last_answer}. {QUESTION_FORMAT}"
            )
        }
        ConsultantTurn::FinalVerdict => FINAL_VERDICT_QUESTION.to_string(),
    };
    ChatRequest::new(
        config.consultant_model.clone(),
        vec![
            ChatMessage {
                role: Role::System,
                content: consultant_system(&config.attribute_whitelist),
            },
            ChatMessage {
                role: Role::User,
                content: user,
            },
        ],
    )
}

pub fn build_client_prompt(
    config: &EvolutionConfig,
    source_question: &str,
    new_question: &str,
) -> Result<ChatRequest, EvolveError> {
    if new_question.trim().is_empty() {
        return Err(EvolveError::Validation(
            "generated question is empty".into(),
        ));
    }
    let user = format!(
        "The original background is: {source_question}. The generated question is: {new_question}. Please determine whether there are anomalies in this time series given information above. You must respond ONLY in valid JSON format. Format: {{\"answer\": \"Provide an accurate and concise answer to the question, focusing only on the essential information, limited to no more than 200 words.\"}}."
    );
    Ok(ChatRequest::new(
        config.client_model.clone(),
        vec![
            ChatMessage {
                role: Role::System,
                content: CLIENT_SYSTEM.to_string(),
            },
            ChatMessage {
                role: Role::User,
                content: user,
            },
        ],
    ))
}

pub fn build_intern_prompt(
    config: &EvolutionConfig,
    source_question: &str,
    new_question: &str,
    client_answer: &str,
) -> Result<ChatRequest, EvolveError> {
    if new_question.trim().is_empty() {
        return Err(EvolveError::Validation(
            "generated question is empty".into(),
        ));
    }
    let user = format!(
        "The original background is: {source_question}. The generated question is: {new_question}. The generated answer is: {client_answer}. Please determine whether there are anomalies in this time series given information above. You must respond ONLY in valid JSON format. Format: {{\"answer\": \"Normal or Anomalous\", \"summary\": \"A concise and essential analytical process, limited to no more than 150 words.\"}}"
    );
    Ok(ChatRequest::new(
        config.intern_model.clone(),
        vec![
            ChatMessage {
                role: Role::System,
                content: INTERN_SYSTEM.to_string(),
            },
            ChatMessage {
                role: Role::User,
                content: user,
            },
        ],
    ))
}
