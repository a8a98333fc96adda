//! Evolution of single-turn anomaly-detection records into multi-turn
//! reasoning transcripts via four cooperating agents.
//!
//! Per record: a Consultant generates probing questions, a Client answers
//! them, an Intern predicts the anomaly verdict from each question/answer
//! pair, and a supervisor gate keeps the pair only when the Intern's verdict
//! matches the ground truth. Two phases share the work — phase one lands the
//! opening pair, phase two grows the dialogue from history — and each phase
//! gets its own attempt budget of `rounds`, so a hostile opening phase
//! cannot starve the follow-ups. The transcript always ends with a fixed
//! verdict question answered from the ground truth, so it carries at most
//! `rounds` pairs in total.

mod journal;
mod prompts;

pub use journal::{question_hash, read_journal, EntryStatus, JournalEntry, JournalWriter};
pub use prompts::{
    build_client_prompt, build_consultant_prompt, build_intern_prompt, ConsultantTurn,
    FINAL_VERDICT_QUESTION,
};

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::backend::{Backend, BackendError, UsageEntry};
use crate::parse::{extract_first_json_payload, extract_json_payload, parse_ad_label, AdLabel};
use crate::series::TimeSeries;

#[derive(Debug, thiserror::Error)]
pub enum EvolveError {
    #[error("backend error: {0}")]
    Backend(#[from] BackendError),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("record has no series and none could be parsed from the question")]
    MissingSeries,
    #[error("unreadable dataset: {0}")]
    Dataset(String),
    #[error("journal error: {0}")]
    Journal(String),
    #[error("output write failed: {0}")]
    Output(String),
}

/// Ground-truth verdict of a source record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GroundTruth {
    Normal,
    Anomalous,
}

impl std::fmt::Display for GroundTruth {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Normal => "Normal",
            Self::Anomalous => "Anomalous",
        })
    }
}

impl std::str::FromStr for GroundTruth {
    type Err = EvolveError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match parse_ad_label(s) {
            AdLabel::Normal => Ok(Self::Normal),
            AdLabel::Anomalous => Ok(Self::Anomalous),
            AdLabel::Unparsed => Err(EvolveError::Validation(format!(
                "unrecognized ground truth {s:?}"
            ))),
        }
    }
}

/// One single-turn record to evolve. The series may ride embedded in the
/// question text (the usual corpus form) or arrive alongside it.
#[derive(Debug, Clone, Serialize)]
pub struct SourceRecord {
    pub question: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub series: Option<TimeSeries>,
    pub ground_truth: GroundTruth,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub domain_tag: Option<String>,
}

impl<'de> Deserialize<'de> for SourceRecord {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            question: String,
            #[serde(default)]
            series: Option<TimeSeries>,
            ground_truth: String,
            #[serde(default)]
            domain_tag: Option<String>,
        }
        let raw = Raw::deserialize(deserializer)?;
        let ground_truth = raw
            .ground_truth
            .parse::<GroundTruth>()
            .map_err(serde::de::Error::custom)?;
        Ok(Self {
            question: raw.question,
            series: raw.series,
            ground_truth,
            domain_tag: raw.domain_tag,
        })
    }
}

impl SourceRecord {
    /// The record's series: the explicit field, or the last numeric array
    /// embedded in the question text.
    pub fn resolve_series(&self) -> Result<TimeSeries, EvolveError> {
        if let Some(series) = &self.series {
            return Ok(series.clone());
        }
        let values =
            crate::parse::parse_numeric_list(&self.question, crate::parse::NumericTask::Forecast);
        if values.is_empty() {
            return Err(EvolveError::MissingSeries);
        }
        TimeSeries::new(values).map_err(|e| EvolveError::Validation(e.to_string()))
    }
}

/// The seven attribute families steering consultant questions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributeFamily {
    Trend,
    Seasonality,
    Statistics,
    LocalFeatures,
    Multivariate,
    Compression,
    Background,
}

impl AttributeFamily {
    pub const ALL: [AttributeFamily; 7] = [
        Self::Trend,
        Self::Seasonality,
        Self::Statistics,
        Self::LocalFeatures,
        Self::Multivariate,
        Self::Compression,
        Self::Background,
    ];
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvolutionConfig {
    /// Per-phase attempt budget; the transcript carries at most this many
    /// pairs including the terminal verdict pair.
    pub rounds: usize,
    pub consultant_model: String,
    pub client_model: String,
    pub intern_model: String,
    pub attribute_whitelist: Vec<AttributeFamily>,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        Self {
            rounds: 3,
            consultant_model: "consultant".into(),
            client_model: "client".into(),
            intern_model: "intern".into(),
            attribute_whitelist: AttributeFamily::ALL.to_vec(),
        }
    }
}

impl EvolutionConfig {
    pub fn validate(&self) -> Result<(), EvolveError> {
        if self.rounds == 0 {
            return Err(EvolveError::Validation("rounds must be >= 1".into()));
        }
        if self.attribute_whitelist.is_empty() {
            return Err(EvolveError::Validation(
                "attribute whitelist cannot be empty".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speaker {
    Human,
    Gpt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub speaker: Speaker,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentRole {
    Consultant,
    Client,
    /// Turns rendered from fixed templates rather than an agent reply.
    Template,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnProvenance {
    pub agent: AgentRole,
    pub model_id: String,
}

/// The evolved multi-turn dialogue for one record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Transcript {
    pub turns: Vec<Turn>,
    /// Number of question/answer pairs, terminal pair included.
    pub rounds_used: usize,
    /// Supervisor verdicts in call order across both phases.
    pub gate_outcomes: Vec<bool>,
    /// Per-turn origin, aligned with `turns`.
    pub provenance: Vec<TurnProvenance>,
    /// Set when both budgets ran out without a single accepted pair and the
    /// transcript holds only the terminal pair.
    pub no_accepted_pairs: bool,
}

impl Transcript {
    /// Dialogue layout used by the batch output: alternating human/gpt
    /// turns.
    pub fn to_sharegpt(&self) -> serde_json::Value {
        serde_json::json!({
            "conversations": self
                .turns
                .iter()
                .map(|t| {
                    serde_json::json!({
                        "from": match t.speaker {
                            Speaker::Human => "human",
                            Speaker::Gpt => "gpt",
                        },
                        "value": t.text,
                    })
                })
                .collect::<Vec<_>>(),
        })
    }
}

/// Binary alignment gate: the intern's parsed `answer` field must equal the
/// ground truth, case-insensitively. An unparseable reply gates false.
pub fn supervisor_gate(intern_text: &str, ground_truth: GroundTruth) -> bool {
    let Some(payload) = extract_first_json_payload(intern_text) else {
        return false;
    };
    let Some(answer) = payload.get("answer").and_then(serde_json::Value::as_str) else {
        return false;
    };
    answer
        .trim()
        .eq_ignore_ascii_case(&ground_truth.to_string())
}

/// The closing sentence of the original single-turn records; an evolved
/// question replaces it when present so the background is not asked twice.
const ORIGINAL_ASK: &str =
    "Please determine whether there are anomalies in this time series given information above.";

/// Terminal-answer summary when no accepted client reply carries one.
const FALLBACK_SUMMARY: &str =
    "The verdict follows from the anomaly analysis in the preceding dialogue.";

/// Merge the source background with the first evolved question, replacing
/// the original closing ask when the record ends with it.
fn merge_source_question(source: &str, new_question: &str) -> String {
    let trimmed = source.trim_end();
    if let Some(stripped) = trimmed.strip_suffix(ORIGINAL_ASK) {
        format!("{}{}", stripped, new_question)
    } else {
        format!("{} {}", trimmed, new_question)
    }
}

/// The consultant replies in JSON with a `question` field; fall back to the
/// raw text when the reply is not structured.
fn extract_question(reply: &str) -> String {
    extract_json_payload(reply)
        .and_then(|v| {
            v.get("question")
                .and_then(serde_json::Value::as_str)
                .map(String::from)
        })
        .unwrap_or_else(|| reply.trim().to_string())
}

fn extract_summary(reply: &str) -> Option<String> {
    extract_json_payload(reply).and_then(|v| {
        v.get("summary")
            .and_then(serde_json::Value::as_str)
            .map(String::from)
    })
}

/// A record that aborted mid-loop: the error plus whatever had been
/// accepted, for the journal.
#[derive(Debug)]
pub struct EvolveFailure {
    pub error: EvolveError,
    pub partial: Transcript,
}

struct AcceptedPair {
    question: String,
    client_answer: String,
}

struct LoopState {
    accepted: Vec<AcceptedPair>,
    question_history: Vec<String>,
    gate_outcomes: Vec<bool>,
    last_client_answer: Option<String>,
}

impl LoopState {
    fn partial_transcript(&self, record: &SourceRecord, config: &EvolutionConfig) -> Transcript {
        assemble_transcript(record, config, &self.accepted, &self.gate_outcomes, false)
    }
}

fn assemble_transcript(
    record: &SourceRecord,
    config: &EvolutionConfig,
    accepted: &[AcceptedPair],
    gate_outcomes: &[bool],
    with_terminal: bool,
) -> Transcript {
    let mut turns = Vec::new();
    let mut provenance = Vec::new();
    let consultant = |model: &str| TurnProvenance {
        agent: AgentRole::Consultant,
        model_id: model.to_string(),
    };
    let client = |model: &str| TurnProvenance {
        agent: AgentRole::Client,
        model_id: model.to_string(),
    };
    let template = TurnProvenance {
        agent: AgentRole::Template,
        model_id: String::new(),
    };

    for (i, pair) in accepted.iter().enumerate() {
        let human_text = if i == 0 {
            merge_source_question(&record.question, &pair.question)
        } else {
            pair.question.clone()
        };
        turns.push(Turn {
            speaker: Speaker::Human,
            text: human_text,
        });
        provenance.push(consultant(&config.consultant_model));
        turns.push(Turn {
            speaker: Speaker::Gpt,
            text: pair.client_answer.clone(),
        });
        provenance.push(client(&config.client_model));
    }

    if with_terminal {
        let terminal_question = if accepted.is_empty() {
            merge_source_question(&record.question, FINAL_VERDICT_QUESTION)
        } else {
            FINAL_VERDICT_QUESTION.to_string()
        };
        let summary = accepted
            .last()
            .and_then(|pair| extract_summary(&pair.client_answer))
            .unwrap_or_else(|| FALLBACK_SUMMARY.to_string());
        let answer = serde_json::json!({
            "answer": record.ground_truth.to_string(),
            "summary": summary,
        })
        .to_string();
        turns.push(Turn {
            speaker: Speaker::Human,
            text: terminal_question,
        });
        provenance.push(template.clone());
        turns.push(Turn {
            speaker: Speaker::Gpt,
            text: answer,
        });
        provenance.push(template);
    }

    Transcript {
        rounds_used: turns.len() / 2,
        gate_outcomes: gate_outcomes.to_vec(),
        no_accepted_pairs: accepted.is_empty(),
        turns,
        provenance,
    }
}

/// Run one consultant/client/intern/gate round. Returns the gate outcome.
fn run_round(
    record: &SourceRecord,
    config: &EvolutionConfig,
    backend: &Backend,
    state: &mut LoopState,
    turn: ConsultantTurn<'_>,
) -> Result<bool, EvolveError> {
    let question_reply = backend.complete(&build_consultant_prompt(config, turn))?;
    let question = extract_question(&question_reply.text);
    state.question_history.push(question.clone());

    let client_request = build_client_prompt(config, &record.question, &question)?;
    let client_reply = backend.complete(&client_request)?;
    state.last_client_answer = Some(client_reply.text.clone());

    let intern_request =
        build_intern_prompt(config, &record.question, &question, &client_reply.text)?;
    let intern_reply = backend.complete(&intern_request)?;

    let gate = supervisor_gate(&intern_reply.text, record.ground_truth);
    state.gate_outcomes.push(gate);
    if gate {
        state.accepted.push(AcceptedPair {
            question,
            client_answer: client_reply.text,
        });
    }
    Ok(gate)
}

/// Evolve one record into a transcript.
///
/// Phase one spends up to `rounds` gate attempts on the opening pair; phase
/// two (only reachable once an opening pair exists) spends up to `rounds`
/// more attempts growing the dialogue until `rounds - 1` pairs are accepted.
/// The fixed verdict pair is appended last, its answer templated from the
/// ground truth and the summary of the last accepted client reply. Client
/// replies are carried verbatim, reasoning spans included.
pub fn evolve_record(
    record: &SourceRecord,
    config: &EvolutionConfig,
    backend: &Backend,
) -> Result<Transcript, Box<EvolveFailure>> {
    let fail = |error: EvolveError, state: &LoopState| {
        Box::new(EvolveFailure {
            partial: state.partial_transcript(record, config),
            error,
        })
    };
    let mut state = LoopState {
        accepted: Vec::new(),
        question_history: Vec::new(),
        gate_outcomes: Vec::new(),
        last_client_answer: None,
    };
    if let Err(error) = config.validate() {
        return Err(fail(error, &state));
    }
    if let Err(error) = record.resolve_series() {
        return Err(fail(error, &state));
    }

    let target_accepted = config.rounds - 1;

    if target_accepted > 0 {
        for _attempt in 0..config.rounds {
            match run_round(record, config, backend, &mut state, ConsultantTurn::Opening) {
                Ok(true) => break,
                Ok(false) => continue,
                Err(error) => return Err(fail(error, &state)),
            }
        }

        if !state.accepted.is_empty() {
            for _attempt in 0..config.rounds {
                if state.accepted.len() >= target_accepted {
                    break;
                }
                let history = state.question_history.clone();
                let last_answer = state.last_client_answer.clone().unwrap_or_default();
                let turn = ConsultantTurn::Followup {
                    question_history: &history,
                    last_answer: &last_answer,
                };
                if let Err(error) = run_round(record, config, backend, &mut state, turn) {
                    return Err(fail(error, &state));
                }
            }
        }
    }

    let transcript =
        assemble_transcript(record, config, &state.accepted, &state.gate_outcomes, true);

    // exact-duplicate questions are a quality smell, not an error
    for (i, a) in state.accepted.iter().enumerate() {
        for b in state.accepted.iter().skip(i + 1) {
            if a.question == b.question {
                eprintln!(
                    "warning: duplicate consultant question in transcript: {:?}",
                    a.question
                );
            }
        }
    }

    Ok(transcript)
}

/// Read a dataset of source records: either a JSON array or JSONL.
pub fn load_source_records(path: &Path) -> Result<Vec<SourceRecord>, EvolveError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| EvolveError::Dataset(format!("{}: {e}", path.display())))?;
    let trimmed = text.trim_start();
    if trimmed.starts_with('[') {
        return serde_json::from_str(&text)
            .map_err(|e| EvolveError::Dataset(format!("{}: {e}", path.display())));
    }
    let mut records = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: SourceRecord = serde_json::from_str(line).map_err(|e| {
            EvolveError::Dataset(format!("{} line {}: {e}", path.display(), lineno + 1))
        })?;
        records.push(record);
    }
    Ok(records)
}

#[derive(Debug, Clone, Serialize)]
pub struct BatchSummary {
    pub total: usize,
    pub completed: usize,
    pub failed: usize,
    pub resumed: usize,
    pub ledger: std::collections::BTreeMap<String, UsageEntry>,
}

pub struct BatchConfig {
    pub evolution: EvolutionConfig,
    pub data_path: PathBuf,
    pub saved_path: PathBuf,
    /// Journal written by this run; defaults to `<saved_path>.journal.jsonl`.
    pub journal_path: PathBuf,
    /// Previous journal to resume from, if any.
    pub resume_path: Option<PathBuf>,
    pub workers: usize,
}

impl BatchConfig {
    pub fn new(evolution: EvolutionConfig, data_path: PathBuf, saved_path: PathBuf) -> Self {
        let journal_path = default_journal_path(&saved_path);
        Self {
            evolution,
            data_path,
            saved_path,
            journal_path,
            resume_path: None,
            workers: 4,
        }
    }
}

pub fn default_journal_path(saved_path: &Path) -> PathBuf {
    let mut name = saved_path.file_name().unwrap_or_default().to_os_string();
    name.push(".journal.jsonl");
    saved_path.with_file_name(name)
}

/// Evolve a whole dataset under a bounded worker pool.
///
/// Finished records append to the journal one flushed line at a time; the
/// dialogue output is rebuilt from journal content in dataset order after
/// the run, so interrupting and resuming any number of times converges on
/// byte-identical output.
pub fn run_batch(config: &BatchConfig, backend: &Backend) -> Result<BatchSummary, EvolveError> {
    config.evolution.validate()?;
    let records = load_source_records(&config.data_path)?;

    // Resumable state: Done entries whose question hash still matches.
    let mut completed: HashMap<usize, JournalEntry> = HashMap::new();
    if let Some(resume_path) = &config.resume_path {
        for entry in read_journal(resume_path)? {
            let matches = records
                .get(entry.index)
                .is_some_and(|r| question_hash(&r.question) == entry.qhash);
            if matches && entry.status == EntryStatus::Done {
                completed.insert(entry.index, entry);
            }
        }
    }
    let resumed = completed.len();

    let fresh_journal = config
        .resume_path
        .as_ref()
        .map(|p| p != &config.journal_path)
        .unwrap_or(true);
    let writer = JournalWriter::open(&config.journal_path, fresh_journal)?;
    if fresh_journal {
        // carry resumed entries over so the journal alone rebuilds the output
        let mut carried: Vec<&JournalEntry> = completed.values().collect();
        carried.sort_by_key(|e| e.index);
        for entry in carried {
            writer.append(entry)?;
        }
    }

    let entries: Mutex<HashMap<usize, JournalEntry>> = Mutex::new(completed);
    let cursor = AtomicUsize::new(0);
    let failures = AtomicUsize::new(0);
    let worker_count = config.workers.clamp(1, records.len().max(1));
    let journal_error: Mutex<Option<EvolveError>> = Mutex::new(None);

    std::thread::scope(|scope| {
        for _ in 0..worker_count {
            scope.spawn(|| loop {
                let index = cursor.fetch_add(1, Ordering::SeqCst);
                let Some(record) = records.get(index) else {
                    return;
                };
                if entries.lock().unwrap().contains_key(&index) {
                    continue; // resumed
                }
                let entry = match evolve_record(record, &config.evolution, backend) {
                    Ok(transcript) => JournalEntry {
                        index,
                        qhash: question_hash(&record.question),
                        status: EntryStatus::Done,
                        transcript: Some(transcript),
                        error: None,
                    },
                    Err(failure) => {
                        failures.fetch_add(1, Ordering::SeqCst);
                        JournalEntry {
                            index,
                            qhash: question_hash(&record.question),
                            status: EntryStatus::Failed,
                            transcript: Some(failure.partial),
                            error: Some(failure.error.to_string()),
                        }
                    }
                };
                if let Err(err) = writer.append(&entry) {
                    *journal_error.lock().unwrap() = Some(err);
                    return;
                }
                entries.lock().unwrap().insert(index, entry);
            });
        }
    });

    if let Some(err) = journal_error.into_inner().unwrap() {
        return Err(err);
    }

    let entries = entries.into_inner().unwrap();
    write_sharegpt_output(&config.saved_path, records.len(), &entries)?;

    Ok(BatchSummary {
        total: records.len(),
        completed: entries
            .values()
            .filter(|e| e.status == EntryStatus::Done)
            .count(),
        failed: failures.load(Ordering::SeqCst),
        resumed,
        ledger: backend.ledger(),
    })
}

/// Atomically (write + rename) produce the dialogue JSONL in dataset order.
fn write_sharegpt_output(
    saved_path: &Path,
    total: usize,
    entries: &HashMap<usize, JournalEntry>,
) -> Result<(), EvolveError> {
    let tmp_path = saved_path.with_extension("tmp");
    {
        let mut out = std::io::BufWriter::new(
            std::fs::File::create(&tmp_path)
                .map_err(|e| EvolveError::Output(format!("{}: {e}", tmp_path.display())))?,
        );
        for index in 0..total {
            let Some(entry) = entries.get(&index) else {
                continue;
            };
            if entry.status != EntryStatus::Done {
                continue;
            }
            let Some(transcript) = &entry.transcript else {
                continue;
            };
            use std::io::Write;
            serde_json::to_writer(&mut out, &transcript.to_sharegpt())
                .map_err(|e| EvolveError::Output(e.to_string()))?;
            out.write_all(b"\n")
                .map_err(|e| EvolveError::Output(e.to_string()))?;
        }
        use std::io::Write;
        out.flush()
            .map_err(|e| EvolveError::Output(e.to_string()))?;
    }
    std::fs::rename(&tmp_path, saved_path)
        .map_err(|e| EvolveError::Output(format!("{}: {e}", saved_path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{MockProvider, MockRule};
    use crate::testdata::iops_values;

    fn rule(pattern: &str, response: &str, consume: bool) -> MockRule {
        MockRule {
            pattern: pattern.into(),
            response: Some(response.into()),
            error: None,
            consume,
        }
    }

    fn backend_from(rules: Vec<MockRule>) -> Backend {
        Backend::new(Box::new(MockProvider::new(rules).unwrap()), 4)
            .with_base_backoff(std::time::Duration::from_millis(1))
    }

    fn config() -> EvolutionConfig {
        EvolutionConfig {
            consultant_model: "mock-consultant".into(),
            client_model: "mock-client".into(),
            intern_model: "mock-intern".into(),
            ..EvolutionConfig::default()
        }
    }

    fn source_record() -> SourceRecord {
        let series = serde_json::to_string(&iops_values()).unwrap();
        SourceRecord {
            question: format!(
                "This data originates from monitoring systems and devices. The input Time Serie is {series}. {ORIGINAL_ASK}"
            ),
            series: None,
            ground_truth: GroundTruth::Anomalous,
            domain_tag: Some("AIOPS".into()),
        }
    }

    fn happy_rules() -> Vec<MockRule> {
        vec![
            rule(
                "mock-consultant",
                r#"{"question": "Is the drop at index 13 anomalous?", "summary": "probe the outlier"}"#,
                false,
            ),
            rule(
                "mock-client",
                r#"<think>checking stats</think>{"answer": "The drop to 7.0 is a strong outlier.", "summary": "z-score analysis flags index 13"}"#,
                false,
            ),
            rule(
                "mock-intern",
                r#"{"answer": "Anomalous", "summary": "clear outlier"}"#,
                false,
            ),
            rule("", "fallback", false),
        ]
    }

    #[test]
    fn supervisor_gate_examples() {
        assert!(supervisor_gate(
            r#"{"answer":"Anomalous","summary":"x"}"#,
            GroundTruth::Anomalous
        ));
        assert!(!supervisor_gate(
            r#"{"answer":"Normal"}"#,
            GroundTruth::Anomalous
        ));
        assert!(!supervisor_gate("no json here", GroundTruth::Normal));
        // case-insensitive equality, not substring
        assert!(supervisor_gate(
            r#"{"answer":"anomalous"}"#,
            GroundTruth::Anomalous
        ));
        assert!(!supervisor_gate(
            r#"{"answer":"probably anomalous"}"#,
            GroundTruth::Anomalous
        ));
    }

    #[test]
    fn all_pass_run_yields_rounds_pairs() {
        let backend = backend_from(happy_rules());
        let transcript = evolve_record(&source_record(), &config(), &backend).unwrap();
        assert_eq!(transcript.rounds_used, 3);
        assert_eq!(transcript.turns.len(), 6);
        assert_eq!(transcript.gate_outcomes, vec![true, true]);
        assert!(!transcript.no_accepted_pairs);
        // terminal pair uses the fixed template and the ground truth
        assert_eq!(transcript.turns[4].text, FINAL_VERDICT_QUESTION);
        assert_eq!(
            parse_ad_label(&transcript.turns[5].text),
            AdLabel::Anomalous
        );
        // first human turn embeds the source background, original ask replaced
        assert!(transcript.turns[0].text.contains("monitoring systems"));
        assert!(!transcript.turns[0].text.contains(ORIGINAL_ASK));
        assert!(transcript.turns[0]
            .text
            .ends_with("Is the drop at index 13 anomalous?"));
        // think spans survive in client turns
        assert!(transcript.turns[1].text.contains("<think>"));
        // terminal summary distilled from the last client reply
        assert!(transcript.turns[5]
            .text
            .contains("z-score analysis flags index 13"));
    }

    #[test]
    fn all_fail_run_keeps_only_terminal_pair() {
        let mut rules = happy_rules();
        rules[2] = rule("mock-intern", r#"{"answer": "Normal"}"#, false);
        let backend = backend_from(rules);
        let transcript = evolve_record(&source_record(), &config(), &backend).unwrap();
        assert_eq!(transcript.rounds_used, 1);
        assert_eq!(transcript.turns.len(), 2);
        assert_eq!(transcript.gate_outcomes, vec![false, false, false]);
        assert!(transcript.no_accepted_pairs);
        assert!(transcript.turns[0].text.contains("monitoring systems"));
        assert!(transcript.turns[0].text.ends_with(FINAL_VERDICT_QUESTION));
        assert_eq!(
            parse_ad_label(&transcript.turns[1].text),
            AdLabel::Anomalous
        );
    }

    #[test]
    fn two_round_budget_reproduces_the_worked_layout() {
        let mut cfg = config();
        cfg.rounds = 2;
        let backend = backend_from(happy_rules());
        let transcript = evolve_record(&source_record(), &cfg, &backend).unwrap();
        // one evolved pair plus the verdict pair
        assert_eq!(transcript.rounds_used, 2);
        assert_eq!(transcript.gate_outcomes, vec![true]);
        assert_eq!(transcript.turns[2].text, FINAL_VERDICT_QUESTION);
        let verdict = extract_json_payload(&transcript.turns[3].text).unwrap();
        assert_eq!(verdict["answer"], "Anomalous");
    }

    #[test]
    fn alternating_gates_consume_phase_budgets() {
        let mut rules = vec![
            rule("mock-intern", r#"{"answer": "Normal"}"#, true),
            rule("mock-intern", r#"{"answer": "Anomalous"}"#, true),
            rule("mock-intern", r#"{"answer": "Normal"}"#, true),
            rule("mock-intern", r#"{"answer": "Anomalous"}"#, true),
        ];
        rules.extend(happy_rules());
        let backend = backend_from(rules);
        let transcript = evolve_record(&source_record(), &config(), &backend).unwrap();
        assert_eq!(transcript.gate_outcomes, vec![false, true, false, true]);
        assert_eq!(transcript.rounds_used, 3);
    }

    #[test]
    fn single_round_budget_is_terminal_only() {
        let mut cfg = config();
        cfg.rounds = 1;
        let backend = backend_from(happy_rules());
        let transcript = evolve_record(&source_record(), &cfg, &backend).unwrap();
        assert_eq!(transcript.rounds_used, 1);
        assert!(transcript.gate_outcomes.is_empty());
        // no agent was ever called
        assert!(backend.ledger().is_empty());
    }

    #[test]
    fn ground_truth_parsing() {
        assert_eq!(
            "Anomalous".parse::<GroundTruth>().unwrap(),
            GroundTruth::Anomalous
        );
        assert_eq!(
            "normal".parse::<GroundTruth>().unwrap(),
            GroundTruth::Normal
        );
        assert_eq!(
            "this time series includes Anomaly Point"
                .parse::<GroundTruth>()
                .unwrap(),
            GroundTruth::Anomalous
        );
        assert!("maybe".parse::<GroundTruth>().is_err());
    }

    #[test]
    fn missing_series_is_rejected() {
        let record = SourceRecord {
            question: "no numbers here at all".into(),
            series: None,
            ground_truth: GroundTruth::Normal,
            domain_tag: None,
        };
        let backend = backend_from(happy_rules());
        let failure = evolve_record(&record, &config(), &backend).unwrap_err();
        assert!(matches!(failure.error, EvolveError::MissingSeries));
    }

    #[test]
    fn empty_generated_question_is_a_validation_error() {
        let cfg = config();
        assert!(build_client_prompt(&cfg, "bg", "").is_err());
        assert!(build_intern_prompt(&cfg, "bg", "  ", "ans").is_err());
    }
}
