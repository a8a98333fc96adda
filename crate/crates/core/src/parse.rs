//! Robust extraction of JSON payloads, verdict labels, and numeric lists
//! from free-form model output.
//!
//! Model dumps mix prose, reasoning spans, half-closed brackets, and JSON
//! with cosmetic defects. Everything here is total: failures surface as
//! `None`, [`AdLabel::Unparsed`], or an empty list, never as errors.

use serde_json::Value;

/// Remove `<think>...</think>` spans (case-insensitive); an unterminated
/// span is removed to the end of the text.
pub fn strip_think_spans(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let lower = text.to_ascii_lowercase();
    let mut pos = 0;
    while let Some(open) = lower[pos..].find("<think>") {
        let open = pos + open;
        out.push_str(&text[pos..open]);
        match lower[open..].find("</think>") {
            Some(close) => pos = open + close + "</think>".len(),
            None => return out,
        }
    }
    out.push_str(&text[pos..]);
    out
}

/// Byte ranges of every top-level balanced `{...}` block, tracking string
/// state so braces inside string literals do not count. Strings may contain
/// raw newlines (a common model defect); a trailing unclosed block is
/// ignored.
fn balanced_object_ranges(text: &str) -> Vec<(usize, usize)> {
    let bytes = text.as_bytes();
    let mut ranges = Vec::new();
    let mut depth = 0usize;
    let mut start = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate() {
        if in_string {
            if escaped {
                escaped = false;
            } else if b == b'\\' {
                escaped = true;
            } else if b == b'"' {
                in_string = false;
            }
            continue;
        }
        match b {
            b'"' if depth > 0 => in_string = true,
            b'{' => {
                if depth == 0 {
                    start = i;
                }
                depth += 1;
            }
            b'}' if depth > 0 => {
                depth -= 1;
                if depth == 0 {
                    ranges.push((start, i + 1));
                }
            }
            _ => {}
        }
    }
    ranges
}

/// Parse one candidate block, tolerating trailing commas and raw control
/// characters inside string literals.
fn lenient_parse(block: &str) -> Option<Value> {
    if let Ok(v) = serde_json::from_str::<Value>(block) {
        return v.is_object().then_some(v);
    }
    let mut repaired = String::with_capacity(block.len() + 16);
    let mut in_string = false;
    let mut escaped = false;
    for c in block.chars() {
        if in_string {
            if escaped {
                escaped = false;
                repaired.push(c);
                continue;
            }
            match c {
                '\\' => {
                    escaped = true;
                    repaired.push(c);
                }
                '"' => {
                    in_string = false;
                    repaired.push(c);
                }
                '\n' => repaired.push_str("\\n"),
                '\r' => repaired.push_str("\\r"),
                '\t' => repaired.push_str("\\t"),
                _ => repaired.push(c),
            }
        } else {
            if c == '"' {
                in_string = true;
            }
            repaired.push(c);
        }
    }
    // drop trailing commas before a closing brace/bracket
    let mut cleaned = String::with_capacity(repaired.len());
    let mut in_string = false;
    let mut escaped = false;
    let chars: Vec<char> = repaired.chars().collect();
    for (i, &c) in chars.iter().enumerate() {
        if in_string {
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == '"' {
                in_string = false;
            }
            cleaned.push(c);
            continue;
        }
        if c == '"' {
            in_string = true;
            cleaned.push(c);
            continue;
        }
        if c == ',' {
            let next = chars[i + 1..].iter().find(|n| !n.is_whitespace());
            if matches!(next, Some('}') | Some(']')) {
                continue;
            }
        }
        cleaned.push(c);
    }
    serde_json::from_str::<Value>(&cleaned)
        .ok()
        .filter(Value::is_object)
}

/// Extract the last parseable balanced JSON object, after stripping
/// reasoning spans.
pub fn extract_json_payload(text: &str) -> Option<Value> {
    let stripped = strip_think_spans(text);
    balanced_object_ranges(&stripped)
        .iter()
        .rev()
        .find_map(|&(a, b)| lenient_parse(&stripped[a..b]))
}

/// Like [`extract_json_payload`] but takes the first parseable block; the
/// supervisor gate reads agent replies front to back.
pub fn extract_first_json_payload(text: &str) -> Option<Value> {
    let stripped = strip_think_spans(text);
    balanced_object_ranges(&stripped)
        .iter()
        .find_map(|&(a, b)| lenient_parse(&stripped[a..b]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum AdLabel {
    Normal,
    Anomalous,
    Unparsed,
}

impl std::fmt::Display for AdLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Self::Normal => "Normal",
            Self::Anomalous => "Anomalous",
            Self::Unparsed => "Unparsed",
        };
        f.write_str(s)
    }
}

fn keyword_scan(text: &str) -> AdLabel {
    let lower = text.to_ascii_lowercase();
    if lower.contains("anomal") {
        AdLabel::Anomalous
    } else if lower.contains("normal") {
        AdLabel::Normal
    } else {
        AdLabel::Unparsed
    }
}

/// Resolve a model's anomaly-detection verdict. The `answer` field of the
/// last JSON payload wins; otherwise a keyword scan of the text outside
/// reasoning spans decides, with "anomal" taking precedence over "normal".
pub fn parse_ad_label(text: &str) -> AdLabel {
    if let Some(payload) = extract_json_payload(text) {
        if let Some(answer) = payload.get("answer").and_then(Value::as_str) {
            let from_answer = keyword_scan(answer);
            if from_answer != AdLabel::Unparsed {
                return from_answer;
            }
        }
    }
    keyword_scan(&strip_think_spans(text))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NumericTask {
    Forecast,
    Imputation,
}

#[derive(Debug, PartialEq)]
enum ListItem {
    Number(f64),
    Placeholder,
}

/// Parse the comma-separated body of a bracketed list into numbers and
/// placeholder tokens. Empty tokens are skipped.
fn parse_list_items(body: &str) -> Vec<ListItem> {
    body.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|tok| {
            let unquoted = tok.trim_matches(|c| c == '\'' || c == '"');
            match unquoted.parse::<f64>() {
                Ok(v) if v.is_finite() && unquoted == tok => ListItem::Number(v),
                _ => ListItem::Placeholder,
            }
        })
        .collect()
}

/// Tier 1: bracketed arrays, tolerating a missing closing bracket at the end
/// of the text. A mixed list (numbers alongside placeholder tokens) means a
/// failed imputation and yields an empty result for that task; pure-word
/// brackets are prose and are skipped.
fn tier_bracketed(text: &str, task: NumericTask) -> Option<Vec<f64>> {
    let bytes = text.as_bytes();
    let mut candidates: Vec<&str> = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'[' {
            let close = text[i + 1..].find(']').map(|c| i + 1 + c);
            let end = close.unwrap_or(text.len());
            candidates.push(&text[i + 1..end]);
            i = end + 1;
        } else {
            i += 1;
        }
    }
    let mut failed_imputation = false;
    let mut best: Option<Vec<f64>> = None;
    for body in candidates {
        let items = parse_list_items(body);
        if items.is_empty() {
            continue;
        }
        let numbers: Vec<f64> = items
            .iter()
            .filter_map(|i| match i {
                ListItem::Number(v) => Some(*v),
                ListItem::Placeholder => None,
            })
            .collect();
        if numbers.len() == items.len() {
            best = Some(numbers); // later clean lists win
        } else if !numbers.is_empty() {
            failed_imputation = true;
        }
    }
    if best.is_some() {
        return best;
    }
    if failed_imputation && task == NumericTask::Imputation {
        return Some(Vec::new());
    }
    None
}

/// Tier 2: enumerated lists like `1. 16.5 2. 17.2 3. 18.0`; the enumerators
/// must run 1, 2, 3, ... and at least two entries are required.
fn tier_enumerated(text: &str) -> Option<Vec<f64>> {
    let re = regex::Regex::new(r"(\d{1,3})\s*[.)]\s+([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)")
        .unwrap();
    let pairs: Vec<(u32, f64)> = re
        .captures_iter(text)
        .filter_map(|c| {
            let idx = c[1].parse::<u32>().ok()?;
            let val = c[2].parse::<f64>().ok()?;
            val.is_finite().then_some((idx, val))
        })
        .collect();
    let start = pairs.iter().position(|(i, _)| *i == 1)?;
    let mut values = vec![pairs[start].1];
    let mut expect = 2;
    for &(idx, val) in &pairs[start + 1..] {
        if idx == expect {
            values.push(val);
            expect += 1;
        } else {
            break;
        }
    }
    (values.len() >= 2).then_some(values)
}

const CUES: [&str; 12] = [
    "prediction",
    "predict",
    "forecast",
    "future",
    "next",
    "imput",
    "points",
    "values",
    "answer",
    "result",
    "are:",
    "is:",
];

/// Maximal runs of two or more numbers separated only by commas/whitespace.
fn numeric_runs(text: &str) -> Vec<(usize, Vec<f64>)> {
    let re = regex::Regex::new(r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?").unwrap();
    let mut matches: Vec<(usize, usize, f64)> = Vec::new();
    for m in re.find_iter(text) {
        // reject numbers glued to identifiers ("v2", "x1.5")
        if text[..m.start()]
            .chars()
            .next_back()
            .is_some_and(|c| c.is_alphanumeric() || c == '.' || c == '_')
        {
            continue;
        }
        if let Ok(v) = m.as_str().parse::<f64>() {
            if v.is_finite() {
                matches.push((m.start(), m.end(), v));
            }
        }
    }
    let mut runs: Vec<(usize, Vec<f64>)> = Vec::new();
    let mut i = 0;
    while i < matches.len() {
        let run_start = matches[i].0;
        let mut values = vec![matches[i].2];
        let mut j = i;
        while j + 1 < matches.len() {
            let gap = &text[matches[j].1..matches[j + 1].0];
            if !gap.is_empty() && gap.chars().all(|c| c == ',' || c.is_whitespace()) {
                values.push(matches[j + 1].2);
                j += 1;
            } else {
                break;
            }
        }
        if values.len() >= 2 {
            runs.push((run_start, values));
        }
        i = j + 1;
    }
    runs
}

/// Tier 3: a run of numbers following a prediction cue word.
fn tier_cued_run(text: &str) -> Option<Vec<f64>> {
    let lower = text.to_ascii_lowercase();
    let mut cue_ends: Vec<usize> = Vec::new();
    for cue in CUES {
        let mut pos = 0;
        while let Some(found) = lower[pos..].find(cue) {
            let end = pos + found + cue.len();
            cue_ends.push(end);
            pos = end;
        }
    }
    if cue_ends.is_empty() {
        return None;
    }
    cue_ends.sort_unstable();
    let runs = numeric_runs(text);
    for &cue_end in cue_ends.iter().rev() {
        if let Some((_, values)) = runs.iter().find(|(start, _)| *start >= cue_end) {
            return Some(values.clone());
        }
    }
    None
}

/// Extract a predicted numeric sequence from free text. Tiers are tried in
/// order: bracketed array, enumerated list, cued number run. An empty vector
/// means no parse; for imputation it is also the contract for a list whose
/// values could not be produced.
pub fn parse_numeric_list(text: &str, task: NumericTask) -> Vec<f64> {
    let stripped = strip_think_spans(text);
    if let Some(values) = tier_bracketed(&stripped, task) {
        return values;
    }
    if let Some(values) = tier_enumerated(&stripped) {
        return values;
    }
    if let Some(values) = tier_cued_run(&stripped) {
        return values;
    }
    Vec::new()
}
