//! Single binary exposing all pipelines as subcommands.
//!
//! Exit codes: 0 on success, 1 on validation/configuration errors, 2 on
//! runtime failures. Diagnostics go to standard error; machine-readable
//! output goes to files only.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use tsadkit::backend::Backend;
use tsadkit::config::{ConfigError, GlobalConfig};
use tsadkit::eval::{evaluate_run, EvalContext, EvalError, EvalReport, EvalTask};
use tsadkit::local::detect_local_features;
use tsadkit::seasonality::classify_seasonality;
use tsadkit::sgad::{sampled_spec, synthesize, validate, DisturbanceClass};
use tsadkit::stats::compute_statistics;
use tsadkit::tkto::{
    judge_feedback, prepare_rl_dataset, tkto_loss, FeedbackVector, ScoredPair, TktoError,
    TktoParams,
};
use tsadkit::trend::classify_trend;
use tsadkit::tsevol::{run_batch, AttributeFamily, BatchConfig, EvolutionConfig, EvolveError};
use tsadkit::TimeSeries;

#[derive(Parser)]
#[command(
    name = "tsadkit",
    version,
    about = "Batch toolkit for time-series anomaly-detection data pipelines"
)]
struct Cli {
    /// Config file in key = value format.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evolve single-turn records into multi-turn dialogue transcripts.
    Evolve(EvolveArgs),
    /// Attach composite scores and preference weights to judged pairs.
    Score(ScoreArgs),
    /// Compute the preference loss over pairs with log-probabilities.
    Loss(LossArgs),
    /// Synthesize a labeled power-quality disturbance corpus.
    Sgad(SgadArgs),
    /// Compute attribute features for series.
    Features(FeaturesArgs),
    /// Evaluate a single-turn verdict dump.
    #[command(name = "eval-ad")]
    EvalAd(EvalArgs),
    /// Evaluate a multi-turn dialogue dump (final verdict turn).
    #[command(name = "eval-multiturn")]
    EvalMultiturn(EvalArgs),
    /// Evaluate open-ended reasoning answers with the LLM judge.
    #[command(name = "eval-reason")]
    EvalReason(EvalArgs),
    /// Evaluate forecasting dumps (MAE + format score).
    #[command(name = "eval-forecast")]
    EvalForecast(EvalArgs),
    /// Evaluate imputation dumps (MAE + format score).
    #[command(name = "eval-impute")]
    EvalImpute(EvalArgs),
    /// Evaluate multi-class answers with the LLM judge.
    #[command(name = "eval-class")]
    EvalClass(EvalArgs),
}

#[derive(Args)]
struct BackendArgs {
    /// Mock script (JSONL of match/response rules); overrides the endpoint.
    #[arg(long = "mock_script")]
    mock_script: Option<PathBuf>,
    /// OpenAI-compatible endpoint base URL.
    #[arg(long = "endpoint")]
    endpoint: Option<String>,
}

impl BackendArgs {
    fn apply(&self, config: &mut GlobalConfig) {
        if let Some(script) = &self.mock_script {
            config.mock_script = Some(script.clone());
        }
        if let Some(endpoint) = &self.endpoint {
            config.endpoint = Some(endpoint.clone());
        }
    }
}

#[derive(Args)]
struct EvolveArgs {
    /// Raw anomaly-detection dataset (JSON array or JSONL of records).
    #[arg(long = "data_path")]
    data_path: PathBuf,
    /// Destination for the evolved dialogue JSONL.
    #[arg(long = "saved_path")]
    saved_path: PathBuf,
    /// Maximum number of evolution rounds.
    #[arg(long = "rounds", default_value_t = 3)]
    rounds: usize,
    /// Journal from a previous run; completed records are skipped.
    #[arg(long = "last_log_path")]
    last_log_path: Option<PathBuf>,
    /// Model for the Consultant agent.
    #[arg(long = "consultant_model")]
    consultant_model: Option<String>,
    /// Model for the Client agent.
    #[arg(long = "client_model")]
    client_model: Option<String>,
    /// Model for the Intern agent.
    #[arg(long = "intern_model")]
    intern_model: Option<String>,
    /// Worker threads.
    #[arg(long = "workers")]
    workers: Option<usize>,
    #[command(flatten)]
    backend: BackendArgs,
}

#[derive(Args)]
struct ScoreArgs {
    /// Input pairs (JSONL with x, y and either d or a truth for judging).
    #[arg(long = "pairs")]
    pairs: PathBuf,
    /// Output RL dataset (JSONL of x, y, d, S, alpha).
    #[arg(long = "out")]
    out: PathBuf,
    #[arg(long = "epsilon")]
    epsilon: Option<f64>,
    #[arg(long = "eta")]
    eta: Option<f64>,
    #[arg(long = "kappa")]
    kappa: Option<f64>,
    #[arg(long = "beta")]
    beta: Option<f64>,
    /// Judge pairs lacking feedback via the configured backend.
    #[arg(long = "judge", default_value_t = false)]
    judge: bool,
    /// Judge model id override.
    #[arg(long = "judge_model")]
    judge_model: Option<String>,
    #[command(flatten)]
    backend: BackendArgs,
}

#[derive(Args)]
struct LossArgs {
    /// Scored pairs with log-probabilities (JSONL).
    #[arg(long = "pairs")]
    pairs: PathBuf,
    /// Output report path (JSON).
    #[arg(long = "out")]
    out: PathBuf,
    #[arg(long = "epsilon")]
    epsilon: Option<f64>,
    #[arg(long = "eta")]
    eta: Option<f64>,
    #[arg(long = "kappa")]
    kappa: Option<f64>,
    #[arg(long = "beta")]
    beta: Option<f64>,
}

#[derive(Args)]
struct SgadArgs {
    /// Output corpus (JSONL of values, label, spec).
    #[arg(long = "out")]
    out: PathBuf,
    /// Number of signals to synthesize.
    #[arg(long = "count", default_value_t = 170)]
    count: usize,
    #[arg(long = "seed", default_value_t = 0)]
    seed: u64,
    /// Comma-separated class subset, e.g. C2,C3,C8; all 17 by default.
    #[arg(long = "classes")]
    classes: Option<String>,
    #[arg(long = "base_freq_hz", default_value_t = 50.0)]
    base_freq_hz: f64,
    #[arg(long = "sample_rate_hz", default_value_t = 3200.0)]
    sample_rate_hz: f64,
    #[arg(long = "cycles", default_value_t = 10)]
    cycles: u32,
}

#[derive(Args)]
struct FeaturesArgs {
    /// Input series (JSON array of series, or JSONL; bare number arrays
    /// work).
    #[arg(long = "data")]
    data: PathBuf,
    /// Output feature reports (JSONL).
    #[arg(long = "out")]
    out: PathBuf,
    /// Z-score threshold for outlier features.
    #[arg(long = "z_threshold", default_value_t = 3.0)]
    z_threshold: f64,
}

#[derive(Args)]
struct EvalArgs {
    /// Prediction dump produced by a generation run (JSONL).
    #[arg(long = "input_dir")]
    input_dir: PathBuf,
    /// Report destination: a directory (results.json inside) or a file.
    #[arg(long = "output_dir")]
    output_dir: PathBuf,
    /// Ground-truth values for numeric tasks (JSONL).
    #[arg(long = "ground_truth_file")]
    ground_truth_file: Option<PathBuf>,
    /// Judge model id override.
    #[arg(long = "judge_model")]
    judge_model: Option<String>,
    /// Let the LLM judge rescue numeric outputs the parser tiers reject.
    #[arg(long = "llm_fallback", default_value_t = false)]
    llm_fallback: bool,
    #[command(flatten)]
    backend: BackendArgs,
}

enum CliError {
    Validation(String),
    Runtime(String),
}

impl From<ConfigError> for CliError {
    fn from(err: ConfigError) -> Self {
        CliError::Validation(err.to_string())
    }
}

impl From<EvolveError> for CliError {
    fn from(err: EvolveError) -> Self {
        match err {
            EvolveError::Validation(_) | EvolveError::MissingSeries => {
                CliError::Validation(err.to_string())
            }
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(err: EvalError) -> Self {
        match err {
            EvalError::Config(_) | EvalError::Invalid(_) => CliError::Validation(err.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<TktoError> for CliError {
    fn from(err: TktoError) -> Self {
        match err {
            TktoError::Io(_) | TktoError::Backend(_) => CliError::Runtime(err.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        CliError::Runtime(err.to_string())
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            std::process::exit(code);
        }
    };
    let code = match run(cli) {
        Ok(()) => 0,
        Err(CliError::Validation(msg)) => {
            eprintln!("error: {msg}");
            1
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            2
        }
    };
    std::process::exit(code);
}

fn run(cli: Cli) -> Result<(), CliError> {
    let config = GlobalConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Evolve(args) => cmd_evolve(config, args),
        Command::Score(args) => cmd_score(config, args),
        Command::Loss(args) => cmd_loss(config, args),
        Command::Sgad(args) => cmd_sgad(args),
        Command::Features(args) => cmd_features(args),
        Command::EvalAd(args) => cmd_eval(config, args, EvalTask::Ad),
        Command::EvalMultiturn(args) => cmd_eval(config, args, EvalTask::MultiturnAd),
        Command::EvalReason(args) => cmd_eval(config, args, EvalTask::Reasoning),
        Command::EvalForecast(args) => cmd_eval(config, args, EvalTask::Forecast),
        Command::EvalImpute(args) => cmd_eval(config, args, EvalTask::Imputation),
        Command::EvalClass(args) => cmd_eval(config, args, EvalTask::Classification),
    }
}

fn cmd_evolve(mut config: GlobalConfig, args: EvolveArgs) -> Result<(), CliError> {
    args.backend.apply(&mut config);
    if let Some(model) = args.consultant_model {
        config.consultant_model = model;
    }
    if let Some(model) = args.client_model {
        config.client_model = model;
    }
    if let Some(model) = args.intern_model {
        config.intern_model = model;
    }
    if let Some(workers) = args.workers {
        config.workers = workers;
    }
    let backend = config.build_backend()?;
    let evolution = EvolutionConfig {
        rounds: args.rounds,
        consultant_model: config.consultant_model.clone(),
        client_model: config.client_model.clone(),
        intern_model: config.intern_model.clone(),
        attribute_whitelist: AttributeFamily::ALL.to_vec(),
    };
    let mut batch = BatchConfig::new(evolution, args.data_path, args.saved_path);
    batch.resume_path = args.last_log_path;
    batch.workers = config.workers;

    let summary = run_batch(&batch, &backend)?;
    eprintln!(
        "evolved {} of {} records ({} resumed, {} failed)",
        summary.completed, summary.total, summary.resumed, summary.failed
    );
    for (model, usage) in &summary.ledger {
        eprintln!(
            "  {model}: {} calls, {} prompt + {} completion tokens, {} retries",
            usage.calls, usage.prompt_tokens, usage.completion_tokens, usage.retries
        );
    }
    if summary.failed > 0 {
        return Err(CliError::Runtime(format!(
            "{} records failed; rerun with --last_log_path {} to resume",
            summary.failed,
            batch.journal_path.display()
        )));
    }
    Ok(())
}

#[derive(Deserialize)]
struct ScoreInput {
    x: String,
    y: String,
    #[serde(default)]
    d: Option<FeedbackVector>,
    #[serde(default)]
    truth: Option<String>,
    #[serde(default)]
    d3: Option<f64>,
}

fn merged_params(
    epsilon: Option<f64>,
    eta: Option<f64>,
    kappa: Option<f64>,
    beta: Option<f64>,
) -> Result<TktoParams, CliError> {
    let mut params = TktoParams::default();
    if let Some(v) = epsilon {
        params.epsilon = v;
    }
    if let Some(v) = eta {
        params.eta = v;
    }
    if let Some(v) = kappa {
        params.kappa = v;
    }
    if let Some(v) = beta {
        params.beta = v;
    }
    params.validate()?;
    Ok(params)
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = serde_json::from_str(line).map_err(|e| {
            CliError::Runtime(format!("{} line {}: {e}", path.display(), lineno + 1))
        })?;
        rows.push(row);
    }
    Ok(rows)
}

fn cmd_score(mut config: GlobalConfig, args: ScoreArgs) -> Result<(), CliError> {
    args.backend.apply(&mut config);
    if let Some(model) = args.judge_model {
        config.judge_model = model;
    }
    let params = merged_params(args.epsilon, args.eta, args.kappa, args.beta)?;
    let inputs: Vec<ScoreInput> = read_jsonl(&args.pairs)?;
    let backend = if args.judge {
        Some(config.build_backend()?)
    } else {
        None
    };

    let mut triples = Vec::new();
    let mut unjudged = 0usize;
    for (i, input) in inputs.iter().enumerate() {
        let feedback = match (&input.d, &backend) {
            (Some(d), _) => {
                let mut d = *d;
                if d.d3.is_none() {
                    d.d3 = input.d3;
                }
                d.validate()?;
                d
            }
            (None, Some(backend)) => {
                let truth = input.truth.as_deref().ok_or_else(|| {
                    CliError::Validation(format!(
                        "pair {i} has no feedback and no truth to judge against"
                    ))
                })?;
                match judge_feedback(&input.x, &input.y, truth, backend, &config.judge_model) {
                    Ok((d0, d1, d2)) => FeedbackVector::new(d0, d1, d2, input.d3)?,
                    Err(TktoError::Unjudged) => {
                        eprintln!("warning: pair {i} flagged unjudged, skipped");
                        unjudged += 1;
                        continue;
                    }
                    Err(other) => return Err(other.into()),
                }
            }
            (None, None) => {
                return Err(CliError::Validation(format!(
                    "pair {i} has no feedback vector; pass --judge with a configured backend"
                )));
            }
        };
        triples.push((input.x.clone(), input.y.clone(), feedback));
    }

    let written = prepare_rl_dataset(&triples, &params, &args.out)?;
    eprintln!(
        "scored {written} pairs ({unjudged} unjudged) -> {}",
        args.out.display()
    );
    Ok(())
}

#[derive(Deserialize)]
struct LossInput {
    x: String,
    y: String,
    d: FeedbackVector,
    #[serde(default)]
    alpha: Option<f64>,
    logp_policy: f64,
    logp_ref: f64,
}

fn cmd_loss(_config: GlobalConfig, args: LossArgs) -> Result<(), CliError> {
    let params = merged_params(args.epsilon, args.eta, args.kappa, args.beta)?;
    let inputs: Vec<LossInput> = read_jsonl(&args.pairs)?;
    if inputs.is_empty() {
        return Err(CliError::Validation(format!(
            "{}: no pairs to score",
            args.pairs.display()
        )));
    }
    let mut pairs = Vec::with_capacity(inputs.len());
    for (i, input) in inputs.into_iter().enumerate() {
        let pair = ScoredPair::new(
            input.x,
            input.y,
            input.d,
            input.logp_policy,
            input.logp_ref,
            &params,
        )?;
        if let Some(alpha) = input.alpha {
            if (alpha - pair.alpha).abs() > 1e-9 {
                return Err(CliError::Validation(format!(
                    "pair {i}: alpha {alpha} does not match soft_label(composite_score(d)) = {}",
                    pair.alpha
                )));
            }
        }
        pairs.push(pair);
    }
    let per_pair: Vec<f64> = pairs
        .iter()
        .map(|p| tkto_loss(p, &params))
        .collect::<Result<_, _>>()?;
    let mean = tsadkit::tkto::batch_loss(&pairs, &params)?;
    let report = serde_json::json!({
        "n": pairs.len(),
        "mean_loss": mean,
        "params": params,
        "per_pair": per_pair,
    });
    write_json(&args.out, &report)?;
    eprintln!(
        "mean loss over {} pairs -> {}",
        pairs.len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_sgad(args: SgadArgs) -> Result<(), CliError> {
    let classes: Vec<DisturbanceClass> = match &args.classes {
        None => DisturbanceClass::ALL.to_vec(),
        Some(list) => list
            .split(',')
            .map(|s| s.parse::<DisturbanceClass>())
            .collect::<Result<_, _>>()
            .map_err(|e| CliError::Validation(e.to_string()))?,
    };
    if classes.is_empty() || args.count == 0 {
        return Err(CliError::Validation("nothing to synthesize".into()));
    }
    let file = std::fs::File::create(&args.out)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", args.out.display())))?;
    let mut out = std::io::BufWriter::new(file);
    for i in 0..args.count {
        let class = classes[i % classes.len()];
        let spec = sampled_spec(
            class,
            args.seed.wrapping_add(i as u64),
            args.base_freq_hz,
            args.sample_rate_hz,
            args.cycles,
        )
        .map_err(|e| CliError::Validation(e.to_string()))?;
        let signal = synthesize(&spec).map_err(|e| CliError::Runtime(e.to_string()))?;
        debug_assert!(validate(&signal));
        let line = serde_json::json!({
            "values": signal.series.values(),
            "label": signal.label.to_string(),
            "spec": signal.spec,
        });
        serde_json::to_writer(&mut out, &line).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    eprintln!("wrote {} signals -> {}", args.count, args.out.display());
    Ok(())
}

fn cmd_features(args: FeaturesArgs) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&args.data)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", args.data.display())))?;
    let trimmed = text.trim_start();
    let series_list: Vec<TimeSeries> = if trimmed.starts_with('[') {
        // either an array of series or one bare numeric series
        match serde_json::from_str::<Vec<TimeSeries>>(&text) {
            Ok(list) => list,
            Err(_) => vec![serde_json::from_str::<TimeSeries>(&text)
                .map_err(|e| CliError::Runtime(format!("{}: {e}", args.data.display())))?],
        }
    } else {
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<Result<_, _>>()
            .map_err(|e| CliError::Runtime(format!("{}: {e}", args.data.display())))?
    };
    // multichannel series report per channel
    let mut expanded = Vec::new();
    for series in &series_list {
        if series.channels() == 1 {
            expanded.push(series.clone());
        } else {
            for c in 0..series.channels() {
                expanded.push(
                    series
                        .channel_series(c)
                        .map_err(|e| CliError::Runtime(e.to_string()))?,
                );
            }
        }
    }
    let file = std::fs::File::create(&args.out)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", args.out.display())))?;
    let mut out = std::io::BufWriter::new(file);
    for (i, series) in expanded.iter().enumerate() {
        let report = feature_report(series, args.z_threshold, i);
        serde_json::to_writer(&mut out, &report).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    eprintln!(
        "wrote {} feature reports -> {}",
        expanded.len(),
        args.out.display()
    );
    Ok(())
}

fn feature_report(series: &TimeSeries, z_threshold: f64, index: usize) -> serde_json::Value {
    let mut report = serde_json::Map::new();
    report.insert("id".into(), serde_json::json!(index));
    if let Some(name) = series.name() {
        report.insert("name".into(), serde_json::json!(name));
    }
    match compute_statistics(series) {
        Ok(stats) => {
            report.insert("statistics".into(), serde_json::json!(stats));
        }
        Err(err) => {
            report.insert("error".into(), serde_json::json!(err.to_string()));
            return serde_json::Value::Object(report);
        }
    }
    match classify_trend(series) {
        Ok(trend) => {
            report.insert("trend".into(), serde_json::json!(trend));
        }
        Err(err) => eprintln!("warning: series {index}: trend: {err}"),
    }
    match classify_seasonality(series) {
        Ok(seasonality) => {
            report.insert("seasonality".into(), serde_json::json!(seasonality));
        }
        Err(err) => eprintln!("warning: series {index}: seasonality: {err}"),
    }
    match detect_local_features(series, z_threshold) {
        Ok(features) => {
            report.insert("local_features".into(), serde_json::json!(features));
        }
        Err(err) => eprintln!("warning: series {index}: local features: {err}"),
    }
    serde_json::Value::Object(report)
}

fn cmd_eval(mut config: GlobalConfig, args: EvalArgs, task: EvalTask) -> Result<(), CliError> {
    args.backend.apply(&mut config);
    if let Some(model) = args.judge_model {
        config.judge_model = model;
    }
    let needs_judge = matches!(task, EvalTask::Classification)
        || (matches!(task, EvalTask::Reasoning) && config.has_backend())
        || (args.llm_fallback && matches!(task, EvalTask::Forecast | EvalTask::Imputation));
    if args.llm_fallback && !config.has_backend() {
        return Err(CliError::Validation(
            "--llm_fallback needs a configured backend (mock_script or endpoint)".into(),
        ));
    }
    let backend: Option<Backend> = if needs_judge {
        Some(config.build_backend()?)
    } else {
        None
    };
    let ctx = EvalContext {
        judge: backend.as_ref().map(|b| (b, config.judge_model.clone())),
    };
    let report = evaluate_run(
        task,
        &args.input_dir,
        args.ground_truth_file.as_deref(),
        &args.output_dir,
        &ctx,
    )?;
    print_report_summary(&report);
    Ok(())
}

fn print_report_summary(report: &EvalReport) {
    let metrics: Vec<String> = report
        .metrics
        .iter()
        .map(|(name, value)| format!("{name}={value:.2}"))
        .collect();
    eprintln!(
        "{:?}: {} ({} parsed / {} total, {} excluded)",
        report.task,
        metrics.join(" "),
        report.n_parsed,
        report.n_total,
        report.n_excluded
    );
    for flag in &report.flags {
        eprintln!("  flag: {flag}");
    }
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(std::io::Error::from)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}
