//! Snapshot tests pinning the agent prompt renderings byte for byte.
//!
//! Regenerate after an intentional template change with
//! `cargo test -p tsadkit --test golden_prompts -- --ignored regenerate`
//! and review the diff.

use std::path::PathBuf;

use tsadkit::backend::{ChatRequest, Role};
use tsadkit::tsevol::{
    build_client_prompt, build_consultant_prompt, build_intern_prompt, ConsultantTurn,
    EvolutionConfig, FINAL_VERDICT_QUESTION,
};

fn config() -> EvolutionConfig {
    EvolutionConfig {
        consultant_model: "consultant-model".into(),
        client_model: "client-model".into(),
        intern_model: "intern-model".into(),
        ..EvolutionConfig::default()
    }
}

fn render(request: &ChatRequest) -> String {
    let mut out = format!("model: {}\n", request.model_id);
    for message in &request.messages {
        let role = match message.role {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        };
        out.push_str(&format!("--- {role} ---\n{}\n", message.content));
    }
    out
}

fn fixtures() -> Vec<(&'static str, String)> {
    let cfg = config();
    let background = "Storage monitoring data. The input Time Serie is [25.5, 24.0, 7.0, 26.0]. Please determine whether there are anomalies in this time series given information above.";
    let question = "Do the z-scores flag index 3 as an outlier?";
    let answer = "Index 3 sits 2.6 standard deviations below the mean.";
    let history = vec![
        "Do the z-scores flag index 3 as an outlier?".to_string(),
        "Is there a repeating cycle?".to_string(),
    ];
    vec![
        (
            "consultant_round0.txt",
            render(&build_consultant_prompt(&cfg, ConsultantTurn::Opening)),
        ),
        (
            "consultant_followup.txt",
            render(&build_consultant_prompt(
                &cfg,
                ConsultantTurn::Followup {
                    question_history: &history,
                    last_answer: answer,
                },
            )),
        ),
        (
            "consultant_final.txt",
            render(&build_consultant_prompt(&cfg, ConsultantTurn::FinalVerdict)),
        ),
        (
            "client.txt",
            render(&build_client_prompt(&cfg, background, question).unwrap()),
        ),
        (
            "intern.txt",
            render(&build_intern_prompt(&cfg, background, question, answer).unwrap()),
        ),
    ]
}

fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

#[test]
fn prompts_match_checked_in_golden_files() {
    for (name, rendered) in fixtures() {
        let path = golden_dir().join(name);
        let expected = std::fs::read_to_string(&path)
            .unwrap_or_else(|e| panic!("missing golden file {}: {e}", path.display()));
        assert_eq!(
            rendered, expected,
            "prompt {name} drifted from its snapshot"
        );
    }
}

#[test]
fn templates_carry_their_fixed_phrases() {
    let cfg = config();
    let round0 = render(&build_consultant_prompt(&cfg, ConsultantTurn::Opening));
    assert!(round0.contains("seven analytical dimensions"));
    assert!(round0.contains("raise a question with ONLY in valid JSON format"));
    assert!(round0.contains("question must end with a question mark"));

    let followup = render(&build_consultant_prompt(
        &cfg,
        ConsultantTurn::Followup {
            question_history: &["Q zero?".to_string()],
            last_answer: "A zero",
        },
    ));
    assert!(followup.contains("avoid asking duplicate Question List"));
    assert!(followup.contains("Question List: [\"Q zero?\"]"));
    assert!(followup.contains("Last Question Reply/Answer A zero"));

    let final_prompt = render(&build_consultant_prompt(&cfg, ConsultantTurn::FinalVerdict));
    assert!(final_prompt.contains(FINAL_VERDICT_QUESTION));
    assert!(final_prompt.contains("You must respond ONLY in valid JSON format"));

    let client = render(&build_client_prompt(&cfg, "my background", "my question?").unwrap());
    assert!(client.contains("The original background is: my background."));
    assert!(client.contains("The generated question is: my question?."));
    assert!(client.contains("strict, accurate, and concise manner"));

    let intern = render(&build_intern_prompt(&cfg, "bg", "q?", "the client answer").unwrap());
    assert!(intern.contains("but your response must remain strictly constrained"));
    assert!(intern.contains("The generated answer is: the client answer."));
    assert!(intern.contains("\"answer\": \"Normal or Anomalous\""));
}

/// Rewrites the snapshots from the current builders; run explicitly and
/// review the diff.
#[test]
#[ignore]
fn regenerate() {
    let dir = golden_dir();
    std::fs::create_dir_all(&dir).unwrap();
    for (name, rendered) in fixtures() {
        std::fs::write(dir.join(name), rendered).unwrap();
    }
}
