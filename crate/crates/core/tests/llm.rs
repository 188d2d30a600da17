use std::io::Cursor;
use std::sync::{Mutex, OnceLock};
use std::time::Duration;

use trust_core::data::{Column, Dataset};
use trust_core::explain::local_explanation;
use trust_core::llm::{
    build_prompt, chat_loop, ApiKey, ChatMessage, ChatOptions, FakeTransport, LlmConfig, Role, DEFAULT_PERSONA,
    DRY_RUN_REPLY, HISTORY_CHAR_LIMIT, SAME_LEAF_INSTRUCTION,
};
use trust_core::tree::{grow, Node, TrainConfig, TrustModel};

const SECRET: &str = "sk-integration-91c2e7d0";

struct Capture;

static LINES: Mutex<Vec<String>> = Mutex::new(Vec::new());

impl log::Log for Capture {
    fn enabled(&self, _: &log::Metadata) -> bool {
        true
    }

    fn log(&self, record: &log::Record) {
        LINES
            .lock()
            .unwrap()
            .push(format!("{} {}", record.level(), record.args()));
    }

    fn flush(&self) {}
}

fn capture_logs() {
    static INIT: OnceLock<()> = OnceLock::new();
    INIT.get_or_init(|| {
        static LOGGER: Capture = Capture;
        log::set_logger(&LOGGER).unwrap();
        log::set_max_level(log::LevelFilter::Trace);
    });
}

fn logged() -> String {
    LINES.lock().unwrap().join("\n")
}

fn config() -> LlmConfig {
    let mut c = LlmConfig::new("https://llm.invalid/v1/chat/completions", "test-model");
    c.api_key = Some(ApiKey::new(SECRET));
    c
}

fn options(path: Option<&std::path::Path>, dry_run: bool) -> ChatOptions<'_> {
    ChatOptions {
        dry_run,
        transcript_path: path,
        backoff: Duration::ZERO,
    }
}

/// Data whose first split tests whether `f` is missing.
fn missing_model() -> (TrustModel, Dataset) {
    let n = 300;
    let f: Vec<f64> = (0..n)
        .map(|i| if i % 4 == 0 { f64::NAN } else { (i % 37) as f64 / 4.0 })
        .collect();
    let g: Vec<f64> = (0..n).map(|i| ((i * 7) % 11) as f64).collect();
    let y: Vec<f64> = (0..n)
        .map(|i| if f[i].is_nan() { 40.0 } else { 2.0 * f[i] } + 0.1 * g[i])
        .collect();
    let d = Dataset::new(
        vec!["f".into(), "g".into()],
        vec![Column::numeric(f), Column::numeric(g)],
        Some("y".into()),
        Some(y),
    )
    .unwrap();
    (grow(&d, &TrainConfig::default()).unwrap(), d)
}

fn seed_messages(persona: &str) -> (Vec<ChatMessage>, TrustModel) {
    let (model, d) = missing_model();
    let e = local_explanation(&model, &d, 1).unwrap();
    (build_prompt(&e, &model, persona), model)
}

fn assert_secret_free(texts: &[&str]) {
    for t in texts {
        assert!(!t.contains(SECRET), "secret leaked into: {t}");
    }
}

#[test]
fn prompt_holds_persona_constraints_and_instruction() {
    let (model, d) = missing_model();
    assert!(matches!(model.nodes[0], Node::Split { .. }));
    let e = local_explanation(&model, &d, 1).unwrap();
    let msgs = build_prompt(&e, &model, "loan officer");
    assert_eq!(msgs.len(), 1);
    assert_eq!(msgs[0].role, Role::System);
    let p = &msgs[0].content;
    assert!(p.starts_with("loan officer is the role"));
    assert!(p.contains("f is present"), "{p}");
    for c in &e.path {
        assert!(p.contains(&c.condition));
    }
    assert!(p.contains(SAME_LEAF_INSTRUCTION));
    assert!(p.contains("- f = "));

    let default = build_prompt(&e, &model, "  ");
    assert!(default[0].content.starts_with(DEFAULT_PERSONA));
}

#[test]
fn dry_run_sends_nothing_and_records_three_messages() {
    capture_logs();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.txt");
    let (seed, _) = seed_messages("tutor");
    let mut transport = FakeTransport::new(vec![]);
    let mut out = Vec::new();
    let outcome = chat_loop(
        &config(),
        seed,
        &mut transport,
        &mut Cursor::new("what matters most?\n\n"),
        &mut out,
        &options(Some(&path), true),
    );
    assert!(outcome.error.is_none());
    assert!(transport.requests.is_empty());
    let roles: Vec<Role> = outcome.transcript.messages().iter().map(|m| m.role).collect();
    assert_eq!(roles, [Role::System, Role::User, Role::Assistant]);
    assert_eq!(outcome.transcript.messages()[2].content, DRY_RUN_REPLY);
    let out = String::from_utf8(out).unwrap();
    assert!(out.contains("tutor is the role"));
    let saved = std::fs::read_to_string(&path).unwrap();
    assert_eq!(saved, outcome.transcript.to_text());
    assert_secret_free(&[&out, &saved, &logged()]);
}

#[test]
fn live_turns_resend_history_and_survive_server_errors() {
    capture_logs();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.txt");
    let (seed, _) = seed_messages("analyst");
    let mut transport = FakeTransport::new(vec![
        FakeTransport::status(500, "overloaded"),
        FakeTransport::status(503, "again"),
        FakeTransport::ok("first answer"),
        FakeTransport::ok("second answer"),
    ]);
    let mut out = Vec::new();
    let outcome = chat_loop(
        &config(),
        seed,
        &mut transport,
        &mut Cursor::new("q1\nq2\n"),
        &mut out,
        &options(Some(&path), false),
    );
    assert!(outcome.error.is_none(), "{:?}", outcome.error);
    assert_eq!(transport.requests.len(), 4);
    let sizes: Vec<usize> = transport
        .requests
        .iter()
        .map(|r| r["messages"].as_array().unwrap().len())
        .collect();
    assert_eq!(sizes, [2, 2, 2, 4]);
    assert_eq!(transport.requests[3]["messages"][2]["content"], "first answer");
    assert_eq!(transport.requests[0]["model"], "test-model");
    assert_eq!(outcome.transcript.len(), 5);
    let out = String::from_utf8(out).unwrap();
    assert!(out.contains("first answer") && out.contains("second answer"));
    let bodies: Vec<String> = transport.requests.iter().map(|r| r.to_string()).collect();
    let saved = std::fs::read_to_string(&path).unwrap();
    let mut texts: Vec<&str> = bodies.iter().map(String::as_str).collect();
    let logs = logged();
    texts.extend([out.as_str(), saved.as_str(), logs.as_str()]);
    assert_secret_free(&texts);
    assert!(logs.contains("retrying"), "{logs}");
}

#[test]
fn client_error_stops_the_loop_but_keeps_the_transcript() {
    capture_logs();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.txt");
    let (seed, _) = seed_messages("analyst");
    let mut transport = FakeTransport::new(vec![FakeTransport::status(401, &format!("invalid key {SECRET}"))]);
    let outcome = chat_loop(
        &config(),
        seed,
        &mut transport,
        &mut Cursor::new("hello\nnever read\n"),
        &mut Vec::new(),
        &options(Some(&path), false),
    );
    assert_eq!(transport.requests.len(), 1);
    let err = outcome.error.expect("401 is an error").to_string();
    assert!(err.contains("401") && err.contains("invalid key"), "{err}");
    let saved = std::fs::read_to_string(&path).unwrap();
    assert!(saved.contains("hello") && !saved.contains("never read"));
    assert_secret_free(&[&err, &saved, &logged()]);
}

#[test]
fn long_history_drops_oldest_turns_only() {
    let (seed, _) = seed_messages("analyst");
    let system_len = seed[0].content.chars().count();
    let big = "x".repeat(HISTORY_CHAR_LIMIT / 3);
    let input = format!("{big}\n{big}\n{big}\nshort\n");
    let replies = (0..4).map(|i| FakeTransport::ok(&format!("r{i}"))).collect();
    let mut transport = FakeTransport::new(replies);
    let mut out = Vec::new();
    let outcome = chat_loop(
        &config(),
        seed,
        &mut transport,
        &mut Cursor::new(input),
        &mut out,
        &options(None, false),
    );
    assert!(outcome.error.is_none());
    assert_eq!(outcome.transcript.len(), 9);
    for r in &transport.requests {
        let msgs = r["messages"].as_array().unwrap();
        assert_eq!(msgs[0]["role"], "system");
        let chars: usize = msgs
            .iter()
            .map(|m| m["content"].as_str().unwrap().chars().count())
            .sum();
        assert!(chars <= HISTORY_CHAR_LIMIT.max(system_len + big.len()), "{chars}");
    }
    let last = transport.requests.last().unwrap()["messages"].as_array().unwrap();
    assert_eq!(last.last().unwrap()["content"], "short");
    assert!(String::from_utf8(out)
        .unwrap()
        .contains("oldest messages were left out"));
}

#[test]
fn key_never_reaches_serialized_config_or_debug() {
    let c = config();
    let json = serde_json::to_string(&c).unwrap();
    let debug = format!("{c:?}");
    assert_secret_free(&[&json, &debug]);
    assert!(debug.contains("***"));
}
