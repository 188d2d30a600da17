//! Prompt construction from a local explanation and an interactive chat loop
//! against a chat-completion HTTP endpoint.

use std::fmt::{self, Write as _};
use std::io::{BufRead, Write};
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Result, TrustError};
use crate::explain::LocalExplanation;
use crate::tree::TrustModel;

pub const API_KEY_ENV: &str = "TRUST_LLM_API_KEY";
pub const DEFAULT_PERSONA: &str = "linear model tree expert";
pub const HISTORY_CHAR_LIMIT: usize = 32_000;
pub const MAX_RETRIES: usize = 3;
pub const SAME_LEAF_INSTRUCTION: &str = "Any suggested change to the feature values must keep the instance in the same leaf: every split condition listed above must still hold after the change.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: Role, content: impl Into<String>) -> Result<ChatMessage> {
        let content = content.into();
        if content.trim().is_empty() {
            return Err(TrustError::invalid("chat message content must be nonempty"));
        }
        Ok(ChatMessage { role, content })
    }
}

/// Bearer token; its `Debug` output is redacted and it has no serde impls.
#[derive(Clone, PartialEq, Eq)]
pub struct ApiKey(String);

impl ApiKey {
    pub fn new(key: impl Into<String>) -> ApiKey {
        ApiKey(key.into())
    }

    pub fn expose(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for ApiKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ApiKey(***)")
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LlmConfig {
    pub endpoint_url: String,
    #[serde(skip)]
    pub api_key: Option<ApiKey>,
    pub model_name: String,
    pub persona: String,
    pub temperature: f64,
    pub timeout: Duration,
}

impl LlmConfig {
    /// Reads the key from `TRUST_LLM_API_KEY`; an unset or empty variable leaves it `None`.
    pub fn from_env(endpoint_url: impl Into<String>, model_name: impl Into<String>) -> LlmConfig {
        let api_key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()).map(ApiKey);
        LlmConfig {
            api_key,
            ..LlmConfig::new(endpoint_url, model_name)
        }
    }

    pub fn new(endpoint_url: impl Into<String>, model_name: impl Into<String>) -> LlmConfig {
        LlmConfig {
            endpoint_url: endpoint_url.into(),
            api_key: None,
            model_name: model_name.into(),
            persona: DEFAULT_PERSONA.to_string(),
            temperature: 0.2,
            timeout: Duration::from_secs(60),
        }
    }

    /// Replaces every occurrence of the key in `s` with `***`.
    pub fn redact(&self, s: &str) -> String {
        match &self.api_key {
            Some(k) if !k.0.is_empty() => s.replace(&k.0, "***"),
            _ => s.to_string(),
        }
    }
}

fn fmt_num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.6}")
            .trim_end_matches('0')
            .trim_end_matches('.')
            .to_string()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// System message for one explained row: persona first, then the hard split
/// constraints, leaf coefficients and the row itself.
pub fn build_prompt(expl: &LocalExplanation, model: &TrustModel, persona: &str) -> Vec<ChatMessage> {
    let persona = if persona.trim().is_empty() {
        DEFAULT_PERSONA
    } else {
        persona.trim()
    };
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{persona} is the role you play in this conversation. You help a user understand and act on one prediction of a regression tree with linear models in its leaves."
    );
    let _ = writeln!(
        s,
        "\nThe model has {} leaves and depth {}. The row falls in leaf {}.",
        model.n_leaves(),
        model.depth(),
        expl.leaf_id
    );

    s.push_str("\nHard constraints (split conditions on the path from the root to the leaf):\n");
    if expl.path.is_empty() {
        s.push_str("- none: the tree is a single leaf\n");
    }
    for (i, c) in expl.path.iter().enumerate() {
        let _ = writeln!(s, "{}. {}", i + 1, c.condition);
    }

    let _ = writeln!(s, "\nLeaf model: intercept {}", fmt_num(expl.intercept));
    if expl.leaf_coefficients.is_empty() {
        s.push_str("- no active coefficients; the leaf predicts a constant\n");
    }
    for c in &expl.leaf_coefficients {
        let p = c.p_value.map_or_else(|| "n/a".to_string(), |p| format!("{p:.4}"));
        let _ = writeln!(s, "- {}: coefficient {} (p-value {p})", c.name, fmt_num(c.estimate));
    }

    s.push_str("\nFeature values of the row:\n");
    for (name, value) in &expl.values {
        let _ = writeln!(s, "- {name} = {value}");
    }
    let _ = writeln!(
        s,
        "\nPrediction: {} (before truncation {})",
        fmt_num(expl.prediction),
        fmt_num(expl.raw_prediction)
    );
    let _ = writeln!(s, "\n{SAME_LEAF_INSTRUCTION}");
    s.push_str("If a goal cannot be reached without leaving the leaf, say so instead of proposing changes that break a constraint.");

    vec![ChatMessage {
        role: Role::System,
        content: s,
    }]
}

/// Chat-completion request body.
pub fn request_body(config: &LlmConfig, messages: &[ChatMessage]) -> Value {
    json!({
        "model": config.model_name,
        "messages": messages,
        "temperature": config.temperature,
    })
}

/// Extracts the first choice's message content.
pub fn parse_chat_response(body: &str) -> Result<String> {
    let v: Value = serde_json::from_str(body).map_err(|e| TrustError::Llm(format!("malformed response: {e}")))?;
    v.get("choices")
        .and_then(|c| c.get(0))
        .and_then(|c| c.get("message"))
        .and_then(|m| m.get("content"))
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| TrustError::Llm("response has no choices[0].message.content".into()))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    pub body: String,
}

/// Transport-level failure (connection, DNS, timeout); retried.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkError(pub String);

pub trait Transport {
    fn post(
        &mut self,
        url: &str,
        api_key: Option<&ApiKey>,
        body: &Value,
        timeout: Duration,
    ) -> std::result::Result<HttpResponse, NetworkError>;
}

/// Blocking HTTPS transport.
#[derive(Debug, Default)]
pub struct HttpTransport;

impl Transport for HttpTransport {
    fn post(
        &mut self,
        url: &str,
        api_key: Option<&ApiKey>,
        body: &Value,
        timeout: Duration,
    ) -> std::result::Result<HttpResponse, NetworkError> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let mut req = agent.post(url).header("Content-Type", "application/json");
        if let Some(k) = api_key {
            req = req.header("Authorization", format!("Bearer {}", k.expose()));
        }
        let mut resp = req.send(body.to_string()).map_err(|e| NetworkError(e.to_string()))?;
        let status = resp.status().as_u16();
        let body = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| NetworkError(e.to_string()))?;
        Ok(HttpResponse { status, body })
    }
}

/// Scripted transport for tests; records every request body it receives.
#[derive(Debug, Default)]
pub struct FakeTransport {
    script: std::collections::VecDeque<std::result::Result<HttpResponse, NetworkError>>,
    pub requests: Vec<Value>,
}

impl FakeTransport {
    pub fn new(script: Vec<std::result::Result<HttpResponse, NetworkError>>) -> FakeTransport {
        FakeTransport {
            script: script.into(),
            requests: Vec::new(),
        }
    }

    /// A 200 response carrying `content` as the first choice.
    pub fn ok(content: &str) -> std::result::Result<HttpResponse, NetworkError> {
        Ok(HttpResponse {
            status: 200,
            body: json!({"choices": [{"message": {"role": "assistant", "content": content}}]}).to_string(),
        })
    }

    pub fn status(status: u16, body: &str) -> std::result::Result<HttpResponse, NetworkError> {
        Ok(HttpResponse {
            status,
            body: body.to_string(),
        })
    }
}

impl Transport for FakeTransport {
    fn post(
        &mut self,
        _url: &str,
        _api_key: Option<&ApiKey>,
        body: &Value,
        _timeout: Duration,
    ) -> std::result::Result<HttpResponse, NetworkError> {
        self.requests.push(body.clone());
        self.script
            .pop_front()
            .unwrap_or_else(|| Err(NetworkError("fake transport script exhausted".into())))
    }
}

fn excerpt(s: &str, max: usize) -> String {
    let mut out: String = s.chars().take(max).collect();
    if s.chars().count() > max {
        out.push_str("...");
    }
    out
}

/// Sends one completion request, retrying network errors and 5xx responses
/// with exponential backoff starting at `backoff`.
pub fn complete<T: Transport + ?Sized>(
    transport: &mut T,
    config: &LlmConfig,
    messages: &[ChatMessage],
    backoff: Duration,
) -> Result<String> {
    let body = request_body(config, messages);
    let mut last = String::new();
    for attempt in 0..=MAX_RETRIES {
        if attempt > 0 {
            let wait = backoff * (1u32 << (attempt - 1));
            log::warn!(
                "retrying chat request in {wait:?} (attempt {} of {})",
                attempt + 1,
                MAX_RETRIES + 1
            );
            std::thread::sleep(wait);
        }
        match transport.post(&config.endpoint_url, config.api_key.as_ref(), &body, config.timeout) {
            Err(NetworkError(e)) => last = config.redact(&format!("network error: {e}")),
            Ok(r) if r.status >= 500 => {
                last = config.redact(&format!("HTTP {}: {}", r.status, excerpt(&r.body, 200)));
            }
            Ok(r) if r.status >= 400 => {
                return Err(TrustError::Llm(config.redact(&format!(
                    "HTTP {}: {}",
                    r.status,
                    excerpt(&r.body, 200)
                ))));
            }
            Ok(r) => return parse_chat_response(&r.body),
        }
    }
    Err(TrustError::Llm(format!(
        "giving up after {} attempts; last error: {last}",
        MAX_RETRIES + 1
    )))
}

/// Drops the oldest non-system messages until the history fits `limit`
/// characters. Returns the number dropped; the newest message is always kept.
pub fn truncate_history(messages: &mut Vec<ChatMessage>, limit: usize) -> usize {
    let total = |m: &[ChatMessage]| m.iter().map(|m| m.content.chars().count()).sum::<usize>();
    let mut dropped = 0;
    while total(messages) > limit {
        let Some(i) = messages.iter().position(|m| m.role != Role::System) else {
            break;
        };
        if i + 1 == messages.len() {
            break;
        }
        messages.remove(i);
        dropped += 1;
    }
    dropped
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TranscriptEntry {
    pub timestamp: String,
    pub message: ChatMessage,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Transcript {
    pub entries: Vec<TranscriptEntry>,
}

impl Transcript {
    pub fn push(&mut self, message: ChatMessage) {
        self.entries.push(TranscriptEntry {
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
            message,
        });
    }

    pub fn messages(&self) -> Vec<ChatMessage> {
        self.entries.iter().map(|e| e.message.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for e in &self.entries {
            let _ = writeln!(s, "[{}] {}:\n{}\n", e.timestamp, e.message.role, e.message.content);
        }
        s
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| TrustError::io(path, e))
    }
}

pub const DRY_RUN_REPLY: &str = "[dry run] no request was sent; this canned reply stands in for the model's answer.";

/// Options for [`chat_loop`] beyond the endpoint configuration.
#[derive(Debug, Clone)]
pub struct ChatOptions<'a> {
    pub dry_run: bool,
    pub transcript_path: Option<&'a Path>,
    pub backoff: Duration,
}

impl Default for ChatOptions<'_> {
    fn default() -> Self {
        ChatOptions {
            dry_run: false,
            transcript_path: None,
            backoff: Duration::from_millis(500),
        }
    }
}

#[derive(Debug)]
pub struct ChatOutcome {
    pub transcript: Transcript,
    /// Set when the loop stopped on a request or I/O failure; the transcript is still complete.
    pub error: Option<TrustError>,
}

/// Alternates console input with endpoint replies until an empty line or EOF.
/// The full history is resent each turn and the transcript is written on every exit path.
pub fn chat_loop<T: Transport + ?Sized, R: BufRead, W: Write>(
    config: &LlmConfig,
    seed_messages: Vec<ChatMessage>,
    transport: &mut T,
    input: &mut R,
    output: &mut W,
    opts: &ChatOptions<'_>,
) -> ChatOutcome {
    let mut transcript = Transcript::default();
    for m in seed_messages {
        transcript.push(m);
    }
    let error = run_turns(config, transport, input, output, opts, &mut transcript).err();
    if let Some(path) = opts.transcript_path {
        if let Err(e) = transcript.save(path) {
            log::error!("could not save transcript: {e}");
            return ChatOutcome {
                transcript,
                error: error.or(Some(e)),
            };
        }
    }
    ChatOutcome { transcript, error }
}

fn run_turns<T: Transport + ?Sized, R: BufRead, W: Write>(
    config: &LlmConfig,
    transport: &mut T,
    input: &mut R,
    output: &mut W,
    opts: &ChatOptions<'_>,
    transcript: &mut Transcript,
) -> Result<()> {
    let io_err = |e: std::io::Error| TrustError::Llm(format!("console: {e}"));
    if opts.dry_run {
        writeln!(output, "--- prompt (dry run, nothing is sent) ---").map_err(io_err)?;
        for m in transcript.messages() {
            writeln!(output, "[{}]\n{}\n", m.role, m.content).map_err(io_err)?;
        }
    }
    loop {
        write!(output, "> ").map_err(io_err)?;
        output.flush().map_err(io_err)?;
        let mut line = String::new();
        if input.read_line(&mut line).map_err(io_err)? == 0 {
            return Ok(());
        }
        let line = line.trim();
        if line.is_empty() {
            return Ok(());
        }
        transcript.push(ChatMessage {
            role: Role::User,
            content: line.to_string(),
        });
        let reply = if opts.dry_run {
            DRY_RUN_REPLY.to_string()
        } else {
            let mut history = transcript.messages();
            let dropped = truncate_history(&mut history, HISTORY_CHAR_LIMIT);
            if dropped > 0 {
                log::warn!("history exceeds {HISTORY_CHAR_LIMIT} characters; dropped {dropped} oldest messages");
                writeln!(
                    output,
                    "(note: {dropped} oldest messages were left out of this request to fit the size limit)"
                )
                .map_err(io_err)?;
            }
            complete(transport, config, &history, opts.backoff)?
        };
        writeln!(output, "{reply}\n").map_err(io_err)?;
        if let Ok(m) = ChatMessage::new(Role::Assistant, reply) {
            transcript.push(m);
        }
    }
}
