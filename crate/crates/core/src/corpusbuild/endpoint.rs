use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{CorpusError, Result};
use crate::promptgen::{PromptParams, PromptRecord};

static NETWORK_CALLS: AtomicUsize = AtomicUsize::new(0);

/// Number of HTTP requests attempted by this process so far.
pub fn network_calls() -> usize {
    NETWORK_CALLS.load(Ordering::SeqCst)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn user(content: impl Into<String>) -> Self {
        Self { role: "user".into(), content: content.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
}

impl ChatRequest {
    pub fn to_body(&self) -> String {
        serde_json::to_string(self).expect("chat request serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    /// Prompt in, revision instruction out.
    Instruction,
    /// Instruction plus human text in, revised text out.
    Revision,
}

/// Everything an endpoint may look at for one completion. Real endpoints
/// only send `request`; the mock also reads the structured context.
#[derive(Debug, Clone, Copy)]
pub struct EndpointCall<'a> {
    pub stage: Stage,
    pub request: &'a ChatRequest,
    pub prompt: Option<&'a PromptRecord>,
    pub source_text: Option<&'a str>,
}

pub trait ChatEndpoint {
    fn model_id(&self) -> &str;

    /// Returns the raw response body and the completion text.
    fn complete(&self, call: EndpointCall<'_>) -> Result<(String, String)>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryPolicy {
    /// Attempts after the first failure.
    pub retries: u32,
    /// Delay before the first retry; doubles for each later one.
    pub base_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { retries: 3, base_delay_ms: 1000 }
    }
}

impl RetryPolicy {
    pub fn delay(&self, retry: u32) -> Duration {
        Duration::from_millis(self.base_delay_ms << retry)
    }
}

/// One entry of the endpoint registry file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EndpointSpec {
    pub base_url: String,
    /// Name of the environment variable that holds the bearer token.
    pub token_env: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default)]
    pub retry: RetryPolicy,
}

fn default_timeout() -> u64 {
    120
}

/// Model id to endpoint mapping, persisted as JSON.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EndpointRegistry {
    pub endpoints: BTreeMap<String, EndpointSpec>,
}

impl EndpointRegistry {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CorpusError::Io { path: path.display().to_string(), message: e.to_string() })?;
        serde_json::from_str(&text).map_err(|e| CorpusError::Io { path: path.display().to_string(), message: e.to_string() })
    }

    pub fn endpoint(&self, model_id: &str) -> Result<LlmEndpoint> {
        let spec = self.endpoints.get(model_id).ok_or_else(|| CorpusError::UnknownEndpoint(model_id.into()))?;
        Ok(LlmEndpoint::new(model_id, spec.clone()))
    }
}

/// Chat-completion client. The token is read from the environment at call
/// time and never stored, printed or persisted.
#[derive(Clone)]
pub struct LlmEndpoint {
    model_id: String,
    spec: EndpointSpec,
}

impl fmt::Debug for LlmEndpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LlmEndpoint")
            .field("model_id", &self.model_id)
            .field("base_url", &self.spec.base_url)
            .field("token_env", &self.spec.token_env)
            .finish()
    }
}

enum Failure {
    Retryable(String),
    Fatal(String),
}

impl LlmEndpoint {
    pub fn new(model_id: impl Into<String>, spec: EndpointSpec) -> Self {
        Self { model_id: model_id.into(), spec }
    }

    fn url(&self) -> String {
        format!("{}/chat/completions", self.spec.base_url.trim_end_matches('/'))
    }

    fn attempt(&self, agent: &ureq::Agent, token: &str, body: &str) -> std::result::Result<String, Failure> {
        NETWORK_CALLS.fetch_add(1, Ordering::SeqCst);
        let mut resp = agent
            .post(&self.url())
            .header("Authorization", &format!("Bearer {token}"))
            .header("Content-Type", "application/json")
            .send(body)
            .map_err(|e| Failure::Retryable(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(|e| Failure::Retryable(e.to_string()))?;
        match status {
            200..=299 => Ok(text),
            429 | 500..=599 => Err(Failure::Retryable(format!("HTTP {status}"))),
            _ => Err(Failure::Fatal(format!("HTTP {status}"))),
        }
    }
}

fn completion_text(body: &str) -> Option<String> {
    let v: serde_json::Value = serde_json::from_str(body).ok()?;
    Some(v.pointer("/choices/0/message/content")?.as_str()?.to_string())
}

impl ChatEndpoint for LlmEndpoint {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn complete(&self, call: EndpointCall<'_>) -> Result<(String, String)> {
        let token = std::env::var(&self.spec.token_env).map_err(|_| CorpusError::MissingToken(self.spec.token_env.clone()))?;
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(self.spec.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        let body = call.request.to_body();
        let policy = self.spec.retry;
        let mut attempts = 0;
        loop {
            attempts += 1;
            let message = match self.attempt(&agent, &token, &body) {
                Ok(raw) => {
                    let text = completion_text(&raw).unwrap_or_default();
                    if text.trim().is_empty() {
                        return Err(CorpusError::EmptyCompletion(self.model_id.clone()));
                    }
                    return Ok((raw, text));
                }
                Err(Failure::Fatal(m)) => {
                    return Err(CorpusError::Endpoint { endpoint: self.model_id.clone(), attempts, message: m })
                }
                Err(Failure::Retryable(m)) => m,
            };
            if attempts > policy.retries {
                return Err(CorpusError::Endpoint { endpoint: self.model_id.clone(), attempts, message });
            }
            std::thread::sleep(policy.delay(attempts - 1));
        }
    }
}

/// Offline stand-in. Instructions are the canonical fill of the prompt's
/// parameters; revisions shuffle sentence order and swap determiners under
/// a seed derived from the request body.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockEndpoint {
    pub model_id: String,
    pub seed: u64,
    /// Return the source text unchanged (exercises the degenerate path).
    #[serde(default)]
    pub identity: bool,
}

impl MockEndpoint {
    pub fn new(model_id: impl Into<String>, seed: u64) -> Self {
        Self { model_id: model_id.into(), seed, identity: false }
    }

    fn request_seed(&self, body: &str) -> u64 {
        let digest = Sha256::new().chain_update(self.seed.to_le_bytes()).chain_update(body.as_bytes()).finalize();
        u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
    }
}

fn canonical_instruction(prompt: Option<&PromptRecord>) -> String {
    match prompt.map(|p| &p.params) {
        Some(PromptParams::Dimensions(d)) => format!(
            "{} this paragraph in a {} style, {}, {}, and {}.",
            d.revision_goal, d.style, d.adversarial, d.additional, d.constraint
        ),
        Some(PromptParams::SingleTask(p)) => {
            let style = p.style.as_deref().unwrap_or("natural");
            match p.word_len {
                Some(n) => format!("Polish this paragraph in a {style} style, in {n} words or less."),
                None => format!("Revise this paragraph in a {style} style."),
            }
        }
        None => "Revise this paragraph.".into(),
    }
}

fn split_sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    for (k, &(i, c)) in chars.iter().enumerate() {
        let at_boundary = chars.get(k + 1).is_none_or(|&(_, n)| n.is_whitespace());
        if matches!(c, '.' | '!' | '?') && at_boundary {
            let s = text[start..i + c.len_utf8()].trim();
            if !s.is_empty() {
                out.push(s);
            }
            start = i + c.len_utf8();
        }
    }
    let tail = text[start..].trim();
    if !tail.is_empty() {
        out.push(tail);
    }
    out
}

fn swap_determiner(word: &str) -> Option<&'static str> {
    Some(match word {
        "the" => "a",
        "a" | "an" => "the",
        "The" => "A",
        "A" | "An" => "The",
        _ => return None,
    })
}

/// Seeded sentence shuffle plus determiner swap. Texts with at least two
/// distinct sentences never come back unchanged.
pub(crate) fn mock_revision(text: &str, seed: u64) -> String {
    let sentences = split_sentences(text);
    let mut order: Vec<usize> = (0..sentences.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    if order.iter().enumerate().all(|(i, &o)| i == o) {
        let shift = 1.min(order.len());
        order.rotate_left(shift);
    }
    sentences
        .iter()
        .enumerate()
        .map(|(i, _)| {
            sentences[order[i]]
                .split(' ')
                .map(|w| swap_determiner(w).unwrap_or(w))
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect::<Vec<_>>()
        .join(" ")
}

impl ChatEndpoint for MockEndpoint {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn complete(&self, call: EndpointCall<'_>) -> Result<(String, String)> {
        let body = call.request.to_body();
        let text = match call.stage {
            Stage::Instruction => canonical_instruction(call.prompt),
            Stage::Revision => {
                let source = call.source_text.unwrap_or_default();
                if self.identity {
                    source.to_string()
                } else {
                    mock_revision(source, self.request_seed(&body))
                }
            }
        };
        let raw = serde_json::json!({
            "model": self.model_id,
            "choices": [{"index": 0, "message": {"role": "assistant", "content": text}}],
        })
        .to_string();
        Ok((raw, text))
    }
}
