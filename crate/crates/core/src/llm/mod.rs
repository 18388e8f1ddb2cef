//! Backend-abstracted LLM access: prompt templates, strict response parsing,
//! a content-addressed response cache, retries, and token accounting.

pub mod parse;
pub mod template;
pub mod transcript;

use std::collections::HashMap;
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::types::CommitId;

pub use parse::{parse_binary_verdict, parse_comparative_choice, parse_critical_lines};
pub use template::{parameter_slots, render_prompt, template, TemplateId};
pub use transcript::{TranscriptRecord, TranscriptStore};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LlmError {
    #[error("unfilled prompt slot ${{{0}}}")]
    MissingSlot(String),
    #[error("unparseable reply: {0}")]
    Parse(String),
    #[error("backend timeout")]
    BackendTimeout,
    #[error("transcript miss for key {0}")]
    TranscriptMiss(String),
    #[error("quota exceeded")]
    QuotaExceeded,
    #[error("backend failure: {0}")]
    Backend(String),
    #[error("io failure: {0}")]
    Io(String),
}

/// Per-candidate screening verdict (prompt 4 reply).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryVerdict {
    pub is_bic: bool,
    pub rationale: String,
}

/// Comparative selection (prompt 5 reply); `chosen` is always one of the
/// presented candidates, or None for an explicit no-pick.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComparativeChoice {
    pub chosen: Option<CommitId>,
    pub rationale: String,
}

/// Decoding knobs. Live backends default to the provider's defaults;
/// determinism for tests comes from the recorded backend, not pinning.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DecodingParams {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmRequest {
    pub model: String,
    pub prompt: String,
    #[serde(default)]
    pub params: DecodingParams,
}

impl LlmRequest {
    pub fn new(model: impl Into<String>, prompt: impl Into<String>) -> LlmRequest {
        LlmRequest {
            model: model.into(),
            prompt: prompt.into(),
            params: DecodingParams::default(),
        }
    }

    /// Content address of this request: hash(model, decoding params, prompt).
    pub fn cache_key(&self) -> String {
        let params = serde_json::to_string(&self.params).unwrap_or_default();
        let mut hasher = Sha256::new();
        hasher.update(self.model.as_bytes());
        hasher.update([0]);
        hasher.update(params.as_bytes());
        hasher.update([0]);
        hasher.update(self.prompt.as_bytes());
        hex::encode(hasher.finalize())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmResponse {
    pub text: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub backend: String,
}

/// Rough token estimate used when a backend reports no usage.
pub fn estimate_tokens(text: &str) -> u64 {
    (text.len() as u64).div_ceil(4)
}

// ---------------------------------------------------------------------------
// Backends
// ---------------------------------------------------------------------------

/// Provider-agnostic chat-completion endpoint.
#[derive(Debug, Clone)]
pub struct LiveConfig {
    pub base_url: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
    pub max_attempts: u32,
}

impl Default for LiveConfig {
    fn default() -> Self {
        LiveConfig {
            base_url: "https://api.openai.com/v1".into(),
            api_key: None,
            timeout: Duration::from_secs(120),
            max_attempts: 3,
        }
    }
}

pub struct LiveBackend {
    config: LiveConfig,
    agent: ureq::Agent,
}

impl LiveBackend {
    pub fn new(config: LiveConfig) -> LiveBackend {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .build()
            .into();
        LiveBackend { config, agent }
    }

    fn complete(&self, req: &LlmRequest) -> Result<LlmResponse, LlmError> {
        let url = format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'));
        let mut body = serde_json::json!({
            "model": req.model,
            "messages": [{"role": "user", "content": req.prompt}],
        });
        if let Some(t) = req.params.temperature {
            body["temperature"] = serde_json::json!(t);
        }
        if let Some(m) = req.params.max_tokens {
            body["max_tokens"] = serde_json::json!(m);
        }

        let mut attempt = 0;
        loop {
            attempt += 1;
            let mut request = self.agent.post(&url).header("content-type", "application/json");
            if let Some(key) = &self.config.api_key {
                request = request.header("authorization", &format!("Bearer {key}"));
            }
            match request.send_json(&body) {
                Ok(mut resp) => {
                    let value: serde_json::Value = resp
                        .body_mut()
                        .read_json()
                        .map_err(|e| LlmError::Backend(format!("bad response body: {e}")))?;
                    let text = value["choices"][0]["message"]["content"]
                        .as_str()
                        .ok_or_else(|| {
                            LlmError::Backend("response missing choices[0].message.content".into())
                        })?
                        .to_string();
                    let prompt_tokens = value["usage"]["prompt_tokens"]
                        .as_u64()
                        .unwrap_or_else(|| estimate_tokens(&req.prompt));
                    let completion_tokens = value["usage"]["completion_tokens"]
                        .as_u64()
                        .unwrap_or_else(|| estimate_tokens(&text));
                    return Ok(LlmResponse {
                        text,
                        prompt_tokens,
                        completion_tokens,
                        backend: "live".into(),
                    });
                }
                Err(ureq::Error::StatusCode(429)) => {
                    if attempt >= self.config.max_attempts {
                        return Err(LlmError::QuotaExceeded);
                    }
                    std::thread::sleep(Duration::from_millis(250 * 2u64.pow(attempt)));
                }
                Err(ureq::Error::StatusCode(code)) if code >= 500 => {
                    if attempt >= self.config.max_attempts {
                        return Err(LlmError::Backend(format!("server error {code}")));
                    }
                    std::thread::sleep(Duration::from_millis(250 * 2u64.pow(attempt)));
                }
                Err(ureq::Error::Timeout(_)) => return Err(LlmError::BackendTimeout),
                Err(ureq::Error::StatusCode(code)) => {
                    return Err(LlmError::Backend(format!("http status {code}")))
                }
                Err(e) => return Err(LlmError::Backend(e.to_string())),
            }
        }
    }
}

/// One table-driven response rule: fires when every `match_all` substring
/// occurs in the prompt and the use budget is not exhausted.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScriptRule {
    #[serde(default)]
    pub match_all: Vec<String>,
    pub response: String,
    #[serde(default)]
    pub prompt_tokens: Option<u64>,
    #[serde(default)]
    pub completion_tokens: Option<u64>,
    #[serde(default)]
    pub max_uses: Option<u32>,
}

#[derive(Debug)]
pub struct ScriptedBackend {
    rules: Mutex<Vec<(ScriptRule, u32)>>,
}

impl ScriptedBackend {
    pub fn new(rules: Vec<ScriptRule>) -> ScriptedBackend {
        ScriptedBackend {
            rules: Mutex::new(rules.into_iter().map(|r| (r, 0)).collect()),
        }
    }

    pub fn from_json(text: &str) -> Result<ScriptedBackend, LlmError> {
        let rules: Vec<ScriptRule> = serde_json::from_str(text)
            .map_err(|e| LlmError::Backend(format!("bad script file: {e}")))?;
        Ok(ScriptedBackend::new(rules))
    }

    fn complete(&self, req: &LlmRequest) -> Result<LlmResponse, LlmError> {
        let mut rules = self.rules.lock().unwrap();
        for (rule, used) in rules.iter_mut() {
            if let Some(max) = rule.max_uses {
                if *used >= max {
                    continue;
                }
            }
            if rule.match_all.iter().all(|m| req.prompt.contains(m)) {
                *used += 1;
                return Ok(LlmResponse {
                    text: rule.response.clone(),
                    prompt_tokens: rule.prompt_tokens.unwrap_or_else(|| estimate_tokens(&req.prompt)),
                    completion_tokens: rule
                        .completion_tokens
                        .unwrap_or_else(|| estimate_tokens(&rule.response)),
                    backend: "scripted".into(),
                });
            }
        }
        Err(LlmError::TranscriptMiss(format!(
            "no scripted rule matched request {}",
            req.cache_key()
        )))
    }
}

pub enum Backend {
    Live(LiveBackend),
    Recorded(TranscriptStore),
    Scripted(ScriptedBackend),
}

impl Backend {
    pub fn name(&self) -> &'static str {
        match self {
            Backend::Live(_) => "live",
            Backend::Recorded(_) => "recorded",
            Backend::Scripted(_) => "scripted",
        }
    }
}

// ---------------------------------------------------------------------------
// Gateway
// ---------------------------------------------------------------------------

/// One completed call, labeled by pipeline stage for flow accounting.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CallRecord {
    pub label: String,
    pub cache_key: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

/// Counting semaphore bounding concurrent live calls.
struct Limiter {
    permits: Mutex<u32>,
    cv: Condvar,
}

impl Limiter {
    fn new(n: u32) -> Limiter {
        Limiter {
            permits: Mutex::new(n.max(1)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> LimiterGuard<'_> {
        let mut permits = self.permits.lock().unwrap();
        while *permits == 0 {
            permits = self.cv.wait(permits).unwrap();
        }
        *permits -= 1;
        LimiterGuard { limiter: self }
    }
}

struct LimiterGuard<'a> {
    limiter: &'a Limiter,
}

impl Drop for LimiterGuard<'_> {
    fn drop(&mut self) {
        *self.limiter.permits.lock().unwrap() += 1;
        self.limiter.cv.notify_one();
    }
}

/// The retry budget for parse failures: up to this many re-asks with an
/// appended format reminder.
pub const PARSE_RETRIES: u32 = 2;

pub struct Gateway {
    backend: Backend,
    /// Record mode appends every response here for later replay.
    recorder: Option<TranscriptStore>,
    calls: Mutex<Vec<CallRecord>>,
    response_cache: Mutex<HashMap<String, LlmResponse>>,
    limiter: Limiter,
}

impl Gateway {
    pub fn new(backend: Backend) -> Gateway {
        Gateway::with_limit(backend, 4)
    }

    pub fn with_limit(backend: Backend, limit: u32) -> Gateway {
        Gateway {
            backend,
            recorder: None,
            calls: Mutex::new(Vec::new()),
            response_cache: Mutex::new(HashMap::new()),
            limiter: Limiter::new(limit),
        }
    }

    /// Append every response to `store` (record mode).
    pub fn record_to(mut self, store: TranscriptStore) -> Gateway {
        self.recorder = Some(store);
        self
    }

    pub fn backend_name(&self) -> &'static str {
        self.backend.name()
    }

    pub fn complete(&self, label: &str, req: &LlmRequest) -> Result<LlmResponse, LlmError> {
        let key = req.cache_key();
        let response = match &self.backend {
            Backend::Live(live) => {
                let _permit = self.limiter.acquire();
                live.complete(req)?
            }
            Backend::Recorded(store) => match store.get(&key) {
                Some(rec) => LlmResponse {
                    text: rec.response,
                    prompt_tokens: rec.prompt_tokens,
                    completion_tokens: rec.completion_tokens,
                    backend: "recorded".into(),
                },
                None => return Err(LlmError::TranscriptMiss(key)),
            },
            Backend::Scripted(script) => script.complete(req)?,
        };
        if let Some(store) = &self.recorder {
            store.append(TranscriptRecord {
                cache_key: key.clone(),
                model: req.model.clone(),
                prompt: req.prompt.clone(),
                response: response.text.clone(),
                prompt_tokens: response.prompt_tokens,
                completion_tokens: response.completion_tokens,
                timestamp: std::time::SystemTime::now()
                    .duration_since(std::time::UNIX_EPOCH)
                    .map(|d| d.as_secs())
                    .unwrap_or(0),
            })?;
        }
        self.response_cache
            .lock()
            .unwrap()
            .insert(key.clone(), response.clone());
        self.calls.lock().unwrap().push(CallRecord {
            label: label.to_string(),
            cache_key: key,
            prompt_tokens: response.prompt_tokens,
            completion_tokens: response.completion_tokens,
        });
        Ok(response)
    }

    /// Complete-and-parse with the bounded re-ask loop: parse failures
    /// re-send the prompt with `reminder` appended, up to [`PARSE_RETRIES`]
    /// extra attempts.
    pub fn complete_parsed<T>(
        &self,
        label: &str,
        req: &LlmRequest,
        reminder: &str,
        parser: impl Fn(&str) -> Result<T, LlmError>,
    ) -> Result<(T, LlmResponse), LlmError> {
        let mut attempt_req = req.clone();
        let mut last_err = None;
        for attempt in 0..=PARSE_RETRIES {
            let response = self.complete(label, &attempt_req)?;
            match parser(&response.text) {
                Ok(value) => return Ok((value, response)),
                Err(e @ LlmError::Parse(_)) => {
                    last_err = Some(e);
                    if attempt < PARSE_RETRIES {
                        attempt_req = req.clone();
                        attempt_req.prompt =
                            format!("{}\n\n{}", req.prompt, reminder_text(reminder, attempt + 1));
                    }
                }
                Err(other) => return Err(other),
            }
        }
        Err(last_err.unwrap_or_else(|| LlmError::Parse("retries exhausted".into())))
    }

    pub fn calls(&self) -> Vec<CallRecord> {
        self.calls.lock().unwrap().clone()
    }

    pub fn total_tokens(&self) -> (u64, u64) {
        let calls = self.calls.lock().unwrap();
        calls.iter().fold((0, 0), |(p, c), r| {
            (p + r.prompt_tokens, c + r.completion_tokens)
        })
    }
}

fn reminder_text(reminder: &str, attempt: u32) -> String {
    format!("Reminder {attempt}: {reminder}")
}
