use std::io::Read;
use std::thread;
use std::time::{Duration, Instant};

use log::{debug, warn};
use serde::Deserialize;
use serde_json::json;

use super::{ChatRequest, ChatResponse, Provider, ProviderConfig, ProviderError};

const MAX_BACKOFF: Duration = Duration::from_secs(30);

/// Blocking client for OpenAI-compatible chat completion endpoints.
pub struct HttpProvider {
    agent: ureq::Agent,
    url: String,
    api_key: String,
    cfg: ProviderConfig,
}

impl std::fmt::Debug for HttpProvider {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpProvider")
            .field("url", &self.url)
            .field("api_key", &"<redacted>")
            .finish()
    }
}

#[derive(Deserialize)]
struct CompletionBody {
    choices: Vec<Choice>,
    usage: Option<Usage>,
    model: Option<String>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    content: Option<String>,
}

#[derive(Deserialize)]
struct Usage {
    prompt_tokens: Option<u64>,
    completion_tokens: Option<u64>,
    total_tokens: Option<u64>,
}

enum Attempt {
    Done(ChatResponse),
    Retry(String),
}

impl HttpProvider {
    /// Reads the API key from the environment variable named in `cfg`.
    pub fn from_env(cfg: ProviderConfig) -> Result<Self, ProviderError> {
        let key = std::env::var(&cfg.api_key_env).map_err(|_| {
            ProviderError::Auth(format!(
                "environment variable {} is not set",
                cfg.api_key_env
            ))
        })?;
        Self::new(cfg, key)
    }

    pub fn new(cfg: ProviderConfig, api_key: String) -> Result<Self, ProviderError> {
        cfg.validate()?;
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(cfg.request_timeout_s)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self {
            agent,
            url: format!("{}/chat/completions", cfg.base_url.trim_end_matches('/')),
            api_key,
            cfg,
        })
    }

    fn attempt(&self, req: &ChatRequest) -> Result<Attempt, ProviderError> {
        let body = json!({
            "model": req.model,
            "messages": [
                {"role": "system", "content": req.system_prompt},
                {"role": "user", "content": req.user_prompt},
            ],
            "temperature": req.temperature,
            "max_tokens": req.max_output_tokens,
        });
        let started = Instant::now();
        let mut call = self.agent.post(&self.url);
        if !self.api_key.is_empty() {
            call = call.header("Authorization", format!("Bearer {}", self.api_key));
        }
        let mut resp = match call.send_json(&body) {
            Ok(r) => r,
            Err(e @ (ureq::Error::Timeout(_)
            | ureq::Error::Io(_)
            | ureq::Error::ConnectionFailed
            | ureq::Error::HostNotFound)) => return Ok(Attempt::Retry(e.to_string())),
            Err(e) => return Err(ProviderError::Http { status: 0, body: e.to_string() }),
        };
        let status = resp.status().as_u16();
        let mut text = String::new();
        if let Err(e) = resp.body_mut().as_reader().read_to_string(&mut text) {
            return Ok(Attempt::Retry(format!("reading body: {e}")));
        }
        let latency_ms = started.elapsed().as_millis() as u64;
        match status {
            200..=299 => parse_body(&text, req, latency_ms).map(Attempt::Done),
            401 | 403 => Err(ProviderError::Auth(format!("HTTP {status}"))),
            429 | 500..=599 => Ok(Attempt::Retry(format!("HTTP {status}"))),
            _ => Err(ProviderError::Http {
                status,
                body: truncate(&text, 500),
            }),
        }
    }
}

impl Provider for HttpProvider {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, ProviderError> {
        req.validate()?;
        let mut retries = 0;
        loop {
            match self.attempt(req)? {
                Attempt::Done(mut resp) => {
                    resp.retries = retries;
                    return Ok(resp);
                }
                Attempt::Retry(reason) => {
                    if retries >= self.cfg.max_retries {
                        return Err(ProviderError::TransientExhausted {
                            attempts: retries + 1,
                            last: reason,
                        });
                    }
                    let delay = backoff(self.cfg.backoff_base_ms, retries);
                    warn!("transient failure ({reason}); retrying in {delay:?}");
                    thread::sleep(delay);
                    retries += 1;
                }
            }
        }
    }

    fn name(&self) -> &str {
        "http"
    }
}

fn backoff(base_ms: u64, retry: u32) -> Duration {
    let ms = base_ms.saturating_mul(1u64 << retry.min(20));
    Duration::from_millis(ms).min(MAX_BACKOFF)
}

fn parse_body(text: &str, req: &ChatRequest, latency_ms: u64) -> Result<ChatResponse, ProviderError> {
    let body: CompletionBody = serde_json::from_str(text)
        .map_err(|e| ProviderError::MalformedReply(format!("{e}: {}", truncate(text, 200))))?;
    let content = body
        .choices
        .into_iter()
        .next()
        .and_then(|c| c.message.content)
        .ok_or_else(|| ProviderError::MalformedReply("no message content".into()))?;
    let usage = body
        .usage
        .ok_or_else(|| ProviderError::MalformedReply("missing usage".into()))?;
    let (Some(prompt_tokens), Some(completion_tokens)) = (usage.prompt_tokens, usage.completion_tokens)
    else {
        return Err(ProviderError::MalformedReply("incomplete usage".into()));
    };
    if let Some(total) = usage.total_tokens {
        if total != prompt_tokens + completion_tokens {
            return Err(ProviderError::MalformedReply(format!(
                "usage total {total} != {prompt_tokens} + {completion_tokens}"
            )));
        }
    }
    debug!("completion in {latency_ms} ms: {prompt_tokens} in / {completion_tokens} out");
    Ok(ChatResponse {
        text: content,
        prompt_tokens,
        completion_tokens,
        latency_ms,
        model: body.model.unwrap_or_else(|| req.model.clone()),
        retries: 0,
    })
}

fn truncate(s: &str, max: usize) -> String {
    match s.char_indices().nth(max) {
        Some((i, _)) => format!("{}...", &s[..i]),
        None => s.to_string(),
    }
}
