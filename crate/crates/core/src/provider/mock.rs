use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{ChatRequest, ChatResponse, Provider, ProviderError};

/// One scripted reply. Lines with `match` only answer prompts containing it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptLine {
    #[serde(rename = "match", default, skip_serializing_if = "Option::is_none")]
    pub matches: Option<String>,
    pub text: String,
    #[serde(default)]
    pub prompt_tokens: u64,
    #[serde(default)]
    pub completion_tokens: u64,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub latency_ms: u64,
}

fn is_zero(v: &u64) -> bool {
    *v == 0
}

impl ScriptLine {
    pub fn new(text: impl Into<String>, prompt_tokens: u64, completion_tokens: u64) -> Self {
        Self {
            matches: None,
            text: text.into(),
            prompt_tokens,
            completion_tokens,
            latency_ms: 0,
        }
    }

    pub fn matching(mut self, needle: impl Into<String>) -> Self {
        self.matches = Some(needle.into());
        self
    }
}

#[derive(Debug, Default)]
struct State {
    consumed: Vec<bool>,
    log: Vec<ChatRequest>,
}

/// Offline provider answering from a fixed script.
///
/// Each request takes the first unconsumed line whose `match` substring occurs
/// in the user prompt (lines without `match` accept any prompt).
#[derive(Debug)]
pub struct ScriptedProvider {
    lines: Vec<ScriptLine>,
    state: Mutex<State>,
}

impl ScriptedProvider {
    pub fn new(lines: Vec<ScriptLine>) -> Self {
        let consumed = vec![false; lines.len()];
        Self {
            lines,
            state: Mutex::new(State {
                consumed,
                log: Vec::new(),
            }),
        }
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, ProviderError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ProviderError::Script {
            path: path.display().to_string(),
            line: 0,
            reason: e.to_string(),
        })?;
        let mut lines = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            if raw.trim().is_empty() {
                continue;
            }
            let line: ScriptLine = serde_json::from_str(raw).map_err(|e| ProviderError::Script {
                path: path.display().to_string(),
                line: i + 1,
                reason: e.to_string(),
            })?;
            lines.push(line);
        }
        Ok(Self::new(lines))
    }

    /// Every request received so far, in arrival order.
    pub fn requests(&self) -> Vec<ChatRequest> {
        self.state.lock().unwrap().log.clone()
    }

    pub fn remaining(&self) -> usize {
        self.state.lock().unwrap().consumed.iter().filter(|c| !**c).count()
    }
}

impl Provider for ScriptedProvider {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, ProviderError> {
        req.validate()?;
        let mut state = self.state.lock().unwrap();
        state.log.push(req.clone());
        let hit = self.lines.iter().enumerate().position(|(i, line)| {
            !state.consumed[i]
                && line
                    .matches
                    .as_deref()
                    .is_none_or(|m| req.user_prompt.contains(m))
        });
        let Some(i) = hit else {
            let excerpt: String = req.user_prompt.chars().take(80).collect();
            return Err(ProviderError::ScriptExhausted(excerpt));
        };
        state.consumed[i] = true;
        let line = &self.lines[i];
        Ok(ChatResponse {
            text: line.text.clone(),
            prompt_tokens: line.prompt_tokens,
            completion_tokens: line.completion_tokens,
            latency_ms: line.latency_ms,
            model: req.model.clone(),
            retries: 0,
        })
    }

    fn name(&self) -> &str {
        "mock"
    }

    fn requires_sequential(&self) -> bool {
        true
    }
}
