//! Language-model adapters. The deterministic answer stays authoritative:
//! remote output that quotes numbers absent from the findings is discarded.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::answer::Answer;
use super::check::check_provenance;
use super::prompt::PromptText;

/// Environment variable naming the remote completion endpoint.
pub const REMOTE_ENDPOINT_ENV: &str = "ICUSYNC_LLM_ENDPOINT";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    pub adapter: String,
    /// Set when the deterministic text was substituted for the adapter's.
    pub fallback: bool,
    pub fallback_reason: Option<String>,
}

impl Completion {
    fn fallback(answer: &Answer, adapter: &str, reason: String) -> Completion {
        Completion {
            text: answer.text_en.clone(),
            adapter: adapter.into(),
            fallback: true,
            fallback_reason: Some(reason),
        }
    }
}

pub trait LlmAdapter: Send + Sync {
    fn name(&self) -> &'static str;

    /// Produces response text for `prompt`; `answer` is the deterministic
    /// result used for checking and as the fallback.
    fn complete(&self, prompt: &PromptText, answer: &Answer) -> Completion;
}

/// Returns the deterministic English text.
#[derive(Debug, Clone, Copy, Default)]
pub struct OfflineAdapter;

impl LlmAdapter for OfflineAdapter {
    fn name(&self) -> &'static str {
        "offline"
    }

    fn complete(&self, _prompt: &PromptText, answer: &Answer) -> Completion {
        Completion {
            text: answer.text_en.clone(),
            adapter: self.name().into(),
            fallback: false,
            fallback_reason: None,
        }
    }
}

/// Posts `{"prompt": ...}` as JSON and reads `text`, `response` or
/// `content` from a JSON reply, or the raw body otherwise.
#[derive(Debug, Clone)]
pub struct RemoteAdapter {
    endpoint: String,
    agent: ureq::Agent,
}

#[derive(Serialize)]
struct RemoteRequest<'a> {
    prompt: &'a str,
}

impl RemoteAdapter {
    pub fn new(endpoint: impl Into<String>, timeout: Duration) -> RemoteAdapter {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        RemoteAdapter {
            endpoint: endpoint.into(),
            agent,
        }
    }

    /// Endpoint from [`REMOTE_ENDPOINT_ENV`], if set.
    pub fn from_env(timeout: Duration) -> Option<RemoteAdapter> {
        std::env::var(REMOTE_ENDPOINT_ENV)
            .ok()
            .filter(|s| !s.is_empty())
            .map(|e| RemoteAdapter::new(e, timeout))
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    fn call(&self, prompt: &str) -> Result<String, String> {
        let mut resp = self
            .agent
            .post(&self.endpoint)
            .send_json(RemoteRequest { prompt })
            .map_err(|e| e.to_string())?;
        let body = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| e.to_string())?;
        if let Ok(serde_json::Value::Object(map)) = serde_json::from_str::<serde_json::Value>(&body)
        {
            for key in ["text", "response", "content"] {
                if let Some(serde_json::Value::String(s)) = map.get(key) {
                    return Ok(s.clone());
                }
            }
            return Err("reply has no text field".into());
        }
        Ok(body)
    }
}

impl LlmAdapter for RemoteAdapter {
    fn name(&self) -> &'static str {
        "remote"
    }

    fn complete(&self, prompt: &PromptText, answer: &Answer) -> Completion {
        let text = match self.call(&prompt.render()) {
            Ok(t) => t.trim().to_string(),
            Err(e) => {
                return Completion::fallback(
                    answer,
                    self.name(),
                    format!("remote call failed: {e}"),
                )
            }
        };
        if text.is_empty() {
            return Completion::fallback(answer, self.name(), "empty reply".into());
        }
        if let Err(bad) = check_provenance(&text, answer) {
            return Completion::fallback(
                answer,
                self.name(),
                format!("unbacked numbers: {}", bad.join(", ")),
            );
        }
        Completion {
            text,
            adapter: self.name().into(),
            fallback: false,
            fallback_reason: None,
        }
    }
}
