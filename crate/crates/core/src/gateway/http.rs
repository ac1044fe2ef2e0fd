use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{PromptRequest, Provider, ProviderError, ProviderReply, TokenUsage};

/// Connection settings for an OpenAI-style chat-completion endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpProviderConfig {
    pub base_url: String,
    pub model: String,
    #[serde(skip_serializing)]
    pub api_key: Option<String>,
    pub timeout_secs: u64,
}

impl Default for HttpProviderConfig {
    fn default() -> Self {
        HttpProviderConfig {
            base_url: "https://api.openai.com/v1".into(),
            model: "gpt-3.5-turbo".into(),
            api_key: None,
            timeout_secs: 30,
        }
    }
}

impl HttpProviderConfig {
    /// Apply `CRS_LLM_BASE_URL`, `CRS_LLM_MODEL`, `CRS_LLM_API_KEY` and
    /// `CRS_LLM_TIMEOUT_SECS` when set.
    pub fn with_env_overrides(mut self) -> Self {
        if let Ok(v) = std::env::var("CRS_LLM_BASE_URL") {
            self.base_url = v;
        }
        if let Ok(v) = std::env::var("CRS_LLM_MODEL") {
            self.model = v;
        }
        if let Ok(v) = std::env::var("CRS_LLM_API_KEY") {
            self.api_key = Some(v);
        }
        if let Some(v) = std::env::var("CRS_LLM_TIMEOUT_SECS").ok().and_then(|v| v.parse().ok()) {
            self.timeout_secs = v;
        }
        self
    }
}

pub struct HttpProvider {
    config: HttpProviderConfig,
    agent: ureq::Agent,
}

impl HttpProvider {
    pub fn new(config: HttpProviderConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        HttpProvider { config, agent }
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'))
    }
}

fn transport(message: String) -> ProviderError {
    ProviderError { message, retriable: true }
}

impl Provider for HttpProvider {
    fn chat(&self, request: &PromptRequest) -> Result<ProviderReply, ProviderError> {
        let body = json!({
            "model": self.config.model,
            "messages": request.messages,
            "temperature": request.temperature,
            "max_tokens": request.max_completion_tokens,
        });
        let mut call = self.agent.post(&self.endpoint());
        if let Some(key) = &self.config.api_key {
            call = call.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = call
            .header("Content-Type", "application/json")
            .send(body.to_string())
            .map_err(|e| transport(e.to_string()))?;
        let status = resp.status().as_u16();
        if status >= 400 {
            let detail = resp.body_mut().read_to_string().unwrap_or_default();
            return Err(ProviderError {
                message: format!("HTTP {status}: {}", detail.chars().take(300).collect::<String>()),
                retriable: status == 429 || status >= 500,
            });
        }
        let payload: Value = resp.body_mut().read_json().map_err(|e| transport(e.to_string()))?;
        let text = payload
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .ok_or_else(|| ProviderError { message: "reply has no message content".into(), retriable: false })?
            .to_string();
        let usage = payload.get("usage").and_then(|u| {
            let p = u.get("prompt_tokens")?.as_u64()? as usize;
            let c = u.get("completion_tokens")?.as_u64()? as usize;
            Some(TokenUsage::new(p, c))
        });
        Ok(ProviderReply { text, usage })
    }

    fn performs_network_io(&self) -> bool {
        true
    }
}
