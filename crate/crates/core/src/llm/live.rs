use std::path::PathBuf;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{CompletionRequest, LlmError, Provider, Role};

pub const ENV_ENDPOINT: &str = "SCENGEN_LLM_ENDPOINT";
pub const ENV_MODEL: &str = "SCENGEN_LLM_MODEL";
pub const ENV_API_KEY: &str = "SCENGEN_LLM_API_KEY";

/// `[llm]` section of the project config. Environment variables override
/// endpoint, model and key.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LlmConfig {
    /// `openai` (any chat-completions compatible endpoint) or `scripted`.
    pub provider: Option<String>,
    pub endpoint: Option<String>,
    pub model: Option<String>,
    /// Rule file for the scripted provider.
    pub script: Option<PathBuf>,
    pub timeout_secs: Option<u64>,
}

impl LlmConfig {
    pub fn resolved(&self) -> LlmConfig {
        let mut out = self.clone();
        if let Ok(v) = std::env::var(ENV_ENDPOINT) {
            out.endpoint = Some(v);
        }
        if let Ok(v) = std::env::var(ENV_MODEL) {
            out.model = Some(v);
        }
        out
    }
}

/// OpenAI-style `/chat/completions` client.
pub struct LiveProvider {
    agent: ureq::Agent,
    url: String,
    model: String,
    api_key: Option<String>,
}

impl LiveProvider {
    pub fn from_config(config: &LlmConfig) -> Result<Self, LlmError> {
        let config = config.resolved();
        let endpoint = config
            .endpoint
            .ok_or_else(|| LlmError::Config(format!("no LLM endpoint configured (set [llm].endpoint or {ENV_ENDPOINT})")))?;
        let model = config
            .model
            .ok_or_else(|| LlmError::Config(format!("no LLM model configured (set [llm].model or {ENV_MODEL})")))?;
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs.unwrap_or(300))))
            .build()
            .into();
        Ok(Self {
            agent,
            url: format!("{}/chat/completions", endpoint.trim_end_matches('/')),
            model,
            api_key: std::env::var(ENV_API_KEY).ok(),
        })
    }
}

impl Provider for LiveProvider {
    fn complete(&self, request: &CompletionRequest) -> Result<String, LlmError> {
        let messages: Vec<serde_json::Value> = request
            .messages
            .iter()
            .map(|m| {
                let role = match m.role {
                    Role::System => "system",
                    Role::User => "user",
                    Role::Assistant => "assistant",
                };
                serde_json::json!({ "role": role, "content": m.content })
            })
            .collect();
        let mut body = serde_json::json!({
            "model": self.model,
            "messages": messages,
            "max_tokens": request.max_output,
        });
        if let Some(t) = request.temperature {
            body["temperature"] = serde_json::json!(t);
        }
        let mut call = self.agent.post(&self.url);
        if let Some(key) = &self.api_key {
            call = call.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = call.send_json(&body).map_err(|e| {
            let retryable = match &e {
                ureq::Error::StatusCode(code) => *code == 429 || *code >= 500,
                ureq::Error::Timeout(_) | ureq::Error::Io(_) | ureq::Error::ConnectionFailed => true,
                _ => false,
            };
            LlmError::Provider { message: e.to_string(), retryable }
        })?;
        let value: serde_json::Value = response
            .body_mut()
            .read_json()
            .map_err(|e| LlmError::Provider { message: format!("bad response body: {e}"), retryable: false })?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| LlmError::Provider { message: "response without message content".into(), retryable: false })
    }
}
