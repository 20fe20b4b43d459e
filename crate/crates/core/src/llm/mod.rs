//! Completion gateway over chat-style providers.
//!
//! Every pipeline stage talks to a [`Gateway`]. Behind it sits a
//! [`Provider`]: a live HTTP endpoint, a scripted responder, a recorder
//! wrapping either, or a replayer reading a transcript file.

mod live;
mod scripted;
pub mod structured;
mod transcript;

use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use live::{LiveProvider, LlmConfig};
pub use scripted::{ScriptRule, ScriptedProvider};
pub use structured::{Schema, SchemaId};
pub use transcript::{request_digest, RecordingProvider, ReplayProvider, Transcript, TranscriptEntry, TranscriptMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Self { role: Role::System, content: content.into() }
    }
    pub fn user(content: impl Into<String>) -> Self {
        Self { role: Role::User, content: content.into() }
    }
    pub fn assistant(content: impl Into<String>) -> Self {
        Self { role: Role::Assistant, content: content.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub messages: Vec<Message>,
    /// `None` leaves the choice to the provider.
    pub temperature: Option<f64>,
    pub max_output: u32,
    /// Purpose label, e.g. `stage2.template`. Not part of the digest.
    pub tag: String,
}

pub const DEFAULT_MAX_OUTPUT: u32 = 4096;

impl CompletionRequest {
    pub fn new(tag: impl Into<String>, messages: Vec<Message>) -> Self {
        Self { messages, temperature: None, max_output: DEFAULT_MAX_OUTPUT, tag: tag.into() }
    }

    /// Single user message at temperature 0, for judging and exams.
    pub fn deterministic(tag: impl Into<String>, prompt: impl Into<String>) -> Self {
        Self::new(tag, vec![Message::user(prompt)]).with_temperature(0.0)
    }

    /// Single user message at the provider's default temperature.
    pub fn generative(tag: impl Into<String>, prompt: impl Into<String>) -> Self {
        Self::new(tag, vec![Message::user(prompt)])
    }

    pub fn with_temperature(mut self, t: f64) -> Self {
        self.temperature = Some(t);
        self
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        match self.messages.first() {
            None => Err(LlmError::InvalidRequest("messages non-empty".into())),
            Some(m) if m.role == Role::Assistant => {
                Err(LlmError::InvalidRequest("first message must be system or user".into()))
            }
            _ if self.temperature.is_some_and(|t| t.is_nan() || t < 0.0) => {
                Err(LlmError::InvalidRequest("temperature must be >= 0".into()))
            }
            _ => Ok(()),
        }
    }

    /// Concatenated message contents, used by scripted matching.
    pub fn full_text(&self) -> String {
        self.messages.iter().map(|m| m.content.as_str()).collect::<Vec<_>>().join("\n")
    }
}

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("provider error: {message}")]
    Provider { message: String, retryable: bool },
    #[error("no transcript entry for request {digest} (tag {tag})")]
    ReplayMiss { digest: String, tag: String },
    #[error("malformed {schema} output after {attempts} attempt(s): {reason}")]
    MalformedOutput { schema: SchemaId, reason: String, attempts: u32 },
    #[error("invalid completion request: {0}")]
    InvalidRequest(String),
    #[error("llm configuration error: {0}")]
    Config(String),
    #[error("transcript I/O error: {0}")]
    Io(#[from] std::io::Error),
}

/// A source of completions.
pub trait Provider: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<String, LlmError>;
}

impl<P: Provider + ?Sized> Provider for Arc<P> {
    fn complete(&self, request: &CompletionRequest) -> Result<String, LlmError> {
        (**self).complete(request)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallRecord {
    pub tag: String,
    pub digest: String,
}

/// Uniform completion entry point shared by all stages.
pub struct Gateway {
    provider: Arc<dyn Provider>,
    calls: Mutex<Vec<CallRecord>>,
}

impl Gateway {
    pub fn new(provider: impl Provider + 'static) -> Self {
        Self { provider: Arc::new(provider), calls: Mutex::new(Vec::new()) }
    }

    pub fn from_arc(provider: Arc<dyn Provider>) -> Self {
        Self { provider, calls: Mutex::new(Vec::new()) }
    }

    /// Returns the provider's text verbatim.
    pub fn complete(&self, request: &CompletionRequest) -> Result<String, LlmError> {
        request.validate()?;
        let digest = request_digest(request);
        let text = self.provider.complete(request)?;
        self.calls.lock().expect("call log poisoned").push(CallRecord { tag: request.tag.clone(), digest });
        Ok(text)
    }

    /// Completes and parses against `schema`. A violation triggers one
    /// reissue with a corrective message, then `MalformedOutput`.
    pub fn complete_structured<S: Schema>(
        &self,
        request: &CompletionRequest,
        schema: &S,
    ) -> Result<S::Output, LlmError> {
        let first = self.complete(request)?;
        let reason = match parse_with(schema, &first) {
            Ok(out) => return Ok(out),
            Err(reason) => reason,
        };
        tracing::warn!(schema = %schema.id(), %reason, "malformed structured output, reissuing");
        let mut retry = request.clone();
        retry.messages.push(Message::assistant(first));
        retry.messages.push(Message::user(format!(
            "Your previous response could not be used: {reason}. Reply again and follow the required output format exactly."
        )));
        let second = self.complete(&retry)?;
        parse_with(schema, &second).map_err(|reason| LlmError::MalformedOutput { schema: schema.id(), reason, attempts: 2 })
    }

    pub fn call_log(&self) -> Vec<CallRecord> {
        self.calls.lock().expect("call log poisoned").clone()
    }

    pub fn count_tag(&self, tag: &str) -> usize {
        self.calls.lock().expect("call log poisoned").iter().filter(|c| c.tag == tag).count()
    }
}

fn parse_with<S: Schema>(schema: &S, text: &str) -> Result<S::Output, String> {
    if text.trim().is_empty() {
        return Err("empty response".into());
    }
    schema.parse(text)
}

#[cfg(test)]
mod tests {
    use super::structured::JudgeVerdictSchema;
    use super::*;

    #[test]
    fn request_invariants() {
        let bad = CompletionRequest::new("x", vec![]);
        assert!(bad.validate().is_err());
        let bad = CompletionRequest::new("x", vec![Message::assistant("hi")]);
        assert!(bad.validate().is_err());
        CompletionRequest::deterministic("x", "hi").validate().unwrap();
    }

    #[test]
    fn structured_retry_then_error() {
        let provider = ScriptedProvider::new(vec![
            ScriptRule::new("judge", "I think so"),
            ScriptRule::new("judge", "still unsure"),
        ]);
        let gw = Gateway::new(provider);
        let schema = JudgeVerdictSchema::new(vec!["t1".into()]);
        let err = gw
            .complete_structured(&CompletionRequest::deterministic("judge", "q"), &schema)
            .unwrap_err();
        assert!(matches!(err, LlmError::MalformedOutput { attempts: 2, .. }), "{err}");
        assert_eq!(gw.count_tag("judge"), 2);
    }

    #[test]
    fn structured_retry_recovers() {
        let provider = ScriptedProvider::new(vec![
            ScriptRule::new("judge", "maybe"),
            ScriptRule::new("judge", "MATCH: yes; tests: [t1]"),
        ]);
        let gw = Gateway::new(provider);
        let schema = JudgeVerdictSchema::new(vec!["t1".into()]);
        let v = gw.complete_structured(&CompletionRequest::deterministic("judge", "q"), &schema).unwrap();
        assert!(v.fulfilled);
    }

    #[test]
    fn empty_response_is_malformed() {
        let provider = ScriptedProvider::new(vec![ScriptRule::new("judge", "").repeating()]);
        let gw = Gateway::new(provider);
        let schema = JudgeVerdictSchema::new(vec![]);
        let err = gw.complete_structured(&CompletionRequest::deterministic("judge", "q"), &schema).unwrap_err();
        assert!(matches!(err, LlmError::MalformedOutput { .. }));
    }
}
