use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{CompletionRequest, LlmError, Provider};

/// One canned response. A rule matches when the request tag equals `tag`
/// (or `tag` ends in `*` and prefixes it) and every `contains` fragment
/// occurs in the request text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptRule {
    pub tag: String,
    #[serde(default)]
    pub contains: Vec<String>,
    pub response: String,
    /// Repeating rules are never used up.
    #[serde(default)]
    pub repeat: bool,
}

impl ScriptRule {
    pub fn new(tag: impl Into<String>, response: impl Into<String>) -> Self {
        Self { tag: tag.into(), contains: Vec::new(), response: response.into(), repeat: false }
    }

    pub fn when(mut self, fragment: impl Into<String>) -> Self {
        self.contains.push(fragment.into());
        self
    }

    pub fn repeating(mut self) -> Self {
        self.repeat = true;
        self
    }

    fn matches(&self, request: &CompletionRequest, text: &str) -> bool {
        let tag_ok = match self.tag.strip_suffix('*') {
            Some(prefix) => request.tag.starts_with(prefix),
            None => request.tag == self.tag,
        };
        tag_ok && self.contains.iter().all(|c| text.contains(c.as_str()))
    }
}

/// Deterministic provider driven by an ordered rule list; the first
/// unconsumed matching rule answers.
pub struct ScriptedProvider {
    rules: Vec<ScriptRule>,
    used: Mutex<Vec<bool>>,
}

impl ScriptedProvider {
    pub fn new(rules: Vec<ScriptRule>) -> Self {
        let used = Mutex::new(vec![false; rules.len()]);
        Self { rules, used }
    }

    /// Loads a JSON array of rules.
    pub fn from_file(path: &Path) -> Result<Self, LlmError> {
        let text = std::fs::read_to_string(path)?;
        let rules: Vec<ScriptRule> = serde_json::from_str(&text)
            .map_err(|e| LlmError::Config(format!("bad script {}: {e}", path.display())))?;
        Ok(Self::new(rules))
    }

    pub fn remaining(&self) -> usize {
        let used = self.used.lock().expect("script state poisoned");
        self.rules.iter().zip(used.iter()).filter(|(r, u)| !r.repeat && !**u).count()
    }
}

impl Provider for ScriptedProvider {
    fn complete(&self, request: &CompletionRequest) -> Result<String, LlmError> {
        let text = request.full_text();
        let mut used = self.used.lock().expect("script state poisoned");
        for (i, rule) in self.rules.iter().enumerate() {
            if !used[i] && rule.matches(request, &text) {
                if !rule.repeat {
                    used[i] = true;
                }
                return Ok(rule.response.clone());
            }
        }
        Err(LlmError::Provider { message: format!("script has no rule left for tag `{}`", request.tag), retryable: false })
    }
}
