//! Record/replay of completions, keyed by a stable request digest.
//!
//! Transcript files are JSON Lines: an optional header line followed by one
//! entry per completed call, appended as calls finish.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{CompletionRequest, LlmError, Provider};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TranscriptMode {
    Record,
    Replay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub request_digest: String,
    pub tag: String,
    pub response: String,
    /// Kept for fixture readability; lookups use the digest only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub request: Option<CompletionRequest>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum Line {
    Header { manifest_digest: Option<String> },
    Entry(TranscriptEntry),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transcript {
    pub mode: TranscriptMode,
    pub entries: Vec<TranscriptEntry>,
    /// Digest of the manifest of the run that recorded this transcript.
    pub manifest_digest: Option<String>,
}

impl Transcript {
    pub fn load(path: &Path) -> Result<Self, LlmError> {
        let file = File::open(path)?;
        let mut entries = Vec::new();
        let mut manifest_digest = None;
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: Line = serde_json::from_str(&line).map_err(|e| {
                LlmError::Config(format!("{}:{}: bad transcript line: {e}", path.display(), i + 1))
            })?;
            match parsed {
                Line::Header { manifest_digest: d } => manifest_digest = d,
                Line::Entry(e) => entries.push(e),
            }
        }
        Ok(Self { mode: TranscriptMode::Replay, entries, manifest_digest })
    }
}

/// Whitespace-normalized, key-ordered rendering of the request hashed with
/// SHA-256. The tag is excluded so that identical prompts collide.
pub fn request_digest(request: &CompletionRequest) -> String {
    let messages: Vec<serde_json::Value> = request
        .messages
        .iter()
        .map(|m| {
            serde_json::json!({
                "content": m.content.split_whitespace().collect::<Vec<_>>().join(" "),
                "role": m.role,
            })
        })
        .collect();
    let temperature = match request.temperature {
        Some(t) => format!("{t:.4}"),
        None => "default".to_string(),
    };
    let canonical = serde_json::json!({
        "max_output": request.max_output,
        "messages": messages,
        "temperature": temperature,
    });
    let mut hasher = Sha256::new();
    hasher.update(canonical.to_string().as_bytes());
    hex::encode(hasher.finalize())
}

/// Serves responses from a transcript by exact digest match. Entries that
/// share a digest are served in recorded order; the last one repeats.
pub struct ReplayProvider {
    by_digest: HashMap<String, Vec<String>>,
    cursors: Mutex<HashMap<String, usize>>,
    pub manifest_digest: Option<String>,
}

impl ReplayProvider {
    pub fn new(transcript: Transcript) -> Self {
        let mut by_digest: HashMap<String, Vec<String>> = HashMap::new();
        for e in transcript.entries {
            by_digest.entry(e.request_digest).or_default().push(e.response);
        }
        Self { by_digest, cursors: Mutex::new(HashMap::new()), manifest_digest: transcript.manifest_digest }
    }

    pub fn open(path: &Path) -> Result<Self, LlmError> {
        Ok(Self::new(Transcript::load(path)?))
    }
}

impl Provider for ReplayProvider {
    fn complete(&self, request: &CompletionRequest) -> Result<String, LlmError> {
        let digest = request_digest(request);
        let responses = self
            .by_digest
            .get(&digest)
            .ok_or_else(|| LlmError::ReplayMiss { digest: digest.clone(), tag: request.tag.clone() })?;
        let mut cursors = self.cursors.lock().expect("replay cursor poisoned");
        let cursor = cursors.entry(digest).or_insert(0);
        let idx = (*cursor).min(responses.len() - 1);
        *cursor += 1;
        Ok(responses[idx].clone())
    }
}

/// Wraps a provider and appends every completed call to a transcript file.
pub struct RecordingProvider<P> {
    inner: P,
    path: PathBuf,
    file: Mutex<File>,
}

impl<P: Provider> RecordingProvider<P> {
    /// Truncates `path` and writes the header line.
    pub fn create(inner: P, path: &Path, manifest_digest: Option<String>) -> Result<Self, LlmError> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent)?;
        }
        let mut file = OpenOptions::new().create(true).write(true).truncate(true).open(path)?;
        let header = serde_json::to_string(&Line::Header { manifest_digest }).expect("header serializes");
        writeln!(file, "{header}")?;
        Ok(Self { inner, path: path.to_path_buf(), file: Mutex::new(file) })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

impl<P: Provider> Provider for RecordingProvider<P> {
    fn complete(&self, request: &CompletionRequest) -> Result<String, LlmError> {
        let response = self.inner.complete(request)?;
        let entry = TranscriptEntry {
            request_digest: request_digest(request),
            tag: request.tag.clone(),
            response: response.clone(),
            request: Some(request.clone()),
        };
        let line = serde_json::to_string(&Line::Entry(entry)).expect("entry serializes");
        let mut file = self.file.lock().expect("transcript file poisoned");
        writeln!(file, "{line}")?;
        file.flush()?;
        Ok(response)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{Message, ScriptRule, ScriptedProvider};

    #[test]
    fn digest_ignores_whitespace_and_tag() {
        let a = CompletionRequest::deterministic("a", "hello   world\n");
        let b = CompletionRequest::deterministic("b", " hello world");
        assert_eq!(request_digest(&a), request_digest(&b));
        let c = CompletionRequest::deterministic("a", "hello there");
        assert_ne!(request_digest(&a), request_digest(&c));
        let d = CompletionRequest::generative("a", "hello world");
        assert_ne!(request_digest(&a), request_digest(&d));
    }

    #[test]
    fn record_then_replay() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        let scripted = ScriptedProvider::new(vec![ScriptRule::new("q", "forty-two")]);
        let rec = RecordingProvider::create(scripted, &path, Some("m1".into())).unwrap();
        let req = CompletionRequest::new("q", vec![Message::system("s"), Message::user("answer?")]);
        assert_eq!(rec.complete(&req).unwrap(), "forty-two");
        drop(rec);

        let replay = ReplayProvider::open(&path).unwrap();
        assert_eq!(replay.manifest_digest.as_deref(), Some("m1"));
        assert_eq!(replay.complete(&req).unwrap(), "forty-two");
        // determinism: same request twice
        assert_eq!(replay.complete(&req).unwrap(), "forty-two");

        let miss = CompletionRequest::deterministic("q", "other");
        assert!(matches!(replay.complete(&miss), Err(LlmError::ReplayMiss { .. })));
    }

    #[test]
    fn shared_digest_served_in_order() {
        let req = CompletionRequest::deterministic("q", "same");
        let d = request_digest(&req);
        let mk = |r: &str| TranscriptEntry { request_digest: d.clone(), tag: "q".into(), response: r.into(), request: None };
        let t = Transcript { mode: TranscriptMode::Replay, entries: vec![mk("one"), mk("two")], manifest_digest: None };
        let replay = ReplayProvider::new(t);
        assert_eq!(replay.complete(&req).unwrap(), "one");
        assert_eq!(replay.complete(&req).unwrap(), "two");
        assert_eq!(replay.complete(&req).unwrap(), "two");
    }
}
