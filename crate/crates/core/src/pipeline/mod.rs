//! End-to-end orchestration: configuration, run manifests, artifact trees
//! and the `generalize` / `eval` drivers used by the command line.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::coverage::CoverageError;
use crate::exam::ExamError;
use crate::forge::ForgeError;
use crate::index::{IndexError, SymbolIndex};
use crate::llm::{Gateway, LiveProvider, LlmConfig, LlmError, Provider, RecordingProvider, ReplayProvider, ScriptedProvider, TranscriptMode};
use crate::model::artifact::to_canonical_json;
use crate::runner::{ProjectConfig, RunnerError};
use crate::scenario::ScenarioError;
use crate::tuning::TuningError;

mod eval;
mod generalize;

pub use eval::{evaluate, load_eval_inputs, EvalInputs, EvalMetric, EvalSummary, SummaryRow};
pub use generalize::{generalize, GeneralizeOutcome, GeneralizeRequest, OracleChooser, StageGate, TestSummary};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const DEFAULT_INDEX_PATH: &str = ".scengen/index.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Setup,
    Index,
    Exam,
    Template,
    Crystallize,
    Generate,
    Tune,
    Eval,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Setup => "setup",
            Stage::Index => "index",
            Stage::Exam => "stage 1 (exam)",
            Stage::Template => "stage 2 (template)",
            Stage::Crystallize => "stage 2 (crystallize)",
            Stage::Generate => "stage 3 (generate)",
            Stage::Tune => "tune",
            Stage::Eval => "eval",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("{stage}: {message}")]
    Stage { stage: Stage, message: String },
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl PipelineError {
    /// 1 pipeline failure, 2 input error, 3 configuration error.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 3,
            PipelineError::Input(_) => 2,
            PipelineError::Stage { .. } | PipelineError::Io { .. } => 1,
        }
    }

    pub fn at(stage: Stage, e: impl fmt::Display) -> Self {
        PipelineError::Stage { stage, message: e.to_string() }
    }

    fn llm(stage: Stage, e: LlmError) -> Self {
        match e {
            LlmError::Config(m) => PipelineError::Config(m),
            other => Self::at(stage, other),
        }
    }
}

impl From<IndexError> for PipelineError {
    fn from(e: IndexError) -> Self {
        match e {
            IndexError::EmptyProject(_) | IndexError::Corrupt { .. } => PipelineError::Input(e.to_string()),
            other => PipelineError::at(Stage::Index, other),
        }
    }
}

macro_rules! staged {
    ($ty:ty, $llm:path) => {
        impl From<(Stage, $ty)> for PipelineError {
            fn from((stage, e): (Stage, $ty)) -> Self {
                match e {
                    $llm(inner) => PipelineError::llm(stage, inner),
                    other => PipelineError::at(stage, other),
                }
            }
        }
    };
}

staged!(ExamError, ExamError::Llm);
staged!(ScenarioError, ScenarioError::Llm);
staged!(ForgeError, ForgeError::Llm);
staged!(TuningError, TuningError::Llm);
staged!(CoverageError, CoverageError::Llm);

impl From<(Stage, RunnerError)> for PipelineError {
    fn from((stage, e): (Stage, RunnerError)) -> Self {
        match e {
            RunnerError::Unavailable(m) => PipelineError::Config(m),
            other => PipelineError::at(stage, other),
        }
    }
}

/// Pipeline knobs; every field has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSettings {
    pub q_max: usize,
    pub max_exam_iter: u32,
    pub max_template_queries: u32,
    pub knowledge_budget: Option<usize>,
    pub bundle_ceiling: usize,
    pub max_repair: u32,
    /// Rule prompt artifact produced by `tune`; the base prompt otherwise.
    pub rules: Option<PathBuf>,
    pub index: Option<PathBuf>,
}

impl Default for PipelineSettings {
    fn default() -> Self {
        Self {
            q_max: crate::exam::DEFAULT_Q_MAX,
            max_exam_iter: crate::exam::DEFAULT_MAX_ITER,
            max_template_queries: crate::scenario::DEFAULT_MAX_QUERIES,
            knowledge_budget: None,
            bundle_ceiling: crate::scenario::DEFAULT_BUNDLE_CEILING,
            max_repair: crate::forge::DEFAULT_MAX_REPAIR,
            rules: None,
            index: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub project: ProjectConfig,
    #[serde(default)]
    pub llm: LlmConfig,
    #[serde(default)]
    pub pipeline: PipelineSettings,
}

impl Config {
    /// Reads a TOML config; relative paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: Config = toml::from_str(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        let base = base.canonicalize().unwrap_or_else(|_| base.to_path_buf());
        cfg.project.resolve_paths(&base);
        for p in [&mut cfg.llm.script, &mut cfg.pipeline.rules, &mut cfg.pipeline.index].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn index_path(&self) -> PathBuf {
        self.pipeline.index.clone().unwrap_or_else(|| self.project.root.join(DEFAULT_INDEX_PATH))
    }
}

/// Loads the persisted index, or builds it when absent or `rebuild` is set.
pub fn open_index(cfg: &Config, rebuild: bool) -> Result<SymbolIndex, PipelineError> {
    let path = cfg.index_path();
    if !rebuild && path.exists() {
        return Ok(SymbolIndex::load(&path)?);
    }
    Ok(crate::index::build_index(&cfg.project.root)?)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptSpec {
    pub mode: TranscriptMode,
    pub path: PathBuf,
}

impl std::str::FromStr for TranscriptSpec {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let (mode, path) = s.split_once(':').ok_or_else(|| format!("expected record:<path> or replay:<path>, got `{s}`"))?;
        let mode = match mode {
            "record" => TranscriptMode::Record,
            "replay" => TranscriptMode::Replay,
            other => return Err(format!("unknown transcript mode `{other}`")),
        };
        if path.is_empty() {
            return Err("empty transcript path".into());
        }
        Ok(Self { mode, path: PathBuf::from(path) })
    }
}

/// One per run, written to the root of the artifact tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub config: Option<Config>,
    pub seed: u64,
    pub transcript: Option<TranscriptSpec>,
    /// As given on the command line.
    pub out_dir: PathBuf,
    pub tool_version: String,
    pub args: BTreeMap<String, String>,
    /// Digest of the manifest that recorded the replayed transcript.
    pub origin_manifest: Option<String>,
}

impl RunManifest {
    pub fn new(subcommand: &str, config: Option<Config>, seed: u64, transcript: Option<TranscriptSpec>, out_dir: &Path) -> Self {
        Self {
            subcommand: subcommand.to_string(),
            config,
            seed,
            transcript,
            out_dir: out_dir.to_path_buf(),
            tool_version: TOOL_VERSION.to_string(),
            args: BTreeMap::new(),
            origin_manifest: None,
        }
    }

    pub fn digest(&self) -> String {
        let text = to_canonical_json(self).expect("manifest serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

/// Provider for a run: replay ignores `[llm]`; record wraps the configured
/// provider.
pub fn build_gateway(llm: &LlmConfig, manifest: &mut RunManifest) -> Result<Gateway, PipelineError> {
    let transcript = manifest.transcript.clone();
    match transcript {
        Some(TranscriptSpec { mode: TranscriptMode::Replay, path }) => {
            let replay = ReplayProvider::open(&path).map_err(|e| match e {
                LlmError::Io(io) => PipelineError::Input(format!("{}: {io}", path.display())),
                other => PipelineError::llm(Stage::Setup, other),
            })?;
            manifest.origin_manifest = replay.manifest_digest.clone();
            Ok(Gateway::new(replay))
        }
        Some(TranscriptSpec { mode: TranscriptMode::Record, path }) => {
            let inner = base_provider(llm)?;
            let rec = RecordingProvider::create(inner, &path, Some(manifest.digest())).map_err(|e| PipelineError::llm(Stage::Setup, e))?;
            Ok(Gateway::new(rec))
        }
        None => Ok(Gateway::from_arc(base_provider(llm)?)),
    }
}

fn base_provider(llm: &LlmConfig) -> Result<Arc<dyn Provider>, PipelineError> {
    match llm.provider.as_deref() {
        Some("scripted") => {
            let script = llm.script.as_ref().ok_or_else(|| PipelineError::Config("scripted provider needs [llm].script".into()))?;
            let p = ScriptedProvider::from_file(script).map_err(|e| PipelineError::Config(e.to_string()))?;
            Ok(Arc::new(p))
        }
        None | Some("openai") => Ok(Arc::new(LiveProvider::from_config(llm).map_err(|e| PipelineError::llm(Stage::Setup, e))?)),
        Some(other) => Err(PipelineError::Config(format!("unknown llm provider `{other}`"))),
    }
}

/// Output directory of a run. Every document is canonical JSON or plain
/// text, so equal runs give byte-equal trees.
#[derive(Debug, Clone)]
pub struct ArtifactTree {
    root: PathBuf,
}

impl ArtifactTree {
    pub fn create(root: &Path) -> Result<Self, PipelineError> {
        std::fs::create_dir_all(root).map_err(|source| PipelineError::Io { path: root.to_path_buf(), source })?;
        Ok(Self { root: root.to_path_buf() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write_text(&self, rel: &str, text: &str) -> Result<PathBuf, PipelineError> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|source| PipelineError::Io { path: parent.to_path_buf(), source })?;
        }
        std::fs::write(&path, text).map_err(|source| PipelineError::Io { path: path.clone(), source })?;
        Ok(path)
    }

    pub fn write_json<T: Serialize + ?Sized>(&self, rel: &str, value: &T) -> Result<PathBuf, PipelineError> {
        let text = to_canonical_json(value).map_err(|e| PipelineError::at(Stage::Setup, e))?;
        self.write_text(rel, &text)
    }

    pub fn write_manifest(&self, manifest: &RunManifest) -> Result<PathBuf, PipelineError> {
        self.write_json("manifest.json", manifest)
    }
}

#[cfg(test)]
mod tests;
