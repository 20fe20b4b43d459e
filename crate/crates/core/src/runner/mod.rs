//! Compile and run candidate tests against a scratch copy of the project.

pub(crate) mod filter;

use std::collections::BTreeMap;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::{Condvar, Mutex, OnceLock};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use wait_timeout::ChildExt;
use walkdir::WalkDir;

pub use filter::{filter_messages, ProjectScope};

pub const DEFAULT_TIMEOUT_SECS: u64 = 120;

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error("build command unavailable: {0}")]
    Unavailable(String),
    #[error("run exceeded {0}s wall clock")]
    TimeoutExceeded(u64),
    #[error("pristine project does not build: {0}")]
    PristineBuildFailed(String),
    #[error("runner io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Pass,
    CompileError,
    ExecutionError,
    AssertionFailure,
}

impl RunStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RunStatus::Pass => "pass",
            RunStatus::CompileError => "compile_error",
            RunStatus::ExecutionError => "execution_error",
            RunStatus::AssertionFailure => "assertion_failure",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub status: RunStatus,
    /// Project-relevant messages; empty on pass.
    pub messages: String,
    #[serde(skip)]
    pub duration: Duration,
    #[serde(skip)]
    pub raw_log: Option<PathBuf>,
}

impl RunOutcome {
    pub fn new(status: RunStatus, messages: impl Into<String>) -> Self {
        Self { status, messages: messages.into(), duration: Duration::ZERO, raw_log: None }
    }

    pub fn passed(&self) -> bool {
        self.status == RunStatus::Pass
    }
}

/// A test file to place into the project before building.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidate {
    /// Project-relative path of the file.
    pub file: String,
    /// Full file contents.
    pub source: String,
    /// Class name as used by the run command.
    pub class: String,
    pub method: Option<String>,
}

/// A test source file of the project, used as the host for candidates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestFile {
    /// Project-relative path.
    pub path: String,
    pub text: String,
    pub class: String,
}

impl TestFile {
    pub fn new(path: impl Into<String>, text: impl Into<String>) -> Self {
        let path = path.into();
        let class = Path::new(&path).file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        Self { path, text: text.into(), class }
    }

    pub fn load(root: &Path, rel: &str) -> std::io::Result<Self> {
        Ok(Self::new(rel, std::fs::read_to_string(root.join(rel))?))
    }

    /// The file with `old` (a method's source) swapped for `new`.
    pub fn replacing(&self, old: &str, new: &str, method: &str) -> Option<Candidate> {
        let at = self.text.find(old)?;
        let mut source = String::with_capacity(self.text.len() + new.len());
        source.push_str(&self.text[..at]);
        source.push_str(new);
        source.push_str(&self.text[at + old.len()..]);
        Some(self.candidate(source, method))
    }

    /// The file with `imports` merged in and `method` appended to the class
    /// body.
    pub fn adding(&self, imports: &[String], method_src: &str, method: &str) -> Candidate {
        let mut lines: Vec<String> = self.text.lines().map(str::to_string).collect();
        let missing: Vec<&String> = imports.iter().filter(|i| !lines.iter().any(|l| l.trim() == i.trim())).collect();
        if !missing.is_empty() {
            let after = lines
                .iter()
                .rposition(|l| l.trim_start().starts_with("import "))
                .or_else(|| lines.iter().position(|l| l.trim_start().starts_with("package ")))
                .map(|i| i + 1)
                .unwrap_or(0);
            for (k, imp) in missing.iter().enumerate() {
                lines.insert(after + k, imp.trim().to_string());
            }
        }
        let mut text = lines.join("\n");
        text.push('\n');
        let close = text.rfind('}').unwrap_or(text.len());
        let indented: String = method_src.lines().map(|l| if l.is_empty() { "\n".to_string() } else { format!("    {l}\n") }).collect();
        let source = format!("{}\n{}{}", text[..close].trim_end_matches([' ', '\t']), indented, &text[close..]);
        self.candidate(source, method)
    }

    fn candidate(&self, source: String, method: &str) -> Candidate {
        Candidate { file: self.path.clone(), source, class: self.class.clone(), method: Some(method.to_string()) }
    }
}

pub trait TestRunner: Send + Sync {
    fn run(&self, candidate: &Candidate) -> Result<RunOutcome, RunnerError>;
}

fn default_timeout() -> u64 {
    DEFAULT_TIMEOUT_SECS
}

fn default_slots() -> usize {
    1
}

fn default_assertion_markers() -> Vec<String> {
    ["AssertionError", "AssertionFailedError", "ComparisonFailure", "MultipleFailuresError"]
        .iter()
        .map(|s| s.to_string())
        .collect()
}

fn default_compile_markers() -> Vec<String> {
    ["COMPILATION ERROR", "Compilation failed", "compilation failed", ": error:"]
        .iter()
        .map(|s| s.to_string())
        .collect()
}

fn default_exclude() -> Vec<String> {
    [".git", "target", "build", ".scengen"].iter().map(|s| s.to_string()).collect()
}

/// `[project]` section of the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectConfig {
    pub name: String,
    #[serde(default)]
    pub commit: String,
    /// Project root; relative paths resolve against the config file.
    pub root: PathBuf,
    #[serde(default)]
    pub source_dirs: Vec<PathBuf>,
    #[serde(default)]
    pub test_dirs: Vec<PathBuf>,
    /// Run in the scratch root before the test command; empty to skip.
    #[serde(default)]
    pub compile_cmd: String,
    /// Placeholders: `{root}`, `{test_file}`, `{test_class}`, `{test_method}`.
    pub run_test_cmd: String,
    #[serde(default)]
    pub mutation_report_glob: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default)]
    pub env_passthrough: Vec<String>,
    #[serde(default = "default_slots")]
    pub slots: usize,
    #[serde(default = "default_assertion_markers")]
    pub assertion_markers: Vec<String>,
    #[serde(default = "default_compile_markers")]
    pub compile_markers: Vec<String>,
    #[serde(default = "default_exclude")]
    pub scratch_exclude: Vec<String>,
    /// Directory for raw logs of every run; none kept when unset.
    #[serde(default)]
    pub log_dir: Option<PathBuf>,
}

impl ProjectConfig {
    pub fn new(name: impl Into<String>, root: impl Into<PathBuf>, run_test_cmd: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            commit: String::new(),
            root: root.into(),
            source_dirs: Vec::new(),
            test_dirs: Vec::new(),
            compile_cmd: String::new(),
            run_test_cmd: run_test_cmd.into(),
            mutation_report_glob: None,
            timeout_secs: DEFAULT_TIMEOUT_SECS,
            env_passthrough: Vec::new(),
            slots: 1,
            assertion_markers: default_assertion_markers(),
            compile_markers: default_compile_markers(),
            scratch_exclude: default_exclude(),
            log_dir: None,
        }
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        if self.root.is_relative() {
            self.root = base.join(&self.root);
        }
        if let Some(d) = &self.log_dir {
            if d.is_relative() {
                self.log_dir = Some(base.join(d));
            }
        }
    }

    /// Decides the outcome class from the exit channel and log shape.
    pub fn classify(&self, compile_failed: bool, exit_ok: bool, log: &str) -> RunStatus {
        if compile_failed {
            RunStatus::CompileError
        } else if exit_ok {
            RunStatus::Pass
        } else if self.compile_markers.iter().any(|m| log.contains(m.as_str())) {
            RunStatus::CompileError
        } else if self.assertion_markers.iter().any(|m| log.contains(m.as_str())) {
            RunStatus::AssertionFailure
        } else {
            RunStatus::ExecutionError
        }
    }
}

/// Counting semaphore bounding concurrent builds.
pub struct SlotPool {
    free: Mutex<usize>,
    cv: Condvar,
}

pub struct Slot<'a> {
    pool: &'a SlotPool,
}

impl SlotPool {
    pub fn new(slots: usize) -> Self {
        Self { free: Mutex::new(slots.max(1)), cv: Condvar::new() }
    }

    pub fn acquire(&self) -> Slot<'_> {
        let mut free = self.free.lock().expect("slot pool poisoned");
        while *free == 0 {
            free = self.cv.wait(free).expect("slot pool poisoned");
        }
        *free -= 1;
        Slot { pool: self }
    }
}

impl Drop for Slot<'_> {
    fn drop(&mut self) {
        *self.pool.free.lock().expect("slot pool poisoned") += 1;
        self.pool.cv.notify_one();
    }
}

/// Runs build commands through `sh -c` in a fresh scratch copy per call.
pub struct ProcessRunner {
    config: ProjectConfig,
    scope: ProjectScope,
    slots: SlotPool,
    pristine: OnceLock<Result<(), String>>,
    log_seq: Mutex<u64>,
}

struct CmdResult {
    success: bool,
    log: String,
}

impl ProcessRunner {
    pub fn new(config: ProjectConfig) -> Self {
        let scope = ProjectScope::from_dirs(&config.root);
        Self::with_scope(config, scope)
    }

    pub fn with_scope(config: ProjectConfig, scope: ProjectScope) -> Self {
        let slots = SlotPool::new(config.slots);
        Self { config, scope, slots, pristine: OnceLock::new(), log_seq: Mutex::new(0) }
    }

    pub fn config(&self) -> &ProjectConfig {
        &self.config
    }

    fn scratch(&self) -> Result<tempfile::TempDir, RunnerError> {
        let dir = tempfile::Builder::new().prefix("scengen-run-").tempdir()?;
        let root = &self.config.root;
        let walker = WalkDir::new(root).into_iter().filter_entry(|e| {
            e.depth() == 0 || !self.config.scratch_exclude.iter().any(|x| e.file_name().to_string_lossy() == x.as_str())
        });
        for entry in walker {
            let entry = entry.map_err(|e| RunnerError::Io(std::io::Error::other(e.to_string())))?;
            let rel = entry.path().strip_prefix(root).expect("walk stays under root");
            let dest = dir.path().join(rel);
            if entry.file_type().is_dir() {
                std::fs::create_dir_all(&dest)?;
            } else if entry.file_type().is_file() {
                std::fs::copy(entry.path(), &dest)?;
            }
        }
        Ok(dir)
    }

    fn shell(&self, cmd: &str, cwd: &Path) -> Result<CmdResult, RunnerError> {
        let mut command = Command::new("sh");
        command.arg("-c").arg(cmd).current_dir(cwd).env_clear();
        for var in ["PATH", "HOME", "LANG", "TMPDIR"].iter().copied().chain(self.config.env_passthrough.iter().map(String::as_str)) {
            if let Ok(v) = std::env::var(var) {
                command.env(var, v);
            }
        }
        let mut child = command
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| RunnerError::Unavailable(format!("cannot spawn sh: {e}")))?;
        let mut out = child.stdout.take().expect("piped");
        let mut err = child.stderr.take().expect("piped");
        let out_reader = std::thread::spawn(move || {
            let mut buf = Vec::new();
            let _ = out.read_to_end(&mut buf);
            buf
        });
        let err_reader = std::thread::spawn(move || {
            let mut buf = Vec::new();
            let _ = err.read_to_end(&mut buf);
            buf
        });
        let status = match child.wait_timeout(Duration::from_secs(self.config.timeout_secs))? {
            Some(s) => s,
            None => {
                let _ = child.kill();
                let _ = child.wait();
                return Err(RunnerError::TimeoutExceeded(self.config.timeout_secs));
            }
        };
        let mut log = String::from_utf8_lossy(&out_reader.join().unwrap_or_default()).into_owned();
        log.push_str(&String::from_utf8_lossy(&err_reader.join().unwrap_or_default()));
        if status.code() == Some(127) {
            let first = log.lines().next().unwrap_or("").to_string();
            return Err(RunnerError::Unavailable(format!("`{cmd}`: {first}")));
        }
        let scratch = cwd.to_string_lossy();
        let log = log.replace(&format!("{scratch}/"), "").replace(scratch.as_ref(), ".");
        Ok(CmdResult { success: status.success(), log })
    }

    fn verify_pristine(&self) -> Result<(), RunnerError> {
        if self.config.compile_cmd.trim().is_empty() {
            return Ok(());
        }
        let result = self.pristine.get_or_init(|| {
            let _slot = self.slots.acquire();
            let dir = self.scratch().map_err(|e| e.to_string())?;
            let cmd = self.expand(&self.config.compile_cmd, dir.path(), None);
            match self.shell(&cmd, dir.path()) {
                Ok(r) if r.success => Ok(()),
                Ok(r) => Err(r.log.lines().take(20).collect::<Vec<_>>().join("\n")),
                Err(e) => Err(e.to_string()),
            }
        });
        result.clone().map_err(RunnerError::PristineBuildFailed)
    }

    fn expand(&self, template: &str, root: &Path, candidate: Option<&Candidate>) -> String {
        let mut vars: BTreeMap<&str, String> = BTreeMap::new();
        vars.insert("root", root.to_string_lossy().into_owned());
        if let Some(c) = candidate {
            vars.insert("test_file", c.file.clone());
            vars.insert("test_class", c.class.clone());
            vars.insert("test_method", c.method.clone().unwrap_or_default());
        }
        let mut out = template.to_string();
        for (k, v) in vars {
            out = out.replace(&format!("{{{k}}}"), &v);
        }
        out
    }

    fn keep_log(&self, candidate: &Candidate, log: &str) -> Option<PathBuf> {
        let dir = self.config.log_dir.as_ref()?;
        let n = {
            let mut seq = self.log_seq.lock().expect("log counter poisoned");
            *seq += 1;
            *seq
        };
        let name = format!("{:04}-{}-{}.log", n, candidate.class, candidate.method.as_deref().unwrap_or("all"));
        let path = dir.join(name);
        std::fs::create_dir_all(dir).ok()?;
        std::fs::write(&path, log).ok()?;
        Some(path)
    }
}

impl TestRunner for ProcessRunner {
    fn run(&self, candidate: &Candidate) -> Result<RunOutcome, RunnerError> {
        self.verify_pristine()?;
        let _slot = self.slots.acquire();
        let started = Instant::now();
        let dir = self.scratch()?;
        let dest = dir.path().join(&candidate.file);
        if let Some(parent) = dest.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(&dest, &candidate.source)?;
        let mut log = String::new();
        let mut compile_failed = false;
        let mut exit_ok = false;
        if !self.config.compile_cmd.trim().is_empty() {
            let r = self.shell(&self.expand(&self.config.compile_cmd, dir.path(), Some(candidate)), dir.path())?;
            log.push_str(&r.log);
            compile_failed = !r.success;
        }
        if !compile_failed {
            let r = self.shell(&self.expand(&self.config.run_test_cmd, dir.path(), Some(candidate)), dir.path())?;
            log.push_str(&r.log);
            exit_ok = r.success;
        }
        let status = self.config.classify(compile_failed, exit_ok, &log);
        let messages = if status == RunStatus::Pass { String::new() } else { filter_messages(&log, &self.scope) };
        let raw_log = self.keep_log(candidate, &log);
        Ok(RunOutcome { status, messages, duration: started.elapsed(), raw_log })
    }
}

#[cfg(test)]
mod tests;
