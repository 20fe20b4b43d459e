use std::collections::BTreeSet;
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use walkdir::WalkDir;

use crate::index::SymbolIndex;
use crate::model::SymbolKind;

const SOURCE_EXTS: &[&str] = &["java", "kt", "scala", "groovy", "c", "h", "cc", "cpp", "hpp"];
const NOISE_PREFIXES: &[&str] = &["[INFO]", "[DEBUG]", "[WARNING]", "> Task", "Download", "BUILD "];

/// Files and classes that count as "inside the project".
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ProjectScope {
    pub files: BTreeSet<String>,
    pub basenames: BTreeSet<String>,
    pub classes: BTreeSet<String>,
}

impl ProjectScope {
    pub fn from_index(index: &SymbolIndex) -> Self {
        let mut scope = Self::default();
        for f in index.files() {
            scope.add_file(f);
        }
        for e in index.symbols().filter(|e| e.kind == SymbolKind::Class) {
            scope.classes.insert(e.key.clone());
            scope.classes.insert(e.name.clone());
        }
        scope
    }

    /// Every source file under `root`, skipping hidden and build output dirs.
    pub fn from_dirs(root: &Path) -> Self {
        let mut scope = Self::default();
        let walker = WalkDir::new(root).sort_by_file_name().into_iter().filter_entry(|e| {
            let n = e.file_name().to_string_lossy();
            e.depth() == 0 || !(n.starts_with('.') || matches!(n.as_ref(), "target" | "build" | "out" | "node_modules"))
        });
        for entry in walker.filter_map(Result::ok) {
            let p = entry.path();
            if entry.file_type().is_file() && p.extension().is_some_and(|x| SOURCE_EXTS.iter().any(|s| x == *s)) {
                let rel = p.strip_prefix(root).unwrap_or(p).to_string_lossy().replace('\\', "/");
                if let Some(stem) = p.file_stem() {
                    scope.classes.insert(stem.to_string_lossy().into_owned());
                }
                scope.add_file(&rel);
            }
        }
        scope
    }

    fn add_file(&mut self, rel: &str) {
        self.files.insert(rel.to_string());
        if let Some(base) = rel.rsplit('/').next() {
            self.basenames.insert(base.to_string());
        }
    }

    pub fn has_file(&self, path: &str) -> bool {
        let path = path.trim_start_matches("./");
        if self.files.contains(path) {
            return true;
        }
        let base = path.rsplit(['/', '\\']).next().unwrap_or(path);
        self.basenames.contains(base)
    }

    /// Fully qualified `pkg.Class.method` or `pkg.Class$Inner.method`.
    pub fn has_frame_method(&self, qualified_method: &str) -> bool {
        let class = qualified_method.rsplit_once('.').map(|(c, _)| c).unwrap_or(qualified_method);
        let outer = class.split('$').next().unwrap_or(class);
        let simple = outer.rsplit('.').next().unwrap_or(outer);
        self.classes.contains(outer) || self.classes.contains(simple)
    }
}

pub(crate) fn frame_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\s*at\s+(?P<method>[\w$.<>/]+)\((?P<loc>[^)]*)\)").expect("valid regex"))
}

pub(crate) fn diag_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"^(?:\[ERROR\]\s*)?(?P<path>[^\s:\[\]]+\.[A-Za-z]+):\[?(?P<line>\d+)").expect("valid regex")
    })
}

/// A parsed stack frame: method, file basename, line.
pub(crate) fn parse_frame(line: &str) -> Option<(String, Option<String>, Option<u32>)> {
    let caps = frame_re().captures(line)?;
    let method = caps["method"].to_string();
    let loc = &caps["loc"];
    let (file, line_no) = match loc.split_once(':') {
        Some((f, l)) => (Some(f.to_string()), l.trim().parse().ok()),
        None if loc.contains('.') => (Some(loc.to_string()), None),
        None => (None, None),
    };
    Some((method, file, line_no))
}

fn frame_in_project(line: &str, scope: &ProjectScope) -> bool {
    match parse_frame(line) {
        Some((method, Some(file), _)) => scope.has_file(&file) || (file == "Unknown Source" && scope.has_frame_method(&method)),
        Some((method, None, _)) => scope.has_frame_method(&method),
        None => false,
    }
}

/// Keeps headline lines, diagnostics on project files and in-project stack
/// frames, in their original order.
pub fn filter_messages(raw: &str, scope: &ProjectScope) -> String {
    let mut out: Vec<&str> = Vec::new();
    let mut block: Option<bool> = None;
    for line in raw.lines() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            block = None;
            continue;
        }
        if frame_re().is_match(line) {
            block = None;
            if frame_in_project(line, scope) {
                out.push(line);
            }
            continue;
        }
        if trimmed.starts_with("...") && trimmed.ends_with("more") {
            continue;
        }
        if let Some(caps) = diag_re().captures(trimmed) {
            let keep = scope.has_file(&caps["path"]);
            block = Some(keep);
            if keep {
                out.push(line);
            }
            continue;
        }
        let continuation = line.starts_with(' ') || line.starts_with('\t') || trimmed.starts_with("symbol") || trimmed.starts_with("location");
        if let (Some(keep), true) = (block, continuation) {
            if keep {
                out.push(line);
            }
            continue;
        }
        block = None;
        if NOISE_PREFIXES.iter().any(|p| trimmed.starts_with(p)) {
            continue;
        }
        out.push(line);
    }
    out.join("\n")
}
