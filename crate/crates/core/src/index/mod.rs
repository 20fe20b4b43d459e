//! Offline project symbol index and the neighborhood-restricted query API.
//!
//! The index is built once per project from Java sources, persisted as a
//! single JSON document and shared read-only by every pipeline stage.

pub mod java;
pub mod lexer;

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use walkdir::WalkDir;

use crate::model::{FocalMethod, KnowledgeItem, Provenance, SymbolKind, TestCase, TestOrigin, Usage};

use java::{ParsedFile, ParsedType};

const USAGE_CAP: usize = 50;
const SKIPPED_DIRS: &[&str] = &["target", "build", "out", "node_modules", "bin"];

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("no Java source files under {0}")]
    EmptyProject(PathBuf),
    #[error("symbol not found: {0}")]
    NotFound(String),
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("bad index document {path}: {reason}")]
    Corrupt { path: PathBuf, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymbolEntry {
    /// `pkg.Outer.Inner`, `pkg.C.field`, `pkg.C.method(T1,T2)`.
    pub key: String,
    pub name: String,
    pub kind: SymbolKind,
    /// Enclosing class key; `None` for top-level types.
    pub owner: Option<String>,
    pub file: String,
    pub line: u32,
    pub start_line: u32,
    pub end_line: u32,
    pub definition: String,
    pub usages: Vec<Usage>,
}

impl SymbolEntry {
    pub fn to_item(&self, provenance: Provenance) -> KnowledgeItem {
        KnowledgeItem {
            symbol: self.key.clone(),
            kind: self.kind,
            definition: self.definition.clone(),
            usages: self.usages.clone(),
            provenance,
        }
    }

    fn arity(&self) -> usize {
        let inner = self.key.split_once('(').map(|(_, r)| r.trim_end_matches(')')).unwrap_or("");
        if inner.is_empty() { 0 } else { inner.split(',').count() }
    }

    /// Key without the parameter list.
    pub fn path(&self) -> &str {
        self.key.split('(').next().unwrap_or(&self.key)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HierarchyEntry {
    pub parents: Vec<String>,
    /// Method key → ancestor method keys it overrides.
    pub overrides: BTreeMap<String, Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexWarning {
    pub file: String,
    pub line: u32,
    pub reason: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QueryKind {
    Any,
    Only(SymbolKind),
    /// The named type together with its ancestors and all their descendants.
    Family,
}

/// Symbols a scoped retrieval may return.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Neighborhood {
    pub symbols: BTreeSet<String>,
    /// Identifiers that matched no indexed symbol.
    pub unresolved: usize,
}

impl Neighborhood {
    pub fn contains(&self, key: &str) -> bool {
        self.symbols.contains(key)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymbolIndex {
    symbols: BTreeMap<String, SymbolEntry>,
    hierarchy: BTreeMap<String, HierarchyEntry>,
    by_file: BTreeMap<String, Vec<String>>,
    skeletons: BTreeMap<String, String>,
    warnings: Vec<IndexWarning>,
}

struct FileUnit {
    rel: String,
    parsed: ParsedFile,
}

pub fn build_index(root: &Path) -> Result<SymbolIndex, IndexError> {
    let mut files: Vec<PathBuf> = WalkDir::new(root)
        .sort_by_file_name()
        .into_iter()
        .filter_entry(|e| {
            let name = e.file_name().to_string_lossy();
            e.depth() == 0 || !(name.starts_with('.') || (e.file_type().is_dir() && SKIPPED_DIRS.contains(&name.as_ref())))
        })
        .filter_map(Result::ok)
        .filter(|e| e.file_type().is_file() && e.path().extension().is_some_and(|x| x == "java"))
        .map(|e| e.into_path())
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(IndexError::EmptyProject(root.to_path_buf()));
    }

    let mut index = SymbolIndex::default();
    let mut units = Vec::new();
    for path in files {
        let rel = path.strip_prefix(root).unwrap_or(&path).to_string_lossy().replace('\\', "/");
        let src = std::fs::read_to_string(&path).map_err(|source| IndexError::Io { path: path.clone(), source })?;
        match java::parse_java(&src) {
            Ok(parsed) => units.push(FileUnit { rel, parsed }),
            Err(e) => {
                tracing::warn!(file = %rel, line = e.line, "skipping file: {}", e.reason);
                index.warnings.push(IndexWarning { file: rel, line: e.line, reason: e.reason });
            }
        }
    }

    let mut raw_parents: Vec<(String, usize, Vec<String>, Vec<String>)> = Vec::new();
    for (ui, unit) in units.iter().enumerate() {
        let mut keys = Vec::new();
        for t in &unit.parsed.types {
            let prefix = unit.parsed.package.clone();
            index.add_type(&unit.rel, &prefix, None, t, &mut keys, &mut raw_parents, ui);
        }
        index.skeletons.insert(unit.rel.clone(), java::file_skeleton(&unit.parsed));
        index.by_file.insert(unit.rel.clone(), keys);
    }

    // usages: every identifier occurrence of the simple name, declaration site excluded
    let mut occurrences: BTreeMap<&str, Vec<Usage>> = BTreeMap::new();
    for unit in &units {
        for (name, line) in &unit.parsed.identifiers {
            occurrences.entry(name.as_str()).or_default().push(Usage { file: unit.rel.clone(), line: *line });
        }
    }
    for entry in index.symbols.values_mut() {
        if let Some(list) = occurrences.get(entry.name.as_str()) {
            let mut usages: Vec<Usage> = list
                .iter()
                .filter(|u| !(u.file == entry.file && u.line == entry.line))
                .cloned()
                .collect();
            usages.sort();
            usages.dedup();
            usages.truncate(USAGE_CAP);
            entry.usages = usages;
        }
    }

    let simple_classes: BTreeMap<String, Vec<String>> = index
        .symbols
        .values()
        .filter(|e| e.kind == SymbolKind::Class)
        .fold(BTreeMap::new(), |mut m, e| {
            m.entry(e.name.clone()).or_insert_with(Vec::new).push(e.key.clone());
            m
        });
    for (class, ui, enclosing, parents) in raw_parents {
        let unit = &units[ui];
        let resolved: Vec<String> = parents
            .iter()
            .filter_map(|p| index.resolve_type(p, &unit.parsed, &enclosing, &simple_classes))
            .filter(|p| *p != class)
            .collect();
        index.hierarchy.entry(class).or_default().parents = resolved;
    }

    let classes: Vec<String> = index.hierarchy.keys().cloned().collect();
    for class in classes {
        let ancestors = index.ancestors(&class);
        let methods: Vec<&SymbolEntry> = index.members_of(&class).filter(|e| e.kind == SymbolKind::Method).collect();
        let mut overrides = BTreeMap::new();
        for m in methods {
            let mut over = Vec::new();
            for a in &ancestors {
                for am in index.members_of(a) {
                    if am.kind == SymbolKind::Method && am.name == m.name && am.arity() == m.arity() {
                        over.push(am.key.clone());
                    }
                }
            }
            if !over.is_empty() {
                overrides.insert(m.key.clone(), over);
            }
        }
        index.hierarchy.get_mut(&class).expect("class present").overrides = overrides;
    }
    Ok(index)
}

impl SymbolIndex {
    #[allow(clippy::too_many_arguments)]
    fn add_type(
        &mut self,
        file: &str,
        prefix: &str,
        owner: Option<&str>,
        t: &ParsedType,
        keys: &mut Vec<String>,
        raw_parents: &mut Vec<(String, usize, Vec<String>, Vec<String>)>,
        unit: usize,
    ) {
        let key = if prefix.is_empty() { t.simple.clone() } else { format!("{prefix}.{}", t.simple) };
        let enclosing: Vec<String> = owner.map(|o| vec![o.to_string()]).unwrap_or_default();
        let class = SymbolEntry {
            key: key.clone(),
            name: t.simple.clone(),
            kind: SymbolKind::Class,
            owner: owner.map(str::to_string),
            file: file.to_string(),
            line: t.name_line,
            start_line: t.start_line,
            end_line: t.end_line,
            definition: java::type_skeleton(t, 0).trim_end().to_string(),
            usages: Vec::new(),
        };
        self.insert(class, keys);
        let mut enclosing_chain = enclosing;
        enclosing_chain.insert(0, key.clone());
        raw_parents.push((key.clone(), unit, enclosing_chain, t.parents.clone()));
        for m in &t.members {
            let mkey = match m.kind {
                SymbolKind::Field => format!("{key}.{}", m.name),
                _ => format!("{key}.{}({})", m.name, m.params.join(",")),
            };
            let entry = SymbolEntry {
                key: mkey,
                name: m.name.clone(),
                kind: m.kind,
                owner: Some(key.clone()),
                file: file.to_string(),
                line: m.name_line,
                start_line: m.start_line,
                end_line: m.end_line,
                definition: m.definition.clone(),
                usages: Vec::new(),
            };
            self.insert(entry, keys);
        }
        for n in &t.nested {
            self.add_type(file, &key, Some(&key), n, keys, raw_parents, unit);
        }
    }

    fn insert(&mut self, entry: SymbolEntry, keys: &mut Vec<String>) {
        if self.symbols.contains_key(&entry.key) {
            self.warnings.push(IndexWarning {
                file: entry.file.clone(),
                line: entry.line,
                reason: format!("duplicate symbol {} ignored", entry.key),
            });
            return;
        }
        if entry.kind == SymbolKind::Class {
            self.hierarchy.entry(entry.key.clone()).or_default();
        }
        keys.push(entry.key.clone());
        self.symbols.insert(entry.key.clone(), entry);
    }

    fn resolve_type(
        &self,
        raw: &str,
        file: &ParsedFile,
        enclosing: &[String],
        simple: &BTreeMap<String, Vec<String>>,
    ) -> Option<String> {
        let is_class = |k: &str| self.symbols.get(k).is_some_and(|e| e.kind == SymbolKind::Class);
        if is_class(raw) {
            return Some(raw.to_string());
        }
        for outer in enclosing {
            let mut scope = outer.as_str();
            loop {
                let cand = format!("{scope}.{raw}");
                if is_class(&cand) {
                    return Some(cand);
                }
                match scope.rsplit_once('.') {
                    Some((up, _)) => scope = up,
                    None => break,
                }
            }
        }
        let (head, rest) = match raw.split_once('.') {
            Some((h, r)) => (h, Some(r)),
            None => (raw, None),
        };
        for imp in file.imports.iter().filter(|i| !i.wildcard) {
            if imp.path.rsplit('.').next() == Some(head) {
                let cand = match rest {
                    Some(r) => format!("{}.{r}", imp.path),
                    None => imp.path.clone(),
                };
                if is_class(&cand) {
                    return Some(cand);
                }
            }
        }
        if !file.package.is_empty() {
            let cand = format!("{}.{raw}", file.package);
            if is_class(&cand) {
                return Some(cand);
            }
        }
        for imp in file.imports.iter().filter(|i| i.wildcard) {
            let cand = format!("{}.{raw}", imp.path);
            if is_class(&cand) {
                return Some(cand);
            }
        }
        let last = raw.rsplit('.').next().unwrap_or(raw);
        match simple.get(last).map(Vec::as_slice) {
            Some([only]) => Some(only.clone()),
            _ => None,
        }
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn get(&self, key: &str) -> Option<&SymbolEntry> {
        self.symbols.get(key)
    }

    pub fn symbols(&self) -> impl Iterator<Item = &SymbolEntry> {
        self.symbols.values()
    }

    pub fn hierarchy(&self, class: &str) -> Option<&HierarchyEntry> {
        self.hierarchy.get(class)
    }

    pub fn warnings(&self) -> &[IndexWarning] {
        &self.warnings
    }

    pub fn files(&self) -> impl Iterator<Item = &str> {
        self.by_file.keys().map(String::as_str)
    }

    pub fn declared_in(&self, file: &str) -> &[String] {
        self.by_file.get(file).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn skeleton(&self, file: &str) -> Option<&str> {
        self.skeletons.get(file).map(String::as_str)
    }

    pub fn count(&self, kind: SymbolKind) -> usize {
        self.symbols.values().filter(|e| e.kind == kind).count()
    }

    /// Simple names of all indexed classes.
    pub fn class_names(&self) -> BTreeSet<String> {
        self.symbols.values().filter(|e| e.kind == SymbolKind::Class).map(|e| e.name.clone()).collect()
    }

    pub fn members_of<'a>(&'a self, class: &'a str) -> impl Iterator<Item = &'a SymbolEntry> + 'a {
        self.symbols.values().filter(move |e| e.kind != SymbolKind::Class && e.owner.as_deref() == Some(class))
    }

    /// Transitive supertypes in breadth-first order.
    pub fn ancestors(&self, class: &str) -> Vec<String> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        let mut queue: VecDeque<String> = self.hierarchy.get(class).map(|h| h.parents.iter().cloned().collect()).unwrap_or_default();
        while let Some(c) = queue.pop_front() {
            if c == class || !seen.insert(c.clone()) {
                continue;
            }
            if let Some(h) = self.hierarchy.get(&c) {
                queue.extend(h.parents.iter().cloned());
            }
            out.push(c);
        }
        out
    }

    /// Transitive subtypes, sorted.
    pub fn descendants(&self, class: &str) -> Vec<String> {
        let mut found = BTreeSet::new();
        let mut frontier = vec![class.to_string()];
        while let Some(c) = frontier.pop() {
            for (k, h) in &self.hierarchy {
                if h.parents.contains(&c) && k != class && found.insert(k.clone()) {
                    frontier.push(k.clone());
                }
            }
        }
        found.into_iter().collect()
    }

    /// Keys whose simple name, path or full key equal `name`, then keys whose
    /// path or full key ends with `.name`.
    fn resolve(&self, name: &str) -> Vec<&SymbolEntry> {
        let name: String = name.split_whitespace().collect();
        let name = name.trim_end_matches("()");
        let mut exact: Vec<&SymbolEntry> = self
            .symbols
            .values()
            .filter(|e| e.key == name || e.path() == name || e.name == name)
            .collect();
        let dotted = format!(".{name}");
        let mut suffix: Vec<&SymbolEntry> = self
            .symbols
            .values()
            .filter(|e| !exact.iter().any(|x| x.key == e.key))
            .filter(|e| e.key.ends_with(&dotted) || e.path().ends_with(&dotted))
            .collect();
        exact.sort_by(|a, b| a.key.cmp(&b.key));
        suffix.sort_by(|a, b| a.key.cmp(&b.key));
        exact.append(&mut suffix);
        exact
    }

    /// Symbol lookup. Scoped queries never return items outside `scope`.
    pub fn query(&self, name: &str, kind: QueryKind, scope: Option<&Neighborhood>) -> Vec<&SymbolEntry> {
        let hits = self.resolve(name);
        let mut out: Vec<&SymbolEntry> = match kind {
            QueryKind::Any => hits,
            QueryKind::Only(k) => hits.into_iter().filter(|e| e.kind == k).collect(),
            QueryKind::Family => {
                let mut family: Vec<String> = Vec::new();
                for e in hits.iter().filter(|e| e.kind == SymbolKind::Class) {
                    let mut roots = vec![e.key.clone()];
                    roots.extend(self.ancestors(&e.key));
                    for r in &roots {
                        if !family.contains(r) {
                            family.push(r.clone());
                        }
                        for d in self.descendants(r) {
                            if !family.contains(&d) {
                                family.push(d);
                            }
                        }
                    }
                }
                family.iter().filter_map(|k| self.symbols.get(k)).collect()
            }
        };
        if let Some(scope) = scope {
            out.retain(|e| scope.contains(&e.key));
        }
        out
    }

    pub fn query_required(&self, name: &str, kind: QueryKind, scope: Option<&Neighborhood>) -> Result<Vec<&SymbolEntry>, IndexError> {
        let out = self.query(name, kind, scope);
        if out.is_empty() {
            Err(IndexError::NotFound(name.to_string()))
        } else {
            Ok(out)
        }
    }

    /// Innermost symbol whose declaration spans `line` in a file whose path
    /// ends with `file`.
    pub fn at_position(&self, file: &str, line: u32) -> Option<&SymbolEntry> {
        let file = file.replace('\\', "/");
        self.symbols
            .values()
            .filter(|e| e.file == file || e.file.ends_with(&format!("/{file}")))
            .filter(|e| e.start_line <= line && line <= e.end_line)
            .min_by_key(|e| (e.end_line - e.start_line, e.kind == SymbolKind::Class, e.key.clone()))
    }

    /// Symbols an exam may retrieve for `fm` and `tc`: the focal class and
    /// its members, every symbol named by an identifier of either source,
    /// closed one hop over parents and overridden methods.
    pub fn neighborhood(&self, fm: &FocalMethod, tc: &TestCase) -> Neighborhood {
        let mut direct: BTreeSet<String> = BTreeSet::new();
        let owner = fm.owner_class();
        if self.symbols.contains_key(owner) {
            direct.insert(owner.to_string());
            direct.extend(self.members_of(owner).map(|e| e.key.clone()));
        }
        let mut by_name: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for e in self.symbols.values() {
            by_name.entry(e.name.as_str()).or_default().push(e.key.as_str());
        }
        let mut idents: BTreeSet<String> = BTreeSet::new();
        idents.extend(lexer::identifiers(&fm.source));
        idents.extend(lexer::identifiers(&tc.source));
        let mut unresolved = 0;
        for ident in &idents {
            match by_name.get(ident.as_str()) {
                Some(keys) => direct.extend(keys.iter().map(|k| k.to_string())),
                None => unresolved += 1,
            }
        }
        let mut symbols = direct.clone();
        for key in &direct {
            let Some(e) = self.symbols.get(key) else { continue };
            match e.kind {
                SymbolKind::Class => {
                    if let Some(h) = self.hierarchy.get(key) {
                        symbols.extend(h.parents.iter().cloned());
                    }
                }
                SymbolKind::Method => {
                    if let Some(over) = e.owner.as_ref().and_then(|o| self.hierarchy.get(o)).and_then(|h| h.overrides.get(key)) {
                        symbols.extend(over.iter().cloned());
                    }
                }
                _ => {}
            }
        }
        Neighborhood { symbols, unresolved }
    }

    /// Methods named `method` declared in a class whose simple or qualified
    /// name is `class`.
    pub fn find_methods(&self, class: &str, method: &str) -> Vec<&SymbolEntry> {
        self.symbols
            .values()
            .filter(|e| matches!(e.kind, SymbolKind::Method | SymbolKind::Constructor) && e.name == method)
            .filter(|e| {
                e.owner.as_deref().is_some_and(|o| o == class || o.ends_with(&format!(".{class}")))
            })
            .collect()
    }

    pub fn focal_method(&self, project: &str, commit: &str, key: &str) -> Option<FocalMethod> {
        let e = self.symbols.get(key)?;
        Some(FocalMethod {
            id: format!("{project}:{key}"),
            source: e.definition.clone(),
            file_skeleton: self.skeletons.get(&e.file).cloned().unwrap_or_default(),
            project: project.to_string(),
            commit: commit.to_string(),
        })
    }

    pub fn test_case(&self, key: &str, focal_id: &str) -> Option<TestCase> {
        let e = self.symbols.get(key)?;
        Some(TestCase::new(&e.key, &e.name, &e.definition, focal_id, TestOrigin::Developer).with_file(&e.file))
    }

    pub fn save(&self, path: &Path) -> Result<(), IndexError> {
        let io = |source| IndexError::Io { path: path.to_path_buf(), source };
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(io)?;
        }
        let mut text = serde_json::to_string_pretty(self).expect("index serializes");
        text.push('\n');
        std::fs::write(path, text).map_err(io)
    }

    pub fn load(path: &Path) -> Result<Self, IndexError> {
        let text = std::fs::read_to_string(path).map_err(|source| IndexError::Io { path: path.to_path_buf(), source })?;
        serde_json::from_str(&text).map_err(|e| IndexError::Corrupt { path: path.to_path_buf(), reason: e.to_string() })
    }
}

#[cfg(test)]
mod tests;
