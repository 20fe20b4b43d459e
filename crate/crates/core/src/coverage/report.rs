//! Mutation report ingestion: the canonical JSON schema and a mapping
//! profile for the XML report of the common JVM mutation tool.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{CoverageError, MutantKillSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MutantStatus {
    Killed,
    Survived,
    NoCoverage,
    TimedOut,
}

impl MutantStatus {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "KILLED" => Some(Self::Killed),
            "SURVIVED" => Some(Self::Survived),
            "NO_COVERAGE" => Some(Self::NoCoverage),
            "TIMED_OUT" => Some(Self::TimedOut),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mutant {
    pub id: String,
    pub class: String,
    pub line: u32,
    pub mutator: String,
    pub status: MutantStatus,
    pub killing_tests: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MutationReport {
    pub mutants: Vec<Mutant>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MappingProfile {
    Canonical,
    PitXml,
}

impl MappingProfile {
    pub fn detect(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("xml") => Self::PitXml,
            _ => Self::Canonical,
        }
    }
}

/// Per-test kill sets drawn from one report.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KillMatrix {
    pub universe: usize,
    pub kills: BTreeMap<String, BTreeSet<String>>,
}

impl KillMatrix {
    pub fn from_report(report: &MutationReport) -> Self {
        let mut kills: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for m in report.mutants.iter().filter(|m| m.status == MutantStatus::Killed) {
            for t in &m.killing_tests {
                kills.entry(normalize_test_id(t)).or_default().insert(m.id.clone());
            }
        }
        Self { universe: report.mutants.len(), kills }
    }

    /// Kill set of `test_id`; empty when the test killed nothing.
    pub fn kill_set(&self, test_id: &str) -> MutantKillSet {
        let id = normalize_test_id(test_id);
        let killed = self.kills.get(&id).cloned().unwrap_or_default();
        MutantKillSet { test_id: test_id.to_string(), killed, universe: self.universe }
    }

    pub fn kill_sets(&self) -> BTreeMap<String, MutantKillSet> {
        self.kills
            .iter()
            .map(|(t, k)| (t.clone(), MutantKillSet { test_id: t.clone(), killed: k.clone(), universe: self.universe }))
            .collect()
    }
}

/// `pkg.C.m(pkg.C)`, `pkg.C.m()`, `pkg.C.[engine:junit-jupiter]/[class:pkg.C]/[method:m()]`
/// and `pkg.C#m` all become `pkg.C.m`.
pub fn normalize_test_id(raw: &str) -> String {
    let raw = raw.trim();
    if raw.contains("[method:") || raw.contains("[test-template:") {
        let class = raw
            .split('/')
            .find_map(|seg| seg.strip_prefix("[class:").and_then(|s| s.strip_suffix(']')))
            .map(str::to_string)
            .unwrap_or_else(|| raw.split(".[").next().unwrap_or(raw).to_string());
        let method = raw
            .split('/')
            .find_map(|seg| {
                seg.strip_prefix("[method:").or_else(|| seg.strip_prefix("[test-template:")).and_then(|s| s.strip_suffix(']'))
            })
            .unwrap_or("");
        let method = method.split('(').next().unwrap_or(method);
        return format!("{class}.{method}");
    }
    let head = raw.split('(').next().unwrap_or(raw);
    head.replace('#', ".")
}

fn schema(position: impl Into<String>, reason: impl Into<String>) -> CoverageError {
    CoverageError::Schema { position: position.into(), reason: reason.into() }
}

/// Parses a canonical JSON report.
pub fn parse_canonical(text: &str) -> Result<MutationReport, CoverageError> {
    let root: Value = serde_json::from_str(text).map_err(|e| schema(format!("line {}", e.line()), e.to_string()))?;
    let mutants = root.get("mutants").ok_or_else(|| schema("$", "missing `mutants`"))?;
    let list = mutants.as_array().ok_or_else(|| schema("mutants", "expected an array"))?;
    let mut out = Vec::new();
    let mut ids = BTreeSet::new();
    for (i, m) in list.iter().enumerate() {
        let at = |field: &str| format!("mutants[{i}].{field}");
        let obj = m.as_object().ok_or_else(|| schema(format!("mutants[{i}]"), "expected an object"))?;
        let string = |field: &str| -> Result<String, CoverageError> {
            obj.get(field)
                .and_then(Value::as_str)
                .map(str::to_string)
                .ok_or_else(|| schema(at(field), "expected a string"))
        };
        let id = string("id")?;
        if !ids.insert(id.clone()) {
            return Err(schema(at("id"), format!("duplicate mutant id `{id}`")));
        }
        let class = string("class")?;
        let mutator = string("mutator")?;
        let line = obj
            .get("line")
            .and_then(Value::as_u64)
            .ok_or_else(|| schema(at("line"), "expected a non-negative integer"))? as u32;
        let status_text = string("status")?;
        let status = MutantStatus::parse(&status_text)
            .ok_or_else(|| schema(at("status"), format!("unknown status `{status_text}`")))?;
        let killing_tests = match obj.get("killing_tests") {
            None | Some(Value::Null) => None,
            Some(Value::Array(a)) => Some(
                a.iter()
                    .enumerate()
                    .map(|(j, t)| {
                        t.as_str().map(str::to_string).ok_or_else(|| schema(format!("mutants[{i}].killing_tests[{j}]"), "expected a string"))
                    })
                    .collect::<Result<Vec<_>, _>>()?,
            ),
            Some(_) => return Err(schema(at("killing_tests"), "expected an array")),
        };
        let killing_tests = match (status, killing_tests) {
            (MutantStatus::Killed, None) => return Err(schema(at("killing_tests"), "killed mutant without killing tests")),
            (MutantStatus::Killed, Some(t)) if t.is_empty() => {
                return Err(schema(at("killing_tests"), "killed mutant without killing tests"))
            }
            (_, t) => t.unwrap_or_default(),
        };
        out.push(Mutant { id, class, line, mutator, status, killing_tests });
    }
    Ok(MutationReport { mutants: out })
}

/// Maps a `<mutations>` XML report onto the canonical schema. Mutant ids
/// are `m1..mN` in document order.
pub fn parse_pit_xml(text: &str) -> Result<MutationReport, CoverageError> {
    let doc = roxmltree::Document::parse(text).map_err(|e| schema(format!("xml {}", e.pos()), e.to_string()))?;
    let root = doc.root_element();
    if root.tag_name().name() != "mutations" {
        return Err(schema("/", format!("expected <mutations>, found <{}>", root.tag_name().name())));
    }
    let mut out = Vec::new();
    for (i, node) in root.children().filter(|n| n.is_element() && n.has_tag_name("mutation")).enumerate() {
        let at = |field: &str| format!("mutation[{}].{field}", i + 1);
        let child = |name: &str| node.children().find(|c| c.has_tag_name(name)).and_then(|c| c.text()).map(str::trim);
        let status_text = node.attribute("status").ok_or_else(|| schema(at("@status"), "missing status"))?;
        let status = MutantStatus::parse(status_text)
            .ok_or_else(|| schema(at("@status"), format!("unknown status `{status_text}`")))?;
        let class = child("mutatedClass").ok_or_else(|| schema(at("mutatedClass"), "missing"))?.to_string();
        let line = child("lineNumber")
            .and_then(|l| l.parse::<u32>().ok())
            .ok_or_else(|| schema(at("lineNumber"), "missing or not an integer"))?;
        let mutator = child("mutator").unwrap_or("").to_string();
        let killers = child("killingTests").or_else(|| child("killingTest")).unwrap_or("");
        let killing_tests: Vec<String> =
            killers.split('|').map(str::trim).filter(|t| !t.is_empty()).map(normalize_test_id).collect();
        if status == MutantStatus::Killed && killing_tests.is_empty() {
            return Err(schema(at("killingTest"), "killed mutant without killing tests"));
        }
        out.push(Mutant { id: format!("m{}", i + 1), class, line, mutator, status, killing_tests });
    }
    Ok(MutationReport { mutants: out })
}

pub fn ingest_mutation_report(path: &Path, profile: MappingProfile) -> Result<MutationReport, CoverageError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CoverageError::Io { path: path.display().to_string(), reason: e.to_string() })?;
    if text.trim().is_empty() {
        return Ok(MutationReport::default());
    }
    match profile {
        MappingProfile::Canonical => parse_canonical(&text),
        MappingProfile::PitXml => parse_pit_xml(&text),
    }
}
