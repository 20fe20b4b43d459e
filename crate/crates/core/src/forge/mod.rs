//! Test rendering from scenario instances and the compile/run/repair loop.

use std::collections::BTreeSet;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::index::java::parse_java;
use crate::index::{QueryKind, SymbolIndex};
use crate::llm::structured::{Schema, SchemaId};
use crate::llm::{CompletionRequest, Gateway, LlmError};
use crate::model::{
    collapse_ws, detect_assertions, FocalMethod, InvariantViolation, KnowledgeItem, OracleKind, Provenance,
    ScenarioInstance, SymbolKind, TestCase, TestOrigin, Validate,
};
use crate::runner::filter::{diag_re, parse_frame};
use crate::runner::{RunOutcome, RunStatus, RunnerError, TestFile, TestRunner};

pub const TAG_GENERATE: &str = "stage3.generate";
pub const TAG_REPAIR: &str = "stage3.repair";
pub const DEFAULT_MAX_REPAIR: u32 = 3;
const MAX_FRAMES: usize = 3;

#[derive(Debug, Error)]
pub enum ForgeError {
    #[error("instance has no active oracle")]
    NoActiveOracle,
    #[error(transparent)]
    Runner(#[from] RunnerError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Invariant(#[from] InvariantViolation),
}

/// One test method and the imports it needs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestMethod {
    pub imports: Vec<String>,
    pub name: String,
    pub source: String,
}

fn method_name_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\bvoid\s+([A-Za-z_$][\w$]*)\s*\(").expect("valid regex"))
}

fn first_fence(text: &str) -> &str {
    let Some(open) = text.find("```") else {
        return text;
    };
    let after = &text[open + 3..];
    let body_start = after.find('\n').map(|i| i + 1).unwrap_or(after.len());
    let body = &after[body_start..];
    match body.find("```") {
        Some(close) => &body[..close],
        None => body,
    }
}

/// Fenced (or bare) code with import lines and exactly one method.
pub struct TestMethodSchema;

impl Schema for TestMethodSchema {
    type Output = TestMethod;
    fn id(&self) -> SchemaId {
        SchemaId::TestMethod
    }
    fn parse(&self, text: &str) -> Result<TestMethod, String> {
        let code = first_fence(text);
        let mut imports = Vec::new();
        let mut body = Vec::new();
        for line in code.lines() {
            let t = line.trim();
            if t.starts_with("import ") {
                imports.push(t.to_string());
            } else if !(body.is_empty() && (t.is_empty() || t.starts_with("package "))) {
                body.push(line);
            }
        }
        let source = dedent(&body.join("\n")).trim().to_string();
        if source.is_empty() {
            return Err("no test method in the response".into());
        }
        let wrapped = format!("class Wrapper {{\n{source}\n}}\n");
        let names: Vec<String> = match parse_java(&wrapped) {
            Ok(f) => f
                .types
                .iter()
                .flat_map(|t| t.members.iter().filter(|m| m.kind == SymbolKind::Method).map(|m| m.name.clone()))
                .collect(),
            Err(_) => method_name_re().captures_iter(&source).map(|c| c[1].to_string()).collect(),
        };
        match names.len() {
            0 => Err("no test method in the response".into()),
            1 => Ok(TestMethod { imports, name: names[0].clone(), source }),
            n => Err(format!("expected exactly one test method, found {n}")),
        }
    }
}

fn dedent(s: &str) -> String {
    let indent = s
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.len() - l.trim_start().len())
        .min()
        .unwrap_or(0);
    s.lines().map(|l| if l.len() >= indent { &l[indent..] } else { l.trim_start() }).collect::<Vec<_>>().join("\n")
}

fn camel_words(s: &str) -> String {
    s.split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(|w| {
            let mut cs = w.chars();
            let first = cs.next().expect("non-empty word");
            first.to_ascii_uppercase().to_string() + cs.as_str()
        })
        .collect()
}

/// Focal method name followed by the CamelCased settings in VP-name order.
pub fn derive_test_name(fm: &FocalMethod, instance: &ScenarioInstance) -> String {
    let mut name = fm.simple_name().to_string();
    for value in instance.settings.values() {
        name.push_str(&camel_words(value));
    }
    name
}

/// Renames the declared method from `old` to `new`.
pub fn rename_method(source: &str, old: &str, new: &str) -> String {
    let re = Regex::new(&format!(r"\bvoid\s+{}\s*\(", regex::escape(old))).expect("valid regex");
    re.replace(source, format!("void {new}(").as_str()).into_owned()
}

fn knowledge_block(k: &[KnowledgeItem]) -> String {
    if k.is_empty() {
        return "none provided".into();
    }
    k.iter().map(KnowledgeItem::render).collect::<Vec<_>>().join("\n\n")
}

pub fn generation_prompt(instance: &ScenarioInstance, fm: &FocalMethod, tc: &TestCase, k: &[KnowledgeItem], name: &str) -> String {
    let alternatives: Vec<&str> = instance
        .oracles
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != instance.active_oracle)
        .map(|(_, o)| o.statement.as_str())
        .collect();
    let mut p = format!(
        "Write one JUnit test method for the focal method that realizes the test scenario below. Follow the style of the developer's test.\n\n# Focal Method\n```java\n{}\n```\n\n# Developer Test\n```java\n{}\n```\n\n# Project Knowledge\n{}\n\n# Test Scenario\n{}\n# Oracle\n{}\n",
        fm.source.trim_end(),
        tc.source.trim_end(),
        knowledge_block(k),
        instance.narrative,
        instance.active().statement,
    );
    if !alternatives.is_empty() {
        p.push_str(&format!("(Not to be asserted: {})\n", alternatives.join("; ")));
    }
    p.push_str(&format!(
        "\nReply with a single ```java block holding the needed import lines and exactly one test method named `{name}`.\n"
    ));
    p
}

/// Renders a test for `instance`; the method is renamed to the derived name.
pub fn generate_test(
    instance: &ScenarioInstance,
    fm: &FocalMethod,
    tc: &TestCase,
    k: &[KnowledgeItem],
    llm: &Gateway,
    name: &str,
) -> Result<(TestMethod, TestCase), ForgeError> {
    instance.validate()?;
    if instance.active_oracle >= instance.oracles.len() {
        return Err(ForgeError::NoActiveOracle);
    }
    let request = CompletionRequest::generative(TAG_GENERATE, generation_prompt(instance, fm, tc, k, name));
    let mut method = llm.complete_structured(&request, &TestMethodSchema)?;
    if method.name != name {
        method.source = rename_method(&method.source, &method.name, name);
        method.name = name.to_string();
    }
    let case = to_test_case(&method, fm, tc);
    Ok((method, case))
}

fn to_test_case(method: &TestMethod, fm: &FocalMethod, tc: &TestCase) -> TestCase {
    let class = tc.id.rsplit_once('.').map(|(c, _)| c).unwrap_or("");
    let id = if class.is_empty() { method.name.clone() } else { format!("{class}.{}", method.name) };
    let mut case = TestCase::new(id, &method.name, &method.source, &fm.id, TestOrigin::Generated);
    case.file = tc.file.clone();
    case
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ErrorElement {
    pub name: String,
    pub file: Option<String>,
    pub line: Option<u32>,
}

fn symbol_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"symbol:?\s*(?:method|class|variable|constructor|interface|enum|field)?\s*([A-Za-z_$][\w$]*)")
            .expect("valid regex")
    })
}

fn at_position_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\bat\s+([\w$/.-]+\.[A-Za-z]+):(\d+)").expect("valid regex"))
}

fn quoted_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"[‘'`]([A-Za-z_$][\w$]*)[’'`]").expect("valid regex"))
}

/// Program elements named by compiler diagnostics and the topmost stack
/// frames, deduplicated in order of appearance.
pub fn extract_error_elements(messages: &str) -> Vec<ErrorElement> {
    let mut out: Vec<ErrorElement> = Vec::new();
    let mut push = |e: ErrorElement| {
        if !out.contains(&e) {
            out.push(e);
        }
    };
    let mut position: Option<(String, u32)> = None;
    let mut frames = 0;
    for line in messages.lines() {
        if let Some((method, file, line_no)) = parse_frame(line) {
            if frames < MAX_FRAMES {
                let simple = method.rsplit('.').next().unwrap_or(&method).to_string();
                push(ErrorElement { name: simple, file, line: line_no });
                frames += 1;
            }
            continue;
        }
        if let Some(c) = diag_re().captures(line) {
            let path = c["path"].to_string();
            let file = path.rsplit('/').next().unwrap_or(&path).to_string();
            let n: u32 = c["line"].parse().unwrap_or(0);
            position = Some((file.clone(), n));
            let rest = &line[c.get(0).map(|m| m.end()).unwrap_or(0)..];
            if rest.contains("error") && !rest.contains("cannot find symbol") {
                if let Some(q) = quoted_re().captures(rest) {
                    push(ErrorElement { name: q[1].to_string(), file: Some(file), line: Some(n) });
                }
            }
        }
        if let Some(c) = symbol_re().captures(line) {
            let pos = at_position_re()
                .captures(line)
                .map(|p| (p[1].rsplit('/').next().unwrap_or(&p[1]).to_string(), p[2].parse().unwrap_or(0)))
                .or_else(|| position.clone());
            let (file, line_no) = match pos {
                Some((f, l)) => (Some(f), Some(l)),
                None => (None, None),
            };
            push(ErrorElement { name: c[1].to_string(), file, line: line_no });
        }
    }
    out
}

/// Position lookup first; a bare name falls back to a name query.
pub fn lookup_elements(index: &SymbolIndex, elements: &[ErrorElement]) -> Vec<KnowledgeItem> {
    let mut out: Vec<KnowledgeItem> = Vec::new();
    for e in elements {
        let by_name = || index.query(&e.name, QueryKind::Any, None).into_iter().next();
        let hit = match (&e.file, e.line) {
            (Some(f), Some(l)) => index
                .at_position(f, l)
                .filter(|s| s.name == e.name || s.kind == SymbolKind::Method || s.kind == SymbolKind::Constructor)
                .or_else(by_name),
            _ => by_name(),
        };
        if let Some(entry) = hit {
            if !out.iter().any(|k| k.symbol == entry.key) {
                out.push(entry.to_item(Provenance::Stage3Error));
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attempt {
    pub source: String,
    pub outcome: RunOutcome,
    pub elements: Vec<ErrorElement>,
    pub knowledge: Vec<KnowledgeItem>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinalStatus {
    Passing,
    FailingAfterMax,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Passed,
    MaxIterations,
    IdenticalResubmission,
    OracleChanged,
    /// Assertion failure against an alternative oracle; needs the user.
    Escalated,
    FlakyPass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepairRecord {
    pub test_name: String,
    pub attempts: Vec<Attempt>,
    pub final_status: FinalStatus,
    pub iterations: u32,
    pub max_iterations: u32,
    pub stop: StopReason,
    pub oracle_policy: String,
    pub imports: Vec<String>,
}

impl RepairRecord {
    pub fn final_source(&self) -> &str {
        &self.attempts.last().expect("at least one attempt").source
    }
}

impl Validate for RepairRecord {
    fn validate(&self) -> Result<(), InvariantViolation> {
        let v = |s: &str| Err(InvariantViolation::new("repair_record", s));
        if self.attempts.is_empty() || self.attempts.len() as u32 != self.iterations {
            return v("one attempt per iteration");
        }
        if self.iterations > self.max_iterations {
            return v("iterations within max");
        }
        let last_passed = self.attempts.last().is_some_and(|a| a.outcome.passed());
        if last_passed != (self.final_status == FinalStatus::Passing) {
            return v("final status agrees with the last attempt");
        }
        for a in &self.attempts {
            let names: BTreeSet<&str> = a.elements.iter().map(|e| e.name.as_str()).collect();
            if a.knowledge.is_empty() {
                continue;
            }
            if names.is_empty() {
                return v("retrieved knowledge traces to an extracted element");
            }
        }
        Ok(())
    }
}

fn assertion_set(source: &str) -> BTreeSet<String> {
    detect_assertions(source).into_iter().map(|a| collapse_ws(&a.statement)).collect()
}

pub fn oracle_policy(instance: &ScenarioInstance) -> String {
    match instance.active().kind {
        OracleKind::Primary => "assertion failures are repaired without changing the oracle".into(),
        OracleKind::Alternative => "assertion failures against an alternative oracle are escalated to the user".into(),
    }
}

fn repair_prompt(fm: &FocalMethod, method: &TestMethod, outcome: &RunOutcome, k: &[KnowledgeItem], keep_oracle: bool) -> String {
    let kind = match outcome.status {
        RunStatus::CompileError => "does not compile",
        RunStatus::ExecutionError => "throws an exception before reaching its assertions",
        RunStatus::AssertionFailure => "fails an assertion",
        RunStatus::Pass => "passes",
    };
    let mut p = format!(
        "The generated test below {kind}. Fix it.\n\n# Focal Method\n```java\n{}\n```\n\n# Test\n```java\n{}\n{}\n```\n\n# Error Messages\n{}\n\n# Relevant Project Knowledge\n{}\n",
        fm.source.trim_end(),
        method.imports.join("\n"),
        method.source,
        outcome.messages.trim_end(),
        knowledge_block(k),
    );
    if keep_oracle {
        p.push_str("\nDo not change the assertions; fix how the scenario is set up and exercised.\n");
    }
    p.push_str(&format!(
        "\nReply with a single ```java block holding the import lines and exactly one test method named `{}`.\n",
        method.name
    ));
    p
}

pub struct RepairContext<'a> {
    pub fm: &'a FocalMethod,
    pub instance: &'a ScenarioInstance,
    pub host: &'a TestFile,
    pub runner: &'a dyn TestRunner,
    pub index: &'a SymbolIndex,
    pub llm: &'a Gateway,
    pub max_iter: u32,
}

fn run_method(cx: &RepairContext, m: &TestMethod) -> Result<RunOutcome, RunnerError> {
    let candidate = cx.host.adding(&m.imports, &m.source, &m.name);
    match cx.runner.run(&candidate) {
        Err(RunnerError::TimeoutExceeded(s)) => {
            Ok(RunOutcome::new(RunStatus::ExecutionError, format!("test timed out after {s} s")))
        }
        other => other,
    }
}

/// Run, classify, retrieve and refine until the test passes or the
/// iteration budget is spent.
pub fn repair(cx: &RepairContext, initial: TestMethod) -> Result<RepairRecord, ForgeError> {
    let max = cx.max_iter.max(1);
    let policy = oracle_policy(cx.instance);
    let keep_oracle = cx.instance.active().kind == OracleKind::Primary;
    let mut current = initial;
    let mut attempts: Vec<Attempt> = Vec::new();
    let mut stop = StopReason::MaxIterations;
    for iteration in 1..=max {
        let mut outcome = run_method(cx, &current)?;
        if outcome.passed() {
            let again = run_method(cx, &current)?;
            if again.passed() {
                attempts.push(Attempt { source: current.source.clone(), outcome, elements: vec![], knowledge: vec![] });
                stop = StopReason::Passed;
                break;
            }
            outcome = again;
            stop = StopReason::FlakyPass;
        }
        let elements = extract_error_elements(&outcome.messages);
        let knowledge = if iteration < max && stop != StopReason::FlakyPass { lookup_elements(cx.index, &elements) } else { vec![] };
        let status = outcome.status;
        attempts.push(Attempt { source: current.source.clone(), outcome: outcome.clone(), elements, knowledge: knowledge.clone() });
        if stop == StopReason::FlakyPass {
            break;
        }
        if status == RunStatus::AssertionFailure && !keep_oracle {
            stop = StopReason::Escalated;
            break;
        }
        if iteration == max {
            break;
        }
        let request = CompletionRequest::generative(TAG_REPAIR, repair_prompt(cx.fm, &current, &outcome, &knowledge, keep_oracle));
        let mut next = cx.llm.complete_structured(&request, &TestMethodSchema)?;
        if next.name != current.name {
            next.source = rename_method(&next.source, &next.name, &current.name);
            next.name = current.name.clone();
        }
        if collapse_ws(&next.source) == collapse_ws(&current.source) && next.imports == current.imports {
            stop = StopReason::IdenticalResubmission;
            break;
        }
        if status == RunStatus::AssertionFailure && assertion_set(&next.source) != assertion_set(&current.source) {
            stop = StopReason::OracleChanged;
            break;
        }
        current = next;
    }
    let final_status = if stop == StopReason::Passed { FinalStatus::Passing } else { FinalStatus::FailingAfterMax };
    let record = RepairRecord {
        test_name: current.name.clone(),
        iterations: attempts.len() as u32,
        attempts,
        final_status,
        max_iterations: max,
        stop,
        oracle_policy: policy,
        imports: current.imports.clone(),
    };
    record.validate()?;
    Ok(record)
}

#[cfg(test)]
mod tests;
