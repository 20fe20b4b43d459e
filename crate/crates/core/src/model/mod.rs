//! Shared domain types exchanged between pipeline stages.
//!
//! Every artifact type here is immutable once validated and serializes to a
//! deterministic, key-ordered JSON document through [`artifact`].

pub mod artifact;
pub mod instance;
pub mod template;
pub mod test_case;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use artifact::{parse_artifact, serialize_artifact, Artifact};
pub use instance::{DepResolution, Oracle, OracleBasis, OracleKind, ScenarioInstance};
pub use template::{
    canonical_vp_name, is_canonical_vp_name, parse_template, render_template, Dependency,
    ScenarioTemplate, TemplateError, TemplateStep, VariationPoint, VpKind,
};
pub use test_case::{detect_assertions, AssertionSite, TestCase, TestOrigin};

/// A type invariant that did not hold.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invariant violation in {artifact}: {invariant}")]
pub struct InvariantViolation {
    pub artifact: &'static str,
    pub invariant: String,
}

impl InvariantViolation {
    pub fn new(artifact: &'static str, invariant: impl Into<String>) -> Self {
        Self { artifact, invariant: invariant.into() }
    }
}

/// Types that carry checkable invariants.
pub trait Validate {
    fn validate(&self) -> Result<(), InvariantViolation>;
}

/// The production method whose tests are being generalized.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FocalMethod {
    /// `<project>:<package.Class>.<method>(<param types>)`
    pub id: String,
    pub source: String,
    pub file_skeleton: String,
    pub project: String,
    pub commit: String,
}

impl FocalMethod {
    /// Simple method name, taken from the id.
    pub fn simple_name(&self) -> &str {
        let key = self.symbol_key();
        let head = key.split('(').next().unwrap_or(key);
        head.rsplit('.').next().unwrap_or(head)
    }

    /// Index key of the method (the id without the project prefix).
    pub fn symbol_key(&self) -> &str {
        self.id.split_once(':').map(|(_, k)| k).unwrap_or(&self.id)
    }

    /// Qualified name of the declaring class.
    pub fn owner_class(&self) -> &str {
        let key = self.symbol_key();
        let head = key.split('(').next().unwrap_or(key);
        head.rsplit_once('.').map(|(owner, _)| owner).unwrap_or("")
    }

    /// Method header up to the opening brace of the body.
    pub fn signature(&self) -> String {
        let head = self.source.split('{').next().unwrap_or(&self.source);
        collapse_ws(head)
    }
}

impl Validate for FocalMethod {
    fn validate(&self) -> Result<(), InvariantViolation> {
        if self.id.trim().is_empty() {
            return Err(InvariantViolation::new("focal_method", "id non-empty"));
        }
        if self.source.trim().is_empty() {
            return Err(InvariantViolation::new("focal_method", "source non-empty"));
        }
        let sig = self.signature();
        if !collapse_ws(&self.file_skeleton).contains(&sig) {
            return Err(InvariantViolation::new(
                "focal_method",
                "file_skeleton contains the method signature",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SymbolKind {
    Class,
    Constructor,
    Method,
    Field,
}

impl SymbolKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SymbolKind::Class => "class",
            SymbolKind::Constructor => "constructor",
            SymbolKind::Method => "method",
            SymbolKind::Field => "field",
        }
    }
}

/// Which stage retrieved a knowledge item.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Stage1Exam,
    Stage2Query,
    Stage3Error,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Usage {
    pub file: String,
    pub line: u32,
}

/// A piece of project knowledge handed to the model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeItem {
    pub symbol: String,
    pub kind: SymbolKind,
    pub definition: String,
    pub usages: Vec<Usage>,
    pub provenance: Provenance,
}

impl KnowledgeItem {
    /// Prompt rendering: header line, definition, then a short usage list.
    pub fn render(&self) -> String {
        let mut out = format!("[{}] {}\n{}", self.kind.as_str(), self.symbol, self.definition.trim_end());
        if !self.usages.is_empty() {
            let shown: Vec<String> = self
                .usages
                .iter()
                .take(5)
                .map(|u| format!("{}:{}", u.file, u.line))
                .collect();
            out.push_str(&format!("\nused at: {}", shown.join(", ")));
            if self.usages.len() > 5 {
                out.push_str(&format!(" (+{} more)", self.usages.len() - 5));
            }
        }
        out
    }
}

impl Validate for KnowledgeItem {
    fn validate(&self) -> Result<(), InvariantViolation> {
        if self.symbol.trim().is_empty() {
            return Err(InvariantViolation::new("knowledge_item", "symbol non-empty"));
        }
        if self.kind != SymbolKind::Field && self.definition.trim().is_empty() {
            return Err(InvariantViolation::new(
                "knowledge_item",
                "definition non-empty for class/constructor/method",
            ));
        }
        Ok(())
    }
}

/// Appends items whose symbol is not yet present; returns how many were added.
pub fn merge_knowledge(into: &mut Vec<KnowledgeItem>, items: impl IntoIterator<Item = KnowledgeItem>) -> usize {
    let mut added = 0;
    for item in items {
        if !into.iter().any(|k| k.symbol == item.symbol) {
            into.push(item);
            added += 1;
        }
    }
    added
}

/// The fixed sections of the template-generation prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptScaffold {
    pub instruction: String,
    pub definition: String,
    pub analysis_format: String,
    pub query_format: String,
    pub template_format: String,
}

impl Default for PromptScaffold {
    fn default() -> Self {
        Self {
            instruction: "Write a test scenario template for the Java focal method below, taking the initial test case as the reference example.".into(),
            definition: "A Test Scenario Template is a general, semi-structured test plan that abstracts the developer's intended testing pattern into concise natural-language steps. Each step has (1) an Action: an imperative instruction for a tester; (2) Variation Points: scenario-relevant factors, either concrete code elements or abstract choices, whose alternative settings produce distinct intended behaviors of the focal method; (3) Dependencies: optional links to variation points declared in earlier steps.".into(),
            analysis_format: "ANALYSIS:\n<your reasoning about the requirement, the testing pattern and which factors are true variation points>".into(),
            query_format: "QUERY: <symbol name>\nQUERY FAMILY: <type name>   (to list a type together with its related super/sub types)".into(),
            template_format: "TEMPLATE:\nSTEP 1: <action>\n  VP <name>: <description> [CANDIDATES: <setting> | <setting>]\n\nSTEP 2: <action>\n  DEP <vp name> <- STEP 1".into(),
        }
    }
}

/// Learnable prompt: fixed scaffold plus a versioned rule set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RulePrompt {
    pub scaffold: PromptScaffold,
    pub rules: Vec<String>,
    pub version: u32,
    pub lineage: Option<u32>,
}

impl RulePrompt {
    /// The base prompt with an empty rule set.
    pub fn base() -> Self {
        Self { scaffold: PromptScaffold::default(), rules: Vec::new(), version: 0, lineage: None }
    }

    /// Next version carrying `rules`, scaffold unchanged.
    pub fn derive(&self, rules: Vec<String>) -> Self {
        Self {
            scaffold: self.scaffold.clone(),
            rules,
            version: self.version + 1,
            lineage: Some(self.version),
        }
    }
}

impl Validate for RulePrompt {
    fn validate(&self) -> Result<(), InvariantViolation> {
        if let Some(parent) = self.lineage {
            if parent >= self.version {
                return Err(InvariantViolation::new("rule_prompt", "version strictly increases along lineage"));
            }
        }
        if self.rules.iter().any(|r| r.trim().is_empty()) {
            return Err(InvariantViolation::new("rule_prompt", "rules non-empty"));
        }
        Ok(())
    }
}

pub(crate) fn collapse_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}
