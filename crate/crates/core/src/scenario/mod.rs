//! Template generation and crystallization into scenario instances.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::index::{QueryKind, SymbolIndex};
use crate::llm::structured::{KnowledgeQuery, SchemaId, SettingsBundle, SettingsSchema, TemplateReply, TemplateReplySchema};
use crate::llm::{CompletionRequest, Gateway, LlmError};
use crate::model::artifact::to_canonical_json;
use crate::model::{
    merge_knowledge, parse_template, render_template, DepResolution, FocalMethod, InvariantViolation, KnowledgeItem,
    Oracle, Provenance, RulePrompt, ScenarioInstance, ScenarioTemplate, TemplateError, TestCase, Validate,
};

pub const TAG_TEMPLATE: &str = "stage2.template";
pub const TAG_SETTINGS: &str = "stage2.settings";
pub const DEFAULT_MAX_QUERIES: u32 = 3;
pub const DEFAULT_BUNDLE_CEILING: usize = 8;
pub const QUERY_RESULT_CAP: usize = 8;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("model kept querying after {0} query rounds")]
    QueryBudgetExceeded(u32),
    #[error("no settings bundle passed validation")]
    NoValidBundles,
    #[error("oracle choice {choice} out of range (instance has {available})")]
    ChoiceOutOfRange { choice: usize, available: usize },
    #[error(transparent)]
    Invariant(#[from] InvariantViolation),
    #[error(transparent)]
    Llm(#[from] LlmError),
}

/// Rough token estimate used for the knowledge budget.
pub fn estimate_tokens(text: &str) -> usize {
    text.chars().count().div_ceil(4)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Truncation {
    pub kept: usize,
    pub dropped: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateSettings {
    pub max_queries: u32,
    /// Token budget for the knowledge list; `None` is unbounded.
    pub knowledge_budget: Option<usize>,
}

impl Default for TemplateSettings {
    fn default() -> Self {
        Self { max_queries: DEFAULT_MAX_QUERIES, knowledge_budget: None }
    }
}

fn render_knowledge(k: &[KnowledgeItem], budget: Option<usize>) -> (String, Option<Truncation>) {
    if k.is_empty() {
        return ("none provided".into(), None);
    }
    let rendered: Vec<String> = k.iter().map(KnowledgeItem::render).collect();
    let mut kept = rendered.len();
    if let Some(budget) = budget {
        let mut used = 0;
        kept = 0;
        for r in &rendered {
            let cost = estimate_tokens(r);
            if used + cost > budget {
                break;
            }
            used += cost;
            kept += 1;
        }
    }
    let mut out = rendered[..kept].join("\n\n");
    if kept == rendered.len() {
        return (out, None);
    }
    let dropped: Vec<String> = k[kept..].iter().map(|i| i.symbol.clone()).collect();
    if !out.is_empty() {
        out.push_str("\n\n");
    }
    let _ = write!(out, "({} lower-ranked knowledge items omitted to fit the context budget)", dropped.len());
    (out, Some(Truncation { kept, dropped }))
}

/// The template-generation prompt. Knowledge is ranked by its order in `k`.
pub fn build_template_prompt(
    fm: &FocalMethod,
    tc: &TestCase,
    k: &[KnowledgeItem],
    rules: &RulePrompt,
    knowledge_budget: Option<usize>,
) -> Result<(CompletionRequest, Option<Truncation>), InvariantViolation> {
    rules.validate()?;
    let sc = &rules.scaffold;
    let (knowledge, truncation) = render_knowledge(k, knowledge_budget);
    let rule_list = if rules.rules.is_empty() {
        "none provided".to_string()
    } else {
        rules.rules.iter().enumerate().map(|(i, r)| format!("{}. {}", i + 1, r)).collect::<Vec<_>>().join("\n")
    };
    let prompt = format!(
        "# Instruction\n{}\n{}\n\n# Focal Method\n```java\n{}\n```\n\n# Focal Method Context\n```java\n{}\n```\n\n# Initial Test Case\n```java\n{}\n```\n\n# Project Knowledge\n{}\n\n# Rules for Variation Point Identification\n{}\n\n# Requirements\n1. Start your response with your analysis:\n{}\n2. If you need more project knowledge (constructors, methods, fields) to identify the variation points accurately, output only your queries in this format:\n{}\n3. Otherwise output the test scenario template in this format:\n{}\n",
        sc.instruction,
        sc.definition,
        fm.source.trim_end(),
        fm.file_skeleton.trim_end(),
        tc.source.trim_end(),
        knowledge,
        rule_list,
        sc.analysis_format,
        sc.query_format,
        sc.template_format,
    );
    Ok((CompletionRequest::generative(TAG_TEMPLATE, prompt), truncation))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryRound {
    pub queries: Vec<KnowledgeQuery>,
    pub added: Vec<String>,
    pub unresolved: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateGeneration {
    pub template: ScenarioTemplate,
    /// Input knowledge followed by what the queries added.
    pub knowledge: Vec<KnowledgeItem>,
    pub rounds: Vec<QueryRound>,
    pub truncations: Vec<Truncation>,
}

/// Resolves queries against the whole index.
pub fn resolve_unscoped(index: &SymbolIndex, queries: &[KnowledgeQuery], k: &mut Vec<KnowledgeItem>) -> QueryRound {
    let mut added = Vec::new();
    let mut unresolved = Vec::new();
    for q in queries {
        let kind = match (q.family, q.kind) {
            (true, _) => QueryKind::Family,
            (false, Some(kind)) => QueryKind::Only(kind),
            (false, None) => QueryKind::Any,
        };
        let hits = index.query(&q.name, kind, None);
        if hits.is_empty() {
            unresolved.push(q.name.clone());
        }
        for e in hits.into_iter().take(QUERY_RESULT_CAP) {
            if merge_knowledge(k, [e.to_item(Provenance::Stage2Query)]) == 1 {
                added.push(e.key.clone());
            }
        }
    }
    QueryRound { queries: queries.to_vec(), added, unresolved }
}

pub fn generate_template(
    fm: &FocalMethod,
    tc: &TestCase,
    k: &[KnowledgeItem],
    rules: &RulePrompt,
    llm: &Gateway,
    index: &SymbolIndex,
    settings: &TemplateSettings,
) -> Result<TemplateGeneration, ScenarioError> {
    let mut knowledge = k.to_vec();
    let mut rounds = Vec::new();
    let mut truncations = Vec::new();
    loop {
        let (request, truncation) = build_template_prompt(fm, tc, &knowledge, rules, settings.knowledge_budget)?;
        if let Some(t) = truncation {
            tracing::info!(dropped = t.dropped.len(), "knowledge list truncated");
            truncations.push(t);
        }
        match llm.complete_structured(&request, &TemplateReplySchema)? {
            TemplateReply::Template(text) => {
                let mut template = match parse_template(&text) {
                    Ok(t) => t,
                    Err(TemplateError::Invariant(v)) => return Err(v.into()),
                    Err(e @ TemplateError::Parse { .. }) => {
                        return Err(LlmError::MalformedOutput {
                            schema: SchemaId::TemplateReply,
                            reason: e.to_string(),
                            attempts: 1,
                        }
                        .into())
                    }
                };
                template.focal_id = fm.id.clone();
                template.provenance = format!("rules-v{}", rules.version);
                return Ok(TemplateGeneration { template, knowledge, rounds, truncations });
            }
            TemplateReply::Queries(queries) => {
                if rounds.len() as u32 >= settings.max_queries {
                    return Err(ScenarioError::QueryBudgetExceeded(settings.max_queries));
                }
                let round = resolve_unscoped(index, &queries, &mut knowledge);
                rounds.push(round);
            }
        }
    }
}

/// Short content digest of a template.
pub fn template_digest(t: &ScenarioTemplate) -> String {
    let json = to_canonical_json(t).expect("template serializes");
    let digest = Sha256::digest(json.as_bytes());
    hex::encode(&digest[..8])
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
pub enum BundleRejection {
    #[error("setting for undeclared variation point `{0}`")]
    UndeclaredVp(String),
    #[error("variation point `{0}` set more than once")]
    DuplicateSetting(String),
    #[error("variation point `{0}` has no setting")]
    MissingSetting(String),
    #[error("empty setting for `{0}`")]
    EmptySetting(String),
    #[error("dependency resolution `{vp}` @ step {step} matches no template dependency")]
    InvalidDependency { vp: String, step: u32 },
    #[error("expected exactly one primary oracle, found {0}")]
    PrimaryOracleCount(usize),
    #[error("empty oracle statement")]
    EmptyOracle,
}

/// Checks a bundle against the template it fills.
pub fn validate_bundle(template: &ScenarioTemplate, bundle: &SettingsBundle) -> Result<(), BundleRejection> {
    let declared: BTreeSet<&str> = template.vp_names().collect();
    let mut seen = BTreeSet::new();
    for (vp, value) in &bundle.settings {
        if !declared.contains(vp.as_str()) {
            return Err(BundleRejection::UndeclaredVp(vp.clone()));
        }
        if !seen.insert(vp.as_str()) {
            return Err(BundleRejection::DuplicateSetting(vp.clone()));
        }
        if value.trim().is_empty() {
            return Err(BundleRejection::EmptySetting(vp.clone()));
        }
    }
    if let Some(missing) = declared.iter().find(|d| !seen.contains(**d)) {
        return Err(BundleRejection::MissingSetting(missing.to_string()));
    }
    for (vp, step, _) in &bundle.dep_resolutions {
        let valid = template.step(*step).is_some_and(|s| s.deps.iter().any(|d| d.vp == *vp));
        if !valid {
            return Err(BundleRejection::InvalidDependency { vp: vp.clone(), step: *step });
        }
    }
    if bundle.primary_oracles.len() != 1 {
        return Err(BundleRejection::PrimaryOracleCount(bundle.primary_oracles.len()));
    }
    if bundle.primary_oracles.iter().chain(&bundle.alternative_oracles).any(|o| o.trim().is_empty()) {
        return Err(BundleRejection::EmptyOracle);
    }
    Ok(())
}

/// `n. <action> [with vp=setting, ...] [using vp=value, ...]` per step.
pub fn render_narrative(template: &ScenarioTemplate, settings: &BTreeMap<String, String>, deps: &[DepResolution]) -> String {
    let mut out = String::new();
    for step in &template.steps {
        let _ = write!(out, "{}. {}", step.step_id, step.action);
        let with: Vec<String> =
            step.vps.iter().filter_map(|v| settings.get(&v.name).map(|s| format!("{}={}", v.name, s))).collect();
        if !with.is_empty() {
            let _ = write!(out, " [with {}]", with.join(", "));
        }
        let using: Vec<String> = deps
            .iter()
            .filter(|d| d.step == step.step_id)
            .map(|d| format!("{}={}", d.vp, d.value))
            .collect();
        if !using.is_empty() {
            let _ = write!(out, " [using {}]", using.join(", "));
        }
        out.push('\n');
    }
    out
}

/// Fills the template from a validated bundle. Dependencies the bundle
/// leaves open take the setting of the VP they point to.
pub fn instantiate(template: &ScenarioTemplate, bundle: &SettingsBundle) -> Result<ScenarioInstance, ScenarioError> {
    validate_bundle(template, bundle).map_err(|r| InvariantViolation::new("settings_bundle", r.to_string()))?;
    let settings: BTreeMap<String, String> = bundle.settings.iter().cloned().collect();
    let mut setting_deps = Vec::new();
    for step in &template.steps {
        for dep in &step.deps {
            let explicit = bundle.dep_resolutions.iter().find(|(vp, s, _)| *vp == dep.vp && *s == step.step_id);
            let value = match explicit {
                Some((_, _, v)) => v.clone(),
                None => settings[&dep.vp].clone(),
            };
            setting_deps.push(DepResolution { vp: dep.vp.clone(), step: step.step_id, value });
        }
    }
    let mut oracles = vec![Oracle::primary(bundle.primary_oracles[0].trim())];
    oracles.extend(bundle.alternative_oracles.iter().map(|o| Oracle::alternative(o.trim())));
    let narrative = render_narrative(template, &settings, &setting_deps);
    let instance = ScenarioInstance {
        template_ref: template_digest(template),
        settings,
        setting_deps,
        oracles,
        active_oracle: 0,
        narrative,
    };
    instance.validate()?;
    instance.validate_against(template)?;
    Ok(instance)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectedBundle {
    pub label: String,
    pub reason: BundleRejection,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Crystallization {
    pub bundles: Vec<SettingsBundle>,
    pub instances: Vec<ScenarioInstance>,
    pub rejected: Vec<RejectedBundle>,
    /// Bundles dropped beyond the ceiling.
    pub over_ceiling: usize,
}

pub fn settings_prompt(template: &ScenarioTemplate, fm: &FocalMethod, tc: &TestCase, k: &[KnowledgeItem], ceiling: usize) -> String {
    let (knowledge, _) = render_knowledge(k, None);
    let vps: Vec<&str> = template.vp_names().collect();
    format!(
        "Crystallize the test scenario template below into concrete test scenarios for the focal method.\n\n# Focal Method\n```java\n{}\n```\n\n# Initial Test Case\n```java\n{}\n```\n\n# Project Knowledge\n{}\n\n# Test Scenario Template\n{}\n# Output\nList up to {ceiling} distinct scenarios. For each, choose one setting for every variation point ({}) and state the oracle deduced from the implementation, plus any alternative oracles inferred from common requirements. Use exactly this format:\nSCENARIO: <short label>\nSET <vp> = <setting>\nDEP <vp> @ STEP <n> = <value>   (optional, for dependent steps)\nPRIMARY: <oracle>\nALTERNATIVE: <oracle>   (zero or more)\n",
        fm.source.trim_end(),
        tc.source.trim_end(),
        knowledge,
        render_template(template),
        vps.join(", "),
    )
}

pub fn crystallize(
    template: &ScenarioTemplate,
    fm: &FocalMethod,
    tc: &TestCase,
    k: &[KnowledgeItem],
    llm: &Gateway,
    ceiling: usize,
) -> Result<Crystallization, ScenarioError> {
    template.validate()?;
    let request = CompletionRequest::generative(TAG_SETTINGS, settings_prompt(template, fm, tc, k, ceiling));
    let schema = SettingsSchema { declared_vps: template.vp_names().map(str::to_string).collect() };
    let mut bundles = llm.complete_structured(&request, &schema)?;
    let over_ceiling = bundles.len().saturating_sub(ceiling);
    if over_ceiling > 0 {
        tracing::warn!(over_ceiling, "settings bundles beyond the ceiling dropped");
        bundles.truncate(ceiling);
    }
    let mut instances = Vec::new();
    let mut rejected = Vec::new();
    for b in &bundles {
        match validate_bundle(template, b) {
            Ok(()) => instances.push(instantiate(template, b)?),
            Err(reason) => {
                tracing::warn!(label = %b.label, %reason, "settings bundle rejected");
                rejected.push(RejectedBundle { label: b.label.clone(), reason });
            }
        }
    }
    if instances.is_empty() {
        return Err(ScenarioError::NoValidBundles);
    }
    Ok(Crystallization { bundles, instances, rejected, over_ceiling })
}

/// Marks the developer's choice active; no choice keeps the primary.
pub fn select_oracle(instance: &ScenarioInstance, choice: Option<usize>) -> Result<ScenarioInstance, ScenarioError> {
    instance.validate()?;
    let mut out = instance.clone();
    match choice {
        None => out.active_oracle = 0,
        Some(c) if c < out.oracles.len() => out.active_oracle = c,
        Some(c) => return Err(ScenarioError::ChoiceOutOfRange { choice: c, available: out.oracles.len() }),
    }
    Ok(out)
}
