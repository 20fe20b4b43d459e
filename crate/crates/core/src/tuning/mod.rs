//! Rule-set tuning for the template prompt, and VP-identification scoring.
//!
//! Each training batch goes through template generation, per-sample
//! feedback against the ground truth, and one update call that merges the
//! feedback into rule-edit directives. A checkpoint is kept per epoch and
//! the best one on the held-out split is selected.

use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::structured::{Directive, DirectiveOp, FeedbackSchema, TemplateReply, TemplateReplySchema, VpMatchSchema};
use crate::llm::{CompletionRequest, Gateway, LlmError};
use crate::model::{
    detect_assertions, parse_template, render_template, FocalMethod, InvariantViolation, KnowledgeItem, RulePrompt, ScenarioTemplate,
    TemplateError, TestCase, Validate,
};
use crate::scenario::build_template_prompt;

pub const TAG_TEMPLATE: &str = "tune.template";
pub const TAG_FEEDBACK: &str = "tune.feedback";
pub const TAG_UPDATE: &str = "tune.update";
pub const TAG_EVAL: &str = "tune.eval";
pub const TAG_VP_MATCH: &str = "tune.vp_match";

pub const DEFAULT_EPOCHS: u32 = 3;
pub const DEFAULT_BATCH: usize = 5;
pub const SAMPLE_DIRECTIVE_LIMIT: usize = 5;
pub const BATCH_DIRECTIVE_LIMIT: usize = 8;

#[derive(Debug, Error)]
pub enum TuningError {
    #[error("training split is empty")]
    EmptyTrainSplit,
    #[error("invalid tuning config: {0}")]
    Config(String),
    #[error("dataset: {0}")]
    Dataset(String),
    #[error(transparent)]
    Invariant(#[from] InvariantViolation),
    #[error(transparent)]
    Llm(#[from] LlmError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TruthForm {
    Text(String),
    Structured(ScenarioTemplate),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawSample {
    pub id: String,
    pub project: String,
    pub focal_method: FocalMethod,
    pub test: TestCase,
    #[serde(default)]
    pub knowledge: Vec<KnowledgeItem>,
    pub truth: TruthForm,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TuningSample {
    pub id: String,
    pub project: String,
    pub fm: FocalMethod,
    pub tc: TestCase,
    pub knowledge: Vec<KnowledgeItem>,
    pub truth: ScenarioTemplate,
}

impl TuningSample {
    pub fn from_raw(raw: RawSample) -> Result<Self, TuningError> {
        let truth = match raw.truth {
            TruthForm::Text(t) => parse_template(&t).map_err(|e| match e {
                TemplateError::Invariant(v) => TuningError::Invariant(v),
                e => TuningError::Dataset(format!("sample {}: {e}", raw.id)),
            })?,
            TruthForm::Structured(t) => t,
        };
        let mut tc = raw.test;
        if tc.assertions.is_empty() {
            tc.assertions = detect_assertions(&tc.source);
        }
        let s = Self { id: raw.id, project: raw.project, fm: raw.focal_method, tc, knowledge: raw.knowledge, truth };
        s.validate()?;
        Ok(s)
    }
}

impl Validate for TuningSample {
    fn validate(&self) -> Result<(), InvariantViolation> {
        self.truth.validate()?;
        if self.tc.focal_id != self.fm.id {
            return Err(InvariantViolation::new("tuning_sample", "test targets the focal method"));
        }
        Ok(())
    }
}

#[derive(Debug, Deserialize)]
struct DatasetFile {
    samples: Vec<RawSample>,
}

/// Loads `{"samples": [...]}`; `truth` is a template in text form or JSON.
pub fn load_dataset(path: &Path) -> Result<Vec<TuningSample>, TuningError> {
    let text = std::fs::read_to_string(path).map_err(|e| TuningError::Dataset(format!("{}: {e}", path.display())))?;
    let file: DatasetFile =
        serde_json::from_str(&text).map_err(|e| TuningError::Dataset(format!("{}: {e}", path.display())))?;
    file.samples.into_iter().map(TuningSample::from_raw).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SplitSpec {
    Random { test_fraction: f64 },
    LeaveOneProjectOut { project: String },
}

/// Returns (train, test).
pub fn split_dataset(samples: &[TuningSample], spec: &SplitSpec, seed: u64) -> (Vec<TuningSample>, Vec<TuningSample>) {
    match spec {
        SplitSpec::Random { test_fraction } => {
            let mut order: Vec<usize> = (0..samples.len()).collect();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let n_test = ((samples.len() as f64) * test_fraction.clamp(0.0, 1.0)).round() as usize;
            let (test_idx, train_idx) = order.split_at(n_test.min(samples.len()));
            let mut test_idx = test_idx.to_vec();
            let mut train_idx = train_idx.to_vec();
            test_idx.sort_unstable();
            train_idx.sort_unstable();
            (
                train_idx.iter().map(|&i| samples[i].clone()).collect(),
                test_idx.iter().map(|&i| samples[i].clone()).collect(),
            )
        }
        SplitSpec::LeaveOneProjectOut { project } => {
            samples.iter().cloned().partition(|s| s.project != *project)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VpScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl VpScores {
    pub fn from_counts(matched: usize, predicted: usize, truth: usize) -> Self {
        let precision = if predicted == 0 { 0.0 } else { matched as f64 / predicted as f64 };
        let recall = if truth == 0 { 0.0 } else { matched as f64 / truth as f64 };
        let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
        Self { precision, recall, f1 }
    }

    /// Macro average; all zeros for an empty list.
    pub fn mean(scores: &[VpScores]) -> Self {
        if scores.is_empty() {
            return Self::default();
        }
        let n = scores.len() as f64;
        Self {
            precision: scores.iter().map(|s| s.precision).sum::<f64>() / n,
            recall: scores.iter().map(|s| s.recall).sum::<f64>() / n,
            f1: scores.iter().map(|s| s.f1).sum::<f64>() / n,
        }
    }
}

/// VP matching by canonical-name equality.
pub fn evaluate_vp(predicted: &ScenarioTemplate, truth: &ScenarioTemplate) -> VpScores {
    let p: BTreeSet<&str> = predicted.vp_names().collect();
    let t: BTreeSet<&str> = truth.vp_names().collect();
    VpScores::from_counts(p.intersection(&t).count(), p.len(), t.len())
}

/// VP matching decided by a deterministic judge call.
pub fn evaluate_vp_judged(
    predicted: &ScenarioTemplate,
    truth: &ScenarioTemplate,
    llm: &Gateway,
) -> Result<VpScores, LlmError> {
    let p: Vec<String> = predicted.vp_names().map(str::to_string).collect();
    let t: Vec<String> = truth.vp_names().map(str::to_string).collect();
    if p.is_empty() || t.is_empty() {
        return Ok(VpScores::from_counts(0, p.len(), t.len()));
    }
    let describe = |tpl: &ScenarioTemplate| -> String {
        tpl.steps
            .iter()
            .flat_map(|s| s.vps.iter().map(move |v| format!("- {} (step {}: {}): {}", v.name, s.step_id, s.action, v.description)))
            .collect::<Vec<_>>()
            .join("\n")
    };
    let prompt = format!(
        "Decide which variation points of a generated test scenario template denote the same factor as a variation point of the reference template. Each variation point may be matched at most once.\n\nGenerated:\n{}\n\nReference:\n{}\n\nOutput one line `MATCH: <generated name> = <reference name>` per match, or `NONE`.\n",
        describe(predicted),
        describe(truth)
    );
    let request = CompletionRequest::deterministic(TAG_VP_MATCH, prompt);
    let pairs = llm.complete_structured(&request, &VpMatchSchema { predicted: p.clone(), truth: t.clone() })?;
    Ok(VpScores::from_counts(pairs.len(), p.len(), t.len()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VpMatching {
    #[default]
    Offline,
    Judge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningConfig {
    pub epochs: u32,
    pub batch_size: usize,
    pub seed: u64,
    pub split: SplitSpec,
    #[serde(default)]
    pub matching: VpMatching,
}

impl Default for TuningConfig {
    fn default() -> Self {
        Self {
            epochs: DEFAULT_EPOCHS,
            batch_size: DEFAULT_BATCH,
            seed: 0,
            split: SplitSpec::Random { test_fraction: 0.2 },
            matching: VpMatching::Offline,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub epoch: u32,
    pub prompt: RulePrompt,
    pub metrics: VpScores,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedSample {
    pub sample: String,
    pub step: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningRun {
    pub config: TuningConfig,
    pub train: Vec<String>,
    pub test: Vec<String>,
    pub checkpoints: Vec<Checkpoint>,
    /// Index into `checkpoints`.
    pub selected: usize,
    pub update_calls: usize,
    pub skipped: Vec<SkippedSample>,
}

impl TuningRun {
    pub fn selected_prompt(&self) -> &RulePrompt {
        &self.checkpoints[self.selected].prompt
    }
}

/// One template for a sample under the given prompt. Queries cannot be
/// served during tuning and count as a generation failure.
pub fn generate_for_sample(sample: &TuningSample, prompt: &RulePrompt, llm: &Gateway, tag: &str) -> Result<ScenarioTemplate, String> {
    let (mut request, _) =
        build_template_prompt(&sample.fm, &sample.tc, &sample.knowledge, prompt, None).map_err(|e| e.to_string())?;
    request.tag = tag.to_string();
    match llm.complete_structured(&request, &TemplateReplySchema).map_err(|e| e.to_string())? {
        TemplateReply::Template(text) => parse_template(&text).map_err(|e| e.to_string()),
        TemplateReply::Queries(_) => Err("knowledge queries are not served during tuning".into()),
    }
}

fn feedback_prompt(prompt: &RulePrompt, sample: &TuningSample, predicted: &ScenarioTemplate) -> String {
    let p: BTreeSet<&str> = predicted.vp_names().collect();
    let t: BTreeSet<&str> = sample.truth.vp_names().collect();
    let missing: Vec<&str> = t.difference(&p).copied().collect();
    let redundant: Vec<&str> = p.difference(&t).copied().collect();
    format!(
        "A prompt produced the generated test scenario template below for a focal method. Compare it with the reference template, identify missing and redundant variation points, and suggest edits to the rule set so that future templates identify variation points better.\n\n# Current rules\n{}\n\n# Focal Method\n```java\n{}\n```\n\n# Generated template\n{}\n# Reference template\n{}\n# Missing variation points\n{}\n\n# Redundant variation points\n{}\n\nReply with at most {SAMPLE_DIRECTIVE_LIMIT} lines `ADD: <rule>`, `MODIFY <n>: <rule>` or `DELETE <n>`, or `NONE`.\n",
        numbered(&prompt.rules),
        sample.fm.source.trim_end(),
        render_template(predicted),
        render_template(&sample.truth),
        list_or_none(&missing),
        list_or_none(&redundant),
    )
}

fn numbered(rules: &[String]) -> String {
    if rules.is_empty() {
        return "none".into();
    }
    rules.iter().enumerate().map(|(i, r)| format!("{}. {r}", i + 1)).collect::<Vec<_>>().join("\n")
}

fn list_or_none(items: &[&str]) -> String {
    if items.is_empty() {
        "none".into()
    } else {
        items.join(", ")
    }
}

/// Batch-level synthesis: one call over all per-sample directive lists.
pub fn synthesize_feedback(
    prompt: &RulePrompt,
    per_sample: &[Vec<Directive>],
    llm: &Gateway,
) -> Result<Vec<Directive>, LlmError> {
    let mut body = String::new();
    for (i, ds) in per_sample.iter().enumerate() {
        body.push_str(&format!("Feedback {}:\n", i + 1));
        if ds.is_empty() {
            body.push_str("NONE\n");
        }
        for d in ds {
            body.push_str(&d.render());
            body.push('\n');
        }
    }
    let text = format!(
        "Merge the rule-set feedback below into one set of edits. Keep complementary suggestions, and where suggestions conflict keep a single more general rule and mark it `[generalized]`. With a single feedback, return its edits unchanged.\n\n# Current rules\n{}\n\n# Feedback\n{}\nReply with at most {BATCH_DIRECTIVE_LIMIT} lines `ADD: <rule>`, `MODIFY <n>: <rule>`, `DELETE <n>` (optionally followed by `[generalized]` before the colon), or `NONE`.\n",
        numbered(&prompt.rules),
        body
    );
    let request = CompletionRequest::generative(TAG_UPDATE, text);
    llm.complete_structured(&request, &FeedbackSchema { max_directives: BATCH_DIRECTIVE_LIMIT })
}

/// Applies directives against the rule list as it was before the update:
/// modifications, then deletions, then additions. Out-of-range indices
/// are ignored.
pub fn apply_directives(rules: &[String], directives: &[Directive]) -> Vec<String> {
    let mut slots: Vec<Option<String>> = rules.iter().cloned().map(Some).collect();
    for d in directives {
        if let DirectiveOp::Modify { index, rule } = &d.op {
            match slots.get_mut(index.wrapping_sub(1)) {
                Some(slot @ Some(_)) => *slot = Some(rule.clone()),
                _ => tracing::warn!(index, "modify directive out of range"),
            }
        }
    }
    for d in directives {
        if let DirectiveOp::Delete { index } = &d.op {
            match slots.get_mut(index.wrapping_sub(1)) {
                Some(slot) => *slot = None,
                None => tracing::warn!(index, "delete directive out of range"),
            }
        }
    }
    let mut out: Vec<String> = slots.into_iter().flatten().collect();
    for d in directives {
        if let DirectiveOp::Add { rule } = &d.op {
            if !out.contains(rule) {
                out.push(rule.clone());
            }
        }
    }
    out
}

fn evaluate_checkpoint(
    prompt: &RulePrompt,
    test: &[TuningSample],
    llm: &Gateway,
    matching: VpMatching,
    skipped: &mut Vec<SkippedSample>,
) -> VpScores {
    let mut scores = Vec::new();
    for s in test {
        let score = match generate_for_sample(s, prompt, llm, TAG_EVAL) {
            Ok(t) => match matching {
                VpMatching::Offline => evaluate_vp(&t, &s.truth),
                VpMatching::Judge => evaluate_vp_judged(&t, &s.truth, llm).unwrap_or_else(|e| {
                    skipped.push(SkippedSample { sample: s.id.clone(), step: "judge".into(), reason: e.to_string() });
                    VpScores::default()
                }),
            },
            Err(reason) => {
                skipped.push(SkippedSample { sample: s.id.clone(), step: format!("eval v{}", prompt.version), reason });
                VpScores::default()
            }
        };
        scores.push(score);
    }
    VpScores::mean(&scores)
}

/// Earliest checkpoint with the maximum F1.
pub fn select_checkpoint(checkpoints: &[Checkpoint]) -> usize {
    let mut best = 0;
    for (i, c) in checkpoints.iter().enumerate() {
        if c.metrics.f1 > checkpoints[best].metrics.f1 {
            best = i;
        }
    }
    best
}

pub fn tune(dataset: &[TuningSample], llm: &Gateway, config: &TuningConfig) -> Result<TuningRun, TuningError> {
    let (train, test) = split_dataset(dataset, &config.split, config.seed);
    tune_split(&train, &test, llm, config)
}

pub fn tune_split(
    train: &[TuningSample],
    test: &[TuningSample],
    llm: &Gateway,
    config: &TuningConfig,
) -> Result<TuningRun, TuningError> {
    if config.epochs == 0 {
        return Err(TuningError::Config("epochs must be at least 1".into()));
    }
    if train.is_empty() {
        return Err(TuningError::EmptyTrainSplit);
    }
    let batch_size = config.batch_size.max(1);
    let mut prompt = RulePrompt::base();
    let mut prompts = Vec::new();
    let mut update_calls = 0;
    let mut skipped = Vec::new();
    for epoch in 1..=config.epochs {
        for batch in train.chunks(batch_size) {
            let mut feedback = Vec::new();
            for s in batch {
                let predicted = match generate_for_sample(s, &prompt, llm, TAG_TEMPLATE) {
                    Ok(t) => t,
                    Err(reason) => {
                        tracing::warn!(sample = %s.id, %reason, "template generation failed; sample skipped");
                        skipped.push(SkippedSample { sample: s.id.clone(), step: format!("template e{epoch}"), reason });
                        continue;
                    }
                };
                let request = CompletionRequest::generative(TAG_FEEDBACK, feedback_prompt(&prompt, s, &predicted));
                match llm.complete_structured(&request, &FeedbackSchema { max_directives: SAMPLE_DIRECTIVE_LIMIT }) {
                    Ok(ds) => feedback.push(ds),
                    Err(e) => {
                        tracing::warn!(sample = %s.id, error = %e, "feedback failed; sample skipped");
                        skipped.push(SkippedSample { sample: s.id.clone(), step: format!("feedback e{epoch}"), reason: e.to_string() });
                    }
                }
            }
            if feedback.is_empty() {
                tracing::warn!(epoch, "no feedback in batch; update skipped");
                continue;
            }
            let directives = synthesize_feedback(&prompt, &feedback, llm)?;
            update_calls += 1;
            prompt = prompt.derive(apply_directives(&prompt.rules, &directives));
            prompt.validate()?;
        }
        prompts.push((epoch, prompt.clone()));
    }
    let mut checkpoints = Vec::new();
    for (epoch, p) in prompts {
        let metrics = evaluate_checkpoint(&p, test, llm, config.matching, &mut skipped);
        checkpoints.push(Checkpoint { epoch, prompt: p, metrics });
    }
    let selected = select_checkpoint(&checkpoints);
    Ok(TuningRun {
        config: config.clone(),
        train: train.iter().map(|s| s.id.clone()).collect(),
        test: test.iter().map(|s| s.id.clone()).collect(),
        checkpoints,
        selected,
        update_calls,
        skipped,
    })
}

#[cfg(test)]
mod tests;
