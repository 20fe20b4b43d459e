//! Masked-oracle exams.
//!
//! Each assertion of the developer test is masked and turned into a
//! multiple-choice question whose wrong options are model-proposed variants
//! that were observed to fail only their assertion. The model answers,
//! asks for project knowledge, or is handed knowledge after a wrong pick;
//! everything retrieved along the way becomes the Stage-1 knowledge.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::index::{lexer, Neighborhood, QueryKind, SymbolIndex};
use crate::llm::structured::{ExamAnswerSchema, ExamOptionsSchema, ExamReply, KnowledgeQuery};
use crate::llm::{CompletionRequest, Gateway, LlmError, Message};
use crate::model::{
    collapse_ws, merge_knowledge, AssertionSite, FocalMethod, InvariantViolation, KnowledgeItem, Provenance,
    TestCase, Validate,
};
use crate::runner::{RunStatus, RunnerError, TestFile, TestRunner};

pub const DEFAULT_Q_MAX: usize = 10;
pub const DEFAULT_MAX_ITER: u32 = 3;
pub const FORCED_RETRIEVAL_CAP: usize = 3;
pub const QUERY_RESULT_CAP: usize = 6;

pub const TAG_WRONG: &str = "stage1.wrong_oracles";
pub const TAG_ANSWER: &str = "stage1.answer";

#[derive(Debug, Error)]
pub enum ExamError {
    #[error("no usable wrong oracle for `{0}` after revision")]
    ZeroCandidates(String),
    #[error("test source not found in {0}")]
    HostMismatch(String),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Runner(#[from] RunnerError),
    #[error(transparent)]
    Invariant(#[from] InvariantViolation),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptionStatus {
    Original,
    ValidWrong,
    DiscardedCompile,
    DiscardedExec,
    DiscardedPasses,
}

impl OptionStatus {
    fn from_run(status: RunStatus) -> Self {
        match status {
            RunStatus::Pass => OptionStatus::DiscardedPasses,
            RunStatus::CompileError => OptionStatus::DiscardedCompile,
            RunStatus::ExecutionError => OptionStatus::DiscardedExec,
            RunStatus::AssertionFailure => OptionStatus::ValidWrong,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilteredVariant {
    pub statement: String,
    pub status: OptionStatus,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleExam {
    pub base_test: TestCase,
    pub target_assertion: AssertionSite,
    /// Presented options: the original and the valid wrong variants.
    pub options: Vec<String>,
    pub correct_index: usize,
    pub option_status: Vec<OptionStatus>,
    /// Variants filtered out before the exam was assembled.
    pub discarded: Vec<FilteredVariant>,
    /// Seed of the option shuffle.
    pub seed: u64,
}

impl Validate for OracleExam {
    fn validate(&self) -> Result<(), InvariantViolation> {
        let v = |s: &str| InvariantViolation::new("oracle_exam", s);
        if self.options.len() < 2 {
            return Err(v("at least two options"));
        }
        if self.options.len() != self.option_status.len() {
            return Err(v("one status per option"));
        }
        let originals: Vec<usize> =
            (0..self.options.len()).filter(|&i| self.option_status[i] == OptionStatus::Original).collect();
        if originals != [self.correct_index] {
            return Err(v("exactly one original option, at correct_index"));
        }
        if self.options[self.correct_index] != self.target_assertion.statement {
            return Err(v("original option equals the target assertion"));
        }
        if self.option_status.iter().any(|s| !matches!(s, OptionStatus::Original | OptionStatus::ValidWrong)) {
            return Err(v("presented options are original or valid_wrong"));
        }
        if self.discarded.iter().any(|d| matches!(d.status, OptionStatus::Original | OptionStatus::ValidWrong)) {
            return Err(v("discarded variants carry a discard status"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Passed,
    /// Stopped early: an iteration added no knowledge, so re-asking could
    /// not change the answer.
    Failed,
    Exhausted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum ExamEvent {
    Answered { iteration: u32, choice: usize, correct: bool },
    Queried { iteration: u32, queries: Vec<KnowledgeQuery>, resolved: Vec<String>, unresolved: Vec<String> },
    ForcedRetrieval { iteration: u32, symbols: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExamOutcome {
    pub verdict: Verdict,
    pub iterations_used: u32,
    /// Items retrieved during this exam.
    pub knowledge: Vec<KnowledgeItem>,
    pub trace: Vec<ExamEvent>,
}

fn same_statement(a: &str, b: &str) -> bool {
    collapse_ws(a) == collapse_ws(b)
}

fn wrong_oracle_prompt(fm: &FocalMethod, tc: &TestCase, site: &AssertionSite, q_max: usize) -> String {
    format!(
        "Here is a focal method and a test case that exercises it.\n\nFocal method:\n```java\n{}\n```\n\nTest case:\n```java\n{}\n```\n\nThe test contains the oracle:\n{}\n\nCome up with up to {q_max} WRONG oracles for this assertion: statements that still compile and run but assert something that does not hold for this test. Write each as one line `WRONG: <assertion statement>`.\n",
        fm.source.trim_end(),
        tc.source.trim_end(),
        site.statement,
    )
}

/// Asks for wrong variants of one assertion; drops copies of the original
/// and duplicates, keeps at most `q_max`. An empty result gets one
/// revision request.
pub fn generate_wrong_oracles(
    fm: &FocalMethod,
    tc: &TestCase,
    site: &AssertionSite,
    llm: &Gateway,
    q_max: usize,
) -> Result<Vec<String>, ExamError> {
    let prompt = wrong_oracle_prompt(fm, tc, site, q_max);
    let request = CompletionRequest::generative(TAG_WRONG, prompt);
    let raw = llm.complete_structured(&request, &ExamOptionsSchema)?;
    let first = clean_variants(raw, site, q_max);
    if !first.is_empty() {
        return Ok(first);
    }
    let mut revision = request.clone();
    revision.messages.push(Message::assistant("(no usable wrong oracles)"));
    revision.messages.push(Message::user(format!(
        "None of your proposals differs from the original oracle `{}`. Revise your output: give up to {q_max} lines `WRONG: <assertion statement>`, each different from the original.",
        site.statement
    )));
    let raw = llm.complete_structured(&revision, &ExamOptionsSchema)?;
    let second = clean_variants(raw, site, q_max);
    if second.is_empty() {
        return Err(ExamError::ZeroCandidates(site.statement.clone()));
    }
    Ok(second)
}

fn clean_variants(raw: Vec<String>, site: &AssertionSite, q_max: usize) -> Vec<String> {
    let mut seen = BTreeSet::new();
    raw.into_iter()
        .filter(|v| !same_statement(v, &site.statement))
        .filter(|v| seen.insert(collapse_ws(v)))
        .take(q_max)
        .collect()
}

/// Runs every variant in place of the target assertion and labels it.
pub fn filter_candidates(
    tc: &TestCase,
    site: &AssertionSite,
    variants: &[String],
    host: &TestFile,
    runner: &dyn TestRunner,
) -> Result<Vec<FilteredVariant>, ExamError> {
    let mut out = Vec::new();
    for v in variants {
        let mutated = tc.replace_assertion(site, v);
        let candidate =
            host.replacing(&tc.source, &mutated, &tc.name).ok_or_else(|| ExamError::HostMismatch(host.path.clone()))?;
        let outcome = runner.run(&candidate)?;
        out.push(FilteredVariant { statement: v.clone(), status: OptionStatus::from_run(outcome.status) });
    }
    Ok(out)
}

/// Assembles the exam from filtered variants, shuffling with `seed`.
pub fn assemble_exam(
    tc: &TestCase,
    site: &AssertionSite,
    filtered: Vec<FilteredVariant>,
    seed: u64,
) -> Result<OracleExam, ExamError> {
    let (valid, discarded): (Vec<FilteredVariant>, Vec<FilteredVariant>) =
        filtered.into_iter().partition(|f| f.status == OptionStatus::ValidWrong);
    let mut entries: Vec<(String, OptionStatus)> = vec![(site.statement.clone(), OptionStatus::Original)];
    entries.extend(valid.into_iter().map(|v| (v.statement, OptionStatus::ValidWrong)));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    entries.shuffle(&mut rng);
    let correct_index = entries.iter().position(|(_, s)| *s == OptionStatus::Original).expect("original present");
    let exam = OracleExam {
        base_test: tc.clone(),
        target_assertion: site.clone(),
        options: entries.iter().map(|(o, _)| o.clone()).collect(),
        correct_index,
        option_status: entries.iter().map(|(_, s)| *s).collect(),
        discarded,
        seed,
    };
    exam.validate()?;
    Ok(exam)
}

pub struct ExamContext<'a> {
    pub fm: &'a FocalMethod,
    pub tc: &'a TestCase,
    pub index: &'a SymbolIndex,
    pub scope: &'a Neighborhood,
    pub llm: &'a Gateway,
}

fn masked_test(tc: &TestCase, site: &AssertionSite) -> String {
    tc.replace_assertion(site, "<MASKED_ORACLE>")
}

fn answer_prompt(cx: &ExamContext, exam: &OracleExam, knowledge: &[KnowledgeItem]) -> String {
    let mut p = format!(
        "You are taking an exam about a Java project. One oracle of the test below is masked as <MASKED_ORACLE>. Choose the option that is the original oracle.\n\nFocal method:\n```java\n{}\n```\n\nTest case:\n```java\n{}\n```\n\nOptions:\n",
        cx.fm.source.trim_end(),
        masked_test(cx.tc, &exam.target_assertion).trim_end(),
    );
    for (i, o) in exam.options.iter().enumerate() {
        p.push_str(&format!("{}. {}\n", i + 1, o));
    }
    p.push_str("\nProject knowledge:\n");
    if knowledge.is_empty() {
        p.push_str("none provided\n");
    } else {
        for k in knowledge {
            p.push_str(&k.render());
            p.push_str("\n\n");
        }
    }
    p.push_str("\nIf you need information about project symbols to decide, do not make a choice and output only a list of the required information, one line each: `QUERY: <symbol name>` or `QUERY FAMILY: <type name>`. Otherwise reply `ANSWER: <option number>`.\n");
    p
}

/// Resolves queries inside the neighborhood; returns (new items, resolved
/// names, unresolved names).
fn resolve_queries(
    cx: &ExamContext,
    queries: &[KnowledgeQuery],
    known: &[KnowledgeItem],
) -> (Vec<KnowledgeItem>, Vec<String>, Vec<String>) {
    let mut items: Vec<KnowledgeItem> = Vec::new();
    let mut resolved = Vec::new();
    let mut unresolved = Vec::new();
    for q in queries {
        let kind = match (q.family, q.kind) {
            (true, _) => QueryKind::Family,
            (false, Some(k)) => QueryKind::Only(k),
            (false, None) => QueryKind::Any,
        };
        let hits = cx.index.query(&q.name, kind, Some(cx.scope));
        if hits.is_empty() {
            unresolved.push(q.name.clone());
            continue;
        }
        resolved.push(q.name.clone());
        for e in hits.into_iter().take(QUERY_RESULT_CAP) {
            if !known.iter().chain(items.iter()).any(|k| k.symbol == e.key) {
                items.push(e.to_item(Provenance::Stage1Exam));
            }
        }
    }
    (items, resolved, unresolved)
}

/// Knowledge handed over after a wrong pick: symbols named in the masked
/// oracle and the chosen option first, then in the focal method.
fn forced_retrieval(cx: &ExamContext, exam: &OracleExam, choice: usize, known: &[KnowledgeItem]) -> Vec<KnowledgeItem> {
    let mut names: Vec<String> = Vec::new();
    for src in [exam.target_assertion.statement.as_str(), exam.options[choice].as_str(), cx.fm.source.as_str()] {
        for id in lexer::identifiers(src) {
            if !names.contains(&id) {
                names.push(id);
            }
        }
    }
    let mut out: Vec<KnowledgeItem> = Vec::new();
    for name in names {
        if out.len() >= FORCED_RETRIEVAL_CAP {
            break;
        }
        for e in cx.index.query(&name, QueryKind::Any, Some(cx.scope)) {
            if out.len() >= FORCED_RETRIEVAL_CAP {
                break;
            }
            if !known.iter().chain(out.iter()).any(|k| k.symbol == e.key) {
                out.push(e.to_item(Provenance::Stage1Exam));
            }
        }
    }
    out
}

/// The answer / retrieve / re-evaluate loop. `prior` is knowledge from
/// earlier exams, shown to the model but not returned.
pub fn run_exam(cx: &ExamContext, exam: &OracleExam, prior: &[KnowledgeItem], max_iter: u32) -> Result<ExamOutcome, ExamError> {
    exam.validate()?;
    let mut knowledge: Vec<KnowledgeItem> = Vec::new();
    let mut trace = Vec::new();
    let schema = ExamAnswerSchema { option_count: exam.options.len() };
    for iteration in 1..=max_iter {
        let mut shown: Vec<KnowledgeItem> = prior.to_vec();
        merge_knowledge(&mut shown, knowledge.iter().cloned());
        let request = CompletionRequest::deterministic(TAG_ANSWER, answer_prompt(cx, exam, &shown));
        let new_items = match cx.llm.complete_structured(&request, &schema)? {
            ExamReply::Answer(choice) => {
                let correct = choice == exam.correct_index;
                trace.push(ExamEvent::Answered { iteration, choice, correct });
                if correct {
                    return Ok(ExamOutcome { verdict: Verdict::Passed, iterations_used: iteration, knowledge, trace });
                }
                let forced = forced_retrieval(cx, exam, choice, &shown);
                trace.push(ExamEvent::ForcedRetrieval { iteration, symbols: forced.iter().map(|k| k.symbol.clone()).collect() });
                forced
            }
            ExamReply::Queries(queries) => {
                let (items, resolved, unresolved) = resolve_queries(cx, &queries, &shown);
                trace.push(ExamEvent::Queried { iteration, queries, resolved, unresolved });
                items
            }
        };
        if new_items.is_empty() {
            return Ok(ExamOutcome { verdict: Verdict::Failed, iterations_used: iteration, knowledge, trace });
        }
        merge_knowledge(&mut knowledge, new_items);
    }
    Ok(ExamOutcome { verdict: Verdict::Exhausted, iterations_used: max_iter, knowledge, trace })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExamSettings {
    pub q_max: usize,
    pub max_iter: u32,
    pub seed: u64,
}

impl Default for ExamSettings {
    fn default() -> Self {
        Self { q_max: DEFAULT_Q_MAX, max_iter: DEFAULT_MAX_ITER, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedExam {
    pub assertion: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stage1Result {
    /// True when the test has no assertions and no exam was attempted.
    pub stage_skipped: bool,
    pub exams: Vec<OracleExam>,
    pub outcomes: Vec<ExamOutcome>,
    pub skipped: Vec<SkippedExam>,
    /// Union of the knowledge retrieved across exams.
    pub knowledge: Vec<KnowledgeItem>,
}

impl Stage1Result {
    pub fn all_passed(&self) -> bool {
        self.outcomes.iter().all(|o| o.verdict == Verdict::Passed)
    }
}

/// One exam per assertion, sequentially, knowledge accumulating.
pub fn run_stage1(
    cx: &ExamContext,
    host: &TestFile,
    runner: &dyn TestRunner,
    settings: &ExamSettings,
) -> Result<Stage1Result, ExamError> {
    let mut result = Stage1Result::default();
    if cx.tc.assertions.is_empty() {
        tracing::info!(test = %cx.tc.id, "test has no assertions; stage 1 skipped");
        result.stage_skipped = true;
        return Ok(result);
    }
    for (i, site) in cx.tc.assertions.iter().enumerate() {
        let variants = match generate_wrong_oracles(cx.fm, cx.tc, site, cx.llm, settings.q_max) {
            Ok(v) => v,
            Err(ExamError::ZeroCandidates(a)) => {
                tracing::warn!(assertion = %a, "no wrong oracle candidates; exam skipped");
                result.skipped.push(SkippedExam { assertion: a, reason: "no candidates".into() });
                continue;
            }
            Err(e) => return Err(e),
        };
        let filtered = filter_candidates(cx.tc, site, &variants, host, runner)?;
        let seed = settings.seed.wrapping_add(i as u64);
        let exam = if filtered.iter().any(|f| f.status == OptionStatus::ValidWrong) {
            assemble_exam(cx.tc, site, filtered, seed)?
        } else {
            match revise_after_filter(cx, host, runner, settings, site, filtered, seed)? {
                Some(exam) => exam,
                None => {
                    tracing::warn!(assertion = %site.statement, "no variant failed only its assertion; exam skipped");
                    result.skipped.push(SkippedExam {
                        assertion: site.statement.clone(),
                        reason: "no valid wrong oracle after revision".into(),
                    });
                    continue;
                }
            }
        };
        let outcome = run_exam(cx, &exam, &result.knowledge, settings.max_iter)?;
        if outcome.verdict != Verdict::Passed {
            tracing::warn!(assertion = %site.statement, verdict = ?outcome.verdict, "exam not passed");
        }
        merge_knowledge(&mut result.knowledge, outcome.knowledge.iter().cloned());
        result.exams.push(exam);
        result.outcomes.push(outcome);
    }
    Ok(result)
}

fn revise_after_filter(
    cx: &ExamContext,
    host: &TestFile,
    runner: &dyn TestRunner,
    settings: &ExamSettings,
    site: &AssertionSite,
    mut tried: Vec<FilteredVariant>,
    seed: u64,
) -> Result<Option<OracleExam>, ExamError> {
    let prompt = wrong_oracle_prompt(cx.fm, cx.tc, site, settings.q_max);
    let mut request = CompletionRequest::generative(TAG_WRONG, prompt);
    let listing: Vec<String> = tried.iter().map(|t| format!("- {} ({:?})", t.statement, t.status)).collect();
    request.messages.push(Message::user(format!(
        "These proposals were unusable because they did not fail only at the assertion:\n{}\nRevise your output with different WRONG oracles.",
        listing.join("\n")
    )));
    let raw = cx.llm.complete_structured(&request, &ExamOptionsSchema)?;
    let fresh: Vec<String> = clean_variants(raw, site, settings.q_max)
        .into_iter()
        .filter(|v| !tried.iter().any(|t| same_statement(&t.statement, v)))
        .collect();
    if fresh.is_empty() {
        return Ok(None);
    }
    let filtered = filter_candidates(cx.tc, site, &fresh, host, runner)?;
    if !filtered.iter().any(|f| f.status == OptionStatus::ValidWrong) {
        return Ok(None);
    }
    tried.extend(filtered);
    Ok(Some(assemble_exam(cx.tc, site, tried, seed)?))
}
