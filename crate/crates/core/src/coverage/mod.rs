//! Scenario coverage of generated tests against ground-truth tests.
//!
//! Two per-test scores feed the same aggregate (the mean over ground-truth
//! tests): a mutation-based score from an optimal one-to-one matching of
//! kill sets, and a binary score from an LLM judge that consumes matched
//! generated tests as it walks the ground truth.

pub mod matching;
pub mod report;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::structured::JudgeVerdictSchema;
use crate::llm::{CompletionRequest, Gateway, LlmError};
use crate::model::{FocalMethod, TestCase};

pub use matching::{max_weight_matching, Assignment};
pub use report::{ingest_mutation_report, normalize_test_id, KillMatrix, MappingProfile, Mutant, MutantStatus, MutationReport};

#[derive(Debug, Error)]
pub enum CoverageError {
    #[error("ground-truth test {0} kills no mutants")]
    EmptyGroundTruthKillSet(String),
    #[error("mutation report schema error at {position}: {reason}")]
    Schema { position: String, reason: String },
    #[error("cannot read mutation report {path}: {reason}")]
    Io { path: String, reason: String },
    #[error(transparent)]
    Llm(#[from] LlmError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MutantKillSet {
    pub test_id: String,
    pub killed: BTreeSet<String>,
    /// Number of mutants generated for the focal class.
    pub universe: usize,
}

impl MutantKillSet {
    pub fn new(test_id: impl Into<String>, killed: impl IntoIterator<Item = impl Into<String>>, universe: usize) -> Self {
        Self { test_id: test_id.into(), killed: killed.into_iter().map(Into::into).collect(), universe }
    }
}

/// `|gt ∩ gen| / |gt|`.
pub fn pairwise_score(gt: &MutantKillSet, gen: &MutantKillSet) -> Result<f64, CoverageError> {
    if gt.killed.is_empty() {
        return Err(CoverageError::EmptyGroundTruthKillSet(gt.test_id.clone()));
    }
    let shared = gt.killed.intersection(&gen.killed).count();
    Ok(shared as f64 / gt.killed.len() as f64)
}

/// Mean of per-test scores; 0 for an empty list.
pub fn aggregate(scores: &[f64]) -> f64 {
    if scores.is_empty() {
        0.0
    } else {
        scores.iter().sum::<f64>() / scores.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    MutationBased,
    LlmAssessed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GtScore {
    pub gt: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchPair {
    pub gt: String,
    pub gen: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeMatch {
    pub gt: String,
    pub gen: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub focal_id: String,
    pub metric: Metric,
    pub per_gt: Vec<GtScore>,
    /// Mutation metric only: the optimal one-to-one pairing.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub matching: Vec<MatchPair>,
    /// LLM metric only: generated tests credited to each fulfilled test.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub judged: Vec<JudgeMatch>,
    /// Ground-truth tests left out of the mean (empty kill sets).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub excluded: Vec<String>,
    pub aggregate: f64,
}

impl CoverageReport {
    pub fn scores(&self) -> Vec<f64> {
        self.per_gt.iter().map(|s| s.score).collect()
    }
}

/// Mutation-based coverage. Ground-truth tests with empty kill sets are
/// excluded from the mean and listed in `excluded`.
pub fn match_mutation(focal_id: &str, gt: &[MutantKillSet], gen: &[MutantKillSet]) -> CoverageReport {
    let (kept, empty): (Vec<&MutantKillSet>, Vec<&MutantKillSet>) = gt.iter().partition(|g| !g.killed.is_empty());
    for e in &empty {
        tracing::warn!(test = %e.test_id, "ground-truth test kills no mutants; excluded from coverage");
    }
    let weights: Vec<Vec<f64>> = kept
        .iter()
        .map(|g| gen.iter().map(|t| pairwise_score(g, t).expect("non-empty by partition")).collect())
        .collect();
    let assignment = max_weight_matching(&weights);
    let mut per_gt: Vec<GtScore> = kept.iter().map(|g| GtScore { gt: g.test_id.clone(), score: 0.0 }).collect();
    let mut matching = Vec::new();
    for &(r, c) in &assignment.pairs {
        let score = weights[r][c];
        if score > 0.0 {
            per_gt[r].score = score;
            matching.push(MatchPair { gt: kept[r].test_id.clone(), gen: gen[c].test_id.clone(), score });
        }
    }
    let aggregate = aggregate(&per_gt.iter().map(|s| s.score).collect::<Vec<_>>());
    CoverageReport {
        focal_id: focal_id.to_string(),
        metric: Metric::MutationBased,
        per_gt,
        matching,
        judged: Vec::new(),
        excluded: empty.iter().map(|e| e.test_id.clone()).collect(),
        aggregate,
    }
}

pub const JUDGE_TAG: &str = "eval.judge";

fn judge_prompt(fm: &FocalMethod, gt: &TestCase, available: &[&TestCase]) -> String {
    let mut p = String::new();
    p.push_str("You compare test scenarios. Decide whether the test scenario exercised by the reference test can be fulfilled by the candidate tests, individually or collectively.\n\n");
    p.push_str(&format!("Focal method ({}):\n```java\n{}\n```\n\n", fm.id, fm.source.trim_end()));
    p.push_str(&format!("Reference test {}:\n```java\n{}\n```\n\n", gt.id, gt.source.trim_end()));
    p.push_str("Candidate tests:\n");
    for t in available {
        p.push_str(&format!("--- {} ---\n```java\n{}\n```\n", t.id, t.source.trim_end()));
    }
    p.push_str("\nAnswer with exactly one line: `MATCH: yes; tests: [<ids of the candidate tests that fulfill the scenario>]` or `MATCH: no`.\n");
    p
}

/// LLM-assessed coverage. Ground-truth tests are judged in the given order;
/// generated tests credited to one are unavailable to later ones.
pub fn llm_assessed(
    fm: &FocalMethod,
    gt: &[TestCase],
    gen: &[TestCase],
    llm: &Gateway,
) -> Result<CoverageReport, CoverageError> {
    let mut available: Vec<&TestCase> = gen.iter().collect();
    let mut per_gt = Vec::new();
    let mut judged = Vec::new();
    for g in gt {
        if available.is_empty() {
            per_gt.push(GtScore { gt: g.id.clone(), score: 0.0 });
            continue;
        }
        let ids: Vec<String> = available.iter().map(|t| t.id.clone()).collect();
        let request = CompletionRequest::deterministic(JUDGE_TAG, judge_prompt(fm, g, &available));
        let verdict = llm.complete_structured(&request, &JudgeVerdictSchema::new(ids))?;
        if verdict.fulfilled {
            available.retain(|t| !verdict.tests.contains(&t.id));
            judged.push(JudgeMatch { gt: g.id.clone(), gen: verdict.tests });
            per_gt.push(GtScore { gt: g.id.clone(), score: 1.0 });
        } else {
            per_gt.push(GtScore { gt: g.id.clone(), score: 0.0 });
        }
    }
    let aggregate = aggregate(&per_gt.iter().map(|s| s.score).collect::<Vec<_>>());
    Ok(CoverageReport {
        focal_id: fm.id.clone(),
        metric: Metric::LlmAssessed,
        per_gt,
        matching: Vec::new(),
        judged,
        excluded: Vec::new(),
        aggregate,
    })
}
