//! Test scenario generalization.
//!
//! Takes one developer-written test for a focal method and generalizes it
//! into a family of tests covering the scenarios the developer intended:
//!
//! 1. masked-oracle exams probe the model's understanding and collect
//!    project knowledge ([`exam`]);
//! 2. a scenario template with variation points is generated under a
//!    tunable rule prompt and crystallized into instances ([`scenario`],
//!    [`tuning`]);
//! 3. each instance becomes a test that is compiled, run and repaired
//!    ([`forge`], [`runner`]).
//!
//! [`coverage`] scores generated tests against ground truth.

pub mod coverage;
pub mod exam;
pub mod forge;
pub mod index;
pub mod llm;
pub mod model;
pub mod pipeline;
pub mod runner;
pub mod scenario;
pub mod tuning;

pub use coverage::{CoverageReport, MutantKillSet};
pub use exam::{OracleExam, Verdict};
pub use forge::{FinalStatus, RepairRecord};
pub use index::SymbolIndex;
pub use llm::{CompletionRequest, Gateway, LlmError};
pub use model::{
    FocalMethod, KnowledgeItem, Oracle, RulePrompt, ScenarioInstance, ScenarioTemplate, TestCase, TestOrigin,
    VariationPoint,
};
pub use pipeline::{Config, PipelineError, RunManifest};
pub use runner::{RunOutcome, RunStatus};
