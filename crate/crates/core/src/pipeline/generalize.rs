use std::collections::BTreeSet;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{ArtifactTree, Config, PipelineError, Stage};
use crate::exam::{run_stage1, ExamContext, ExamSettings, Stage1Result, Verdict};
use crate::forge::{derive_test_name, generate_test, rename_method, repair, FinalStatus, RepairContext, RepairRecord, StopReason};
use crate::index::{SymbolEntry, SymbolIndex};
use crate::llm::Gateway;
use crate::model::artifact::serialize_instance;
use crate::model::{parse_artifact, render_template, FocalMethod, RulePrompt, ScenarioInstance, SymbolKind, TestCase};
use crate::runner::{TestFile, TestRunner};
use crate::scenario::{crystallize, generate_template, select_oracle, TemplateSettings};

/// Last stage to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageGate {
    Exam = 1,
    Template = 2,
    Generate = 3,
}

impl TryFrom<u8> for StageGate {
    type Error = String;
    fn try_from(n: u8) -> Result<Self, String> {
        match n {
            1 => Ok(Self::Exam),
            2 => Ok(Self::Template),
            3 => Ok(Self::Generate),
            _ => Err(format!("stage must be 1, 2 or 3, got {n}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneralizeRequest {
    /// Index key, or `Class.method` / `Class#method` when unambiguous.
    pub focal: String,
    pub test: String,
    pub seed: u64,
    pub gate: StageGate,
    pub workers: usize,
}

/// Picks an oracle index for an instance; `None` keeps the primary.
pub type OracleChooser<'a> = dyn Fn(&ScenarioInstance, usize) -> Option<usize> + 'a;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestSummary {
    pub name: String,
    pub instance: usize,
    pub final_status: Option<FinalStatus>,
    pub stop: Option<StopReason>,
    pub iterations: u32,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneralizeOutcome {
    pub focal_id: String,
    pub test_id: String,
    pub gate: StageGate,
    pub stage1_skipped: bool,
    pub exams: usize,
    pub exams_passed: usize,
    pub knowledge: usize,
    pub variation_points: Vec<String>,
    pub instances: usize,
    pub rejected_bundles: usize,
    pub tests: Vec<TestSummary>,
}

impl GeneralizeOutcome {
    pub fn passing(&self) -> usize {
        self.tests.iter().filter(|t| t.final_status == Some(FinalStatus::Passing)).count()
    }

    pub fn errored(&self) -> usize {
        self.tests.iter().filter(|t| t.error.is_some()).count()
    }
}

pub(super) fn resolve<'a>(index: &'a SymbolIndex, selector: &str, what: &str) -> Result<&'a SymbolEntry, PipelineError> {
    if let Some(e) = index.get(selector) {
        return Ok(e);
    }
    let sel = selector.replace('#', ".");
    let head = sel.split('(').next().unwrap_or(&sel);
    let (class, method) = head
        .rsplit_once('.')
        .ok_or_else(|| PipelineError::Input(format!("{what} `{selector}`: expected Class.method")))?;
    let mut found: Vec<&SymbolEntry> =
        index.find_methods(class, method).into_iter().filter(|e| e.kind == SymbolKind::Method).collect();
    if sel.contains('(') {
        found.retain(|e| e.key.ends_with(&sel) || e.key.replace(' ', "").ends_with(&sel.replace(' ', "")));
    }
    match found.as_slice() {
        [one] => Ok(*one),
        [] => Err(PipelineError::Input(format!("{what} `{selector}` not found in the index"))),
        many => Err(PipelineError::Input(format!(
            "{what} `{selector}` is ambiguous: {}",
            many.iter().map(|e| e.key.as_str()).collect::<Vec<_>>().join(", ")
        ))),
    }
}

fn load_rules(cfg: &Config) -> Result<RulePrompt, PipelineError> {
    match &cfg.pipeline.rules {
        None => Ok(RulePrompt::base()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| PipelineError::Config(format!("{}: {e}", p.display())))?;
            parse_artifact(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", p.display())))
        }
    }
}

fn write_stage1(out: &ArtifactTree, fm: &FocalMethod, tc: &TestCase, s1: &Stage1Result) -> Result<(), PipelineError> {
    out.write_json("stage1/focal.focal.json", fm)?;
    out.write_json("stage1/initial.test.json", tc)?;
    for (i, exam) in s1.exams.iter().enumerate() {
        out.write_json(&format!("stage1/exams/exam-{i:02}.exam.json"), exam)?;
    }
    for (i, outcome) in s1.outcomes.iter().enumerate() {
        out.write_json(&format!("stage1/exams/exam-{i:02}.outcome.json"), outcome)?;
    }
    out.write_json("stage1/knowledge.knowledge.json", &s1.knowledge)?;
    out.write_json(
        "stage1/summary.json",
        &serde_json::json!({
            "stage_skipped": s1.stage_skipped,
            "all_passed": s1.all_passed(),
            "skipped": s1.skipped,
        }),
    )?;
    Ok(())
}

/// Names for each instance, unique against the host file and each other.
fn unique_names(fm: &FocalMethod, instances: &[ScenarioInstance], taken: &mut BTreeSet<String>) -> Vec<String> {
    instances
        .iter()
        .map(|inst| {
            let base = derive_test_name(fm, inst);
            let mut name = base.clone();
            let mut n = 2;
            while taken.contains(&name) {
                name = format!("{base}{n}");
                n += 1;
            }
            taken.insert(name.clone());
            name
        })
        .collect()
}

type Slot = Option<Result<(RepairRecord, TestCase), String>>;

/// Runs stages 1 to 3 for one focal method and one initial test, writing
/// every intermediate artifact under `out`.
#[allow(clippy::too_many_arguments)]
pub fn generalize(
    cfg: &Config,
    index: &SymbolIndex,
    runner: &dyn TestRunner,
    llm: &Gateway,
    req: &GeneralizeRequest,
    chooser: Option<&OracleChooser>,
    out: &ArtifactTree,
) -> Result<GeneralizeOutcome, PipelineError> {
    let p = &cfg.pipeline;
    let fm_entry = resolve(index, &req.focal, "focal method")?;
    let fm = index
        .focal_method(&cfg.project.name, &cfg.project.commit, &fm_entry.key)
        .ok_or_else(|| PipelineError::Input(format!("focal method `{}` not found", req.focal)))?;
    let tc_entry = resolve(index, &req.test, "test")?;
    let tc = index.test_case(&tc_entry.key, &fm.id).expect("resolved key is indexed");
    let host_path = tc.file.clone().unwrap_or_else(|| tc_entry.file.clone());
    let host = TestFile::load(&cfg.project.root, &host_path)
        .map_err(|e| PipelineError::Input(format!("cannot read test file {host_path}: {e}")))?;
    let scope = index.neighborhood(&fm, &tc);

    let cx = ExamContext { fm: &fm, tc: &tc, index, scope: &scope, llm };
    let settings = ExamSettings { q_max: p.q_max, max_iter: p.max_exam_iter, seed: req.seed };
    let s1 = run_stage1(&cx, &host, runner, &settings).map_err(|e| PipelineError::from((Stage::Exam, e)))?;
    write_stage1(out, &fm, &tc, &s1)?;
    let mut outcome = GeneralizeOutcome {
        focal_id: fm.id.clone(),
        test_id: tc.id.clone(),
        gate: req.gate,
        stage1_skipped: s1.stage_skipped,
        exams: s1.exams.len(),
        exams_passed: s1.outcomes.iter().filter(|o| o.verdict == Verdict::Passed).count(),
        knowledge: s1.knowledge.len(),
        variation_points: Vec::new(),
        instances: 0,
        rejected_bundles: 0,
        tests: Vec::new(),
    };
    if req.gate == StageGate::Exam {
        out.write_json("summary.json", &outcome)?;
        return Ok(outcome);
    }

    let rules = load_rules(cfg)?;
    let ts = TemplateSettings { max_queries: p.max_template_queries, knowledge_budget: p.knowledge_budget };
    let generation = generate_template(&fm, &tc, &s1.knowledge, &rules, llm, index, &ts)
        .map_err(|e| PipelineError::from((Stage::Template, e)))?;
    let template = &generation.template;
    out.write_json("stage2/template.template.json", template)?;
    out.write_text("stage2/template.txt", &render_template(template))?;
    out.write_json("stage2/generation.json", &serde_json::json!({ "rounds": generation.rounds, "truncations": generation.truncations }))?;
    out.write_json("stage2/knowledge.knowledge.json", &generation.knowledge)?;

    let cryst = crystallize(template, &fm, &tc, &generation.knowledge, llm, p.bundle_ceiling)
        .map_err(|e| PipelineError::from((Stage::Crystallize, e)))?;
    out.write_json("stage2/bundles.json", &cryst.bundles)?;
    out.write_json("stage2/rejected.json", &serde_json::json!({ "rejected": cryst.rejected, "over_ceiling": cryst.over_ceiling }))?;
    let mut instances = Vec::with_capacity(cryst.instances.len());
    for (i, inst) in cryst.instances.iter().enumerate() {
        let choice = chooser.and_then(|c| c(inst, i));
        let selected = select_oracle(inst, choice).map_err(|e| PipelineError::from((Stage::Crystallize, e)))?;
        let text = serialize_instance(&selected).map_err(|e| PipelineError::at(Stage::Crystallize, e))?;
        out.write_text(&format!("stage2/instances/instance-{i:02}.instance.json"), &text)?;
        instances.push(selected);
    }
    outcome.variation_points = template.vp_names().map(str::to_string).collect();
    outcome.instances = instances.len();
    outcome.rejected_bundles = cryst.rejected.len();
    if req.gate == StageGate::Template {
        out.write_json("summary.json", &outcome)?;
        return Ok(outcome);
    }

    let mut taken: BTreeSet<String> =
        index.declared_in(&host_path).iter().filter_map(|k| index.get(k)).map(|e| e.name.clone()).collect();
    let names = unique_names(&fm, &instances, &mut taken);
    let results: Mutex<Vec<Slot>> = Mutex::new(vec![None; instances.len()]);
    let next = AtomicUsize::new(0);
    let workers = req.workers.clamp(1, instances.len().max(1));
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= instances.len() {
                    break;
                }
                let r = forge_one(&fm, &tc, &instances[i], &names[i], &generation.knowledge, &host, runner, index, llm, p.max_repair);
                results.lock().expect("results poisoned")[i] = Some(r);
            });
        }
    });

    let mut file = host.clone();
    let mut generated = Vec::new();
    for (i, slot) in results.into_inner().expect("results poisoned").into_iter().enumerate() {
        let name = names[i].clone();
        match slot.expect("every instance processed") {
            Ok((record, case)) => {
                out.write_json(&format!("stage3/repairs/{i:02}-{name}.repair.json"), &record)?;
                if record.final_status == FinalStatus::Passing {
                    let c = file.adding(&record.imports, record.final_source(), &name);
                    file = TestFile::new(&host_path, c.source);
                }
                outcome.tests.push(TestSummary {
                    name,
                    instance: i,
                    final_status: Some(record.final_status),
                    stop: Some(record.stop),
                    iterations: record.iterations,
                    error: None,
                });
                generated.push(case);
            }
            Err(message) => {
                tracing::error!(test = %name, %message, "generation failed");
                outcome.tests.push(TestSummary { name, instance: i, final_status: None, stop: None, iterations: 0, error: Some(message) });
            }
        }
    }
    out.write_text(&format!("stage3/tests/{host_path}"), &file.text)?;
    out.write_json("stage3/generated.test.json", &generated)?;
    out.write_json("summary.json", &outcome)?;
    Ok(outcome)
}

#[allow(clippy::too_many_arguments)]
fn forge_one(
    fm: &FocalMethod,
    tc: &TestCase,
    instance: &ScenarioInstance,
    name: &str,
    knowledge: &[crate::model::KnowledgeItem],
    host: &TestFile,
    runner: &dyn TestRunner,
    index: &SymbolIndex,
    llm: &Gateway,
    max_repair: u32,
) -> Result<(RepairRecord, TestCase), String> {
    let (method, mut case) = generate_test(instance, fm, tc, knowledge, llm, name).map_err(|e| e.to_string())?;
    let cx = RepairContext { fm, instance, host, runner, index, llm, max_iter: max_repair };
    let record = repair(&cx, method).map_err(|e| e.to_string())?;
    case.source = rename_method(record.final_source(), &record.test_name, name);
    case.assertions = crate::model::detect_assertions(&case.source);
    Ok((record, case))
}
