use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use walkdir::WalkDir;

use super::{PipelineError, Stage};
use crate::coverage::{ingest_mutation_report, llm_assessed, match_mutation, CoverageReport, KillMatrix, MappingProfile, Metric, MutationReport};
use crate::llm::Gateway;
use crate::model::{FocalMethod, TestCase, TestOrigin};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMetric {
    Mutation,
    Llm,
    Both,
}

impl std::str::FromStr for EvalMetric {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "mutation" => Ok(Self::Mutation),
            "llm" => Ok(Self::Llm),
            "both" => Ok(Self::Both),
            other => Err(format!("unknown metric `{other}` (mutation, llm, both)")),
        }
    }
}

/// Tests grouped by focal method id.
#[derive(Debug, Clone, Default)]
pub struct EvalInputs {
    pub focal: BTreeMap<String, FocalMethod>,
    pub gt: BTreeMap<String, Vec<TestCase>>,
    pub gen: BTreeMap<String, Vec<TestCase>>,
    pub kills: Option<KillMatrix>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub focal_id: String,
    pub metric: Metric,
    pub ground_truth: usize,
    pub generated: usize,
    pub excluded: usize,
    pub coverage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub reports: Vec<CoverageReport>,
    pub rows: Vec<SummaryRow>,
}

impl EvalSummary {
    pub fn table(&self) -> String {
        let mut s = format!("{:<60} {:<10} {:>4} {:>4} {:>8}\n", "focal method", "metric", "gt", "gen", "Cov");
        for r in &self.rows {
            let metric = match r.metric {
                Metric::MutationBased => "mutation",
                Metric::LlmAssessed => "llm",
            };
            s.push_str(&format!("{:<60} {:<10} {:>4} {:>4} {:>8.4}\n", r.focal_id, metric, r.ground_truth, r.generated, r.coverage));
        }
        s
    }
}

fn json_files(dir: &Path, suffix: &str) -> Vec<std::path::PathBuf> {
    WalkDir::new(dir)
        .sort_by_file_name()
        .into_iter()
        .filter_map(Result::ok)
        .filter(|e| e.file_type().is_file() && e.file_name().to_string_lossy().ends_with(suffix))
        .map(|e| e.into_path())
        .collect()
}

fn read_tests(path: &Path) -> Result<Vec<TestCase>, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(|e| PipelineError::Input(format!("{}: {e}", path.display())))?;
    if let Ok(many) = serde_json::from_str::<Vec<TestCase>>(&text) {
        return Ok(many);
    }
    serde_json::from_str::<TestCase>(&text)
        .map(|t| vec![t])
        .map_err(|e| PipelineError::Input(format!("{}: {e}", path.display())))
}

fn read_focals(dir: &Path, into: &mut BTreeMap<String, FocalMethod>) -> Result<(), PipelineError> {
    for path in json_files(dir, ".focal.json") {
        let text = std::fs::read_to_string(&path).map_err(|e| PipelineError::Input(format!("{}: {e}", path.display())))?;
        let fm: FocalMethod = serde_json::from_str(&text).map_err(|e| PipelineError::Input(format!("{}: {e}", path.display())))?;
        into.insert(fm.id.clone(), fm);
    }
    Ok(())
}

/// Ground truth: every `*.test.json` under `gt`. Generated: tests of
/// non-developer origin under `gen`, so a `generalize` output tree can be
/// passed as is. Mutation reports (`.json` canonical, `.xml` mapped) under
/// `reports` are merged into one kill matrix.
pub fn load_eval_inputs(gt: &Path, gen: &Path, reports: Option<&Path>) -> Result<EvalInputs, PipelineError> {
    let mut inputs = EvalInputs::default();
    read_focals(gt, &mut inputs.focal)?;
    read_focals(gen, &mut inputs.focal)?;
    for path in json_files(gt, ".test.json") {
        for t in read_tests(&path)? {
            inputs.gt.entry(t.focal_id.clone()).or_default().push(t);
        }
    }
    for path in json_files(gen, ".test.json") {
        for t in read_tests(&path)?.into_iter().filter(|t| t.origin != TestOrigin::Developer) {
            inputs.gen.entry(t.focal_id.clone()).or_default().push(t);
        }
    }
    if let Some(dir) = reports {
        let mut merged = MutationReport::default();
        let files: Vec<_> = WalkDir::new(dir)
            .sort_by_file_name()
            .into_iter()
            .filter_map(Result::ok)
            .filter(|e| e.file_type().is_file())
            .filter(|e| matches!(e.path().extension().and_then(|x| x.to_str()), Some("json" | "xml")))
            .map(|e| e.into_path())
            .collect();
        if files.is_empty() {
            return Err(PipelineError::Input(format!("no mutation reports under {}", dir.display())));
        }
        for path in files {
            let report = ingest_mutation_report(&path, MappingProfile::detect(&path)).map_err(|e| PipelineError::Input(e.to_string()))?;
            merged.mutants.extend(report.mutants);
        }
        inputs.kills = Some(KillMatrix::from_report(&merged));
    }
    Ok(inputs)
}

/// Scores every focal method with ground truth; focal methods without
/// generated tests score 0.
pub fn evaluate(inputs: &EvalInputs, metric: EvalMetric, llm: Option<&Gateway>) -> Result<EvalSummary, PipelineError> {
    let mut summary = EvalSummary { reports: Vec::new(), rows: Vec::new() };
    let empty = Vec::new();
    for (focal_id, gt) in &inputs.gt {
        let gen = inputs.gen.get(focal_id).unwrap_or(&empty);
        let mut reports = Vec::new();
        if matches!(metric, EvalMetric::Mutation | EvalMetric::Both) {
            let kills = inputs.kills.as_ref().ok_or_else(|| PipelineError::Input("mutation metric needs --reports".into()))?;
            let gt_sets: Vec<_> = gt.iter().map(|t| kills.kill_set(&t.id)).collect();
            let gen_sets: Vec<_> = gen.iter().map(|t| kills.kill_set(&t.id)).collect();
            reports.push(match_mutation(focal_id, &gt_sets, &gen_sets));
        }
        if matches!(metric, EvalMetric::Llm | EvalMetric::Both) {
            let llm = llm.ok_or_else(|| PipelineError::Config("llm metric needs a provider".into()))?;
            let fm = inputs
                .focal
                .get(focal_id)
                .ok_or_else(|| PipelineError::Input(format!("no focal method document for {focal_id}")))?;
            reports.push(llm_assessed(fm, gt, gen, llm).map_err(|e| PipelineError::from((Stage::Eval, e)))?);
        }
        for r in reports {
            summary.rows.push(SummaryRow {
                focal_id: focal_id.clone(),
                metric: r.metric,
                ground_truth: gt.len(),
                generated: gen.len(),
                excluded: r.excluded.len(),
                coverage: r.aggregate,
            });
            summary.reports.push(r);
        }
    }
    Ok(summary)
}
