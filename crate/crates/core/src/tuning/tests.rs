use proptest::prelude::*;

use super::*;
use crate::llm::{ScriptRule, ScriptedProvider};
use crate::model::{TemplateStep, TestOrigin, VariationPoint, VpKind};

fn tpl(names: &[&str]) -> ScenarioTemplate {
    ScenarioTemplate {
        focal_id: String::new(),
        provenance: String::new(),
        steps: vec![TemplateStep {
            step_id: 1,
            action: "act".into(),
            vps: names
                .iter()
                .map(|n| VariationPoint { name: n.to_string(), description: "d".into(), candidates: vec![], kind: VpKind::AbstractChoice })
                .collect(),
            deps: vec![],
        }],
    }
}

fn tpl_text(names: &[&str]) -> String {
    let mut s = String::from("STEP 1: do the thing\n");
    for n in names {
        s.push_str(&format!("  VP {n}: factor {n}\n"));
    }
    s
}

fn sample(i: usize, project: &str) -> TuningSample {
    let fm = FocalMethod {
        id: format!("{project}:p.C{i}.m()"),
        source: format!("void m() {{ /* sample {i} */ }}"),
        file_skeleton: "class C { void m(); }".into(),
        project: project.into(),
        commit: "c".into(),
    };
    let tc = TestCase::new(format!("t{i}"), format!("t{i}"), "@Test void t() { assertTrue(true); }", &fm.id, TestOrigin::Developer);
    TuningSample { id: format!("s{i}"), project: project.into(), fm, tc, knowledge: vec![], truth: parse_template(&tpl_text(&["a", "d"])).unwrap() }
}

#[test]
fn vp_scores_examples() {
    let s = evaluate_vp(&tpl(&["a", "b", "c"]), &tpl(&["a", "d"]));
    assert!((s.precision - 1.0 / 3.0).abs() < 1e-9);
    assert!((s.recall - 0.5).abs() < 1e-9);
    assert!((s.f1 - 0.4).abs() < 1e-9);
    assert_eq!(evaluate_vp(&tpl(&["a", "d"]), &tpl(&["d", "a"])), VpScores { precision: 1.0, recall: 1.0, f1: 1.0 });
    assert_eq!(evaluate_vp(&tpl(&[]), &tpl(&["a"])), VpScores::default());
}

#[test]
fn judged_matching() {
    let llm = Gateway::new(ScriptedProvider::new(vec![ScriptRule::new(TAG_VP_MATCH, "MATCH: paint = paint_style")]));
    let s = evaluate_vp_judged(&tpl(&["paint", "shape_kind"]), &tpl(&["paint_style"]), &llm).unwrap();
    assert_eq!(s, VpScores::from_counts(1, 2, 1));
}

#[test]
fn directives_apply_against_old_indices() {
    let rules: Vec<String> = ["r1", "r2", "r3"].iter().map(|s| s.to_string()).collect();
    let ds = vec![
        Directive { op: DirectiveOp::Delete { index: 1 }, generalized: false },
        Directive { op: DirectiveOp::Modify { index: 3, rule: "r3'".into() }, generalized: true },
        Directive::add("r4"),
        Directive::add("r2"),
        Directive { op: DirectiveOp::Delete { index: 9 }, generalized: false },
    ];
    assert_eq!(apply_directives(&rules, &ds), ["r2", "r3'", "r4"]);
}

/// Script answering every call with fixed text per tag.
fn uniform_script() -> Gateway {
    Gateway::new(ScriptedProvider::new(vec![
        ScriptRule::new(TAG_TEMPLATE, format!("TEMPLATE:\n{}", tpl_text(&["a", "b"]))).repeating(),
        ScriptRule::new(TAG_FEEDBACK, "ADD: Treat the input kind as a variation point.").repeating(),
        ScriptRule::new(TAG_UPDATE, "ADD: Treat the input kind as a variation point.").repeating(),
        ScriptRule::new(TAG_EVAL, format!("TEMPLATE:\n{}", tpl_text(&["a", "d"]))).repeating(),
    ]))
}

#[test]
fn call_count_law() {
    let llm = uniform_script();
    let train: Vec<TuningSample> = (0..25).map(|i| sample(i, "x")).collect();
    let test: Vec<TuningSample> = (25..30).map(|i| sample(i, "y")).collect();
    let cfg = TuningConfig { epochs: 3, batch_size: 5, ..TuningConfig::default() };
    let run = tune_split(&train, &test, &llm, &cfg).unwrap();
    assert_eq!(run.update_calls, 15);
    assert_eq!(llm.count_tag(TAG_UPDATE), 15);
    assert_eq!(run.checkpoints.len(), 3);
    assert_eq!(llm.count_tag(TAG_TEMPLATE), 75);
    assert_eq!(llm.count_tag(TAG_EVAL), 15);

    let llm = uniform_script();
    let cfg = TuningConfig { epochs: 1, batch_size: 3, ..TuningConfig::default() };
    let run = tune_split(&train[..6], &test, &llm, &cfg).unwrap();
    assert_eq!((run.update_calls, run.checkpoints.len()), (2, 1));
}

#[test]
fn uneven_last_batch_still_updates() {
    let llm = uniform_script();
    let train: Vec<TuningSample> = (0..7).map(|i| sample(i, "x")).collect();
    let cfg = TuningConfig { epochs: 2, batch_size: 5, ..TuningConfig::default() };
    let run = tune_split(&train, &train[..1], &llm, &cfg).unwrap();
    assert_eq!(run.update_calls, 4);
}

#[test]
fn checkpoints_are_epoch_snapshots() {
    let llm = Gateway::new(ScriptedProvider::new(vec![
        ScriptRule::new(TAG_TEMPLATE, format!("TEMPLATE:\n{}", tpl_text(&["a"]))).repeating(),
        ScriptRule::new(TAG_FEEDBACK, "ADD: x").repeating(),
        ScriptRule::new(TAG_UPDATE, "ADD: rule one"),
        ScriptRule::new(TAG_UPDATE, "ADD: rule two"),
        ScriptRule::new(TAG_EVAL, format!("TEMPLATE:\n{}", tpl_text(&["a"]))).when("1. rule one\n2. rule two"),
        ScriptRule::new(TAG_EVAL, format!("TEMPLATE:\n{}", tpl_text(&["a", "d"]))).when("1. rule one"),
    ]));
    let train: Vec<TuningSample> = (0..2).map(|i| sample(i, "x")).collect();
    let cfg = TuningConfig { epochs: 2, batch_size: 2, ..TuningConfig::default() };
    let run = tune_split(&train, &[sample(9, "y")], &llm, &cfg).unwrap();
    assert_eq!(run.checkpoints[0].prompt.rules, ["rule one"]);
    assert_eq!(run.checkpoints[1].prompt.rules, ["rule one", "rule two"]);
    assert_eq!(run.checkpoints[0].metrics.f1, 1.0);
    assert!((run.checkpoints[1].metrics.f1 - 2.0 / 3.0).abs() < 1e-12);
    assert_eq!(run.selected, 0);
    assert_eq!(run.selected_prompt().version, 1);
}

#[test]
fn tie_goes_to_earliest() {
    let c = |epoch, f1| Checkpoint { epoch, prompt: RulePrompt::base(), metrics: VpScores { precision: f1, recall: f1, f1 } };
    assert_eq!(select_checkpoint(&[c(1, 0.5), c(2, 0.7), c(3, 0.7)]), 1);
    assert_eq!(select_checkpoint(&[c(1, 0.5), c(2, 0.5)]), 0);
}

#[test]
fn empty_train_split() {
    let llm = uniform_script();
    let all: Vec<TuningSample> = (0..3).map(|i| sample(i, "only")).collect();
    let cfg = TuningConfig { split: SplitSpec::LeaveOneProjectOut { project: "only".into() }, ..TuningConfig::default() };
    assert!(matches!(tune(&all, &llm, &cfg), Err(TuningError::EmptyTrainSplit)));
}

#[test]
fn splits() {
    let all: Vec<TuningSample> = (0..10).map(|i| sample(i, if i < 4 { "a" } else { "b" })).collect();
    let (train, test) = split_dataset(&all, &SplitSpec::LeaveOneProjectOut { project: "a".into() }, 0);
    assert_eq!((train.len(), test.len()), (6, 4));
    assert!(test.iter().all(|s| s.project == "a"));
    let spec = SplitSpec::Random { test_fraction: 0.3 };
    let (tr1, te1) = split_dataset(&all, &spec, 5);
    let (tr2, te2) = split_dataset(&all, &spec, 5);
    assert_eq!((tr1.len(), te1.len()), (7, 3));
    assert_eq!((tr1, te1), (tr2, te2));
}

#[test]
fn synthesis_merges_and_generalizes() {
    let llm = Gateway::new(ScriptedProvider::new(vec![
        ScriptRule::new(TAG_UPDATE, "ADD: Vary the paint type.\nADD: Vary the shape.").when("Feedback 2"),
        ScriptRule::new(TAG_UPDATE, "ADD [generalized]: Vary every polymorphic argument."),
    ]));
    let fb = vec![vec![Directive::add("Vary the paint type.")], vec![Directive::add("Vary the shape.")]];
    let out = synthesize_feedback(&RulePrompt::base(), &fb, &llm).unwrap();
    assert!(out.contains(&Directive::add("Vary the paint type.")) && out.contains(&Directive::add("Vary the shape.")));
    let conflict = vec![vec![Directive::add("Fix the paint.")]];
    let out = synthesize_feedback(&RulePrompt::base(), &conflict, &llm).unwrap();
    assert_eq!(out.len(), 1);
    assert!(out[0].generalized);
}

#[test]
fn dataset_loads_text_truth() {
    let s = sample(1, "x");
    let raw = serde_json::json!({
        "samples": [{
            "id": "s1", "project": "x",
            "focal_method": s.fm, "test": s.tc,
            "truth": tpl_text(&["a", "d"]),
        }]
    });
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.json");
    std::fs::write(&path, raw.to_string()).unwrap();
    let loaded = load_dataset(&path).unwrap();
    assert_eq!(loaded[0].truth.vp_names().collect::<Vec<_>>(), ["a", "d"]);
}

proptest! {
    #[test]
    fn metric_laws(matched in 0usize..6, extra_p in 0usize..6, extra_t in 0usize..6) {
        let s = VpScores::from_counts(matched, matched + extra_p, matched + extra_t);
        for v in [s.precision, s.recall, s.f1] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        if s.precision + s.recall > 0.0 {
            prop_assert!((s.f1 - 2.0 * s.precision * s.recall / (s.precision + s.recall)).abs() < 1e-12);
        }
    }
}
