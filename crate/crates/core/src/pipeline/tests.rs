use std::path::{Path, PathBuf};

use super::eval::{evaluate, load_eval_inputs, EvalMetric};
use super::generalize::{resolve, StageGate};
use super::*;
use crate::index::build_index;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

#[test]
fn config_paths_resolve_against_file() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("scengen.toml"),
        "[project]\nname = \"p\"\nroot = \"proj\"\nrun_test_cmd = \"true\"\n\n[llm]\nprovider = \"scripted\"\nscript = \"s.json\"\n\n[pipeline]\nq_max = 4\n",
    )
    .unwrap();
    let cfg = Config::load(&dir.path().join("scengen.toml")).unwrap();
    let base = dir.path().canonicalize().unwrap();
    assert_eq!(cfg.project.root, base.join("proj"));
    assert_eq!(cfg.llm.script.as_deref(), Some(base.join("s.json").as_path()));
    assert_eq!(cfg.pipeline.q_max, 4);
    assert_eq!(cfg.pipeline.max_repair, PipelineSettings::default().max_repair);
    assert_eq!(cfg.index_path(), base.join("proj").join(DEFAULT_INDEX_PATH));
}

#[test]
fn config_errors_are_config_exit() {
    let dir = tempfile::tempdir().unwrap();
    let missing = Config::load(&dir.path().join("nope.toml")).unwrap_err();
    assert_eq!(missing.exit_code(), 3);
    std::fs::write(dir.path().join("bad.toml"), "[project]\nname = \"p\"\n[unknown]\nx = 1\n").unwrap();
    assert_eq!(Config::load(&dir.path().join("bad.toml")).unwrap_err().exit_code(), 3);
}

#[test]
fn exit_codes() {
    assert_eq!(PipelineError::Config("x".into()).exit_code(), 3);
    assert_eq!(PipelineError::Input("x".into()).exit_code(), 2);
    assert_eq!(PipelineError::at(Stage::Exam, "boom").exit_code(), 1);
    let e = PipelineError::from((Stage::Tune, crate::tuning::TuningError::Llm(LlmError::Config("no key".into()))));
    assert_eq!(e.exit_code(), 3);
}

#[test]
fn transcript_spec_parsing() {
    let r: TranscriptSpec = "record:out/t.jsonl".parse().unwrap();
    assert_eq!(r.mode, TranscriptMode::Record);
    assert_eq!(r.path, PathBuf::from("out/t.jsonl"));
    let p: TranscriptSpec = "replay:/abs/t.jsonl".parse().unwrap();
    assert_eq!(p.mode, TranscriptMode::Replay);
    assert!("replay:".parse::<TranscriptSpec>().is_err());
    assert!("play:x".parse::<TranscriptSpec>().is_err());
    assert!("x.jsonl".parse::<TranscriptSpec>().is_err());
}

#[test]
fn manifest_digest_is_stable_and_sensitive() {
    let mut a = RunManifest::new("exam", None, 7, None, Path::new("out"));
    a.args.insert("focal".into(), "Canvas.setPaint".into());
    let b = a.clone();
    assert_eq!(a.digest(), b.digest());
    assert_eq!(a.digest().len(), 64);
    let mut c = a.clone();
    c.seed = 8;
    assert_ne!(a.digest(), c.digest());
}

#[test]
fn replay_without_transcript_is_input_error() {
    let spec = TranscriptSpec { mode: TranscriptMode::Replay, path: PathBuf::from("/nonexistent/t.jsonl") };
    let mut m = RunManifest::new("exam", None, 0, Some(spec), Path::new("out"));
    let err = build_gateway(&LlmConfig::default(), &mut m).err().unwrap();
    assert_ne!(err.exit_code(), 1);
}

#[test]
fn stage_gate_bounds() {
    assert_eq!(StageGate::try_from(1).unwrap(), StageGate::Exam);
    assert_eq!(StageGate::try_from(3).unwrap(), StageGate::Generate);
    assert!(StageGate::try_from(0).is_err());
    assert!(StageGate::try_from(4).is_err());
}

#[test]
fn selectors_resolve() {
    let index = build_index(&fixture("setpaint")).unwrap();
    let by_dot = resolve(&index, "Canvas.setPaint", "focal method").unwrap();
    let by_hash = resolve(&index, "org.demo.canvas.Canvas#setPaint", "focal method").unwrap();
    assert_eq!(by_dot.key, by_hash.key);
    assert_eq!(resolve(&index, &by_dot.key, "focal method").unwrap().key, by_dot.key);
    let missing = resolve(&index, "Canvas.noSuchMethod", "focal method").unwrap_err();
    assert_eq!(missing.exit_code(), 2);
    assert_eq!(resolve(&index, "setPaint", "focal method").unwrap_err().exit_code(), 2);
}

#[test]
fn artifact_tree_writes_canonical_json() {
    let dir = tempfile::tempdir().unwrap();
    let tree = ArtifactTree::create(&dir.path().join("run")).unwrap();
    let p = tree.write_json("a/b.json", &serde_json::json!({"z": 1, "a": [1, 2]})).unwrap();
    let text = std::fs::read_to_string(p).unwrap();
    assert!(text.find("\"a\"").unwrap() < text.find("\"z\"").unwrap());
    tree.write_manifest(&RunManifest::new("index", None, 0, None, Path::new("run"))).unwrap();
    assert!(dir.path().join("run/manifest.json").exists());
}

#[test]
fn eval_fixture_hand_value() {
    let root = fixture("eval");
    for reports in ["reports", "reports-xml"] {
        let inputs = load_eval_inputs(&root.join("gt"), &root.join("gen"), Some(&root.join(reports))).unwrap();
        let summary = evaluate(&inputs, EvalMetric::Mutation, None).unwrap();
        assert_eq!(summary.rows.len(), 1);
        assert!((summary.rows[0].coverage - 13.0 / 24.0).abs() < 1e-12, "{reports}: {}", summary.rows[0].coverage);
        assert_eq!(summary.rows[0].generated, 5);
    }
}

#[test]
fn eval_llm_metric_needs_provider() {
    let root = fixture("eval");
    let inputs = load_eval_inputs(&root.join("gt"), &root.join("gen"), None).unwrap();
    assert_eq!(evaluate(&inputs, EvalMetric::Llm, None).unwrap_err().exit_code(), 3);
    assert_eq!(evaluate(&inputs, EvalMetric::Mutation, None).unwrap_err().exit_code(), 2);
}
