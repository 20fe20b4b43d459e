use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

/// Copies the named fixtures side by side so relative config paths still work.
fn stage(names: &[&str]) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    for name in names {
        let src = fixtures().join(name);
        for entry in walkdir::WalkDir::new(&src) {
            let entry = entry.unwrap();
            let rel = entry.path().strip_prefix(&src).unwrap();
            if rel.components().any(|c| c.as_os_str() == ".scengen" || c.as_os_str() == "build") {
                continue;
            }
            let dst = dir.path().join(name).join(rel);
            if entry.file_type().is_dir() {
                std::fs::create_dir_all(&dst).unwrap();
            } else {
                std::fs::copy(entry.path(), &dst).unwrap();
            }
        }
    }
    dir
}

fn scengen(cwd: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_scengen"))
        .args(args)
        .current_dir(cwd)
        .env_remove("SCENGEN_LLM_ENDPOINT")
        .env_remove("SCENGEN_LLM_MODEL")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn index_of_empty_dir_is_input_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir(dir.path().join("empty")).unwrap();
    let o = scengen(dir.path(), &["--out", "out", "index", "--root", "empty"]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn index_then_reload() {
    let dir = stage(&["setpaint"]);
    let cwd = dir.path().join("setpaint");
    let o = scengen(&cwd, &["--config", "scengen.toml", "--out", "out", "index"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("classes"));
    assert!(cwd.join(".scengen/index.json").exists());
    assert!(cwd.join("out/manifest.json").exists());
    let again = scengen(&cwd, &["--config", "scengen.toml", "--out", "out", "index"]);
    assert_eq!(stdout(&o), stdout(&again));
}

#[test]
fn missing_config_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = scengen(dir.path(), &["exam", "--focal", "A.b", "--test", "T.c"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn live_provider_without_endpoint_is_config_error() {
    let dir = stage(&["setpaint"]);
    let cwd = dir.path().join("setpaint");
    let toml = std::fs::read_to_string(cwd.join("scengen.toml")).unwrap();
    let toml = toml.replace("provider = \"scripted\"\nscript = \"script.json\"", "provider = \"openai\"");
    std::fs::write(cwd.join("live.toml"), toml).unwrap();
    let o = scengen(&cwd, &["--config", "live.toml", "--out", "out", "exam", "--focal", "Canvas.setPaint", "--test", "CanvasTest.testSetPaintLinearGradient"]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(scengen(dir.path(), &["generalize", "--stage", "4", "--focal", "a.b", "--test", "c.d"]).status.code(), Some(2));
    assert_eq!(scengen(dir.path(), &["frobnicate"]).status.code(), Some(2));
}

#[test]
fn unknown_focal_is_input_error() {
    let dir = stage(&["setpaint"]);
    let cwd = dir.path().join("setpaint");
    let o = scengen(&cwd, &["--config", "scengen.toml", "--out", "out", "exam", "--focal", "Canvas.nothing", "--test", "CanvasTest.testSetPaintLinearGradient"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn exam_without_assertions_skips_stage_one() {
    let dir = stage(&["setpaint"]);
    let cwd = dir.path().join("setpaint");
    let o = scengen(&cwd, &["--config", "scengen.toml", "--out", "out", "exam", "--focal", "Canvas.setPaint", "--test", "CanvasTest.testSetPaintNoCheck"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("stage 1 skipped"));
    assert!(!cwd.join("out/stage2").exists());
}

#[test]
fn generalize_stops_at_requested_stage() {
    let dir = stage(&["setpaint"]);
    let cwd = dir.path().join("setpaint");
    let o = scengen(
        &cwd,
        &["--config", "scengen.toml", "--out", "out", "generalize", "--stage", "2", "--focal", "Canvas.setPaint", "--test", "CanvasTest.testSetPaintLinearGradient"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(cwd.join("out/stage1/summary.json").exists());
    assert!(cwd.join("out/stage2/template.template.json").exists());
    assert!(!cwd.join("out/stage3").exists());
}

#[test]
fn generalize_full_run_writes_tests() {
    let dir = stage(&["setpaint"]);
    let cwd = dir.path().join("setpaint");
    let o = scengen(
        &cwd,
        &["--config", "scengen.toml", "--out", "out", "generalize", "--focal", "Canvas.setPaint", "--test", "CanvasTest.testSetPaintLinearGradient"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("stage 3: 3/3 tests passing"), "{}", stdout(&o));
    let host = std::fs::read_to_string(cwd.join("out/stage3/tests/src/test/java/org/demo/canvas/CanvasTest.java")).unwrap();
    assert!(host.contains("setPaintDefaultPageLayoutFillOvalRadialGradientPaint"));
    assert!(host.contains("testSetPaintLinearGradient"));
}

#[test]
fn eval_prints_hand_value() {
    let dir = stage(&["eval"]);
    let cwd = dir.path().join("eval");
    let o = scengen(&cwd, &["--out", "out", "eval", "--gt", "gt", "--gen", "gen", "--reports", "reports-xml"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("0.5417"));
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(cwd.join("out/summary.json")).unwrap()).unwrap();
    let cov = summary[0]["coverage"].as_f64().unwrap();
    assert!((cov - 13.0 / 24.0).abs() < 1e-12);
}

#[test]
fn eval_missing_reports_is_input_error() {
    let dir = stage(&["eval"]);
    let cwd = dir.path().join("eval");
    let o = scengen(&cwd, &["--out", "out", "eval", "--gt", "gt", "--gen", "gen"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn tune_one_epoch_one_checkpoint() {
    let dir = stage(&["setpaint", "tuning"]);
    let cwd = dir.path().join("tuning");
    let o = scengen(&cwd, &["--config", "scengen.toml", "--out", "out", "tune", "--dataset", "dataset.json", "--epochs", "1", "--batch-size", "2"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let checkpoints: Vec<_> = std::fs::read_dir(cwd.join("out/checkpoints")).unwrap().collect();
    assert_eq!(checkpoints.len(), 1);
    assert!(cwd.join("out/rules.rules.json").exists());
}
