use std::fs;
use std::sync::Arc;

use super::*;

fn project() -> (tempfile::TempDir, ProjectConfig) {
    let dir = tempfile::tempdir().unwrap();
    fs::create_dir_all(dir.path().join("tests")).unwrap();
    fs::write(dir.path().join("tests/existing.sh"), "exit 0\n").unwrap();
    let mut cfg = ProjectConfig::new("shdemo", dir.path(), "sh {test_file}");
    cfg.compile_cmd = "for f in tests/*.sh; do sh -n \"$f\" || exit 1; done".into();
    cfg.timeout_secs = 10;
    (dir, cfg)
}

fn cand(source: &str) -> Candidate {
    Candidate { file: "tests/cand.sh".into(), source: source.into(), class: "cand".into(), method: Some("run".into()) }
}

#[test]
fn passing_candidate() {
    let (_d, cfg) = project();
    let r = ProcessRunner::new(cfg);
    let out = r.run(&cand("echo fine\n")).unwrap();
    assert_eq!(out.status, RunStatus::Pass);
    assert!(out.messages.is_empty());
}

#[test]
fn syntax_error_is_compile_error() {
    let (_d, cfg) = project();
    let r = ProcessRunner::new(cfg);
    let out = r.run(&cand("if then fi (\n")).unwrap();
    assert_eq!(out.status, RunStatus::CompileError);
    assert!(out.messages.contains("cand.sh"), "{}", out.messages);
    assert!(!out.messages.contains("scengen-run-"));
}

#[test]
fn throw_before_assertion_is_execution_error() {
    let (_d, cfg) = project();
    let r = ProcessRunner::new(cfg);
    let out = r
        .run(&cand("echo 'java.lang.IllegalStateException: boom' >&2\necho '\tat cand.run(cand.sh:1)' >&2\nexit 1\n"))
        .unwrap();
    assert_eq!(out.status, RunStatus::ExecutionError);
    assert!(out.messages.contains("IllegalStateException: boom"));
}

#[test]
fn false_assertion_is_assertion_failure() {
    let (_d, cfg) = project();
    let r = ProcessRunner::new(cfg);
    let out = r.run(&cand("echo 'java.lang.AssertionError: expected:<1> but was:<2>' >&2\nexit 1\n")).unwrap();
    assert_eq!(out.status, RunStatus::AssertionFailure);
    assert!(out.messages.contains("expected:<1> but was:<2>"));
}

#[test]
fn timeout_and_unavailable() {
    let (_d, mut cfg) = project();
    cfg.timeout_secs = 1;
    let r = ProcessRunner::new(cfg.clone());
    assert!(matches!(r.run(&cand("sleep 5\n")), Err(RunnerError::TimeoutExceeded(1))));
    cfg.timeout_secs = 10;
    cfg.run_test_cmd = "no-such-build-tool-xyz {test_class}".into();
    let r = ProcessRunner::new(cfg);
    assert!(matches!(r.run(&cand("exit 0\n")), Err(RunnerError::Unavailable(_))));
}

#[test]
fn pristine_failure_is_reported() {
    let (d, cfg) = project();
    fs::write(d.path().join("tests/existing.sh"), "if then (\n").unwrap();
    let r = ProcessRunner::new(cfg);
    assert!(matches!(r.run(&cand("exit 0\n")), Err(RunnerError::PristineBuildFailed(_))));
}

#[test]
fn concurrent_runs_are_isolated() {
    let (d, mut cfg) = project();
    cfg.slots = 4;
    let r = Arc::new(ProcessRunner::new(cfg));
    let script = "test -e marker && { echo 'AssertionError: shared scratch' >&2; exit 1; }\ntouch marker\nsleep 0.2\n";
    let handles: Vec<_> = (0..4)
        .map(|_| {
            let r = Arc::clone(&r);
            std::thread::spawn(move || r.run(&cand(script)).unwrap().status)
        })
        .collect();
    for h in handles {
        assert_eq!(h.join().unwrap(), RunStatus::Pass);
    }
    assert!(!d.path().join("marker").exists());
    assert!(!d.path().join("tests/cand.sh").exists());
}

#[test]
fn classification_is_deterministic() {
    let (_d, cfg) = project();
    for log in ["x: error: y", "AssertionError", "boom", ""] {
        assert_eq!(cfg.classify(false, false, log), cfg.classify(false, false, log));
    }
    assert_eq!(cfg.classify(true, false, "AssertionError"), RunStatus::CompileError);
    assert_eq!(cfg.classify(false, true, "AssertionError"), RunStatus::Pass);
}

fn scope() -> ProjectScope {
    let mut s = ProjectScope::default();
    for f in ["src/main/java/org/demo/Canvas.java", "src/test/java/org/demo/CanvasTest.java"] {
        s.files.insert(f.into());
        s.basenames.insert(f.rsplit('/').next().unwrap().into());
    }
    s.classes.extend(["org.demo.Canvas".to_string(), "Canvas".to_string(), "CanvasTest".to_string()]);
    s
}

#[test]
fn keeps_only_project_frames() {
    let mut trace = String::from("java.lang.NullPointerException: paint is null\n");
    trace.push_str("\tat org.demo.Canvas.setPaint(Canvas.java:41)\n");
    for i in 0..5 {
        trace.push_str(&format!("\tat org.junit.runners.Runner{i}.run(Runner{i}.java:{})\n", 10 + i));
    }
    trace.push_str("\tat org.demo.CanvasTest.testSetPaint(CanvasTest.java:17)\n");
    for i in 0..5 {
        trace.push_str(&format!("\tat sun.reflect.Native{i}.invoke(Native Method)\n"));
    }
    trace.push_str("\t... 23 more\n");
    let out = filter_messages(&trace, &scope());
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(
        lines,
        [
            "java.lang.NullPointerException: paint is null",
            "\tat org.demo.Canvas.setPaint(Canvas.java:41)",
            "\tat org.demo.CanvasTest.testSetPaint(CanvasTest.java:17)",
        ]
    );
}

#[test]
fn framework_only_keeps_headline() {
    let trace = "java.lang.IllegalStateException: no runner\n\tat org.junit.Runner.run(Runner.java:10)\n\tat org.junit.Core.main(Core.java:3)\n";
    assert_eq!(filter_messages(trace, &scope()), "java.lang.IllegalStateException: no runner");
}

#[test]
fn project_diagnostic_verbatim() {
    let log = "src/test/java/org/demo/CanvasTest.java:12: error: cannot find symbol\n        canvas.fillOval(1, 2);\n              ^\n  symbol:   method fillOval(int,int)\n  location: variable canvas of type Canvas\n/opt/lib/Other.java:3: error: oops\n   x\n1 error\n";
    let out = filter_messages(log, &scope());
    assert_eq!(
        out,
        "src/test/java/org/demo/CanvasTest.java:12: error: cannot find symbol\n        canvas.fillOval(1, 2);\n              ^\n  symbol:   method fillOval(int,int)\n  location: variable canvas of type Canvas\n1 error"
    );
}

#[test]
fn test_file_edits() {
    let f = TestFile::new("src/test/java/p/CTest.java", "package p;\n\nimport org.junit.Test;\n\npublic class CTest {\n    @Test\n    public void a() {\n        x();\n    }\n}\n");
    assert_eq!(f.class, "CTest");
    let c = f.replacing("x();", "y();", "a").unwrap();
    assert!(c.source.contains("y();") && !c.source.contains("x();"));
    assert_eq!(c.method.as_deref(), Some("a"));
    let c = f.adding(&["import org.junit.Test;".into(), "import p.Z;".into()], "@Test\npublic void b() {\n    z();\n}", "b");
    assert_eq!(
        c.source,
        "package p;\n\nimport org.junit.Test;\nimport p.Z;\n\npublic class CTest {\n    @Test\n    public void a() {\n        x();\n    }\n\n    @Test\n    public void b() {\n        z();\n    }\n}\n"
    );
}
