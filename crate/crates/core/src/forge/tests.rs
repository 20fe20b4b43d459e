use std::path::Path;
use std::sync::Mutex;

use super::*;
use crate::index::build_index;
use crate::llm::{ScriptRule, ScriptedProvider};
use crate::model::{Oracle, ScenarioInstance};
use crate::runner::Candidate;

/// First matching fragment decides the outcome; otherwise pass.
struct FakeRunner {
    rules: Vec<(&'static str, RunStatus, &'static str)>,
    runs: Mutex<usize>,
}

impl FakeRunner {
    fn new(rules: Vec<(&'static str, RunStatus, &'static str)>) -> Self {
        Self { rules, runs: Mutex::new(0) }
    }
    fn runs(&self) -> usize {
        *self.runs.lock().unwrap()
    }
}

impl TestRunner for FakeRunner {
    fn run(&self, c: &Candidate) -> Result<RunOutcome, RunnerError> {
        *self.runs.lock().unwrap() += 1;
        Ok(match self.rules.iter().find(|(f, _, _)| c.source.contains(f)) {
            Some((_, s, m)) => RunOutcome::new(*s, *m),
            None => RunOutcome::new(RunStatus::Pass, ""),
        })
    }
}

fn write(root: &Path, rel: &str, text: &str) {
    let p = root.join(rel);
    std::fs::create_dir_all(p.parent().unwrap()).unwrap();
    std::fs::write(p, text).unwrap();
}

fn project() -> (tempfile::TempDir, SymbolIndex) {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "src/p/Paint.java", "package p;\npublic interface Paint { int alpha(); }\n");
    write(dir.path(), "src/p/RadialGradientPaint.java", "package p;\npublic class RadialGradientPaint implements Paint {\n    public RadialGradientPaint(float r) {}\n    public int alpha() { return 1; }\n}\n");
    let mut canvas = String::from("package p;\n\npublic class Canvas {\n    private Paint paint;\n\n    public void setPaint(Paint paint) {\n        this.paint = paint;\n    }\n");
    for _ in 0..30 {
        canvas.push('\n');
    }
    canvas.push_str("    public void fillOval(int x, int y, int w, int h) {\n        paint.alpha();\n    }\n}\n");
    write(dir.path(), "src/p/Canvas.java", &canvas);
    let index = build_index(dir.path()).unwrap();
    (dir, index)
}

fn fm(index: &SymbolIndex) -> FocalMethod {
    index.focal_method("demo", "c0", "p.Canvas.setPaint(Paint)").unwrap()
}

fn tc(fm: &FocalMethod) -> TestCase {
    TestCase::new(
        "p.CanvasTest.linearGradientPaint",
        "linearGradientPaint",
        "@Test\npublic void linearGradientPaint() {\n    Canvas c = new Canvas();\n    c.setPaint(new LinearGradientPaint());\n    assertNotNull(c);\n}",
        &fm.id,
        TestOrigin::Developer,
    )
    .with_file("test/p/CanvasTest.java")
}

fn host() -> TestFile {
    TestFile::new(
        "test/p/CanvasTest.java",
        "package p;\n\nimport org.junit.Test;\n\npublic class CanvasTest {\n    @Test\n    public void linearGradientPaint() {\n    }\n}\n",
    )
}

fn instance(alternative_active: bool) -> ScenarioInstance {
    ScenarioInstance {
        template_ref: "t".into(),
        settings: [
            ("drawing_shape".to_string(), "fillOval".to_string()),
            ("paint_style".to_string(), "RadialGradientPaint".to_string()),
        ]
        .into(),
        setting_deps: vec![],
        oracles: vec![Oracle::primary("the canvas keeps the radial paint"), Oracle::alternative("alpha is preserved")],
        active_oracle: usize::from(alternative_active),
        narrative: "1. Create a canvas. [with paint_style=RadialGradientPaint]\n2. Fill an oval. [with drawing_shape=fillOval]\n".into(),
    }
}

fn fenced(body: &str) -> String {
    format!("Here is the test.\n```java\nimport org.junit.Test;\nimport p.RadialGradientPaint;\n\n{body}\n```\n")
}

const RADIAL: &str = "@Test\npublic void radial() {\n    Canvas c = new Canvas();\n    c.setPaint(new RadialGradientPaint(2f));\n    c.fillOvl(0, 0, 4, 4);\n    assertNotNull(c);\n}";
const RADIAL_FIXED: &str = "@Test\npublic void radial() {\n    Canvas c = new Canvas();\n    c.setPaint(new RadialGradientPaint(2f));\n    c.fillOval(0, 0, 4, 4);\n    assertNotNull(c);\n}";

#[test]
fn schema_accepts_single_method_only() {
    let m = TestMethodSchema.parse(&fenced(RADIAL_FIXED)).unwrap();
    assert_eq!(m.name, "radial");
    assert_eq!(m.imports, ["import org.junit.Test;", "import p.RadialGradientPaint;"]);
    assert!(m.source.starts_with("@Test\npublic void radial()"));
    let two = fenced(&format!("{RADIAL_FIXED}\n\n@Test\npublic void other() {{}}"));
    assert!(TestMethodSchema.parse(&two).unwrap_err().contains("exactly one"));
    assert!(TestMethodSchema.parse("no code at all").is_err());
}

#[test]
fn names_from_settings() {
    let (_d, index) = project();
    assert_eq!(derive_test_name(&fm(&index), &instance(false)), "setPaintFillOvalRadialGradientPaint");
    assert_eq!(camel_words("multi-stop linear gradient"), "MultiStopLinearGradient");
}

#[test]
fn generated_test_is_renamed_and_carries_oracle() {
    let (_d, index) = project();
    let fm = fm(&index);
    let tc = tc(&fm);
    let llm = Gateway::new(ScriptedProvider::new(vec![
        ScriptRule::new(TAG_GENERATE, fenced(RADIAL_FIXED)).when("the canvas keeps the radial paint"),
    ]));
    let inst = instance(false);
    let name = derive_test_name(&fm, &inst);
    let (m, case) = generate_test(&inst, &fm, &tc, &[], &llm, &name).unwrap();
    assert!(m.source.contains("public void setPaintFillOvalRadialGradientPaint()"));
    assert!(m.source.contains("new RadialGradientPaint("));
    assert_eq!(case.origin, TestOrigin::Generated);
    assert_eq!(case.id, "p.CanvasTest.setPaintFillOvalRadialGradientPaint");
    assert_eq!(case.file.as_deref(), Some("test/p/CanvasTest.java"));

    let two = fenced(&format!("{RADIAL_FIXED}\n\n@Test\npublic void other() {{}}"));
    let llm = Gateway::new(ScriptedProvider::new(vec![ScriptRule::new(TAG_GENERATE, two).repeating()]));
    assert!(matches!(generate_test(&inst, &fm, &tc, &[], &llm, &name), Err(ForgeError::Llm(LlmError::MalformedOutput { .. }))));
}

#[test]
fn extraction_cases() {
    assert_eq!(
        extract_error_elements("cannot find symbol: method fillOval(int,int,int,int) at Canvas.java:41"),
        [ErrorElement { name: "fillOval".into(), file: Some("Canvas.java".into()), line: Some(41) }]
    );
    let javac = "test/p/CanvasTest.java:12: error: cannot find symbol\n        c.fillOvl(0, 0, 4, 4);\n         ^\n  symbol:   method fillOvl(int,int,int,int)\n  location: variable c of type Canvas\n1 error";
    assert_eq!(
        extract_error_elements(javac),
        [ErrorElement { name: "fillOvl".into(), file: Some("CanvasTest.java".into()), line: Some(12) }]
    );
    let trace = "java.lang.NullPointerException\n\tat p.Canvas.fillOval(Canvas.java:40)\n\tat p.CanvasTest.radial(CanvasTest.java:9)\n\tat p.CanvasTest.radial(CanvasTest.java:9)";
    assert_eq!(
        extract_error_elements(trace),
        [
            ErrorElement { name: "fillOval".into(), file: Some("Canvas.java".into()), line: Some(40) },
            ErrorElement { name: "radial".into(), file: Some("CanvasTest.java".into()), line: Some(9) },
        ]
    );
    assert!(extract_error_elements("").is_empty());
    assert!(extract_error_elements("java.lang.AssertionError: expected:<1> but was:<2>").is_empty());
    let gcc = "src/shape.c:7:5: error: implicit declaration of function 'fill_ovl' [-Wimplicit-function-declaration]";
    assert_eq!(extract_error_elements(gcc)[0].name, "fill_ovl");
}

#[test]
fn position_lookup_prefers_enclosing_symbol() {
    let (_d, index) = project();
    let items = lookup_elements(&index, &[ErrorElement { name: "fillOval".into(), file: Some("Canvas.java".into()), line: Some(40) }]);
    assert_eq!(items[0].symbol, "p.Canvas.fillOval(int,int,int,int)");
    assert_eq!(items[0].provenance, Provenance::Stage3Error);
    let items = lookup_elements(&index, &[ErrorElement { name: "RadialGradientPaint".into(), file: None, line: None }]);
    assert_eq!(items[0].symbol, "p.RadialGradientPaint");
}

fn method(body: &str) -> TestMethod {
    TestMethodSchema.parse(&fenced(body)).unwrap()
}

fn cx<'a>(
    fm: &'a FocalMethod,
    inst: &'a ScenarioInstance,
    host: &'a TestFile,
    runner: &'a FakeRunner,
    index: &'a SymbolIndex,
    llm: &'a Gateway,
) -> RepairContext<'a> {
    RepairContext { fm, instance: inst, host, runner, index, llm, max_iter: DEFAULT_MAX_REPAIR }
}

#[test]
fn compile_error_fixed_on_second_attempt() {
    let (_d, index) = project();
    let fm = fm(&index);
    let inst = instance(false);
    let host = host();
    let runner = FakeRunner::new(vec![(
        "fillOvl",
        RunStatus::CompileError,
        "cannot find symbol: method fillOval(int,int,int,int) at Canvas.java:41",
    )]);
    let llm = Gateway::new(ScriptedProvider::new(vec![
        ScriptRule::new(TAG_REPAIR, fenced(RADIAL_FIXED)).when("[method] p.Canvas.fillOval(int,int,int,int)"),
    ]));
    let r = repair(&cx(&fm, &inst, &host, &runner, &index, &llm), method(RADIAL)).unwrap();
    assert_eq!(r.final_status, FinalStatus::Passing);
    assert_eq!(r.iterations, 2);
    assert_eq!(r.attempts[0].elements[0].name, "fillOval");
    assert_eq!(r.attempts[0].knowledge[0].symbol, "p.Canvas.fillOval(int,int,int,int)");
    assert!(r.attempts[1].knowledge.is_empty());
    // first run, failing; second run, passing; confirmation re-run
    assert_eq!(runner.runs(), 3);
}

#[test]
fn persistent_assertion_failure() {
    let (_d, index) = project();
    let fm = fm(&index);
    let inst = instance(false);
    let host = host();
    let runner = FakeRunner::new(vec![("assertNotNull", RunStatus::AssertionFailure, "java.lang.AssertionError: expected not null")]);
    let v2 = RADIAL_FIXED.replace("2f", "3f");
    let v3 = RADIAL_FIXED.replace("2f", "4f");
    let llm = Gateway::new(ScriptedProvider::new(vec![
        ScriptRule::new(TAG_REPAIR, fenced(&v2)),
        ScriptRule::new(TAG_REPAIR, fenced(&v3)),
    ]));
    let r = repair(&cx(&fm, &inst, &host, &runner, &index, &llm), method(RADIAL_FIXED)).unwrap();
    assert_eq!(r.final_status, FinalStatus::FailingAfterMax);
    assert_eq!((r.iterations, r.attempts.len()), (3, 3));
    assert_eq!(r.stop, StopReason::MaxIterations);
    assert!(r.oracle_policy.contains("without changing the oracle"));
}

#[test]
fn first_attempt_passes() {
    let (_d, index) = project();
    let fm = fm(&index);
    let inst = instance(false);
    let host = host();
    let runner = FakeRunner::new(vec![]);
    let llm = Gateway::new(ScriptedProvider::new(vec![]));
    let r = repair(&cx(&fm, &inst, &host, &runner, &index, &llm), method(RADIAL_FIXED)).unwrap();
    assert_eq!((r.final_status, r.iterations), (FinalStatus::Passing, 1));
    assert!(r.attempts[0].knowledge.is_empty());
    assert!(llm.call_log().is_empty());
}

#[test]
fn identical_resubmission_and_oracle_change_abort() {
    let (_d, index) = project();
    let fm = fm(&index);
    let inst = instance(false);
    let host = host();
    let runner = FakeRunner::new(vec![("assertNotNull", RunStatus::AssertionFailure, "AssertionError")]);
    let llm = Gateway::new(ScriptedProvider::new(vec![ScriptRule::new(TAG_REPAIR, fenced(RADIAL_FIXED))]));
    let r = repair(&cx(&fm, &inst, &host, &runner, &index, &llm), method(RADIAL_FIXED)).unwrap();
    assert_eq!((r.stop, r.iterations, r.final_status), (StopReason::IdenticalResubmission, 1, FinalStatus::FailingAfterMax));

    let weakened = RADIAL_FIXED.replace("assertNotNull(c);", "assertTrue(true);");
    let llm = Gateway::new(ScriptedProvider::new(vec![ScriptRule::new(TAG_REPAIR, fenced(&weakened))]));
    let r = repair(&cx(&fm, &inst, &host, &runner, &index, &llm), method(RADIAL_FIXED)).unwrap();
    assert_eq!(r.stop, StopReason::OracleChanged);
}

#[test]
fn alternative_oracle_failure_escalates() {
    let (_d, index) = project();
    let fm = fm(&index);
    let inst = instance(true);
    let host = host();
    let runner = FakeRunner::new(vec![("assertNotNull", RunStatus::AssertionFailure, "AssertionError")]);
    let llm = Gateway::new(ScriptedProvider::new(vec![]));
    let r = repair(&cx(&fm, &inst, &host, &runner, &index, &llm), method(RADIAL_FIXED)).unwrap();
    assert_eq!((r.stop, r.iterations), (StopReason::Escalated, 1));
    assert!(r.oracle_policy.contains("escalated"));
}

#[test]
fn record_invariants() {
    let (_d, index) = project();
    let fm = fm(&index);
    let inst = instance(false);
    let host = host();
    let runner = FakeRunner::new(vec![]);
    let llm = Gateway::new(ScriptedProvider::new(vec![]));
    let mut r = repair(&cx(&fm, &inst, &host, &runner, &index, &llm), method(RADIAL_FIXED)).unwrap();
    r.validate().unwrap();
    r.final_status = FinalStatus::FailingAfterMax;
    assert!(r.validate().is_err());
}
