use std::fs;
use std::path::Path;

use proptest::prelude::*;

use super::*;
use crate::model::TestOrigin;

fn write(root: &Path, rel: &str, text: &str) {
    let path = root.join(rel);
    fs::create_dir_all(path.parent().unwrap()).unwrap();
    fs::write(path, text).unwrap();
}

const COUNTER: &str = "package demo;

public class Counter {
    private int count;

    public void inc() { count++; }

    public int get() { return count; }
}
";

#[test]
fn one_class_two_methods_one_field() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "src/demo/Counter.java", COUNTER);
    let index = build_index(dir.path()).unwrap();
    // declarations counted by hand: Counter, count, inc(), get()
    assert_eq!(index.len(), 4);
    assert_eq!(index.count(SymbolKind::Class), 1);
    assert_eq!(index.count(SymbolKind::Method), 2);
    assert_eq!(index.count(SymbolKind::Field), 1);
    let inc = index.get("demo.Counter.inc()").unwrap();
    assert_eq!(inc.definition, "public void inc() { count++; }");
    assert_eq!(inc.line, 6);
    let count = index.get("demo.Counter.count").unwrap();
    assert_eq!(count.usages, [Usage { file: "src/demo/Counter.java".into(), line: 6 }, Usage { file: "src/demo/Counter.java".into(), line: 8 }]);
    assert_eq!(index.declared_in("src/demo/Counter.java").len(), 4);
}

#[test]
fn empty_project() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "README.md", "nothing here");
    assert!(matches!(build_index(dir.path()), Err(IndexError::EmptyProject(_))));
}

#[test]
fn syntax_error_skips_file() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "src/demo/Counter.java", COUNTER);
    write(dir.path(), "src/demo/Broken.java", "package demo;\nclass Broken {\n  void f( {\n}\n");
    let index = build_index(dir.path()).unwrap();
    assert_eq!(index.len(), 4);
    assert_eq!(index.warnings().len(), 1);
    assert_eq!(index.warnings()[0].file, "src/demo/Broken.java");
    assert!(index.get("demo.Broken").is_none());
}

fn paint_project(root: &Path) {
    write(root, "src/p/Paint.java", "package p;\npublic interface Paint { int alpha(); }\n");
    write(root, "src/p/Color.java", "package p;\npublic class Color implements Paint { public int alpha() { return 255; } }\n");
    write(root, "src/p/MultipleGradientPaint.java", "package p;\npublic abstract class MultipleGradientPaint implements Paint { public int alpha() { return 1; } }\n");
    write(root, "src/p/LinearGradientPaint.java", "package p;\npublic class LinearGradientPaint extends MultipleGradientPaint { public int alpha() { return 2; } }\n");
    write(root, "src/p/RadialGradientPaint.java", "package p;\npublic class RadialGradientPaint extends MultipleGradientPaint {}\n");
    write(
        root,
        "src/p/Canvas.java",
        "package p;\n\npublic class Canvas {\n    private Paint paint;\n\n    public void setPaint(Paint paint) {\n        this.paint = paint;\n    }\n\n    public boolean matchPath(String path) { return path != null; }\n}\n",
    );
    write(root, "src/q/Other.java", "package q;\npublic class Other { public void unrelated() {} }\n");
}

fn fm(index: &SymbolIndex, key: &str) -> FocalMethod {
    index.focal_method("demo", "c0", key).unwrap()
}

fn tc(source: &str) -> TestCase {
    TestCase::new("t", "t", source, "demo:p.Canvas.setPaint(Paint)", TestOrigin::Developer)
}

#[test]
fn hierarchy_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    paint_project(dir.path());
    let index = build_index(dir.path()).unwrap();
    assert_eq!(index.hierarchy("p.LinearGradientPaint").unwrap().parents, ["p.MultipleGradientPaint"]);
    assert_eq!(index.ancestors("p.LinearGradientPaint"), ["p.MultipleGradientPaint", "p.Paint"]);
    assert_eq!(
        index.hierarchy("p.LinearGradientPaint").unwrap().overrides["p.LinearGradientPaint.alpha()"],
        ["p.MultipleGradientPaint.alpha()", "p.Paint.alpha()"]
    );
    assert_eq!(index.descendants("p.Paint"), ["p.Color", "p.LinearGradientPaint", "p.MultipleGradientPaint", "p.RadialGradientPaint"]);
}

#[test]
fn focal_method_from_index_validates() {
    let dir = tempfile::tempdir().unwrap();
    paint_project(dir.path());
    let index = build_index(dir.path()).unwrap();
    let f = fm(&index, "p.Canvas.setPaint(Paint)");
    crate::model::Validate::validate(&f).unwrap();
    assert_eq!(f.owner_class(), "p.Canvas");
}

#[test]
fn neighborhood_includes_referenced_symbols() {
    let dir = tempfile::tempdir().unwrap();
    paint_project(dir.path());
    let index = build_index(dir.path()).unwrap();
    let f = fm(&index, "p.Canvas.setPaint(Paint)");
    let n = index.neighborhood(&f, &tc("@Test void t() { Canvas c = new Canvas(); assertTrue(c.matchPath(\"x\")); }"));
    assert!(n.contains("p.Canvas.matchPath(String)"));
    assert!(n.contains("p.Paint"));
    assert!(!n.contains("q.Other"));
    assert!(n.unresolved > 0);
}

#[test]
fn local_only_references_give_own_class() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "src/p/Box.java", "package p;\npublic class Box {\n  int size;\n  public int twice(int v) { int w = v; return w * 2; }\n}\n");
    write(dir.path(), "src/p/Far.java", "package p;\npublic class Far { int depth; }\n");
    let index = build_index(dir.path()).unwrap();
    let f = fm(&index, "p.Box.twice(int)");
    let n = index.neighborhood(&f, &tc("void t() { int x = 2; int y = x; }"));
    let expected: BTreeSet<String> = ["p.Box", "p.Box.size", "p.Box.twice(int)"].iter().map(|s| s.to_string()).collect();
    assert_eq!(n.symbols, expected);
}

#[test]
fn override_closure_reaches_parent_method() {
    let dir = tempfile::tempdir().unwrap();
    paint_project(dir.path());
    write(dir.path(), "src/p/Painter.java", "package p;\npublic class Painter { public int use(LinearGradientPaint g) { return g.alpha(); } }\n");
    let index = build_index(dir.path()).unwrap();
    let f = fm(&index, "p.Painter.use(LinearGradientPaint)");
    let n = index.neighborhood(&f, &tc("void t() {}"));
    // alpha() resolves to every alpha declaration; the class link reaches the parent
    assert!(n.contains("p.MultipleGradientPaint"));
    assert!(n.contains("p.Paint.alpha()"));
}

#[test]
fn override_one_hop_from_method_only() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "src/a/Base.java", "package a;\npublic class Base { public void hook() {} }\n");
    write(dir.path(), "src/a/Child.java", "package a;\npublic class Child extends Base { @Override public void hook() {} }\n");
    write(dir.path(), "src/a/User.java", "package a;\npublic class User { public void run() {} }\n");
    let index = build_index(dir.path()).unwrap();
    let f = fm(&index, "a.User.run()");
    let n = index.neighborhood(&f, &tc("void t() { Child c = null; }"));
    // Child referenced: its parent class joins through the one-hop closure
    assert!(n.contains("a.Child"));
    assert!(n.contains("a.Base"));
    assert!(!n.contains("a.Child.hook()"));
    let n = index.neighborhood(&f, &tc("void t() { x.hook(); }"));
    assert!(n.contains("a.Base.hook()"));
    assert!(n.contains("a.Child.hook()"));
}

#[test]
fn query_orders_exact_then_suffix() {
    let dir = tempfile::tempdir().unwrap();
    paint_project(dir.path());
    let index = build_index(dir.path()).unwrap();
    let keys: Vec<&str> = index.query("Canvas.setPaint", QueryKind::Any, None).iter().map(|e| e.key.as_str()).collect();
    assert_eq!(keys, ["p.Canvas.setPaint(Paint)"]);
    let keys: Vec<&str> = index.query("setPaint", QueryKind::Any, None).iter().map(|e| e.key.as_str()).collect();
    assert_eq!(keys, ["p.Canvas.setPaint(Paint)"]);
    let keys: Vec<&str> = index.query("paint", QueryKind::Only(SymbolKind::Field), None).iter().map(|e| e.key.as_str()).collect();
    assert_eq!(keys, ["p.Canvas.paint"]);
}

#[test]
fn family_query() {
    let dir = tempfile::tempdir().unwrap();
    paint_project(dir.path());
    let index = build_index(dir.path()).unwrap();
    let keys: Vec<&str> = index.query("LinearGradientPaint", QueryKind::Family, None).iter().map(|e| e.key.as_str()).collect();
    assert_eq!(
        keys,
        ["p.LinearGradientPaint", "p.MultipleGradientPaint", "p.RadialGradientPaint", "p.Paint", "p.Color"]
    );
}

#[test]
fn query_misses_and_scope() {
    let dir = tempfile::tempdir().unwrap();
    paint_project(dir.path());
    let index = build_index(dir.path()).unwrap();
    assert!(matches!(index.query_required("nonExistentSymbol", QueryKind::Any, None), Err(IndexError::NotFound(_))));
    let scope = Neighborhood { symbols: ["p.Canvas".to_string()].into_iter().collect(), unresolved: 0 };
    assert!(index.query("setPaint", QueryKind::Any, Some(&scope)).is_empty());
}

#[test]
fn position_lookup() {
    let dir = tempfile::tempdir().unwrap();
    paint_project(dir.path());
    let index = build_index(dir.path()).unwrap();
    assert_eq!(index.at_position("Canvas.java", 7).unwrap().key, "p.Canvas.setPaint(Paint)");
    assert_eq!(index.at_position("p/Canvas.java", 9).unwrap().key, "p.Canvas");
    assert!(index.at_position("Nope.java", 1).is_none());
}

#[test]
fn build_is_deterministic_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    paint_project(dir.path());
    let a = build_index(dir.path()).unwrap();
    let b = build_index(dir.path()).unwrap();
    assert_eq!(a, b);
    let out = tempfile::tempdir().unwrap();
    let p1 = out.path().join("a.json");
    let p2 = out.path().join("b.json");
    a.save(&p1).unwrap();
    b.save(&p2).unwrap();
    assert_eq!(fs::read(&p1).unwrap(), fs::read(&p2).unwrap());
    assert_eq!(SymbolIndex::load(&p1).unwrap(), a);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn neighborhood_monotone(extra in prop::sample::subsequence(vec!["Color", "matchPath", "alpha", "Other", "unrelated", "zzz"], 0..6)) {
        let dir = tempfile::tempdir().unwrap();
        paint_project(dir.path());
        let index = build_index(dir.path()).unwrap();
        let f = fm(&index, "p.Canvas.setPaint(Paint)");
        let base = "void t() { Canvas c = new Canvas(); }";
        let small = index.neighborhood(&f, &tc(base));
        let body: String = extra.iter().map(|e| format!(" {e}();")).collect();
        let big = index.neighborhood(&f, &tc(&format!("void t() {{ Canvas c = new Canvas();{body} }}")));
        prop_assert!(small.symbols.is_subset(&big.symbols));
    }

    #[test]
    fn scoped_queries_stay_in_scope(names in prop::sample::subsequence(vec!["p.Canvas", "p.Paint", "p.Color", "p.Canvas.paint", "q.Other"], 0..5),
                                   q in prop::sample::select(vec!["Paint", "Canvas", "paint", "alpha", "Other", "Color"])) {
        let dir = tempfile::tempdir().unwrap();
        paint_project(dir.path());
        let index = build_index(dir.path()).unwrap();
        let scope = Neighborhood { symbols: names.iter().map(|s| s.to_string()).collect(), unresolved: 0 };
        for kind in [QueryKind::Any, QueryKind::Family] {
            for e in index.query(q, kind, Some(&scope)) {
                prop_assert!(scope.contains(&e.key));
            }
        }
    }
}
