use serde::{Deserialize, Serialize};

use super::{InvariantViolation, Validate};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestOrigin {
    Developer,
    Generated,
    Repaired,
}

/// One assertion statement inside a test's source.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssertionSite {
    pub statement: String,
    /// 1-based line within the test source.
    pub line: u32,
    /// Byte offset within the test source.
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestCase {
    pub id: String,
    pub name: String,
    pub source: String,
    pub focal_id: String,
    #[serde(default)]
    pub assertions: Vec<AssertionSite>,
    pub origin: TestOrigin,
    /// Project-relative path of the file holding the test, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
}

impl TestCase {
    /// Builds a test case, detecting its assertion sites.
    pub fn new(
        id: impl Into<String>,
        name: impl Into<String>,
        source: impl Into<String>,
        focal_id: impl Into<String>,
        origin: TestOrigin,
    ) -> Self {
        let source = source.into();
        let assertions = detect_assertions(&source);
        Self { id: id.into(), name: name.into(), source, focal_id: focal_id.into(), assertions, origin, file: None }
    }

    pub fn with_file(mut self, file: impl Into<String>) -> Self {
        self.file = Some(file.into());
        self
    }

    /// Source with the given assertion statement replaced.
    pub fn replace_assertion(&self, site: &AssertionSite, replacement: &str) -> String {
        let mut out = String::with_capacity(self.source.len() + replacement.len());
        out.push_str(&self.source[..site.offset]);
        out.push_str(replacement);
        out.push_str(&self.source[site.offset + site.statement.len()..]);
        out
    }
}

impl Validate for TestCase {
    fn validate(&self) -> Result<(), InvariantViolation> {
        let err = |s: &str| Err(InvariantViolation::new("test_case", s));
        if self.focal_id.trim().is_empty() {
            return err("focal_id resolves");
        }
        if self.source.trim().is_empty() {
            return err("source non-empty");
        }
        for site in &self.assertions {
            let end = site.offset + site.statement.len();
            if end > self.source.len()
                || !self.source.is_char_boundary(site.offset)
                || !self.source.is_char_boundary(end)
                || self.source[site.offset..end] != site.statement
            {
                return err("assertion positions lie within source");
            }
            let line = self.source[..site.offset].matches('\n').count() as u32 + 1;
            if line != site.line {
                return err("assertion line matches offset");
            }
        }
        Ok(())
    }
}

fn starts_assertion(rest: &str) -> bool {
    // Optional qualifier such as `Assert.` or `Assertions.`
    let body = match rest.split_once('.') {
        Some((q, tail))
            if !q.is_empty()
                && q.chars().next().is_some_and(|c| c.is_ascii_uppercase())
                && q.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') =>
        {
            tail
        }
        _ => rest,
    };
    let ident: String = body.chars().take_while(|c| c.is_ascii_alphanumeric() || *c == '_').collect();
    if !ident.to_ascii_lowercase().starts_with("assert") {
        return false;
    }
    let after = body[ident.len()..].trim_start();
    after.starts_with('(') || (ident == "assert" && !after.is_empty() && !after.starts_with('='))
}

/// Finds assertion statements: lines whose first token is an `assert*`
/// call (optionally class-qualified) or an `assert` keyword statement.
/// A statement runs to the first `;` outside brackets and literals, or to
/// the end of the line when no `;` follows.
pub fn detect_assertions(source: &str) -> Vec<AssertionSite> {
    let mut sites = Vec::new();
    let mut line_start = 0usize;
    let mut skip_until = 0usize;
    for (line_no, line) in (1u32..).zip(source.split_inclusive('\n')) {
        let indent = line.len() - line.trim_start().len();
        let start = line_start + indent;
        if start >= skip_until && starts_assertion(line.trim_start()) {
            let end = statement_end(source, start);
            let statement = source[start..end].trim_end().to_string();
            skip_until = start + statement.len();
            sites.push(AssertionSite { statement, line: line_no, offset: start });
        }
        line_start += line.len();
    }
    sites
}

fn statement_end(source: &str, start: usize) -> usize {
    let bytes = source.as_bytes();
    let mut depth = 0i32;
    let mut i = start;
    let mut saw_newline_at_depth0 = None;
    while i < bytes.len() {
        match bytes[i] {
            b'"' | b'\'' => {
                let quote = bytes[i];
                i += 1;
                while i < bytes.len() && bytes[i] != quote && bytes[i] != b'\n' {
                    if bytes[i] == b'\\' {
                        i += 1;
                    }
                    i += 1;
                }
            }
            b'(' | b'[' | b'{' => depth += 1,
            b')' | b']' | b'}' => {
                depth -= 1;
                if depth < 0 {
                    return i;
                }
            }
            b';' if depth == 0 => return i + 1,
            b'\n' if depth == 0 && saw_newline_at_depth0.is_none() => saw_newline_at_depth0 = Some(i),
            _ => {}
        }
        i += 1;
    }
    saw_newline_at_depth0.unwrap_or(bytes.len()).min(bytes.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_java_assertions() {
        let src = "@Test\nvoid t() {\n    assertTrue(route.matches(GET, \"/a;b\"));\n    Assert.assertEquals(\n        2, x.size());\n    int assertions = 3;\n}\n";
        let sites = detect_assertions(src);
        assert_eq!(sites.len(), 2);
        assert_eq!(sites[0].statement, "assertTrue(route.matches(GET, \"/a;b\"));");
        assert_eq!(sites[0].line, 3);
        assert_eq!(sites[1].statement, "Assert.assertEquals(\n        2, x.size());");
        assert_eq!(sites[1].line, 4);
        let tc = TestCase::new("t", "t", src, "p:a.B.c()", TestOrigin::Developer);
        tc.validate().unwrap();
    }

    #[test]
    fn assertion_free_test_has_empty_list() {
        let src = "@Test\npublic void linearGradientPaint() throws IOException {\n  canvas.fillRect(10, 10, 50, 50);\n}\n";
        assert!(detect_assertions(src).is_empty());
    }

    #[test]
    fn replace_assertion_splices_text() {
        let tc = TestCase::new("t", "t", "void t() {\n  assertTrue(x);\n}\n", "f", TestOrigin::Developer);
        let out = tc.replace_assertion(&tc.assertions[0], "assertFalse(x);");
        assert_eq!(out, "void t() {\n  assertFalse(x);\n}\n");
    }

    #[test]
    fn detects_python_style_assert() {
        let sites = detect_assertions("def t():\n    assert add(1, 2) == 3\n");
        assert_eq!(sites[0].statement, "assert add(1, 2) == 3");
    }
}
