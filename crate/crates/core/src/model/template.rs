//! Scenario templates and their line-oriented text form.
//!
//! ```text
//! # focal: <focal id>
//! # prompt: <prompt provenance>
//! STEP 1: <action>
//!   VP <name>: <description> [CANDIDATES: a | b | c]
//!   DEP <vp_name> <- STEP <m>
//!
//! STEP 2: ...
//! ```
//!
//! Inside free text, `\`, `|`, `[`, `]` and newlines are backslash-escaped.
//! A VP line may end with `[KIND: code_element]`; without it the VP is an
//! abstract choice.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{InvariantViolation, Validate};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VpKind {
    CodeElement,
    AbstractChoice,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariationPoint {
    pub name: String,
    pub description: String,
    pub candidates: Vec<String>,
    pub kind: VpKind,
}

/// Link from a step to a VP declared in an earlier step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dependency {
    pub vp: String,
    pub step: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateStep {
    pub step_id: u32,
    pub action: String,
    pub vps: Vec<VariationPoint>,
    pub deps: Vec<Dependency>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioTemplate {
    pub focal_id: String,
    pub steps: Vec<TemplateStep>,
    /// Prompt version the template was generated with.
    pub provenance: String,
}

impl ScenarioTemplate {
    pub fn vp_names(&self) -> impl Iterator<Item = &str> {
        self.steps.iter().flat_map(|s| s.vps.iter().map(|v| v.name.as_str()))
    }

    pub fn vp(&self, name: &str) -> Option<(&TemplateStep, &VariationPoint)> {
        self.steps
            .iter()
            .find_map(|s| s.vps.iter().find(|v| v.name == name).map(|v| (s, v)))
    }

    pub fn step(&self, id: u32) -> Option<&TemplateStep> {
        self.steps.iter().find(|s| s.step_id == id)
    }

    /// Topological order of the step graph; `None` if the deps contain a cycle.
    pub fn topological_order(&self) -> Option<Vec<u32>> {
        let ids: Vec<u32> = self.steps.iter().map(|s| s.step_id).collect();
        let mut done: BTreeSet<u32> = BTreeSet::new();
        let mut order = Vec::new();
        while order.len() < ids.len() {
            let next = self.steps.iter().find(|s| {
                !done.contains(&s.step_id) && s.deps.iter().all(|d| done.contains(&d.step) || !ids.contains(&d.step))
            })?;
            done.insert(next.step_id);
            order.push(next.step_id);
        }
        Some(order)
    }
}

impl Validate for ScenarioTemplate {
    fn validate(&self) -> Result<(), InvariantViolation> {
        let err = |s: &str| Err(InvariantViolation::new("scenario_template", s));
        if self.steps.is_empty() {
            return err("at least one VP");
        }
        let mut seen: BTreeSet<&str> = BTreeSet::new();
        for (i, step) in self.steps.iter().enumerate() {
            if step.step_id as usize != i + 1 {
                return err("step ids contiguous from 1");
            }
            if step.action.trim().is_empty() {
                return err("action non-empty");
            }
            for dep in &step.deps {
                if dep.step >= step.step_id {
                    return err("forward dependency");
                }
                let declared = dep.step >= 1
                    && self
                        .steps
                        .get(dep.step as usize - 1)
                        .is_some_and(|s| s.vps.iter().any(|v| v.name == dep.vp));
                if !declared {
                    return err("dependency references a vp declared in that step");
                }
            }
            for vp in &step.vps {
                if !is_canonical_vp_name(&vp.name) {
                    return err("vp name canonical");
                }
                if !seen.insert(vp.name.as_str()) {
                    return err("vp names unique");
                }
            }
        }
        if seen.is_empty() {
            return err("at least one VP");
        }
        Ok(())
    }
}

/// Normalizes a model-produced VP name: trim, lowercase, whitespace and
/// hyphens to underscores, other punctuation dropped.
pub fn canonical_vp_name(raw: &str) -> String {
    let mut out = String::new();
    for ch in raw.trim().chars() {
        if ch.is_whitespace() || ch == '-' || ch == '_' {
            if !out.is_empty() && !out.ends_with('_') {
                out.push('_');
            }
        } else if ch.is_alphanumeric() {
            out.extend(ch.to_lowercase());
        }
    }
    while out.ends_with('_') {
        out.pop();
    }
    out
}

pub fn is_canonical_vp_name(name: &str) -> bool {
    !name.is_empty()
        && !name.starts_with('_')
        && !name.ends_with('_')
        && !name.contains("__")
        && name.chars().all(|c| c == '_' || (c.is_alphanumeric() && !c.is_uppercase()))
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TemplateError {
    #[error("template parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error(transparent)]
    Invariant(#[from] InvariantViolation),
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        match ch {
            '\\' | '|' | '[' | ']' => {
                out.push('\\');
                out.push(ch);
            }
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            _ => out.push(ch),
        }
    }
    out
}

fn unescape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(ch) = chars.next() {
        if ch == '\\' {
            match chars.next() {
                Some('n') => out.push('\n'),
                Some('r') => out.push('\r'),
                Some(c) => out.push(c),
                None => out.push('\\'),
            }
        } else {
            out.push(ch);
        }
    }
    out
}

/// Splits `s` at unescaped occurrences of `sep`.
fn split_unescaped(s: &str, sep: char) -> Vec<&str> {
    let mut parts = Vec::new();
    let mut start = 0;
    let mut escaped = false;
    for (i, ch) in s.char_indices() {
        if escaped {
            escaped = false;
        } else if ch == '\\' {
            escaped = true;
        } else if ch == sep {
            parts.push(&s[start..i]);
            start = i + ch.len_utf8();
        }
    }
    parts.push(&s[start..]);
    parts
}

fn find_unescaped(s: &str, target: char) -> Option<usize> {
    let mut escaped = false;
    for (i, ch) in s.char_indices() {
        if escaped {
            escaped = false;
        } else if ch == '\\' {
            escaped = true;
        } else if ch == target {
            return Some(i);
        }
    }
    None
}

/// Renders the text form. Structured JSON remains the authoritative form.
pub fn render_template(t: &ScenarioTemplate) -> String {
    let mut out = String::new();
    if !t.focal_id.is_empty() {
        let _ = writeln!(out, "# focal: {}", t.focal_id);
    }
    if !t.provenance.is_empty() {
        let _ = writeln!(out, "# prompt: {}", t.provenance);
    }
    for (i, step) in t.steps.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let _ = writeln!(out, "STEP {}: {}", step.step_id, escape(&step.action));
        for vp in &step.vps {
            let _ = write!(out, "  VP {}: {}", vp.name, escape(&vp.description));
            if !vp.candidates.is_empty() {
                let cands: Vec<String> = vp.candidates.iter().map(|c| escape(c)).collect();
                let _ = write!(out, " [CANDIDATES: {}]", cands.join(" | "));
            }
            if vp.kind == VpKind::CodeElement {
                out.push_str(" [KIND: code_element]");
            }
            out.push('\n');
        }
        for dep in &step.deps {
            let _ = writeln!(out, "  DEP {} <- STEP {}", dep.vp, dep.step);
        }
    }
    out
}

fn parse_err(line: usize, reason: impl Into<String>) -> TemplateError {
    TemplateError::Parse { line, reason: reason.into() }
}

fn parse_vp(body: &str, line: usize) -> Result<VariationPoint, TemplateError> {
    let (raw_name, rest) = body
        .split_once(':')
        .ok_or_else(|| parse_err(line, "VP line needs `<name>: <description>`"))?;
    let name = canonical_vp_name(raw_name);
    if name.is_empty() {
        return Err(parse_err(line, "empty VP name"));
    }
    let mut description = rest;
    let mut sections = Vec::new();
    if let Some(open) = find_unescaped(rest, '[') {
        description = &rest[..open];
        let mut tail = &rest[open..];
        while !tail.trim().is_empty() {
            let tail_trim = tail.trim_start();
            if !tail_trim.starts_with('[') {
                return Err(parse_err(line, "text after bracketed section"));
            }
            let inner = &tail_trim[1..];
            let close = find_unescaped(inner, ']').ok_or_else(|| parse_err(line, "unclosed `[`"))?;
            sections.push(&inner[..close]);
            tail = &inner[close + 1..];
        }
    }
    let mut candidates = Vec::new();
    let mut kind = VpKind::AbstractChoice;
    for section in sections {
        let (key, value) = section
            .split_once(':')
            .ok_or_else(|| parse_err(line, "bracketed section needs `KEY: value`"))?;
        match key.trim().to_ascii_uppercase().as_str() {
            "CANDIDATES" => {
                candidates = split_unescaped(value, '|')
                    .into_iter()
                    .map(|c| unescape(c.trim()))
                    .filter(|c| !c.is_empty())
                    .collect();
            }
            "KIND" => {
                kind = match value.trim() {
                    "code_element" => VpKind::CodeElement,
                    "abstract_choice" => VpKind::AbstractChoice,
                    other => return Err(parse_err(line, format!("unknown VP kind `{other}`"))),
                }
            }
            other => return Err(parse_err(line, format!("unknown section `{other}`"))),
        }
    }
    Ok(VariationPoint { name, description: unescape(description.trim()), candidates, kind })
}

/// Parses the text form and enforces all template invariants.
pub fn parse_template(text: &str) -> Result<ScenarioTemplate, TemplateError> {
    let mut template = ScenarioTemplate { focal_id: String::new(), steps: Vec::new(), provenance: String::new() };
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(meta) = line.strip_prefix('#') {
            if let Some((key, value)) = meta.split_once(':') {
                match key.trim() {
                    "focal" => template.focal_id = value.trim().to_string(),
                    "prompt" => template.provenance = value.trim().to_string(),
                    _ => {}
                }
            }
            continue;
        }
        if let Some(rest) = strip_keyword(line, "STEP") {
            let (num, action) = rest
                .split_once(':')
                .ok_or_else(|| parse_err(line_no, "STEP line needs `STEP <n>: <action>`"))?;
            let step_id: u32 = num
                .trim()
                .parse()
                .map_err(|_| parse_err(line_no, format!("bad step number `{}`", num.trim())))?;
            template.steps.push(TemplateStep {
                step_id,
                action: unescape(action.trim()),
                vps: Vec::new(),
                deps: Vec::new(),
            });
        } else if let Some(rest) = strip_keyword(line, "VP") {
            let vp = parse_vp(rest, line_no)?;
            let step = template
                .steps
                .last_mut()
                .ok_or_else(|| parse_err(line_no, "VP before any STEP"))?;
            step.vps.push(vp);
        } else if let Some(rest) = strip_keyword(line, "DEP") {
            let (vp, target) = rest
                .split_once("<-")
                .ok_or_else(|| parse_err(line_no, "DEP line needs `<vp> <- STEP <m>`"))?;
            let target = strip_keyword(target.trim(), "STEP")
                .ok_or_else(|| parse_err(line_no, "DEP target must be `STEP <m>`"))?;
            let step_ref: u32 = target
                .trim()
                .trim_end_matches(':')
                .parse()
                .map_err(|_| parse_err(line_no, "bad DEP step number"))?;
            let step = template
                .steps
                .last_mut()
                .ok_or_else(|| parse_err(line_no, "DEP before any STEP"))?;
            step.deps.push(Dependency { vp: canonical_vp_name(vp), step: step_ref });
        } else {
            return Err(parse_err(line_no, format!("unrecognized line `{line}`")));
        }
    }
    template.validate()?;
    Ok(template)
}

fn strip_keyword<'a>(line: &'a str, keyword: &str) -> Option<&'a str> {
    let rest = line.strip_prefix(keyword)?;
    if rest.starts_with(char::is_whitespace) {
        Some(rest.trim_start())
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const SET_PAINT: &str = "\
STEP 1: Prepare the output path of the OFD document.

STEP 2: Create the OFD document and add a new page with the canvas setting.
  VP canvas_setting: Page layout used when creating the page. [CANDIDATES: default page layout | custom page size]

STEP 3: Construct the paint object and apply it with setPaint.
  VP paint_style: Kind of paint applied to the canvas. [CANDIDATES: solid Color | multi-stop LinearGradientPaint | RadialGradientPaint] [KIND: code_element]

STEP 4: Fill a shape using the configured paint.
  VP drawing_shape: Filling method used to draw. [CANDIDATES: fillRect | fillOval] [KIND: code_element]
  DEP paint_style <- STEP 3

STEP 5: Close the document and check that the output file exists.
  DEP canvas_setting <- STEP 2
";

    #[test]
    fn parses_set_paint_template() {
        let t = parse_template(SET_PAINT).unwrap();
        assert_eq!(t.steps.len(), 5);
        let vp_steps: Vec<u32> = t.steps.iter().filter(|s| !s.vps.is_empty()).map(|s| s.step_id).collect();
        assert_eq!(vp_steps, vec![2, 3, 4]);
        let names: Vec<&str> = t.vp_names().collect();
        assert_eq!(names, ["canvas_setting", "paint_style", "drawing_shape"]);
        assert_eq!(t.steps[2].vps[0].candidates.len(), 3);
        assert_eq!(t.steps[3].vps[0].kind, VpKind::CodeElement);
        assert_eq!(t.topological_order().unwrap(), vec![1, 2, 3, 4, 5]);
    }

    #[test]
    fn text_round_trip() {
        let t = parse_template(SET_PAINT).unwrap();
        let again = parse_template(&render_template(&t)).unwrap();
        assert_eq!(t, again);
    }

    #[test]
    fn empty_template_rejected() {
        let err = parse_template("").unwrap_err();
        assert_eq!(err, TemplateError::Invariant(InvariantViolation::new("scenario_template", "at least one VP")));
    }

    #[test]
    fn template_without_vps_rejected() {
        let err = parse_template("STEP 1: do it\n").unwrap_err();
        assert!(err.to_string().contains("at least one VP"));
    }

    #[test]
    fn duplicate_vp_rejected() {
        let text = "STEP 1: a\n  VP shape: x\n\nSTEP 2: b\n  VP Shape: y\n";
        let err = parse_template(text).unwrap_err();
        assert!(err.to_string().contains("vp names unique"), "{err}");
    }

    #[test]
    fn forward_dependency_rejected() {
        let text = "STEP 1: a\n\nSTEP 2: b\n  DEP shape <- STEP 3\n\nSTEP 3: c\n  VP shape: x\n";
        let err = parse_template(text).unwrap_err();
        assert!(err.to_string().contains("forward dependency"), "{err}");
    }

    #[test]
    fn dependency_on_undeclared_vp_rejected() {
        let text = "STEP 1: a\n  VP shape: x\n\nSTEP 2: b\n  DEP color <- STEP 1\n";
        assert!(parse_template(text).is_err());
    }

    #[test]
    fn parse_error_reports_line() {
        let err = parse_template("STEP 1: a\n  VP x: y\nbogus line\n").unwrap_err();
        assert!(matches!(err, TemplateError::Parse { line: 3, .. }));
    }

    #[test]
    fn canonical_names() {
        assert_eq!(canonical_vp_name("  Paint Style "), "paint_style");
        assert_eq!(canonical_vp_name("drawing-shape (method)"), "drawing_shape_method");
        assert!(is_canonical_vp_name("paint_style"));
        assert!(!is_canonical_vp_name("Paint_style"));
        assert!(!is_canonical_vp_name("paint__style"));
    }

    #[test]
    fn escaped_text_survives() {
        let t = ScenarioTemplate {
            focal_id: "p:a.B.c()".into(),
            provenance: "rules-v2".into(),
            steps: vec![TemplateStep {
                step_id: 1,
                action: "call c() with [x|y]\nthen check".into(),
                vps: vec![VariationPoint {
                    name: "arg".into(),
                    description: "value of x \\ y".into(),
                    candidates: vec!["a | b".into(), "new int[]{1}".into()],
                    kind: VpKind::CodeElement,
                }],
                deps: vec![],
            }],
        };
        assert_eq!(parse_template(&render_template(&t)).unwrap(), t);
    }
}
