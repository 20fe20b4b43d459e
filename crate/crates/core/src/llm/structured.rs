//! Output shapes the gateway can validate, with their line-oriented parsers.

use std::collections::BTreeSet;
use std::fmt;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::model::{canonical_vp_name, parse_template, SymbolKind, TemplateError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemaId {
    ExamOptions,
    ExamAnswer,
    VpSettings,
    Feedback,
    JudgeVerdict,
    VpMatches,
    TemplateReply,
    TestMethod,
}

impl fmt::Display for SchemaId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SchemaId::ExamOptions => "exam-options",
            SchemaId::ExamAnswer => "exam-answer",
            SchemaId::VpSettings => "vp-settings",
            SchemaId::Feedback => "feedback",
            SchemaId::JudgeVerdict => "judge-verdict",
            SchemaId::VpMatches => "vp-matches",
            SchemaId::TemplateReply => "template-reply",
            SchemaId::TestMethod => "test-method",
        };
        f.write_str(s)
    }
}

pub trait Schema {
    type Output;
    fn id(&self) -> SchemaId;
    /// `Err` carries a reason suitable for the corrective reissue.
    fn parse(&self, text: &str) -> Result<Self::Output, String>;
}

/// Non-empty lines outside code fences, trimmed.
fn content_lines(text: &str) -> impl Iterator<Item = &str> {
    text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with("```"))
}

fn strip_prefix_ci<'a>(line: &'a str, prefix: &str) -> Option<&'a str> {
    if line.len() >= prefix.len() && line[..prefix.len()].eq_ignore_ascii_case(prefix) {
        Some(&line[prefix.len()..])
    } else {
        None
    }
}

/// `WRONG: <assertion statement>` lines. An answer without any is legal
/// here; the caller decides whether zero candidates warrants a revision.
pub struct ExamOptionsSchema;

impl Schema for ExamOptionsSchema {
    type Output = Vec<String>;
    fn id(&self) -> SchemaId {
        SchemaId::ExamOptions
    }
    fn parse(&self, text: &str) -> Result<Vec<String>, String> {
        Ok(content_lines(text)
            .filter_map(|l| strip_prefix_ci(l, "WRONG:"))
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .collect())
    }
}

/// A request for project knowledge raised by the model.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct KnowledgeQuery {
    pub name: String,
    /// Ask for the type together with its super/sub types.
    #[serde(default)]
    pub family: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<SymbolKind>,
}

/// Parses `QUERY: name`, `QUERY FAMILY: name` or `QUERY <kind>: name`.
pub fn parse_query_line(line: &str) -> Option<KnowledgeQuery> {
    let rest = strip_prefix_ci(line.trim(), "QUERY")?;
    let (qualifier, name) = rest.split_once(':')?;
    let name = name.trim().trim_end_matches("()").trim_matches('`').to_string();
    if name.is_empty() {
        return None;
    }
    let qualifier = qualifier.trim().to_ascii_lowercase();
    let (family, kind) = match qualifier.as_str() {
        "" => (false, None),
        "family" => (true, None),
        "class" => (false, Some(SymbolKind::Class)),
        "constructor" => (false, Some(SymbolKind::Constructor)),
        "method" => (false, Some(SymbolKind::Method)),
        "field" => (false, Some(SymbolKind::Field)),
        _ => return None,
    };
    Some(KnowledgeQuery { name, family, kind })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExamReply {
    /// 0-based option index.
    Answer(usize),
    Queries(Vec<KnowledgeQuery>),
}

/// `ANSWER: <1-based option>` or one or more `QUERY` lines, never both.
pub struct ExamAnswerSchema {
    pub option_count: usize,
}

impl Schema for ExamAnswerSchema {
    type Output = ExamReply;
    fn id(&self) -> SchemaId {
        SchemaId::ExamAnswer
    }
    fn parse(&self, text: &str) -> Result<ExamReply, String> {
        let mut answer = None;
        let mut queries = Vec::new();
        for line in content_lines(text) {
            if let Some(rest) = strip_prefix_ci(line, "ANSWER:") {
                let digits: String = rest.trim().trim_start_matches(['(', '#']).chars().take_while(char::is_ascii_digit).collect();
                let n: usize = digits.parse().map_err(|_| format!("unreadable answer `{}`", rest.trim()))?;
                if n == 0 || n > self.option_count {
                    return Err(format!("answer {n} outside options 1..={}", self.option_count));
                }
                if answer.replace(n - 1).is_some() {
                    return Err("more than one ANSWER line".into());
                }
            } else if let Some(q) = parse_query_line(line) {
                queries.push(q);
            }
        }
        match (answer, queries.is_empty()) {
            (Some(_), false) => Err("either answer or query, not both".into()),
            (Some(a), true) => Ok(ExamReply::Answer(a)),
            (None, false) => Ok(ExamReply::Queries(queries)),
            (None, true) => Err("expected `ANSWER: <n>` or `QUERY: <symbol>` lines".into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TemplateReply {
    Queries(Vec<KnowledgeQuery>),
    /// Template text following the `TEMPLATE:` marker.
    Template(String),
}

/// Either `QUERY` lines or a `TEMPLATE:` block, optionally preceded by an
/// `ANALYSIS:` section. Only syntax is checked here; template invariants
/// are left to the caller.
pub struct TemplateReplySchema;

impl Schema for TemplateReplySchema {
    type Output = TemplateReply;
    fn id(&self) -> SchemaId {
        SchemaId::TemplateReply
    }
    fn parse(&self, text: &str) -> Result<TemplateReply, String> {
        let lines: Vec<&str> = text.lines().collect();
        if let Some(pos) = lines.iter().position(|l| strip_prefix_ci(l.trim(), "TEMPLATE:").is_some()) {
            let mut body: Vec<&str> = Vec::new();
            let inline = strip_prefix_ci(lines[pos].trim(), "TEMPLATE:").unwrap_or("").trim();
            if !inline.is_empty() {
                body.push(inline);
            }
            body.extend(lines[pos + 1..].iter().filter(|l| !l.trim_start().starts_with("```")));
            let body = body.join("\n");
            return match parse_template(&body) {
                Err(TemplateError::Parse { line, reason }) => Err(format!("template line {line}: {reason}")),
                _ => Ok(TemplateReply::Template(body)),
            };
        }
        let queries: Vec<KnowledgeQuery> = content_lines(text).filter_map(parse_query_line).collect();
        if queries.is_empty() {
            return Err("expected `QUERY:` lines or a `TEMPLATE:` block".into());
        }
        Ok(TemplateReply::Queries(queries))
    }
}

/// Structured settings for one intended scenario, as emitted by the model.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SettingsBundle {
    pub label: String,
    /// VP name -> chosen setting, in emission order.
    pub settings: Vec<(String, String)>,
    /// (vp, dependent step, resolved value)
    pub dep_resolutions: Vec<(String, u32, String)>,
    pub primary_oracles: Vec<String>,
    pub alternative_oracles: Vec<String>,
}

/// Blocks of
/// ```text
/// SCENARIO: <label>
/// SET <vp> = <setting>
/// DEP <vp> @ STEP <m> = <value>
/// PRIMARY: <oracle>
/// ALTERNATIVE: <oracle>
/// ```
/// The response is accepted when at least one bundle uses only declared VPs;
/// per-bundle validation happens at crystallization.
pub struct SettingsSchema {
    pub declared_vps: Vec<String>,
}

pub fn parse_settings_blocks(text: &str) -> Result<Vec<SettingsBundle>, String> {
    let dep_re = Regex::new(r"(?i)^DEP\s+(.+?)\s*@\s*STEP\s+(\d+)\s*=\s*(.*)$").expect("static regex");
    let mut bundles: Vec<SettingsBundle> = Vec::new();
    for line in content_lines(text) {
        if let Some(label) = strip_prefix_ci(line, "SCENARIO:") {
            bundles.push(SettingsBundle { label: label.trim().to_string(), ..Default::default() });
            continue;
        }
        let Some(current) = bundles.last_mut() else {
            continue;
        };
        if let Some(rest) = strip_prefix_ci(line, "SET ") {
            let (vp, value) = rest.split_once('=').ok_or_else(|| format!("SET line without `=`: `{line}`"))?;
            current.settings.push((canonical_vp_name(vp), value.trim().to_string()));
        } else if let Some(caps) = dep_re.captures(line) {
            let step: u32 = caps[2].parse().map_err(|_| format!("bad step in `{line}`"))?;
            current.dep_resolutions.push((canonical_vp_name(&caps[1]), step, caps[3].trim().to_string()));
        } else if let Some(rest) = strip_prefix_ci(line, "PRIMARY:") {
            current.primary_oracles.push(rest.trim().to_string());
        } else if let Some(rest) = strip_prefix_ci(line, "ALTERNATIVE:") {
            current.alternative_oracles.push(rest.trim().to_string());
        } else {
            return Err(format!("unrecognized line in scenario block: `{line}`"));
        }
    }
    if bundles.is_empty() {
        return Err("no `SCENARIO:` blocks".into());
    }
    Ok(bundles)
}

impl Schema for SettingsSchema {
    type Output = Vec<SettingsBundle>;
    fn id(&self) -> SchemaId {
        SchemaId::VpSettings
    }
    fn parse(&self, text: &str) -> Result<Vec<SettingsBundle>, String> {
        let bundles = parse_settings_blocks(text)?;
        let usable = bundles
            .iter()
            .any(|b| b.settings.iter().all(|(vp, _)| self.declared_vps.iter().any(|d| d == vp)));
        if !usable {
            let undeclared: BTreeSet<&str> = bundles
                .iter()
                .flat_map(|b| b.settings.iter().map(|(vp, _)| vp.as_str()))
                .filter(|vp| !self.declared_vps.iter().any(|d| d == vp))
                .collect();
            return Err(format!(
                "settings reference undeclared variation points: {}",
                undeclared.into_iter().collect::<Vec<_>>().join(", ")
            ));
        }
        Ok(bundles)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum DirectiveOp {
    Add { rule: String },
    /// 1-based rule index.
    Modify { index: usize, rule: String },
    Delete { index: usize },
}

/// A rule-set edit. `generalized` marks a directive that replaced
/// conflicting suggestions with a more general one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Directive {
    #[serde(flatten)]
    pub op: DirectiveOp,
    #[serde(default)]
    pub generalized: bool,
}

impl Directive {
    pub fn add(rule: impl Into<String>) -> Self {
        Self { op: DirectiveOp::Add { rule: rule.into() }, generalized: false }
    }

    pub fn render(&self) -> String {
        let flag = if self.generalized { " [generalized]" } else { "" };
        match &self.op {
            DirectiveOp::Add { rule } => format!("ADD{flag}: {rule}"),
            DirectiveOp::Modify { index, rule } => format!("MODIFY {index}{flag}: {rule}"),
            DirectiveOp::Delete { index } => format!("DELETE {index}{flag}"),
        }
    }
}

/// `ADD: rule`, `MODIFY <n>: rule`, `DELETE <n>`, each optionally flagged
/// `[generalized]`, or a lone `NONE`. Other lines are commentary.
pub struct FeedbackSchema {
    pub max_directives: usize,
}

pub fn parse_directive(line: &str) -> Option<Directive> {
    let re = Regex::new(r"(?i)^(ADD|MODIFY|DELETE)\s*(\d+)?\s*(\[generalized\])?\s*(?::\s*(.*))?$").expect("static regex");
    let caps = re.captures(line.trim())?;
    let generalized = caps.get(3).is_some();
    let index: Option<usize> = caps.get(2).and_then(|m| m.as_str().parse().ok());
    let rule = caps.get(4).map(|m| m.as_str().trim().to_string()).filter(|r| !r.is_empty());
    let op = match caps[1].to_ascii_uppercase().as_str() {
        "ADD" if index.is_none() => DirectiveOp::Add { rule: rule? },
        "MODIFY" => DirectiveOp::Modify { index: index?, rule: rule? },
        "DELETE" if rule.is_none() => DirectiveOp::Delete { index: index? },
        _ => return None,
    };
    Some(Directive { op, generalized })
}

impl Schema for FeedbackSchema {
    type Output = Vec<Directive>;
    fn id(&self) -> SchemaId {
        SchemaId::Feedback
    }
    fn parse(&self, text: &str) -> Result<Vec<Directive>, String> {
        let mut none = false;
        let mut out = Vec::new();
        for line in content_lines(text) {
            if line.eq_ignore_ascii_case("NONE") {
                none = true;
            } else if let Some(d) = parse_directive(line) {
                out.push(d);
            }
        }
        if out.is_empty() && !none {
            return Err("expected ADD/MODIFY/DELETE directives or NONE".into());
        }
        if out.len() > self.max_directives {
            return Err(format!("{} directives exceed the limit of {}", out.len(), self.max_directives));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub fulfilled: bool,
    pub tests: Vec<String>,
}

/// `MATCH: yes; tests: [t1,t3]` or `MATCH: no`. Matched ids must be among
/// the tests still available.
pub struct JudgeVerdictSchema {
    pub available: Vec<String>,
}

impl JudgeVerdictSchema {
    pub fn new(available: Vec<String>) -> Self {
        Self { available }
    }
}

impl Schema for JudgeVerdictSchema {
    type Output = Verdict;
    fn id(&self) -> SchemaId {
        SchemaId::JudgeVerdict
    }
    fn parse(&self, text: &str) -> Result<Verdict, String> {
        let re = Regex::new(r"(?i)MATCH:\s*(yes|no)\b\s*(?:;\s*tests:\s*\[([^\]]*)\])?").expect("static regex");
        let caps = re.captures(text).ok_or("expected `MATCH: yes; tests: [..]` or `MATCH: no`")?;
        let fulfilled = caps[1].eq_ignore_ascii_case("yes");
        let tests: Vec<String> = caps
            .get(2)
            .map(|m| {
                m.as_str()
                    .split(',')
                    .map(|t| t.trim().trim_matches(['"', '\'', '`']).to_string())
                    .filter(|t| !t.is_empty())
                    .collect()
            })
            .unwrap_or_default();
        if fulfilled && tests.is_empty() {
            return Err("a `yes` verdict must list the matching tests".into());
        }
        if !fulfilled && !tests.is_empty() {
            return Err("a `no` verdict cannot list tests".into());
        }
        if let Some(bad) = tests.iter().find(|t| !self.available.contains(t)) {
            return Err(format!("test `{bad}` is not among the available generated tests"));
        }
        let mut seen = BTreeSet::new();
        let tests = tests.into_iter().filter(|t| seen.insert(t.clone())).collect();
        Ok(Verdict { fulfilled, tests })
    }
}

/// `MATCH: <predicted vp> = <truth vp>` lines or `NONE`; one-to-one.
pub struct VpMatchSchema {
    pub predicted: Vec<String>,
    pub truth: Vec<String>,
}

impl Schema for VpMatchSchema {
    type Output = Vec<(String, String)>;
    fn id(&self) -> SchemaId {
        SchemaId::VpMatches
    }
    fn parse(&self, text: &str) -> Result<Vec<(String, String)>, String> {
        let mut pairs = Vec::new();
        let mut none = false;
        for line in content_lines(text) {
            if line.eq_ignore_ascii_case("NONE") {
                none = true;
            } else if let Some(rest) = strip_prefix_ci(line, "MATCH:") {
                let (p, t) = rest.split_once('=').ok_or_else(|| format!("bad match line `{line}`"))?;
                let (p, t) = (canonical_vp_name(p), canonical_vp_name(t));
                if !self.predicted.contains(&p) || !self.truth.contains(&t) {
                    return Err(format!("unknown variation point in `{line}`"));
                }
                if pairs.iter().any(|(a, b)| *a == p || *b == t) {
                    return Err(format!("variation point matched twice in `{line}`"));
                }
                pairs.push((p, t));
            }
        }
        if pairs.is_empty() && !none {
            return Err("expected MATCH lines or NONE".into());
        }
        Ok(pairs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn judge_verdict_parses() {
        let s = JudgeVerdictSchema::new(vec!["t1".into(), "t2".into(), "t3".into()]);
        let v = s.parse("MATCH: yes; tests: [t1,t3]").unwrap();
        assert_eq!(v, Verdict { fulfilled: true, tests: vec!["t1".into(), "t3".into()] });
        assert!(!s.parse("Reasoning...\nMATCH: no").unwrap().fulfilled);
        assert!(s.parse("MATCH: yes; tests: [t9]").is_err());
        assert!(s.parse("MATCH: yes").is_err());
    }

    #[test]
    fn exam_answer_or_queries() {
        let s = ExamAnswerSchema { option_count: 3 };
        assert_eq!(s.parse("ANSWER: 2").unwrap(), ExamReply::Answer(1));
        assert!(s.parse("ANSWER: 4").is_err());
        let q = s.parse("I need more context.\nQUERY: matchPath\nQUERY FAMILY: Paint").unwrap();
        assert_eq!(
            q,
            ExamReply::Queries(vec![
                KnowledgeQuery { name: "matchPath".into(), family: false, kind: None },
                KnowledgeQuery { name: "Paint".into(), family: true, kind: None },
            ])
        );
        assert!(s.parse("ANSWER: 1\nQUERY: x").is_err());
    }

    #[test]
    fn settings_with_undeclared_vp_only_is_malformed() {
        let s = SettingsSchema { declared_vps: vec!["shape".into()] };
        assert!(s.parse("SCENARIO: a\nSET timeout = 5\nPRIMARY: ok").is_err());
        let ok = s.parse("SCENARIO: a\nSET timeout = 5\nPRIMARY: ok\n\nSCENARIO: b\nSET Shape = oval\nDEP shape @ STEP 3 = big\nPRIMARY: ok").unwrap();
        assert_eq!(ok.len(), 2);
        assert_eq!(ok[1].settings, vec![("shape".to_string(), "oval".to_string())]);
        assert_eq!(ok[1].dep_resolutions, vec![("shape".to_string(), 3, "big".to_string())]);
    }

    #[test]
    fn directives_parse() {
        let s = FeedbackSchema { max_directives: 5 };
        let d = s.parse("Some analysis\nADD: Mocked parameters are not VPs.\nMODIFY 2 [generalized]: Merge.\nDELETE 1").unwrap();
        assert_eq!(d.len(), 3);
        assert!(d[1].generalized);
        assert_eq!(d[2].op, DirectiveOp::Delete { index: 1 });
        assert_eq!(s.parse("NONE").unwrap(), vec![]);
        assert!(s.parse("nothing useful").is_err());
        for x in &d {
            assert_eq!(parse_directive(&x.render()).as_ref(), Some(x));
        }
    }

    #[test]
    fn query_lines() {
        assert_eq!(parse_query_line("QUERY METHOD: fillOval()").unwrap().kind, Some(SymbolKind::Method));
        assert!(parse_query_line("QUERY WHAT: x").is_none());
    }
}
