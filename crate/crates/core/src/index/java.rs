//! Declaration extraction from Java compilation units.

use tree_sitter::{Node, Parser};

use crate::model::SymbolKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TypeKind {
    Class,
    Interface,
    Enum,
    Record,
    Annotation,
}

impl TypeKind {
    fn keyword(self) -> &'static str {
        match self {
            TypeKind::Class => "class",
            TypeKind::Interface => "interface",
            TypeKind::Enum => "enum",
            TypeKind::Record => "record",
            TypeKind::Annotation => "@interface",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedMember {
    pub name: String,
    pub kind: SymbolKind,
    pub params: Vec<String>,
    pub definition: String,
    /// Declaration without its body, as shown in skeletons.
    pub header: String,
    pub name_line: u32,
    pub start_line: u32,
    pub end_line: u32,
    pub enum_constant: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedType {
    pub simple: String,
    pub kind: TypeKind,
    /// Raw supertype names as written, generics erased.
    pub parents: Vec<String>,
    pub header: String,
    pub name_line: u32,
    pub start_line: u32,
    pub end_line: u32,
    pub members: Vec<ParsedMember>,
    pub nested: Vec<ParsedType>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Import {
    pub path: String,
    pub wildcard: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedFile {
    pub package: String,
    pub imports: Vec<Import>,
    pub types: Vec<ParsedType>,
    /// Identifier occurrences: (name, line).
    pub identifiers: Vec<(String, u32)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntaxError {
    pub line: u32,
    pub reason: String,
}

pub fn parse_java(src: &str) -> Result<ParsedFile, SyntaxError> {
    let mut parser = Parser::new();
    parser
        .set_language(&tree_sitter_java::LANGUAGE.into())
        .expect("bundled Java grammar is compatible");
    let tree = parser
        .parse(src, None)
        .ok_or_else(|| SyntaxError { line: 1, reason: "parser gave up".into() })?;
    let root = tree.root_node();
    if root.has_error() {
        let bad = first_error(root).unwrap_or(root);
        let what = if bad.is_missing() { format!("missing `{}`", bad.kind()) } else { "unexpected input".to_string() };
        return Err(SyntaxError { line: line_of(bad), reason: what });
    }
    let cx = Cx { src: src.as_bytes() };
    let mut file = ParsedFile { package: String::new(), imports: Vec::new(), types: Vec::new(), identifiers: Vec::new() };
    let mut cursor = root.walk();
    for child in root.named_children(&mut cursor) {
        match child.kind() {
            "package_declaration" => {
                if let Some(name) = first_named(child, &["scoped_identifier", "identifier"]) {
                    file.package = cx.text(name).to_string();
                }
            }
            "import_declaration" => {
                if let Some(name) = first_named(child, &["scoped_identifier", "identifier"]) {
                    let wildcard = has_child_kind(child, "asterisk");
                    file.imports.push(Import { path: cx.text(name).to_string(), wildcard });
                }
            }
            _ => {
                if let Some(t) = cx.type_decl(child) {
                    file.types.push(t);
                }
            }
        }
    }
    collect_identifiers(root, &cx, &mut file.identifiers);
    Ok(file)
}

struct Cx<'a> {
    src: &'a [u8],
}

impl<'a> Cx<'a> {
    fn text(&self, node: Node) -> &'a str {
        node.utf8_text(self.src).unwrap_or("")
    }

    fn slice(&self, start: usize, end: usize) -> &'a str {
        std::str::from_utf8(&self.src[start..end]).unwrap_or("")
    }

    fn type_decl(&self, node: Node) -> Option<ParsedType> {
        let kind = match node.kind() {
            "class_declaration" => TypeKind::Class,
            "interface_declaration" => TypeKind::Interface,
            "enum_declaration" => TypeKind::Enum,
            "record_declaration" => TypeKind::Record,
            "annotation_type_declaration" => TypeKind::Annotation,
            _ => return None,
        };
        let name = node.child_by_field_name("name")?;
        let body = node.child_by_field_name("body");
        let header_end = body.map(|b| b.start_byte()).unwrap_or(node.end_byte());
        let mut t = ParsedType {
            simple: self.text(name).to_string(),
            kind,
            parents: Vec::new(),
            header: self.slice(node.start_byte(), header_end).trim().to_string(),
            name_line: line_of(name),
            start_line: line_of(node),
            end_line: end_line_of(node),
            members: Vec::new(),
            nested: Vec::new(),
        };
        let mut cursor = node.walk();
        for child in node.named_children(&mut cursor) {
            match child.kind() {
                "superclass" | "super_interfaces" | "extends_interfaces" => self.collect_type_names(child, &mut t.parents),
                _ => {}
            }
        }
        if kind == TypeKind::Record {
            if let Some(params) = node.child_by_field_name("parameters") {
                let mut c = params.walk();
                for p in params.named_children(&mut c) {
                    if let Some(pn) = p.child_by_field_name("name") {
                        t.members.push(self.member(p, pn, SymbolKind::Field, Vec::new(), p.end_byte()));
                    }
                }
            }
        }
        if let Some(body) = body {
            self.body(body, &mut t);
        }
        Some(t)
    }

    fn collect_type_names(&self, node: Node, out: &mut Vec<String>) {
        match node.kind() {
            "type_identifier" | "scoped_type_identifier" => out.push(self.text(node).split_whitespace().collect()),
            "generic_type" => {
                if let Some(base) = first_named(node, &["type_identifier", "scoped_type_identifier"]) {
                    out.push(self.text(base).split_whitespace().collect());
                }
            }
            _ => {
                let mut cursor = node.walk();
                for child in node.named_children(&mut cursor) {
                    self.collect_type_names(child, out);
                }
            }
        }
    }

    fn body(&self, body: Node, t: &mut ParsedType) {
        let mut cursor = body.walk();
        for child in body.named_children(&mut cursor) {
            match child.kind() {
                "enum_constant" => {
                    if let Some(n) = child.child_by_field_name("name") {
                        let mut m = self.member(child, n, SymbolKind::Field, Vec::new(), child.end_byte());
                        m.enum_constant = true;
                        t.members.push(m);
                    }
                }
                "enum_body_declarations" => self.body(child, t),
                "field_declaration" | "constant_declaration" => {
                    let mut c = child.walk();
                    for decl in child.children_by_field_name("declarator", &mut c) {
                        if let Some(n) = decl.child_by_field_name("name") {
                            t.members.push(self.member(child, n, SymbolKind::Field, Vec::new(), child.end_byte()));
                        }
                    }
                }
                "method_declaration" | "annotation_type_element_declaration" => {
                    if let Some(n) = child.child_by_field_name("name") {
                        let params = self.params(child);
                        let header_end = child.child_by_field_name("body").map(|b| b.start_byte()).unwrap_or(child.end_byte());
                        t.members.push(self.member(child, n, SymbolKind::Method, params, header_end));
                    }
                }
                "constructor_declaration" | "compact_constructor_declaration" => {
                    if let Some(n) = child.child_by_field_name("name") {
                        let params = self.params(child);
                        let header_end = child.child_by_field_name("body").map(|b| b.start_byte()).unwrap_or(child.end_byte());
                        t.members.push(self.member(child, n, SymbolKind::Constructor, params, header_end));
                    }
                }
                _ => {
                    if let Some(nested) = self.type_decl(child) {
                        t.nested.push(nested);
                    }
                }
            }
        }
    }

    fn member(&self, node: Node, name: Node, kind: SymbolKind, params: Vec<String>, header_end: usize) -> ParsedMember {
        ParsedMember {
            name: self.text(name).to_string(),
            kind,
            params,
            definition: self.text(node).to_string(),
            header: self.slice(node.start_byte(), header_end).trim().to_string(),
            name_line: line_of(name),
            start_line: line_of(node),
            end_line: end_line_of(node),
            enum_constant: false,
        }
    }

    fn params(&self, node: Node) -> Vec<String> {
        let Some(list) = node.child_by_field_name("parameters") else { return Vec::new() };
        let mut out = Vec::new();
        let mut cursor = list.walk();
        for p in list.named_children(&mut cursor) {
            match p.kind() {
                "formal_parameter" => {
                    let mut ty = p.child_by_field_name("type").map(|t| erase_type(self.text(t))).unwrap_or_default();
                    if let Some(d) = p.child_by_field_name("dimensions") {
                        ty.push_str(&self.text(d).split_whitespace().collect::<String>());
                    }
                    out.push(ty);
                }
                "spread_parameter" => {
                    let ty = first_named(p, &[
                        "type_identifier", "scoped_type_identifier", "generic_type", "array_type",
                        "integral_type", "floating_point_type", "boolean_type",
                    ])
                    .map(|t| erase_type(self.text(t)))
                    .unwrap_or_default();
                    out.push(format!("{ty}..."));
                }
                _ => {}
            }
        }
        out
    }
}

/// `java.util.List<String>[]` → `List[]`.
pub fn erase_type(text: &str) -> String {
    let mut out = String::new();
    let mut depth = 0usize;
    for c in text.chars() {
        match c {
            '<' => depth += 1,
            '>' => depth = depth.saturating_sub(1),
            _ if depth == 0 && !c.is_whitespace() => out.push(c),
            _ => {}
        }
    }
    let (base, dims) = match out.find('[') {
        Some(i) => out.split_at(i),
        None => (out.as_str(), ""),
    };
    let simple = base.rsplit('.').next().unwrap_or(base);
    format!("{simple}{dims}")
}

/// Skeleton of a type: header plus member headers, bodies elided.
pub fn type_skeleton(t: &ParsedType, indent: usize) -> String {
    let pad = " ".repeat(indent);
    let inner = " ".repeat(indent + 4);
    let mut out = format!("{pad}{} {{\n", collapse(&t.header));
    let constants: Vec<&str> = t.members.iter().filter(|m| m.enum_constant).map(|m| m.name.as_str()).collect();
    if !constants.is_empty() {
        out.push_str(&format!("{inner}{};\n", constants.join(", ")));
    }
    let mut last_field_decl: Option<&str> = None;
    for m in &t.members {
        if m.enum_constant {
            continue;
        }
        let line = match m.kind {
            SymbolKind::Field => {
                // one declaration may declare several fields
                if last_field_decl == Some(m.definition.as_str()) {
                    continue;
                }
                last_field_decl = Some(m.definition.as_str());
                let text = collapse(&m.header);
                if text.len() > 160 {
                    let head = text.split('=').next().unwrap_or(&text).trim_end();
                    format!("{head} = ...;")
                } else if t.kind == TypeKind::Record && !text.ends_with(';') {
                    format!("{text};")
                } else {
                    text
                }
            }
            _ => {
                let text = collapse(&m.header);
                if text.ends_with(';') { text } else { format!("{text};") }
            }
        };
        out.push_str(&format!("{inner}{line}\n"));
    }
    for n in &t.nested {
        out.push_str(&type_skeleton(n, indent + 4));
    }
    out.push_str(&format!("{pad}}}\n"));
    out
}

pub fn file_skeleton(f: &ParsedFile) -> String {
    let mut out = String::new();
    if !f.package.is_empty() {
        out.push_str(&format!("package {};\n\n", f.package));
    }
    for i in &f.imports {
        out.push_str(&format!("import {}{};\n", i.path, if i.wildcard { ".*" } else { "" }));
    }
    if !f.imports.is_empty() {
        out.push('\n');
    }
    for t in &f.types {
        out.push_str(&type_skeleton(t, 0));
    }
    out
}

impl ParsedType {
    pub fn keyword(&self) -> &'static str {
        self.kind.keyword()
    }
}

fn collapse(s: &str) -> String {
    crate::model::collapse_ws(s)
}

fn line_of(node: Node) -> u32 {
    node.start_position().row as u32 + 1
}

fn end_line_of(node: Node) -> u32 {
    node.end_position().row as u32 + 1
}

fn first_named<'t>(node: Node<'t>, kinds: &[&str]) -> Option<Node<'t>> {
    let mut cursor = node.walk();
    let found = node.named_children(&mut cursor).find(|c| kinds.contains(&c.kind()));
    found
}

fn has_child_kind(node: Node, kind: &str) -> bool {
    let mut cursor = node.walk();
    let found = node.children(&mut cursor).any(|c| c.kind() == kind);
    found
}

fn first_error(node: Node) -> Option<Node> {
    if node.is_error() || node.is_missing() {
        return Some(node);
    }
    let mut cursor = node.walk();
    let children: Vec<Node> = node.children(&mut cursor).collect();
    children.into_iter().filter(|c| c.has_error() || c.is_missing()).find_map(first_error)
}

fn collect_identifiers(node: Node, cx: &Cx, out: &mut Vec<(String, u32)>) {
    let mut stack = vec![node];
    while let Some(n) = stack.pop() {
        match n.kind() {
            "identifier" | "type_identifier" => out.push((cx.text(n).to_string(), line_of(n))),
            _ => {
                let mut cursor = n.walk();
                let children: Vec<Node> = n.named_children(&mut cursor).collect();
                stack.extend(children.into_iter().rev());
            }
        }
    }
}
