//! Java tokenizer: enough to find declarations and identifier sites.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokKind {
    Ident,
    Literal,
    Punct(char),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Token {
    pub kind: TokKind,
    pub start: usize,
    pub end: usize,
    pub line: u32,
}

impl Token {
    pub fn text<'a>(&self, src: &'a str) -> &'a str {
        &src[self.start..self.end]
    }

    pub fn is_punct(&self, c: char) -> bool {
        self.kind == TokKind::Punct(c)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LexError {
    pub line: u32,
    pub reason: &'static str,
}

pub const KEYWORDS: &[&str] = &[
    "abstract", "assert", "boolean", "break", "byte", "case", "catch", "char", "class", "const", "continue",
    "default", "do", "double", "else", "enum", "extends", "final", "finally", "float", "for", "goto", "if",
    "implements", "import", "instanceof", "int", "interface", "long", "native", "new", "package", "private",
    "protected", "public", "return", "short", "static", "strictfp", "super", "switch", "synchronized", "this",
    "throw", "throws", "transient", "try", "void", "volatile", "while", "true", "false", "null", "var",
    "record", "yield", "sealed", "permits",
];

pub fn is_keyword(s: &str) -> bool {
    KEYWORDS.contains(&s)
}

pub fn tokenize(src: &str) -> Result<Vec<Token>, LexError> {
    let bytes = src.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0usize;
    let mut line = 1u32;
    while i < bytes.len() {
        let b = bytes[i];
        match b {
            b'\n' => {
                line += 1;
                i += 1;
            }
            b' ' | b'\t' | b'\r' | 0x0c => i += 1,
            b'/' if bytes.get(i + 1) == Some(&b'/') => {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
            }
            b'/' if bytes.get(i + 1) == Some(&b'*') => {
                let start_line = line;
                i += 2;
                loop {
                    if i + 1 >= bytes.len() {
                        return Err(LexError { line: start_line, reason: "unterminated block comment" });
                    }
                    if bytes[i] == b'*' && bytes[i + 1] == b'/' {
                        i += 2;
                        break;
                    }
                    if bytes[i] == b'\n' {
                        line += 1;
                    }
                    i += 1;
                }
            }
            b'"' if src[i..].starts_with("\"\"\"") => {
                let start = i;
                let start_line = line;
                i += 3;
                loop {
                    if i >= bytes.len() {
                        return Err(LexError { line: start_line, reason: "unterminated text block" });
                    }
                    if bytes[i] == b'\\' {
                        i += 2;
                        continue;
                    }
                    if src[i..].starts_with("\"\"\"") {
                        i += 3;
                        break;
                    }
                    if bytes[i] == b'\n' {
                        line += 1;
                    }
                    i += 1;
                }
                tokens.push(Token { kind: TokKind::Literal, start, end: i, line: start_line });
            }
            b'"' | b'\'' => {
                let start = i;
                i += 1;
                loop {
                    if i >= bytes.len() || bytes[i] == b'\n' {
                        return Err(LexError { line, reason: "unterminated literal" });
                    }
                    if bytes[i] == b'\\' {
                        i += 2;
                        continue;
                    }
                    if bytes[i] == b {
                        i += 1;
                        break;
                    }
                    i += 1;
                }
                tokens.push(Token { kind: TokKind::Literal, start, end: i, line });
            }
            b'0'..=b'9' => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_' || bytes[i] == b'.') {
                    i += 1;
                }
                tokens.push(Token { kind: TokKind::Literal, start, end: i, line });
            }
            _ if b.is_ascii_alphabetic() || b == b'_' || b == b'$' || b >= 0x80 => {
                let start = i;
                while i < bytes.len() {
                    let c = bytes[i];
                    if c.is_ascii_alphanumeric() || c == b'_' || c == b'$' || c >= 0x80 {
                        i += 1;
                    } else {
                        break;
                    }
                }
                tokens.push(Token { kind: TokKind::Ident, start, end: i, line });
            }
            _ => {
                let ch = src[i..].chars().next().expect("in bounds");
                tokens.push(Token { kind: TokKind::Punct(ch), start: i, end: i + ch.len_utf8(), line });
                i += ch.len_utf8();
            }
        }
    }
    Ok(tokens)
}

/// Identifier names (keywords excluded) in order of appearance. Sources
/// that fail to lex fall back to a plain word scan.
pub fn identifiers(src: &str) -> Vec<String> {
    match tokenize(src) {
        Ok(tokens) => tokens
            .iter()
            .filter(|t| t.kind == TokKind::Ident)
            .map(|t| t.text(src))
            .filter(|s| !is_keyword(s))
            .map(str::to_string)
            .collect(),
        Err(_) => src
            .split(|c: char| !(c.is_alphanumeric() || c == '_' || c == '$'))
            .filter(|w| w.chars().next().is_some_and(|c| c.is_alphabetic() || c == '_'))
            .filter(|w| !is_keyword(w))
            .map(str::to_string)
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn skips_comments_and_strings() {
        let src = "/* class X */ class A { // foo(\n String s = \"{\"; char c = '}'; }";
        let toks = tokenize(src).unwrap();
        let idents: Vec<&str> = toks.iter().filter(|t| t.kind == TokKind::Ident).map(|t| t.text(src)).collect();
        assert_eq!(idents, ["class", "A", "String", "s", "char", "c"]);
        assert_eq!(toks.last().unwrap().line, 2);
    }

    #[test]
    fn unterminated_string_fails() {
        assert!(tokenize("String s = \"abc;\n").is_err());
        assert!(tokenize("/* never closed").is_err());
    }

    #[test]
    fn text_blocks() {
        let src = "String s = \"\"\"\n  a \" b\n  \"\"\"; int x;";
        let toks = tokenize(src).unwrap();
        assert!(toks.iter().any(|t| t.kind == TokKind::Literal && t.text(src).starts_with("\"\"\"")));
        assert_eq!(identifiers(src), ["String", "s", "x"]);
    }
}
