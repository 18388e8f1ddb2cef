//! C-like source scanning: comment tracking, function spans, struct and
//! global regions. Language front-ends plug in behind [`LanguageProfile`].

use serde::{Deserialize, Serialize};

/// Comment/boundary syntax used when scanning source text and diffs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum LanguageProfile {
    /// `//` and `/* */` comments, brace-delimited bodies.
    #[default]
    CLike,
    /// Unrecognized profile: scanning degrades to no-op with a warning.
    Unknown,
}

/// A function definition located in a file, 1-based inclusive line span.
/// `start_line` is the first line of the signature.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FunctionSpan {
    pub name: String,
    pub start_line: u32,
    pub end_line: u32,
}

/// File-scope non-function construct: struct/union/enum definition or a
/// global variable definition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegionSpan {
    pub symbol: String,
    pub start_line: u32,
    pub end_line: u32,
    pub kind: RegionKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegionKind {
    Struct,
    Global,
}

/// Incremental comment-state scanner. Feed physical lines in order; each call
/// returns the line's content outside comments (string literals preserved).
#[derive(Debug, Clone)]
pub struct CommentTracker {
    profile: LanguageProfile,
    in_block_comment: bool,
}

impl CommentTracker {
    pub fn new(profile: LanguageProfile) -> Self {
        CommentTracker {
            profile,
            in_block_comment: false,
        }
    }

    pub fn in_block_comment(&self) -> bool {
        self.in_block_comment
    }

    /// Strip comments from one line, carrying block-comment state forward.
    pub fn feed_line(&mut self, line: &str) -> String {
        if self.profile == LanguageProfile::Unknown {
            return line.to_string();
        }
        let bytes = line.as_bytes();
        let mut out = String::with_capacity(line.len());
        let mut i = 0;
        let mut in_string: Option<u8> = None;
        while i < bytes.len() {
            if self.in_block_comment {
                if bytes[i] == b'*' && i + 1 < bytes.len() && bytes[i + 1] == b'/' {
                    self.in_block_comment = false;
                    i += 2;
                } else {
                    i += 1;
                }
                continue;
            }
            match in_string {
                Some(q) => {
                    out.push(bytes[i] as char);
                    if bytes[i] == b'\\' && i + 1 < bytes.len() {
                        out.push(bytes[i + 1] as char);
                        i += 2;
                        continue;
                    }
                    if bytes[i] == q {
                        in_string = None;
                    }
                    i += 1;
                }
                None => match bytes[i] {
                    b'/' if i + 1 < bytes.len() && bytes[i + 1] == b'/' => break,
                    b'/' if i + 1 < bytes.len() && bytes[i + 1] == b'*' => {
                        self.in_block_comment = true;
                        i += 2;
                    }
                    b'"' | b'\'' => {
                        in_string = Some(bytes[i]);
                        out.push(bytes[i] as char);
                        i += 1;
                    }
                    b => {
                        out.push(b as char);
                        i += 1;
                    }
                },
            }
        }
        out
    }
}

/// Scanned view of one file: function spans, file-scope regions, and per-line
/// comment-stripped code text.
#[derive(Debug, Clone)]
pub struct SourceMap {
    pub functions: Vec<FunctionSpan>,
    pub regions: Vec<RegionSpan>,
    code_lines: Vec<String>,
}

const NON_FUNCTION_HEADS: &[&str] = &[
    "if", "for", "while", "switch", "return", "sizeof", "do", "else", "case",
];

impl SourceMap {
    /// Scan full file text. Lines are 1-based everywhere.
    pub fn scan(text: &str, profile: LanguageProfile) -> SourceMap {
        let mut tracker = CommentTracker::new(profile);
        let code_lines: Vec<String> = text.lines().map(|l| tracker.feed_line(l)).collect();
        if profile == LanguageProfile::Unknown {
            return SourceMap {
                functions: Vec::new(),
                regions: Vec::new(),
                code_lines,
            };
        }

        let mut functions = Vec::new();
        let mut regions = Vec::new();
        let mut depth: i32 = 0;
        // Pending file-scope declaration text accumulated since the last
        // boundary (`;` or `}` at depth 0), plus the line it began on.
        let mut pending = String::new();
        let mut pending_start: u32 = 0;
        // Construct currently open at depth >= 1.
        let mut open: Option<(Construct, u32)> = None;

        for (idx, code) in code_lines.iter().enumerate() {
            let lineno = (idx + 1) as u32;
            if code.trim_start().starts_with('#') {
                continue;
            }
            let bytes = code.as_bytes();
            let mut in_string: Option<u8> = None;
            let mut i = 0;
            while i < bytes.len() {
                let b = bytes[i];
                if let Some(q) = in_string {
                    if b == b'\\' {
                        i += 2;
                        continue;
                    }
                    if b == q {
                        in_string = None;
                    }
                    i += 1;
                    continue;
                }
                match b {
                    b'"' | b'\'' => {
                        in_string = Some(b);
                        i += 1;
                    }
                    b'{' => {
                        depth += 1;
                        if depth == 1 {
                            let construct = classify_pending(&pending);
                            let start = if pending.trim().is_empty() {
                                lineno
                            } else {
                                pending_start
                            };
                            open = Some((construct, start));
                            pending.clear();
                        }
                        i += 1;
                    }
                    b'}' => {
                        depth -= 1;
                        if depth == 0 {
                            if let Some((construct, start)) = open.take() {
                                // Trailing name after `}` covers `} foo_t;`.
                                let rest: String =
                                    bytes[i + 1..].iter().map(|&c| c as char).collect();
                                close_construct(
                                    construct,
                                    start,
                                    lineno,
                                    &rest,
                                    &mut functions,
                                    &mut regions,
                                );
                            }
                            pending.clear();
                            pending_start = 0;
                        }
                        if depth < 0 {
                            depth = 0;
                        }
                        i += 1;
                    }
                    b';' if depth == 0 => {
                        flush_scalar_decl(&pending, pending_start, lineno, &mut regions);
                        pending.clear();
                        pending_start = 0;
                        i += 1;
                    }
                    _ => {
                        if depth == 0 {
                            if pending.trim().is_empty() && !(b as char).is_whitespace() {
                                pending_start = lineno;
                                pending.clear();
                            }
                            pending.push(b as char);
                        }
                        i += 1;
                    }
                }
            }
            if depth == 0 && !pending.is_empty() {
                pending.push(' ');
            }
        }

        SourceMap {
            functions,
            regions,
            code_lines,
        }
    }

    pub fn function_at(&self, line: u32) -> Option<&FunctionSpan> {
        self.functions
            .iter()
            .find(|f| f.start_line <= line && line <= f.end_line)
    }

    pub fn region_at(&self, line: u32) -> Option<&RegionSpan> {
        self.regions
            .iter()
            .find(|r| r.start_line <= line && line <= r.end_line)
    }

    pub fn find_function(&self, name: &str) -> Option<&FunctionSpan> {
        self.functions.iter().find(|f| f.name == name)
    }

    /// True when the line holds no code (blank or comment-only).
    pub fn is_comment_or_blank(&self, line: u32) -> bool {
        self.code_lines
            .get((line - 1) as usize)
            .map(|c| c.trim().is_empty())
            .unwrap_or(true)
    }

    pub fn line_count(&self) -> u32 {
        self.code_lines.len() as u32
    }
}

#[derive(Debug, Clone)]
enum Construct {
    Function(String),
    Struct(String),
    Global(String),
    Other,
}

fn classify_pending(pending: &str) -> Construct {
    let trimmed = pending.trim();
    if trimmed.is_empty() {
        return Construct::Other;
    }
    const MODIFIERS: &[&str] = &[
        "typedef", "static", "const", "extern", "inline", "volatile", "register", "unsigned",
        "signed",
    ];
    let head = trimmed
        .split_whitespace()
        .find(|w| !MODIFIERS.contains(w))
        .unwrap_or("");
    if matches!(head, "struct" | "union" | "enum") {
        // A struct-typed global like `struct ops o = {..}` is a Global.
        if let Some(eq) = trimmed.find('=') {
            let lhs = &trimmed[..eq];
            if !lhs.contains('(') {
                return Construct::Global(last_identifier(lhs).unwrap_or_default());
            }
        }
        let after = trimmed
            .split_whitespace()
            .skip_while(|w| *w != "struct" && *w != "union" && *w != "enum")
            .nth(1)
            .unwrap_or("");
        let name: String = after
            .chars()
            .take_while(|c| c.is_ascii_alphanumeric() || *c == '_')
            .collect();
        return Construct::Struct(name);
    }
    if let Some(eq) = trimmed.find('=') {
        let lhs = &trimmed[..eq];
        if !lhs.contains('(') {
            return Construct::Global(last_identifier(lhs).unwrap_or_default());
        }
    }
    if let Some(paren) = trimmed.find('(') {
        if let Some(name) = last_identifier(&trimmed[..paren]) {
            if !NON_FUNCTION_HEADS.contains(&name.as_str()) {
                return Construct::Function(name);
            }
        }
    }
    Construct::Other
}

fn close_construct(
    construct: Construct,
    start: u32,
    end: u32,
    trailing: &str,
    functions: &mut Vec<FunctionSpan>,
    regions: &mut Vec<RegionSpan>,
) {
    match construct {
        Construct::Function(name) => functions.push(FunctionSpan {
            name,
            start_line: start,
            end_line: end,
        }),
        Construct::Struct(mut symbol) => {
            if symbol.is_empty() {
                if let Some(t) = last_identifier(trailing.trim_end_matches(';')) {
                    symbol = t;
                }
            }
            regions.push(RegionSpan {
                symbol,
                start_line: start,
                end_line: end,
                kind: RegionKind::Struct,
            });
        }
        Construct::Global(symbol) => regions.push(RegionSpan {
            symbol,
            start_line: start,
            end_line: end,
            kind: RegionKind::Global,
        }),
        Construct::Other => {}
    }
}

/// Records `int x = 3;` style file-scope definitions that never open a brace.
fn flush_scalar_decl(pending: &str, start: u32, end: u32, regions: &mut Vec<RegionSpan>) {
    let trimmed = pending.trim();
    if trimmed.is_empty() || trimmed.contains('(') || trimmed.starts_with("extern") {
        return;
    }
    let Some(eq) = trimmed.find('=') else {
        return;
    };
    let Some(symbol) = last_identifier(&trimmed[..eq]) else {
        return;
    };
    regions.push(RegionSpan {
        symbol,
        start_line: if start == 0 { end } else { start },
        end_line: end,
        kind: RegionKind::Global,
    });
}

/// Last identifier-looking token in `s` (handles `int arr[]`, `char *p`).
fn last_identifier(s: &str) -> Option<String> {
    let bytes = s.as_bytes();
    let mut end = bytes.len();
    while end > 0 {
        let c = bytes[end - 1] as char;
        if c.is_ascii_alphanumeric() || c == '_' {
            break;
        }
        end -= 1;
    }
    if end == 0 {
        return None;
    }
    let mut start = end;
    while start > 0 {
        let c = bytes[start - 1] as char;
        if c.is_ascii_alphanumeric() || c == '_' {
            start -= 1;
        } else {
            break;
        }
    }
    let ident = &s[start..end];
    if ident.is_empty() || ident.chars().next().unwrap().is_ascii_digit() {
        return None;
    }
    Some(ident.to_string())
}

/// Whitespace-insensitive equality key: trims the ends and collapses interior
/// whitespace runs to one space.
pub fn normalize_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}
