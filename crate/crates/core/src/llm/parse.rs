//! Tolerant parsers over model output. Parsers never panic on arbitrary
//! bytes; they return a value or a typed error.

use crate::types::{CommitId, CriticalLine};

use super::{BinaryVerdict, ComparativeChoice, LlmError};

/// Extract the first bracketed list of `(filename, functionname, linenum,
/// line)` tuples. Surrounding prose is ignored; an explicit `[]` is an empty
/// result. Malformed elements inside an otherwise usable list are skipped.
pub fn parse_critical_lines(text: &str) -> Result<Vec<CriticalLine>, LlmError> {
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'[' {
            if let Some(end) = matching_bracket(text, i) {
                let interior = &text[i + 1..end];
                if interior.trim().is_empty() {
                    return Ok(Vec::new());
                }
                let parsed = parse_tuple_list(interior);
                if !parsed.is_empty() {
                    return Ok(parsed);
                }
                i = end + 1;
                continue;
            }
        }
        i += 1;
    }
    Err(LlmError::Parse(
        "no bracketed list of critical-line tuples found".into(),
    ))
}

/// Byte index of the `]` matching the `[` at `open`, honoring quotes.
fn matching_bracket(text: &str, open: usize) -> Option<usize> {
    let bytes = text.as_bytes();
    let mut depth = 0i32;
    let mut quote: Option<u8> = None;
    let mut i = open;
    while i < bytes.len() {
        let b = bytes[i];
        match quote {
            Some(q) => {
                if b == b'\\' {
                    i += 1;
                } else if b == q {
                    quote = None;
                }
            }
            None => match b {
                b'"' | b'\'' => quote = Some(b),
                b'[' => depth += 1,
                b']' => {
                    depth -= 1;
                    if depth == 0 {
                        return Some(i);
                    }
                }
                _ => {}
            },
        }
        i += 1;
    }
    None
}

fn parse_tuple_list(interior: &str) -> Vec<CriticalLine> {
    let mut out = Vec::new();
    let bytes = interior.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'(' {
            if let Some((tuple, consumed)) = parse_tuple(&interior[i..]) {
                out.push(tuple);
                i += consumed;
                continue;
            }
        }
        i += 1;
    }
    out
}

/// `("file", "function", 12, "text")` with python-style strings; whitespace
/// and trailing commas tolerated. Returns the tuple and bytes consumed.
fn parse_tuple(s: &str) -> Option<(CriticalLine, usize)> {
    let mut cur = Cursor { s, pos: 0 };
    cur.expect(b'(')?;
    let filename = cur.string()?;
    cur.expect(b',')?;
    let functionname = cur.string()?;
    cur.expect(b',')?;
    let linenum: u32 = cur.integer()?;
    cur.expect(b',')?;
    let line_text = cur.string()?;
    cur.skip_ws_and(b',');
    cur.expect(b')')?;
    if linenum == 0 || line_text.trim().is_empty() {
        return None;
    }
    Some((
        CriticalLine {
            filename,
            functionname,
            linenum,
            line_text,
        },
        cur.pos,
    ))
}

struct Cursor<'a> {
    s: &'a str,
    pos: usize,
}

impl Cursor<'_> {
    fn skip_ws(&mut self) {
        while self
            .s
            .as_bytes()
            .get(self.pos)
            .map(|b| b.is_ascii_whitespace())
            .unwrap_or(false)
        {
            self.pos += 1;
        }
    }

    fn skip_ws_and(&mut self, b: u8) {
        self.skip_ws();
        if self.s.as_bytes().get(self.pos) == Some(&b) {
            self.pos += 1;
            self.skip_ws();
        }
    }

    fn expect(&mut self, b: u8) -> Option<()> {
        self.skip_ws();
        if self.s.as_bytes().get(self.pos) == Some(&b) {
            self.pos += 1;
            Some(())
        } else {
            None
        }
    }

    fn string(&mut self) -> Option<String> {
        self.skip_ws();
        let quote = *self.s.as_bytes().get(self.pos)?;
        if quote != b'"' && quote != b'\'' {
            return None;
        }
        self.pos += 1;
        let mut out = String::new();
        loop {
            let b = *self.s.as_bytes().get(self.pos)?;
            if b == b'\\' {
                let next = *self.s.as_bytes().get(self.pos + 1)?;
                out.push(match next {
                    b'n' => '\n',
                    b't' => '\t',
                    other => other as char,
                });
                self.pos += 2;
            } else if b == quote {
                self.pos += 1;
                return Some(out);
            } else {
                // Multi-byte chars are copied verbatim.
                let ch = self.s[self.pos..].chars().next()?;
                out.push(ch);
                self.pos += ch.len_utf8();
            }
        }
    }

    fn integer(&mut self) -> Option<u32> {
        self.skip_ws();
        let start = self.pos;
        while self
            .s
            .as_bytes()
            .get(self.pos)
            .map(|b| b.is_ascii_digit())
            .unwrap_or(false)
        {
            self.pos += 1;
        }
        if self.pos == start {
            return None;
        }
        self.s[start..self.pos].parse().ok()
    }
}

/// Standalone True/False token nearest the end decides the verdict; the full
/// reply is kept as the rationale for positive verdicts.
pub fn parse_binary_verdict(text: &str) -> Result<BinaryVerdict, LlmError> {
    let lower = text.to_lowercase();
    let mut last: Option<(usize, bool)> = None;
    for (needle, value) in [("true", true), ("false", false)] {
        let mut from = 0;
        while let Some(pos) = lower[from..].find(needle) {
            let at = from + pos;
            let before_ok = at == 0 || !is_word_byte(lower.as_bytes()[at - 1]);
            let end = at + needle.len();
            let after_ok = end >= lower.len() || !is_word_byte(lower.as_bytes()[end]);
            if before_ok && after_ok && last.map(|(p, _)| at > p).unwrap_or(true) {
                last = Some((at, value));
            }
            from = at + 1;
        }
    }
    match last {
        Some((_, true)) => Ok(BinaryVerdict {
            is_bic: true,
            rationale: text.trim().to_string(),
        }),
        Some((_, false)) => Ok(BinaryVerdict {
            is_bic: false,
            rationale: String::new(),
        }),
        None => Err(LlmError::Parse(
            "no standalone True/False token in reply".into(),
        )),
    }
}

fn is_word_byte(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_'
}

/// The presented commit whose hash (>= 12-char prefix) appears latest in the
/// text wins; an explicit "none" appearing later than every hash wins NONE.
pub fn parse_comparative_choice(
    text: &str,
    presented: &[CommitId],
) -> Result<ComparativeChoice, LlmError> {
    let lower = text.to_lowercase();
    let bytes = lower.as_bytes();

    let mut best_hash: Option<(usize, CommitId)> = None;
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i].is_ascii_hexdigit() && (i == 0 || !is_word_byte(bytes[i - 1])) {
            let start = i;
            while i < bytes.len() && bytes[i].is_ascii_hexdigit() {
                i += 1;
            }
            let run = &lower[start..i];
            if run.len() >= 12 && (i >= bytes.len() || !is_word_byte(bytes[i])) {
                for id in presented {
                    if id.as_str().starts_with(run) {
                        if best_hash.as_ref().map(|(p, _)| start > *p).unwrap_or(true) {
                            best_hash = Some((start, id.clone()));
                        }
                        break;
                    }
                }
            }
        } else {
            i += 1;
        }
    }

    let mut best_none: Option<usize> = None;
    let mut from = 0;
    while let Some(pos) = lower[from..].find("none") {
        let at = from + pos;
        let before_ok = at == 0 || !is_word_byte(bytes[at - 1]);
        let end = at + 4;
        let after_ok = end >= bytes.len() || !is_word_byte(bytes[end]);
        if before_ok && after_ok {
            best_none = Some(at);
        }
        from = at + 1;
    }

    match (best_hash, best_none) {
        (Some((hp, id)), Some(np)) => {
            if np > hp {
                Ok(ComparativeChoice {
                    chosen: None,
                    rationale: text.trim().to_string(),
                })
            } else {
                Ok(ComparativeChoice {
                    chosen: Some(id),
                    rationale: text.trim().to_string(),
                })
            }
        }
        (Some((_, id)), None) => Ok(ComparativeChoice {
            chosen: Some(id),
            rationale: text.trim().to_string(),
        }),
        (None, Some(_)) => Ok(ComparativeChoice {
            chosen: None,
            rationale: text.trim().to_string(),
        }),
        (None, None) => Err(LlmError::Parse(
            "reply names no presented commit and no explicit none".into(),
        )),
    }
}
