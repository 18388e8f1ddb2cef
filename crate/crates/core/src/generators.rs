//! The three candidate-commit generators: patch-function history (C1),
//! critical-line history (C2), and commit-message keywords (C3). C3 is
//! disjoint from C1 ∪ C2 by construction.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::diff::{FileChangeKind, LineKind, PatchClass};
use crate::lang::normalize_ws;
use crate::llm::{
    parse_critical_lines, render_prompt, Gateway, LlmError, LlmRequest, TemplateId,
};
use crate::repo::{Commit, Repo, RepoError};
use crate::types::{CommitId, CriticalLine, FunctionBody, FunctionLocator};

/// Default cap on candidates kept per generator; excess is dropped newest-kept
/// with a report flag.
pub const CANDIDATE_CAP: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum GeneratorKind {
    C1Function,
    C2CriticalLine,
    C3CommitMessage,
}

impl GeneratorKind {
    pub fn label(&self) -> &'static str {
        match self {
            GeneratorKind::C1Function => "C1",
            GeneratorKind::C2CriticalLine => "C2",
            GeneratorKind::C3CommitMessage => "C3",
        }
    }
}

/// Generator output: candidates newest-first with a reason per commit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CandidateSet {
    pub generator: GeneratorKind,
    pub commits: Vec<CommitId>,
    pub provenance: BTreeMap<CommitId, String>,
    pub truncated: bool,
    pub warnings: Vec<String>,
}

impl CandidateSet {
    fn new(generator: GeneratorKind) -> CandidateSet {
        CandidateSet {
            generator,
            commits: Vec::new(),
            provenance: BTreeMap::new(),
            truncated: false,
            warnings: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.commits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.commits.is_empty()
    }
}

/// Keywords mined from the bug-fix commit message plus the patched function
/// names.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct MessageKeywords {
    pub identifiers: BTreeSet<String>,
    pub commit_hashes: BTreeSet<String>,
    pub patched_function_names: BTreeSet<String>,
}

/// Order candidate ids by (author_time, hash) descending, drop the fix
/// itself, dedupe, and cap.
fn finalize_set(
    repo: &Repo,
    fix: &CommitId,
    mut set: CandidateSet,
    ids: BTreeSet<CommitId>,
    cap: usize,
) -> Result<CandidateSet, RepoError> {
    let order = repo.ancestors_sorted(fix)?;
    let mut ordered: Vec<CommitId> = order
        .iter()
        .map(|(id, _)| id.clone())
        .filter(|id| id != fix && ids.contains(id))
        .collect();
    if ordered.len() > cap {
        ordered.truncate(cap);
        set.truncated = true;
    }
    set.provenance.retain(|k, _| ordered.contains(k));
    set.commits = ordered;
    Ok(set)
}

/// C1: union of the modification history of every function the fix touches.
/// A locator with no history contributes nothing and records a warning.
pub fn generate_c1(
    repo: &Repo,
    fix: &Commit,
    cap: usize,
) -> Result<CandidateSet, RepoError> {
    let mut set = CandidateSet::new(GeneratorKind::C1Function);
    let mut ids = BTreeSet::new();
    for locator in fix.diff.touched_functions() {
        match repo.function_history(&fix.id, &locator) {
            Ok(history) => {
                for c in history.commits {
                    ids.insert(c.clone());
                    set.provenance
                        .entry(c)
                        .or_insert_with(|| format!("modifies function {locator}"));
                }
            }
            Err(RepoError::FunctionNotFound(_)) => {
                set.warnings
                    .push(format!("no history for function {locator}"));
            }
            Err(e) => return Err(e),
        }
    }
    finalize_set(repo, &fix.id, set, ids, cap)
}

/// Format knobs for the critical-line prompts.
#[derive(Debug, Clone)]
pub struct CriticalLineConfig {
    pub model: String,
    pub num_lines: u32,
}

impl Default for CriticalLineConfig {
    fn default() -> Self {
        CriticalLineConfig {
            model: "gpt-4o".into(),
            num_lines: 5,
        }
    }
}

const TUPLE_REMINDER: &str = "Answer only with a Python list [] of tuples (filename, functionname, linenum, line), one element per line.";

/// Numbered pre-patch bodies concatenated for the `function_content` slot.
pub fn format_function_content(bodies: &BTreeMap<FunctionLocator, FunctionBody>) -> String {
    let mut out = String::new();
    for (loc, body) in bodies {
        out.push_str(&format!(
            "filename: {}\nfunction: {}\n{}\n",
            loc.filename,
            loc.functionname,
            body.numbered()
        ));
    }
    out
}

/// `patch_content` slot: the commit message followed by the rendered diff.
pub fn format_patch_content(commit: &Commit) -> String {
    format!("commit {}\n\n{}\n\n{}", commit.id, commit.message, commit.diff.render())
}

fn format_tuples(lines: &[CriticalLine]) -> String {
    let mut out = String::from("[");
    for (i, l) in lines.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        out.push_str(&format!(
            "(\"{}\", \"{}\", {}, \"{}\")",
            l.filename,
            l.functionname,
            l.linenum,
            l.line_text.replace('"', "\\\"")
        ));
    }
    out.push(']');
    out
}

/// Identify critical lines by dispatching the class-specific prompt and
/// validating every returned tuple against the pre-patch bodies. Invalid
/// tuples are dropped with a warning, never silently kept.
pub fn identify_critical_lines(
    fix: &Commit,
    patch_class: &PatchClass,
    bodies: &BTreeMap<FunctionLocator, FunctionBody>,
    reorder_seed: &[CriticalLine],
    gateway: &Gateway,
    config: &CriticalLineConfig,
) -> Result<(Vec<CriticalLine>, Vec<String>), LlmError> {
    let patch_content = format_patch_content(fix);
    let function_content = format_function_content(bodies);
    let mut params: BTreeMap<String, String> = BTreeMap::new();
    params.insert("patch_content".into(), patch_content.clone());
    params.insert("function_content".into(), function_content.clone());

    let template = match patch_class {
        PatchClass::DeletedLines => {
            params.insert("num_lines".into(), config.num_lines.to_string());
            TemplateId::CritDeleted
        }
        PatchClass::AddedOnly => TemplateId::CritAddedOnly,
        PatchClass::ReorderOnly { .. } => {
            params.insert("reorder_lines".into(), format_tuples(reorder_seed));
            TemplateId::CritReorder
        }
    };

    let prompt = render_prompt(template, &params)?;
    let req = LlmRequest::new(&config.model, prompt);
    let (mut raw, _) = gateway.complete_parsed(
        "critical_lines",
        &req,
        TUPLE_REMINDER,
        parse_critical_lines,
    )?;

    // Deleted-lines patches with an empty pick expand scope to the whole
    // patched functions via the whole-function prompt.
    if raw.is_empty() && matches!(patch_class, PatchClass::DeletedLines) {
        let mut wide: BTreeMap<String, String> = BTreeMap::new();
        wide.insert("patch_content".into(), patch_content);
        wide.insert("function_content".into(), function_content);
        let prompt = render_prompt(TemplateId::CritAddedOnly, &wide)?;
        let req = LlmRequest::new(&config.model, prompt);
        let (expanded, _) = gateway.complete_parsed(
            "critical_lines_expanded",
            &req,
            TUPLE_REMINDER,
            parse_critical_lines,
        )?;
        raw = expanded;
    }

    let mut warnings = Vec::new();
    let mut validated = Vec::new();
    for tuple in raw {
        match validate_tuple(&tuple, bodies) {
            Some(line) => validated.push(line),
            None => warnings.push(format!(
                "dropped critical line not found in {}:{} near line {}: {:?}",
                tuple.filename, tuple.functionname, tuple.linenum, tuple.line_text
            )),
        }
    }
    validated.sort();
    validated.dedup();
    Ok((validated, warnings))
}

/// Tuple validation: exact position, then a +-3 line window, then a unique
/// text match anywhere in the function.
fn validate_tuple(
    tuple: &CriticalLine,
    bodies: &BTreeMap<FunctionLocator, FunctionBody>,
) -> Option<CriticalLine> {
    let body = bodies
        .get(&FunctionLocator::new(&tuple.filename, &tuple.functionname))
        .or_else(|| {
            // Models flub paths more often than names.
            let mut by_name = bodies
                .iter()
                .filter(|(loc, _)| loc.functionname == tuple.functionname)
                .map(|(_, b)| b);
            let first = by_name.next();
            if by_name.next().is_some() {
                None
            } else {
                first
            }
        })?;
    let lines: Vec<&str> = body.text.lines().collect();
    let want = normalize_ws(&tuple.line_text);
    if want.is_empty() {
        return None;
    }
    let claimed = tuple.linenum as i64 - 1;
    let window = (-3i64..=3)
        .map(|d| claimed + d)
        .filter(|&i| i >= 0 && (i as usize) < lines.len());
    let mut found: Option<u32> = None;
    for i in window {
        if normalize_ws(lines[i as usize]) == want {
            found = Some(i as u32 + 1);
            break;
        }
    }
    if found.is_none() {
        let matches: Vec<u32> = lines
            .iter()
            .enumerate()
            .filter(|(_, l)| normalize_ws(l) == want)
            .map(|(i, _)| i as u32 + 1)
            .collect();
        if matches.len() == 1 {
            found = Some(matches[0]);
        }
    }
    let linenum = found?;
    Some(CriticalLine {
        filename: body.locator.filename.clone(),
        functionname: body.locator.functionname.clone(),
        linenum,
        line_text: lines[(linenum - 1) as usize].trim().to_string(),
    })
}

/// C2: commits from the relevant function/file histories whose diffs touch a
/// critical line (normalized text match within the same scope).
pub fn generate_c2(
    repo: &Repo,
    fix: &Commit,
    critical: &[CriticalLine],
    cap: usize,
) -> Result<CandidateSet, RepoError> {
    let mut set = CandidateSet::new(GeneratorKind::C2CriticalLine);
    let mut ids = BTreeSet::new();
    for line in critical {
        let pool: Vec<CommitId> = if line.functionname.is_empty() {
            match repo.file_history(&fix.id, &line.filename) {
                Ok(h) => h,
                Err(RepoError::FileNotFound(_)) => {
                    set.warnings
                        .push(format!("no history for file {}", line.filename));
                    continue;
                }
                Err(e) => return Err(e),
            }
        } else {
            let locator = FunctionLocator::new(&line.filename, &line.functionname);
            match repo.function_history(&fix.id, &locator) {
                Ok(h) => h.commits,
                Err(RepoError::FunctionNotFound(_)) => {
                    set.warnings.push(format!("no history for {locator}"));
                    continue;
                }
                Err(e) => return Err(e),
            }
        };
        let want = normalize_ws(&line.line_text);
        for cid in pool {
            if cid == fix.id || ids.contains(&cid) {
                continue;
            }
            let commit = repo.commit(&cid)?;
            let touches = commit.diff.changed_lines().iter().any(|cl| {
                let scope_ok = if line.functionname.is_empty() {
                    // The pool already tracks this file through renames;
                    // require a file-scope change.
                    cl.functionname.is_empty()
                } else {
                    cl.functionname == line.functionname
                };
                scope_ok && normalize_ws(&cl.line_text) == want
            });
            if touches {
                ids.insert(cid.clone());
                set.provenance.entry(cid).or_insert_with(|| {
                    format!(
                        "touches critical line {:?} in {}",
                        line.line_text,
                        if line.functionname.is_empty() {
                            line.filename.clone()
                        } else {
                            format!("{}:{}", line.filename, line.functionname)
                        }
                    )
                });
            }
        }
    }
    finalize_set(repo, &fix.id, set, ids, cap)
}

/// Words too common to be useful identifiers, plus C keywords.
const STOPLIST: &[&str] = &[
    "and", "array", "break", "buffer", "bug", "call", "case", "char", "check", "commit",
    "const", "continue", "could", "default", "double", "driver", "else", "enum", "error",
    "extern", "fix", "fixes", "float", "for", "free", "from", "function", "goto", "has",
    "have", "inline", "int", "issue", "kernel", "leak", "lock", "long", "memory", "not",
    "null", "patch", "pointer", "race", "register", "return", "set", "short", "signed",
    "sizeof", "static", "struct", "switch", "that", "the", "this", "typedef", "union",
    "unsigned", "use", "value", "void", "volatile", "warning", "was", "when", "while",
    "will", "with",
];

/// Mine identifiers (`name()` mentions, backtick/quote mentions), commit
/// hashes (>= 12 hex chars), and the patched function names.
pub fn extract_message_keywords(fix: &Commit) -> MessageKeywords {
    let mut keywords = MessageKeywords::default();
    let message = &fix.message;

    let is_ident = |s: &str| {
        s.len() >= 3
            && s.chars().next().map(|c| c.is_ascii_alphabetic() || c == '_').unwrap_or(false)
            && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
            && !STOPLIST.contains(&s.to_ascii_lowercase().as_str())
    };

    // name() mentions.
    let bytes = message.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'(' && i + 1 < bytes.len() && bytes[i + 1] == b')' {
            let head = &message[..i];
            let start = head
                .rfind(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
                .map(|p| p + 1)
                .unwrap_or(0);
            let name = &head[start..];
            if is_ident(name) {
                keywords.identifiers.insert(name.to_string());
            }
        }
        i += 1;
    }

    // Backtick and quote mentions of a single identifier.
    for (open, close) in [('`', '`'), ('\'', '\''), ('"', '"')] {
        let mut rest = message.as_str();
        while let Some(a) = rest.find(open) {
            let after = &rest[a + 1..];
            let Some(b) = after.find(close) else { break };
            let inner = &after[..b];
            let trimmed = inner.trim().trim_end_matches("()");
            if is_ident(trimmed) {
                keywords.identifiers.insert(trimmed.to_string());
            }
            rest = &after[b + 1..];
        }
    }

    // Hash references.
    let mut i = 0;
    let b = message.as_bytes();
    while i < b.len() {
        if b[i].is_ascii_hexdigit() && (i == 0 || !b[i - 1].is_ascii_alphanumeric()) {
            let start = i;
            while i < b.len() && b[i].is_ascii_hexdigit() {
                i += 1;
            }
            let run = &message[start..i];
            let boundary_ok = i >= b.len() || !(b[i].is_ascii_alphanumeric() || b[i] == b'_');
            if boundary_ok
                && (12..=40).contains(&run.len())
                && run.bytes().all(|c| matches!(c, b'0'..=b'9' | b'a'..=b'f'))
            {
                keywords.commit_hashes.insert(run.to_string());
            }
        } else {
            i += 1;
        }
    }

    for loc in fix.diff.touched_functions() {
        keywords.patched_function_names.insert(loc.functionname);
    }
    keywords
}

/// C3: from the fix's file histories plus directly referenced hashes, select
/// commits that (a) match a referenced hash, (b) modify a mentioned
/// function/struct the fix does not touch, or (c) add a call to a patched
/// function. `exclude` removes everything C1/C2 already track.
pub fn generate_c3(
    repo: &Repo,
    fix: &Commit,
    keywords: &MessageKeywords,
    exclude: &BTreeSet<CommitId>,
    cap: usize,
) -> Result<CandidateSet, RepoError> {
    let mut set = CandidateSet::new(GeneratorKind::C3CommitMessage);
    let mut ids: BTreeSet<CommitId> = BTreeSet::new();

    // Names the fix itself modifies are already covered by C1/C2.
    let fix_touched: BTreeSet<String> = fix
        .diff
        .touched_functions()
        .into_iter()
        .map(|l| l.functionname)
        .chain(fix.diff.touched_globals.iter().map(|(_, s)| s.clone()))
        .collect();
    let rule_b_idents: BTreeSet<&String> = keywords
        .identifiers
        .iter()
        .filter(|i| !fix_touched.contains(*i))
        .collect();

    // Rule (a): directly referenced hashes that resolve to proper ancestors.
    for hash in &keywords.commit_hashes {
        let Ok(commit) = repo.resolve_commit(hash) else {
            continue;
        };
        if commit.id != fix.id && repo.is_ancestor(&commit.id, &fix.id)? {
            ids.insert(commit.id.clone());
            set.provenance
                .entry(commit.id)
                .or_insert_with(|| format!("referenced by hash {hash} in the fix message"));
        }
    }

    // Pool: histories of every file the fix touches.
    let mut pool: BTreeSet<CommitId> = BTreeSet::new();
    let files: BTreeSet<String> = fix
        .diff
        .files
        .iter()
        .map(|f| {
            if f.kind == FileChangeKind::Deleted {
                f.old_path.clone()
            } else {
                f.new_path.clone()
            }
        })
        .collect();
    for file in files {
        match repo.file_history(&fix.id, &file) {
            Ok(h) => pool.extend(h),
            Err(RepoError::FileNotFound(_)) => {
                set.warnings.push(format!("no history for file {file}"));
            }
            Err(e) => return Err(e),
        }
    }

    for cid in pool {
        if cid == fix.id || ids.contains(&cid) {
            continue;
        }
        let commit = repo.commit(&cid)?;

        // Rule (b): modifies a mentioned function or struct the fix skips.
        let touched_names: BTreeSet<String> = commit
            .diff
            .touched_functions()
            .into_iter()
            .map(|l| l.functionname)
            .chain(commit.diff.touched_globals.iter().map(|(_, s)| s.clone()))
            .collect();
        if let Some(name) = rule_b_idents.iter().find(|i| touched_names.contains(**i)) {
            ids.insert(cid.clone());
            set.provenance
                .entry(cid.clone())
                .or_insert_with(|| format!("modifies mentioned symbol {name}"));
            continue;
        }

        // Rule (c): adds a call to a patched function.
        let adds_call = commit.diff.changed_lines().iter().any(|cl| {
            cl.kind == LineKind::Added
                && keywords.patched_function_names.iter().any(|name| {
                    cl.functionname != *name && contains_call(&cl.line_text, name)
                })
        });
        if adds_call {
            let name = keywords
                .patched_function_names
                .iter()
                .find(|name| {
                    commit.diff.changed_lines().iter().any(|cl| {
                        cl.kind == LineKind::Added
                            && cl.functionname != **name
                            && contains_call(&cl.line_text, name)
                    })
                })
                .cloned()
                .unwrap_or_default();
            ids.insert(cid.clone());
            set.provenance
                .entry(cid.clone())
                .or_insert_with(|| format!("adds call to patched function {name}"));
        }
    }

    ids.retain(|c| !exclude.contains(c));
    set.provenance.retain(|c, _| !exclude.contains(c));
    finalize_set(repo, &fix.id, set, ids, cap)
}

fn contains_call(text: &str, name: &str) -> bool {
    let mut from = 0;
    while let Some(pos) = text[from..].find(name) {
        let at = from + pos;
        let before_ok = at == 0
            || !text.as_bytes()[at - 1].is_ascii_alphanumeric() && text.as_bytes()[at - 1] != b'_';
        let after = at + name.len();
        let after_ok = text[after..].trim_start().starts_with('(');
        if before_ok && after_ok {
            return true;
        }
        from = at + name.len();
    }
    false
}
