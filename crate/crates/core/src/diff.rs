//! Unified-diff parsing into attributed changed lines, comment-change
//! stripping, and patch classification (deleted-lines / added-only /
//! reorder-only).

use std::collections::BTreeMap;
use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lang::{normalize_ws, CommentTracker, LanguageProfile, RegionKind, SourceMap};
use crate::types::{CriticalLine, FunctionBody, FunctionLocator};

#[derive(Debug, Error)]
pub enum DiffError {
    #[error("malformed diff at byte {offset}: {reason}")]
    Malformed { offset: usize, reason: String },
    #[error("patch has no non-comment changed lines")]
    EmptyPatch,
    #[error("no function body supplied for {0}")]
    MissingFunctionBody(FunctionLocator),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LineKind {
    Context,
    Added,
    Deleted,
}

/// One physical line of a hunk. `text` excludes the leading marker and the
/// trailing newline. Line numbers are 1-based and absolute within the file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiffLine {
    pub kind: LineKind,
    pub text: String,
    pub old_lineno: Option<u32>,
    pub new_lineno: Option<u32>,
    /// Enclosing function, or empty for non-function scope.
    pub functionname: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hunk {
    pub old_start: u32,
    pub old_count: u32,
    pub new_start: u32,
    pub new_count: u32,
    /// Text after the closing `@@`, as emitted by git (function hint).
    pub section: String,
    pub lines: Vec<DiffLine>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FileChangeKind {
    Modified,
    Added,
    Deleted,
    Renamed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDiff {
    pub old_path: String,
    pub new_path: String,
    pub kind: FileChangeKind,
    pub hunks: Vec<Hunk>,
}

impl FileDiff {
    pub fn is_rename(&self) -> bool {
        self.kind == FileChangeKind::Renamed
    }
}

/// An added or deleted line with file and function attribution.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ChangedLine {
    pub filename: String,
    pub functionname: String,
    pub kind: LineKind,
    pub line_text: String,
    pub old_lineno: Option<u32>,
    pub new_lineno: Option<u32>,
}

/// A parsed patch. `changed_lines` and the touched sets are derived views
/// over the hunks, so the concatenation invariant holds by construction.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PatchDiff {
    pub files: Vec<FileDiff>,
    pub warnings: Vec<String>,
    /// (filename, symbol) for struct/global definition changes.
    pub touched_globals: BTreeSet<(String, String)>,
}

impl PatchDiff {
    pub fn hunks(&self) -> impl Iterator<Item = (&FileDiff, &Hunk)> {
        self.files.iter().flat_map(|f| f.hunks.iter().map(move |h| (f, h)))
    }

    /// All added/deleted lines in file, hunk, line order. Deleted lines carry
    /// the old path, added lines the new path.
    pub fn changed_lines(&self) -> Vec<ChangedLine> {
        let mut out = Vec::new();
        for (file, hunk) in self.hunks() {
            for line in &hunk.lines {
                let filename = match line.kind {
                    LineKind::Context => continue,
                    LineKind::Deleted => file.old_path.clone(),
                    LineKind::Added => file.new_path.clone(),
                };
                out.push(ChangedLine {
                    filename,
                    functionname: line.functionname.clone(),
                    kind: line.kind,
                    line_text: line.text.clone(),
                    old_lineno: line.old_lineno,
                    new_lineno: line.new_lineno,
                });
            }
        }
        out
    }

    pub fn touched_functions(&self) -> BTreeSet<FunctionLocator> {
        self.changed_lines()
            .into_iter()
            .filter(|l| !l.functionname.is_empty())
            .map(|l| FunctionLocator::new(l.filename, l.functionname))
            .collect()
    }

    pub fn is_empty(&self) -> bool {
        self.changed_lines().is_empty()
    }

    /// Render back to unified-diff text. Reparsing the result yields an
    /// identical `PatchDiff` (modulo repo-refined attribution).
    pub fn render(&self) -> String {
        let mut out = String::new();
        for file in &self.files {
            out.push_str(&format!("diff --git a/{} b/{}\n", file.old_path, file.new_path));
            match file.kind {
                FileChangeKind::Added => out.push_str("new file mode 100644\n"),
                FileChangeKind::Deleted => out.push_str("deleted file mode 100644\n"),
                FileChangeKind::Renamed => {
                    out.push_str(&format!("rename from {}\n", file.old_path));
                    out.push_str(&format!("rename to {}\n", file.new_path));
                }
                FileChangeKind::Modified => {}
            }
            if file.hunks.is_empty() {
                continue;
            }
            let old_name = if file.kind == FileChangeKind::Added {
                "/dev/null".to_string()
            } else {
                format!("a/{}", file.old_path)
            };
            let new_name = if file.kind == FileChangeKind::Deleted {
                "/dev/null".to_string()
            } else {
                format!("b/{}", file.new_path)
            };
            out.push_str(&format!("--- {old_name}\n+++ {new_name}\n"));
            for hunk in &file.hunks {
                out.push_str(&format!(
                    "@@ -{},{} +{},{} @@{}{}\n",
                    hunk.old_start,
                    hunk.old_count,
                    hunk.new_start,
                    hunk.new_count,
                    if hunk.section.is_empty() { "" } else { " " },
                    hunk.section
                ));
                for line in &hunk.lines {
                    let marker = match line.kind {
                        LineKind::Context => ' ',
                        LineKind::Added => '+',
                        LineKind::Deleted => '-',
                    };
                    out.push(marker);
                    out.push_str(&line.text);
                    out.push('\n');
                }
            }
        }
        out
    }

    /// Replace hunk-header attribution with exact spans scanned from the
    /// pre- and post-image file contents, and collect `touched_globals`.
    pub fn refine_attribution(
        &mut self,
        file: &str,
        old_content: Option<&str>,
        new_content: Option<&str>,
        profile: LanguageProfile,
    ) {
        let old_map = old_content.map(|c| SourceMap::scan(c, profile));
        let new_map = new_content.map(|c| SourceMap::scan(c, profile));
        let mut globals = BTreeSet::new();
        for fd in &mut self.files {
            if fd.old_path != file && fd.new_path != file {
                continue;
            }
            for hunk in &mut fd.hunks {
                for line in &mut hunk.lines {
                    let (map, lineno) = match line.kind {
                        LineKind::Deleted => (&old_map, line.old_lineno),
                        LineKind::Added => (&new_map, line.new_lineno),
                        LineKind::Context => continue,
                    };
                    let Some(map) = map.as_ref() else { continue };
                    let Some(lineno) = lineno else { continue };
                    if let Some(span) = map.function_at(lineno) {
                        line.functionname = span.name.clone();
                    } else {
                        line.functionname.clear();
                        if let Some(region) = map.region_at(lineno) {
                            if !region.symbol.is_empty()
                                && matches!(region.kind, RegionKind::Struct | RegionKind::Global)
                            {
                                let fname = match line.kind {
                                    LineKind::Deleted => fd.old_path.clone(),
                                    _ => fd.new_path.clone(),
                                };
                                globals.insert((fname, region.symbol.clone()));
                            }
                        }
                    }
                }
            }
        }
        self.touched_globals.extend(globals);
    }
}

/// Parse unified-diff text as produced by `git diff`/`git show`.
/// Empty input yields an empty patch. Function attribution comes from hunk
/// section headers until refined against file contents.
pub fn parse_unified_diff(text: &str) -> Result<PatchDiff, DiffError> {
    let mut files: Vec<FileDiff> = Vec::new();
    let mut offset = 0usize;

    // Current hunk in progress plus its remaining old/new line budget.
    let mut cur_hunk: Option<(Hunk, u32, u32)> = None;

    let malformed = |offset: usize, reason: &str| DiffError::Malformed {
        offset,
        reason: reason.to_string(),
    };

    let finish_hunk = |files: &mut Vec<FileDiff>,
                       cur: &mut Option<(Hunk, u32, u32)>,
                       offset: usize|
     -> Result<(), DiffError> {
        if let Some((hunk, old_left, new_left)) = cur.take() {
            if old_left != 0 || new_left != 0 {
                return Err(malformed(offset, "hunk shorter than header counts"));
            }
            files
                .last_mut()
                .expect("hunk without file")
                .hunks
                .push(hunk);
        }
        Ok(())
    };

    for raw_line in text.split_inclusive('\n') {
        let line_offset = offset;
        offset += raw_line.len();
        let line = raw_line.strip_suffix('\n').unwrap_or(raw_line);

        // Hunk body takes priority while its budget lasts.
        let hunk_open = cur_hunk
            .as_ref()
            .map(|(_, o, n)| *o > 0 || *n > 0)
            .unwrap_or(false);
        if hunk_open {
            let (hunk, old_left, new_left) = cur_hunk.as_mut().unwrap();
            {
                let (marker, rest) = if line.is_empty() {
                    (' ', "")
                } else {
                    (line.as_bytes()[0] as char, &line[1..])
                };
                match marker {
                    ' ' => {
                        if *old_left == 0 || *new_left == 0 {
                            return Err(malformed(line_offset, "context line exceeds hunk counts"));
                        }
                        let old_no = hunk.old_start + (hunk.old_count - *old_left);
                        let new_no = hunk.new_start + (hunk.new_count - *new_left);
                        hunk.lines.push(DiffLine {
                            kind: LineKind::Context,
                            text: rest.to_string(),
                            old_lineno: Some(old_no),
                            new_lineno: Some(new_no),
                            functionname: section_hint(&hunk.section),
                        });
                        *old_left -= 1;
                        *new_left -= 1;
                        continue;
                    }
                    '-' => {
                        if *old_left == 0 {
                            return Err(malformed(line_offset, "deleted line exceeds hunk counts"));
                        }
                        let old_no = hunk.old_start + (hunk.old_count - *old_left);
                        hunk.lines.push(DiffLine {
                            kind: LineKind::Deleted,
                            text: rest.to_string(),
                            old_lineno: Some(old_no),
                            new_lineno: None,
                            functionname: section_hint(&hunk.section),
                        });
                        *old_left -= 1;
                        continue;
                    }
                    '+' => {
                        if *new_left == 0 {
                            return Err(malformed(line_offset, "added line exceeds hunk counts"));
                        }
                        let new_no = hunk.new_start + (hunk.new_count - *new_left);
                        hunk.lines.push(DiffLine {
                            kind: LineKind::Added,
                            text: rest.to_string(),
                            old_lineno: None,
                            new_lineno: Some(new_no),
                            functionname: section_hint(&hunk.section),
                        });
                        *new_left -= 1;
                        continue;
                    }
                    '\\' => continue, // "\ No newline at end of file"
                    _ => {
                        return Err(malformed(line_offset, "unexpected line inside hunk"));
                    }
                }
            }
        }
        if cur_hunk.is_some() {
            finish_hunk(&mut files, &mut cur_hunk, line_offset)?;
        }

        if line.starts_with("diff --git ") {
            finish_hunk(&mut files, &mut cur_hunk, line_offset)?;
            let (old_path, new_path) = parse_git_header(line)
                .ok_or_else(|| malformed(line_offset, "bad diff --git header"))?;
            files.push(FileDiff {
                old_path,
                new_path,
                kind: FileChangeKind::Modified,
                hunks: Vec::new(),
            });
        } else if let Some(rest) = line.strip_prefix("rename from ") {
            let file = files
                .last_mut()
                .ok_or_else(|| malformed(line_offset, "rename outside file"))?;
            file.old_path = rest.to_string();
            file.kind = FileChangeKind::Renamed;
        } else if let Some(rest) = line.strip_prefix("rename to ") {
            let file = files
                .last_mut()
                .ok_or_else(|| malformed(line_offset, "rename outside file"))?;
            file.new_path = rest.to_string();
            file.kind = FileChangeKind::Renamed;
        } else if line.starts_with("new file mode") {
            if let Some(file) = files.last_mut() {
                file.kind = FileChangeKind::Added;
            }
        } else if line.starts_with("deleted file mode") {
            if let Some(file) = files.last_mut() {
                file.kind = FileChangeKind::Deleted;
            }
        } else if let Some(rest) = line.strip_prefix("--- ") {
            if files.is_empty() {
                files.push(FileDiff {
                    old_path: String::new(),
                    new_path: String::new(),
                    kind: FileChangeKind::Modified,
                    hunks: Vec::new(),
                });
            }
            let file = files.last_mut().unwrap();
            if rest != "/dev/null" {
                let p = strip_prefix_path(rest);
                if file.old_path.is_empty() {
                    file.old_path = p;
                }
            }
        } else if let Some(rest) = line.strip_prefix("+++ ") {
            let file = files
                .last_mut()
                .ok_or_else(|| malformed(line_offset, "+++ outside file"))?;
            if rest != "/dev/null" {
                let p = strip_prefix_path(rest);
                if file.new_path.is_empty() {
                    file.new_path = p;
                }
            }
        } else if line.starts_with("@@ ") {
            if files.is_empty() {
                return Err(malformed(line_offset, "hunk outside file"));
            }
            let (old_start, old_count, new_start, new_count, section) = parse_hunk_header(line)
                .ok_or_else(|| malformed(line_offset, "bad hunk header"))?;
            cur_hunk = Some((
                Hunk {
                    old_start,
                    old_count,
                    new_start,
                    new_count,
                    section,
                    lines: Vec::new(),
                },
                old_count,
                new_count,
            ));
        } else if line.starts_with("index ")
            || line.starts_with("similarity index")
            || line.starts_with("dissimilarity index")
            || line.starts_with("old mode")
            || line.starts_with("new mode")
            || line.starts_with("copy from")
            || line.starts_with("copy to")
            || line.starts_with("Binary files")
            || line.starts_with("GIT binary patch")
            || line.is_empty()
        {
            // Metadata we model nothing from.
        } else if files.is_empty() {
            // Preamble before the first file header (e.g. commit message
            // text when fed `git show` output) is ignored.
        } else {
            return Err(malformed(line_offset, "unrecognized line"));
        }
    }
    finish_hunk(&mut files, &mut cur_hunk, offset)?;

    Ok(PatchDiff {
        files,
        warnings: Vec::new(),
        touched_globals: BTreeSet::new(),
    })
}

fn strip_prefix_path(p: &str) -> String {
    let p = p.split('\t').next().unwrap_or(p);
    p.strip_prefix("a/")
        .or_else(|| p.strip_prefix("b/"))
        .unwrap_or(p)
        .to_string()
}

fn parse_git_header(line: &str) -> Option<(String, String)> {
    // `diff --git a/<old> b/<new>`; paths with spaces are split at ` b/`.
    let rest = line.strip_prefix("diff --git ")?;
    let rest = rest.strip_prefix("a/")?;
    let idx = rest.rfind(" b/")?;
    Some((rest[..idx].to_string(), rest[idx + 3..].to_string()))
}

fn parse_hunk_header(line: &str) -> Option<(u32, u32, u32, u32, String)> {
    let rest = line.strip_prefix("@@ -")?;
    let end = rest.find(" @@")?;
    let (ranges, section) = rest.split_at(end);
    let section = section
        .strip_prefix(" @@")
        .unwrap_or("")
        .strip_prefix(' ')
        .unwrap_or_else(|| section.strip_prefix(" @@").unwrap_or(""))
        .to_string();
    let mut parts = ranges.split(" +");
    let old = parts.next()?;
    let new = parts.next()?;
    if parts.next().is_some() {
        return None;
    }
    let parse_range = |s: &str| -> Option<(u32, u32)> {
        match s.split_once(',') {
            Some((a, b)) => Some((a.parse().ok()?, b.parse().ok()?)),
            None => Some((s.parse().ok()?, 1)),
        }
    };
    let (os, oc) = parse_range(old)?;
    let (ns, nc) = parse_range(new)?;
    Some((os, oc, ns, nc, section))
}

/// Function name from a hunk section hint like `static int foo(struct x *p)`.
fn section_hint(section: &str) -> String {
    let Some(paren) = section.find('(') else {
        return String::new();
    };
    let head = &section[..paren];
    let name: String = head
        .chars()
        .rev()
        .take_while(|c| c.is_ascii_alphanumeric() || *c == '_')
        .collect::<Vec<_>>()
        .into_iter()
        .rev()
        .collect();
    name
}

/// Remove changed lines whose content is entirely comment or whitespace.
/// Block-comment state is tracked across each hunk's context lines; hunks
/// left with no changed lines are dropped.
pub fn strip_comment_changes(diff: &PatchDiff, profile: LanguageProfile) -> PatchDiff {
    let mut out = diff.clone();
    if profile == LanguageProfile::Unknown {
        out.warnings
            .push("unknown language profile: comment stripping skipped".to_string());
        return out;
    }
    for file in &mut out.files {
        for hunk in &mut file.hunks {
            let start_in_comment = hunk_starts_in_comment(hunk);
            let mut old_side = CommentTracker::new(profile);
            let mut new_side = CommentTracker::new(profile);
            if start_in_comment {
                old_side.feed_line("/*");
                new_side.feed_line("/*");
            }
            let mut keep = Vec::with_capacity(hunk.lines.len());
            for line in hunk.lines.drain(..) {
                let comment_only = match line.kind {
                    LineKind::Context => {
                        let _ = old_side.feed_line(&line.text);
                        let _ = new_side.feed_line(&line.text);
                        false
                    }
                    LineKind::Deleted => old_side.feed_line(&line.text).trim().is_empty(),
                    LineKind::Added => new_side.feed_line(&line.text).trim().is_empty(),
                };
                if line.kind == LineKind::Context || !comment_only {
                    keep.push(line);
                }
            }
            hunk.lines = keep;
            hunk.old_count = hunk
                .lines
                .iter()
                .filter(|l| l.kind != LineKind::Added)
                .count() as u32;
            hunk.new_count = hunk
                .lines
                .iter()
                .filter(|l| l.kind != LineKind::Deleted)
                .count() as u32;
        }
        file.hunks
            .retain(|h| h.lines.iter().any(|l| l.kind != LineKind::Context));
    }
    out.files
        .retain(|f| !f.hunks.is_empty() || f.kind != FileChangeKind::Modified);
    out
}

/// Initial block-comment state inferred from context lines only, so that the
/// inference is stable across repeated stripping passes.
fn hunk_starts_in_comment(hunk: &Hunk) -> bool {
    for line in &hunk.lines {
        if line.kind != LineKind::Context {
            continue;
        }
        let open = line.text.find("/*");
        let close = line.text.find("*/");
        match (open, close) {
            (Some(o), Some(c)) => return c < o,
            (Some(_), None) => return false,
            (None, Some(_)) => return true,
            (None, None) => {}
        }
    }
    false
}

/// Patch classification per the three-way scheme. `ReorderOnly` carries the
/// deleted/added pairing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum PatchClass {
    DeletedLines,
    AddedOnly,
    ReorderOnly { pairs: Vec<ReorderPair> },
}

impl PatchClass {
    pub fn label(&self) -> &'static str {
        match self {
            PatchClass::DeletedLines => "DELETED_LINES",
            PatchClass::AddedOnly => "ADDED_ONLY",
            PatchClass::ReorderOnly { .. } => "REORDER_ONLY",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReorderPair {
    pub deleted: ChangedLine,
    pub added: ChangedLine,
}

/// Classify an already comment-stripped patch. A patch is reorder-only iff
/// within every file the deleted and added lines form a perfect bijection
/// after whitespace normalization; duplicates pair greedily by nearest
/// original position.
pub fn classify_patch(diff: &PatchDiff) -> Result<PatchClass, DiffError> {
    let changed = diff.changed_lines();
    if changed.is_empty() {
        return Err(DiffError::EmptyPatch);
    }
    let deleted: Vec<&ChangedLine> = changed.iter().filter(|l| l.kind == LineKind::Deleted).collect();
    let added: Vec<&ChangedLine> = changed.iter().filter(|l| l.kind == LineKind::Added).collect();
    if deleted.is_empty() {
        return Ok(PatchClass::AddedOnly);
    }
    if let Some(pairs) = reorder_bijection(&deleted, &added) {
        return Ok(PatchClass::ReorderOnly { pairs });
    }
    Ok(PatchClass::DeletedLines)
}

fn reorder_bijection(
    deleted: &[&ChangedLine],
    added: &[&ChangedLine],
) -> Option<Vec<ReorderPair>> {
    if deleted.len() != added.len() || deleted.is_empty() {
        return None;
    }
    // Bijections never cross files; verify per-file multiset equality first.
    let mut del_counts: BTreeMap<(String, String), u32> = BTreeMap::new();
    let mut add_counts: BTreeMap<(String, String), u32> = BTreeMap::new();
    for d in deleted {
        *del_counts
            .entry((file_key(d), normalize_ws(&d.line_text)))
            .or_default() += 1;
    }
    for a in added {
        *add_counts
            .entry((file_key(a), normalize_ws(&a.line_text)))
            .or_default() += 1;
    }
    if del_counts != add_counts {
        return None;
    }
    let mut used = vec![false; added.len()];
    let mut pairs = Vec::with_capacity(deleted.len());
    for d in deleted {
        let d_norm = normalize_ws(&d.line_text);
        let d_pos = d.old_lineno.unwrap_or(0) as i64;
        let mut best: Option<(usize, i64)> = None;
        for (i, a) in added.iter().enumerate() {
            if used[i] || file_key(a) != file_key(d) || normalize_ws(&a.line_text) != d_norm {
                continue;
            }
            let dist = ((a.new_lineno.unwrap_or(0) as i64) - d_pos).abs();
            if best.map(|(_, b)| dist < b).unwrap_or(true) {
                best = Some((i, dist));
            }
        }
        let (i, _) = best?;
        used[i] = true;
        pairs.push(ReorderPair {
            deleted: (*d).clone(),
            added: added[i].clone(),
        });
    }
    Some(pairs)
}

fn file_key(l: &ChangedLine) -> String {
    l.filename.clone()
}

/// Context statements whose relative order to a moved line changed between
/// the pre- and post-patch bodies. Statement granularity is the physical
/// non-blank, non-comment line.
pub fn reorder_context(
    diff: &PatchDiff,
    pairs: &[ReorderPair],
    function_bodies: &BTreeMap<FunctionLocator, FunctionBody>,
) -> Result<Vec<CriticalLine>, DiffError> {
    let mut out: BTreeSet<CriticalLine> = BTreeSet::new();
    // Group same-function pairs; a pair moving a line across functions has no
    // single-body ordering to compare.
    let mut by_fn: BTreeMap<FunctionLocator, Vec<&ReorderPair>> = BTreeMap::new();
    for pair in pairs {
        if pair.deleted.functionname.is_empty()
            || pair.deleted.functionname != pair.added.functionname
        {
            continue;
        }
        let loc = FunctionLocator::new(&pair.deleted.filename, &pair.deleted.functionname);
        by_fn.entry(loc).or_default().push(pair);
    }

    for (loc, fn_pairs) in by_fn {
        let body = function_bodies
            .get(&loc)
            .ok_or_else(|| DiffError::MissingFunctionBody(loc.clone()))?;
        let pre_lines: Vec<&str> = body.text.lines().collect();
        let model = apply_hunks_to_body(diff, &loc.filename, body, &pre_lines);

        // DD: statements are non-blank, non-comment physical lines.
        let mut tracker = CommentTracker::new(LanguageProfile::CLike);
        let statement: Vec<bool> = pre_lines
            .iter()
            .map(|l| !tracker.feed_line(l).trim().is_empty())
            .collect();

        for pair in fn_pairs {
            let Some(old_no) = pair.deleted.old_lineno else { continue };
            if old_no < body.start_line {
                continue;
            }
            let m_pre = (old_no - body.start_line) as usize;
            if m_pre >= pre_lines.len() {
                continue;
            }
            let Some(m_post) = model.post_of_added(pair.added.new_lineno) else {
                continue;
            };
            for (s, is_stmt) in statement.iter().enumerate() {
                if !is_stmt || s == m_pre {
                    continue;
                }
                let Some(post_s) = model.post_of_pre(s, pairs) else {
                    continue;
                };
                let before_pre = s < m_pre;
                let before_post = post_s < m_post;
                if before_pre != before_post {
                    out.insert(CriticalLine {
                        filename: loc.filename.clone(),
                        functionname: loc.functionname.clone(),
                        linenum: (s + 1) as u32,
                        line_text: pre_lines[s].trim().to_string(),
                    });
                }
            }
        }
    }
    Ok(out.into_iter().collect())
}

/// Pre→post line mapping for one function body under a patch.
struct BodyModel {
    /// For each pre index: the post index, or None when the line was deleted.
    pre_to_post: Vec<Option<usize>>,
    /// Post index of each added line, keyed by absolute new line number.
    added_post: BTreeMap<u32, usize>,
    /// Absolute old line number of the body's first line.
    start_line: u32,
}

impl BodyModel {
    fn post_of_pre(&self, pre_idx: usize, pairs: &[ReorderPair]) -> Option<usize> {
        if let Some(p) = self.pre_to_post.get(pre_idx).copied().flatten() {
            return Some(p);
        }
        // A deleted line that is itself one side of a reorder pair lives on at
        // its added twin's position.
        let abs = self.start_line + pre_idx as u32;
        for pair in pairs {
            if pair.deleted.old_lineno == Some(abs) {
                return self.post_of_added(pair.added.new_lineno);
            }
        }
        None
    }

    fn post_of_added(&self, new_lineno: Option<u32>) -> Option<usize> {
        self.added_post.get(&new_lineno?).copied()
    }
}

fn apply_hunks_to_body(
    diff: &PatchDiff,
    filename: &str,
    body: &FunctionBody,
    pre_lines: &[&str],
) -> BodyModel {
    let start = body.start_line;
    let end = start + pre_lines.len() as u32; // exclusive
    let mut pre_to_post = vec![None; pre_lines.len()];
    let mut added_post = BTreeMap::new();

    let mut hunks: Vec<&Hunk> = diff
        .hunks()
        .filter(|(f, _)| f.old_path == filename || f.new_path == filename)
        .map(|(_, h)| h)
        .filter(|h| h.old_start < end && h.old_start + h.old_count.max(1) > start)
        .collect();
    hunks.sort_by_key(|h| h.old_start);

    let mut post_idx = 0usize;
    // Next absolute old line number not yet accounted for.
    let mut next_unmapped = start;
    for hunk in hunks {
        // For zero-length old ranges git's start denotes the line *before*
        // the insertion point.
        let mut cur_old = hunk.old_start + u32::from(hunk.old_count == 0);
        while next_unmapped < cur_old.min(end) {
            pre_to_post[(next_unmapped - start) as usize] = Some(post_idx);
            post_idx += 1;
            next_unmapped += 1;
        }
        for line in &hunk.lines {
            match line.kind {
                LineKind::Context | LineKind::Deleted => {
                    let no = line.old_lineno.unwrap_or(cur_old);
                    if (start..end).contains(&no) && line.kind == LineKind::Context {
                        pre_to_post[(no - start) as usize] = Some(post_idx);
                        post_idx += 1;
                    }
                    cur_old = no + 1;
                    next_unmapped = next_unmapped.max(cur_old);
                }
                LineKind::Added => {
                    // The insertion point sits before old line `cur_old`;
                    // inside the body when that point follows a body line.
                    if cur_old > start && cur_old <= end {
                        if let Some(no) = line.new_lineno {
                            added_post.insert(no, post_idx);
                        }
                        post_idx += 1;
                    }
                }
            }
        }
    }
    while next_unmapped < end {
        pre_to_post[(next_unmapped - start) as usize] = Some(post_idx);
        post_idx += 1;
        next_unmapped += 1;
    }

    BodyModel {
        pre_to_post,
        added_post,
        start_line: start,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_FILE_DIFF: &str = "\
diff --git a/src/a.c b/src/a.c
index 111..222 100644
--- a/src/a.c
+++ b/src/a.c
@@ -10,7 +10,8 @@ int compute(int x)
 int y = x;
 if (y < 0)
     return -1;
-y = y * 2;
+y = y * 3;
+y += 1;
 return y;
 
 
diff --git a/src/b.c b/src/b.c
index 333..444 100644
--- a/src/b.c
+++ b/src/b.c
@@ -3,3 +3,4 @@ void log_msg(void)
 a();
 b();
+c();
 d();
";

    #[test]
    fn parses_two_file_diff() {
        let diff = parse_unified_diff(TWO_FILE_DIFF).unwrap();
        assert_eq!(diff.files.len(), 2);
        let changed = diff.changed_lines();
        assert_eq!(changed.len(), 4);
        let (del, add): (Vec<_>, Vec<_>) =
            changed.iter().partition(|l| l.kind == LineKind::Deleted);
        assert_eq!(del.len(), 1);
        assert_eq!(del[0].line_text, "y = y * 2;");
        assert_eq!(del[0].old_lineno, Some(13));
        assert_eq!(del[0].filename, "src/a.c");
        assert_eq!(del[0].functionname, "compute");
        assert_eq!(add.len(), 3);
        assert_eq!(add[0].new_lineno, Some(13));
        assert_eq!(add[1].new_lineno, Some(14));
        assert_eq!(add[2].line_text, "c();");
        assert_eq!(add[2].filename, "src/b.c");
        assert_eq!(add[2].new_lineno, Some(5));
        assert_eq!(add[2].functionname, "log_msg");
    }

    #[test]
    fn empty_input_is_empty_patch() {
        let diff = parse_unified_diff("").unwrap();
        assert!(diff.files.is_empty());
        assert!(diff.is_empty());
    }

    #[test]
    fn wrong_hunk_counts_are_malformed() {
        let bad = "\
--- a/x.c
+++ b/x.c
@@ -1,5 +1,5 @@
 one
 two
";
        match parse_unified_diff(bad) {
            Err(DiffError::Malformed { offset, .. }) => assert!(offset > 0),
            other => panic!("expected Malformed, got {other:?}"),
        }
    }

    #[test]
    fn rename_header_parses() {
        let text = "\
diff --git a/old.c b/new.c
similarity index 100%
rename from old.c
rename to new.c
";
        let diff = parse_unified_diff(text).unwrap();
        assert_eq!(diff.files.len(), 1);
        assert!(diff.files[0].is_rename());
        assert_eq!(diff.files[0].old_path, "old.c");
        assert_eq!(diff.files[0].new_path, "new.c");
    }

    #[test]
    fn render_roundtrip() {
        let diff = parse_unified_diff(TWO_FILE_DIFF).unwrap();
        let rendered = diff.render();
        let reparsed = parse_unified_diff(&rendered).unwrap();
        assert_eq!(diff, reparsed);
    }

    fn mini_diff(body: &str) -> PatchDiff {
        parse_unified_diff(&format!("--- a/f.c\n+++ b/f.c\n{body}")).unwrap()
    }

    #[test]
    fn strip_removes_comment_only_addition() {
        let diff = mini_diff("@@ -1,2 +1,3 @@ void f(void)\n a();\n+/* note */\n b();\n");
        let stripped = strip_comment_changes(&diff, LanguageProfile::CLike);
        assert!(stripped.is_empty());
        assert!(stripped.files.is_empty());
    }

    #[test]
    fn strip_keeps_mixed_line() {
        let diff = mini_diff("@@ -1,2 +1,1 @@ void f(void)\n a();\n-x++; // fix\n");
        let stripped = strip_comment_changes(&diff, LanguageProfile::CLike);
        assert_eq!(stripped.changed_lines().len(), 1);
    }

    #[test]
    fn strip_tracks_block_comment_from_context() {
        // Deletion inside a block comment opened in a context line.
        let diff = mini_diff(
            "@@ -1,4 +1,3 @@ void f(void)\n a();\n /* start of notes\n-   old note line\n end */\n",
        );
        let stripped = strip_comment_changes(&diff, LanguageProfile::CLike);
        assert!(stripped.is_empty());
    }

    #[test]
    fn strip_infers_comment_start_from_closing_context() {
        // The hunk begins inside a block comment; only `*/` shows in context.
        let diff = mini_diff("@@ -5,3 +5,2 @@ void f(void)\n-   note\n end */\n b();\n");
        let stripped = strip_comment_changes(&diff, LanguageProfile::CLike);
        assert!(stripped.is_empty());
    }

    #[test]
    fn strip_unknown_profile_is_noop_with_warning() {
        let diff = mini_diff("@@ -1,1 +1,1 @@\n-/* x */\n+/* y */\n");
        let stripped = strip_comment_changes(&diff, LanguageProfile::Unknown);
        assert_eq!(stripped.changed_lines().len(), 2);
        assert_eq!(stripped.warnings.len(), 1);
    }

    #[test]
    fn strip_is_idempotent_on_tricky_hunk() {
        let diff = mini_diff(
            "@@ -1,6 +1,3 @@ void f(void)\n-  y = 2;\n-  /* begin\n ctx in comment\n end */ code;\n-  z = 3;\n q();\n",
        );
        let once = strip_comment_changes(&diff, LanguageProfile::CLike);
        let twice = strip_comment_changes(&once, LanguageProfile::CLike);
        assert_eq!(once, twice);
    }

    #[test]
    fn classify_reorder_lock_motion() {
        // `lock();` moves two statements earlier, re-indented.
        let diff = mini_diff(
            "@@ -2,5 +2,5 @@ void f(void)\n a();\n+lock();\n b();\n c();\n-  lock();\n d();\n",
        );
        let stripped = strip_comment_changes(&diff, LanguageProfile::CLike);
        match classify_patch(&stripped).unwrap() {
            PatchClass::ReorderOnly { pairs } => {
                assert_eq!(pairs.len(), 1);
                assert_eq!(normalize_ws(&pairs[0].deleted.line_text), "lock();");
            }
            other => panic!("expected ReorderOnly, got {}", other.label()),
        }
    }

    #[test]
    fn classify_added_only_range_check() {
        let diff = mini_diff(
            "@@ -2,2 +2,4 @@ int get(int idx)\n int v;\n+if (idx >= MAX)\n+    return -1;\n v = table[idx];\n",
        );
        match classify_patch(&diff).unwrap() {
            PatchClass::AddedOnly => {}
            other => panic!("expected AddedOnly, got {}", other.label()),
        }
    }

    #[test]
    fn classify_deleted_lines() {
        let diff = mini_diff("@@ -3,3 +3,2 @@ void release(void)\n a();\n-tz = NULL;\n b();\n");
        match classify_patch(&diff).unwrap() {
            PatchClass::DeletedLines => {}
            other => panic!("expected DeletedLines, got {}", other.label()),
        }
    }

    #[test]
    fn classify_empty_patch_errors() {
        let diff = mini_diff("@@ -1,1 +1,1 @@\n-/* a */\n+/* b */\n");
        let stripped = strip_comment_changes(&diff, LanguageProfile::CLike);
        assert!(matches!(classify_patch(&stripped), Err(DiffError::EmptyPatch)));
    }

    #[test]
    fn classify_duplicate_moves_pair_by_nearest() {
        // Two identical `sync();` lines both move; pairing is by distance.
        let diff = mini_diff(
            "@@ -2,6 +2,6 @@ void f(void)\n a();\n-sync();\n+b2();\n b();\n+sync();\n-sync();\n c();\n+sync();\n-b2();\n",
        );
        // deleted: sync()@3, sync()@6(b2 swap piece); this is a contrived mix;
        // multiset equality must still hold for ReorderOnly.
        let class = classify_patch(&diff).unwrap();
        assert!(matches!(class, PatchClass::ReorderOnly { .. }));
    }

    fn body(text: &str) -> BTreeMap<FunctionLocator, FunctionBody> {
        let mut m = BTreeMap::new();
        m.insert(
            FunctionLocator::new("f.c", "f"),
            FunctionBody {
                locator: FunctionLocator::new("f.c", "f"),
                start_line: 1,
                text: text.to_string(),
            },
        );
        m
    }

    #[test]
    fn reorder_context_lock_moved_up_past_two() {
        // Pre-patch body occupies file lines 1..=7.
        let pre = "void f(void) {\n    a();\n    b();\n    c();\n    lock();\n    d();\n}";
        let diff = mini_diff(
            "@@ -1,7 +1,7 @@ void f(void)\n void f(void) {\n     a();\n+    lock();\n     b();\n     c();\n-    lock();\n     d();\n }\n",
        );
        let class = classify_patch(&diff).unwrap();
        let PatchClass::ReorderOnly { pairs } = class else {
            panic!("expected reorder");
        };
        let mut diff2 = diff.clone();
        diff2.refine_attribution("f.c", Some(pre), None, LanguageProfile::CLike);
        // Re-pair with refined attribution.
        let PatchClass::ReorderOnly { pairs: _ } = classify_patch(&diff2).unwrap() else {
            panic!()
        };
        let crossed = reorder_context(&diff2, &pairs_with_fn(&pairs), &body(pre)).unwrap();
        let texts: Vec<_> = crossed.iter().map(|c| c.line_text.as_str()).collect();
        assert_eq!(texts, vec!["b();", "c();"]);
        assert_eq!(crossed[0].linenum, 3);
        assert_eq!(crossed[1].linenum, 4);
    }

    #[test]
    fn reorder_context_adjacent_move_is_empty() {
        let pre = "void f(void) {\n    a();\n    lock();\n    b();\n}";
        let diff = mini_diff(
            "@@ -1,5 +1,5 @@ void f(void)\n void f(void) {\n     a();\n-    lock();\n-    b();\n+    b();\n+    lock();\n }\n",
        );
        // Moving lock() below b() crosses exactly b(); moving it by zero
        // would cross nothing. Adjacent swap crosses the one line.
        let PatchClass::ReorderOnly { pairs } = classify_patch(&diff).unwrap() else {
            panic!()
        };
        let crossed = reorder_context(&diff, &pairs_with_fn(&pairs), &body(pre)).unwrap();
        // lock crosses b, and b crosses lock; union is both, deduped by line.
        assert_eq!(crossed.len(), 2);
    }

    #[test]
    fn reorder_context_missing_body_errors() {
        let diff = mini_diff(
            "@@ -1,3 +1,3 @@ void f(void)\n a();\n-lock();\n b();\n+lock();\n",
        );
        let PatchClass::ReorderOnly { pairs } = classify_patch(&diff).unwrap() else {
            panic!()
        };
        let err = reorder_context(&diff, &pairs_with_fn(&pairs), &BTreeMap::new());
        assert!(matches!(err, Err(DiffError::MissingFunctionBody(_))));
    }

    /// Tests build pairs from hint attribution; ensure the function name is set.
    fn pairs_with_fn(pairs: &[ReorderPair]) -> Vec<ReorderPair> {
        pairs
            .iter()
            .map(|p| {
                let mut p = p.clone();
                if p.deleted.functionname.is_empty() {
                    p.deleted.functionname = "f".into();
                }
                if p.added.functionname.is_empty() {
                    p.added.functionname = "f".into();
                }
                p
            })
            .collect()
    }
}
