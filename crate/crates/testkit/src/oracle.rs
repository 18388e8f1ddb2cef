//! Independent oracles: brute-force implementations kept deliberately apart
//! from the library's algorithms so tests compare two routes to the answer.

use std::collections::BTreeSet;

/// Whitespace normalization mirroring the matching rule under test, local to
/// the oracle so the two sides stay independent.
fn norm(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Three-way patch label decided by exhaustive bijection search: the patch is
/// reorder-only iff a perfect matching pairs every deleted line with a
/// distinct added line of equal normalized text (and vice versa).
pub fn classify_by_bijection(deleted: &[String], added: &[String]) -> &'static str {
    if deleted.is_empty() && added.is_empty() {
        return "EMPTY";
    }
    if deleted.is_empty() {
        return "ADDED_ONLY";
    }
    if deleted.len() == added.len() && bijection_exists(deleted, added) {
        return "REORDER_ONLY";
    }
    "DELETED_LINES"
}

fn bijection_exists(deleted: &[String], added: &[String]) -> bool {
    let mut used = vec![false; added.len()];
    fn assign(i: usize, deleted: &[String], added: &[String], used: &mut [bool]) -> bool {
        if i == deleted.len() {
            return true;
        }
        let want = norm(&deleted[i]);
        for j in 0..added.len() {
            if !used[j] && norm(&added[j]) == want {
                used[j] = true;
                if assign(i + 1, deleted, added, used) {
                    return true;
                }
                used[j] = false;
            }
        }
        false
    }
    assign(0, deleted, added, &mut used)
}

/// Reorder-context oracle: compare the relative order of every statement pair
/// between the pre- and post-patch bodies. `moved` lists pre-patch statement
/// indices (0-based) of the moved lines. Statement texts must be unique.
/// Returns 0-based pre-patch indices of crossed statements.
pub fn crossed_statements(
    pre_statements: &[&str],
    post_statements: &[&str],
    moved: &[usize],
) -> BTreeSet<usize> {
    let post_pos = |text: &str| -> Option<usize> {
        post_statements.iter().position(|p| norm(p) == norm(text))
    };
    let mut crossed = BTreeSet::new();
    for &m in moved {
        let Some(m_post) = post_pos(pre_statements[m]) else {
            continue;
        };
        for (s, text) in pre_statements.iter().enumerate() {
            if s == m {
                continue;
            }
            let Some(s_post) = post_pos(text) else {
                continue;
            };
            if (s < m) != (s_post < m_post) {
                crossed.insert(s);
            }
        }
    }
    crossed
}

/// Vulnerable-version oracle: test every version independently. A version is
/// vulnerable iff it contains the bic but not the fix, where "contains"
/// means the commit is an ancestor of (or equal to) the release commit.
pub fn vulnerable_versions_by_scan<I, F>(versions: &[(String, I)], bic: &I, fix: &I, is_ancestor: F) -> BTreeSet<String>
where
    F: Fn(&I, &I) -> bool,
{
    versions
        .iter()
        .filter(|(_, release)| is_ancestor(bic, release) && !is_ancestor(fix, release))
        .map(|(tag, _)| tag.clone())
        .collect()
}


// ---------------------------------------------------------------------------
// Replay oracles for history: re-derive per-commit touches from raw git
// output with a deliberately simple parser and function-range finder.
// ---------------------------------------------------------------------------

use std::path::Path;
use std::process::Command;

use bisectr_core::CommitId;

/// Rename knowledge the oracle is given about a hand-built fixture.
#[derive(Debug, Clone)]
pub enum ScriptedRename {
    File { old: String, new: String },
    Function { old: String, new: String },
}

#[derive(Debug, Clone)]
pub struct RenameScript {
    pub commit: CommitId,
    pub rename: ScriptedRename,
}

fn git(repo: &Path, args: &[&str]) -> Option<String> {
    let out = Command::new("git").arg("-C").arg(repo).args(args).output().ok()?;
    if out.status.success() {
        Some(String::from_utf8_lossy(&out.stdout).into_owned())
    } else {
        None
    }
}

/// Ancestors of `start` (inclusive) ordered by (author_time, hash) descending.
pub fn ordered_ancestors(repo: &Path, start: &CommitId) -> Vec<CommitId> {
    let out = git(repo, &["log", "--format=%H%x00%at", start.as_str()]).unwrap_or_default();
    let mut rows: Vec<(String, i64)> = out
        .lines()
        .filter_map(|l| {
            let (h, t) = l.split_once('\0')?;
            Some((h.trim().to_string(), t.trim().parse().ok()?))
        })
        .collect();
    rows.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| b.0.cmp(&a.0)));
    rows.into_iter()
        .filter_map(|(h, _)| CommitId::new(h).ok())
        .collect()
}

/// Per-file touch info extracted from one commit's first-parent diff.
#[derive(Debug, Default, Clone)]
pub struct FileTouch {
    pub old_path: String,
    pub new_path: String,
    pub renamed: bool,
    pub created: bool,
    pub deleted_linenos: Vec<u32>,
    pub added_linenos: Vec<u32>,
}

/// Minimal independent diff walk: returns one entry per file in the commit's
/// diff against its first parent (or the empty tree for roots).
pub fn commit_touches(repo: &Path, commit: &CommitId) -> Vec<FileTouch> {
    let parent = git(repo, &["rev-parse", &format!("{commit}^1")])
        .map(|s| s.trim().to_string());
    let text = match &parent {
        Some(p) => git(repo, &["diff", "--no-color", "-M", "--unified=3", p, commit.as_str()]),
        None => git(
            repo,
            &["diff-tree", "--root", "--no-commit-id", "--no-color", "-p", commit.as_str()],
        ),
    }
    .unwrap_or_default();

    let mut files: Vec<FileTouch> = Vec::new();
    let mut old_no = 0u32;
    let mut new_no = 0u32;
    let mut in_hunk = false;
    for line in text.lines() {
        if let Some(rest) = line.strip_prefix("diff --git a/") {
            in_hunk = false;
            let (old, new) = match rest.rfind(" b/") {
                Some(i) => (rest[..i].to_string(), rest[i + 3..].to_string()),
                None => (rest.to_string(), rest.to_string()),
            };
            files.push(FileTouch {
                old_path: old,
                new_path: new,
                ..FileTouch::default()
            });
        } else if let Some(rest) = line.strip_prefix("rename from ") {
            if let Some(f) = files.last_mut() {
                f.old_path = rest.to_string();
                f.renamed = true;
            }
        } else if let Some(rest) = line.strip_prefix("rename to ") {
            if let Some(f) = files.last_mut() {
                f.new_path = rest.to_string();
                f.renamed = true;
            }
        } else if line.starts_with("new file mode") {
            if let Some(f) = files.last_mut() {
                f.created = true;
            }
        } else if line.starts_with("@@ -") {
            let nums: Vec<i64> = line
                .trim_start_matches("@@ -")
                .split(" @@")
                .next()
                .unwrap_or("")
                .replace("+", "")
                .split(' ')
                .flat_map(|r| r.split(','))
                .filter_map(|v| v.parse().ok())
                .collect();
            old_no = *nums.first().unwrap_or(&1) as u32;
            new_no = *nums.get(2).unwrap_or(&1) as u32;
            in_hunk = true;
        } else if in_hunk {
            if let Some(f) = files.last_mut() {
                if line.starts_with('-') {
                    f.deleted_linenos.push(old_no);
                    old_no += 1;
                } else if line.starts_with('+') {
                    f.added_linenos.push(new_no);
                    new_no += 1;
                } else if line.starts_with('\\') {
                    // no-newline marker
                } else {
                    old_no += 1;
                    new_no += 1;
                }
            }
        }
    }
    files
}

/// 1-based inclusive line range of `name`'s definition: the first line where
/// `name(` appears at a definition-looking spot, through the next `}` in
/// column zero. Fixture sources are formatted to satisfy this.
pub fn function_range(content: &str, name: &str) -> Option<(u32, u32)> {
    let lines: Vec<&str> = content.lines().collect();
    let mut start = None;
    for (i, line) in lines.iter().enumerate() {
        if line.contains(&format!("{name}(")) && !line.trim_end().ends_with(';') {
            let before = line.split(&format!("{name}(")).next().unwrap_or("");
            if before
                .chars()
                .last()
                .map(|c| !(c.is_ascii_alphanumeric() || c == '_'))
                .unwrap_or(true)
            {
                start = Some(i);
                break;
            }
        }
    }
    let start = start?;
    for (j, line) in lines.iter().enumerate().skip(start) {
        if line.starts_with('}') {
            return Some((start as u32 + 1, j as u32 + 1));
        }
    }
    None
}

fn show_file(repo: &Path, commit: &str, path: &str) -> Option<String> {
    git(repo, &["show", &format!("{commit}:{path}")])
}

/// Replay oracle for function history: walk every ancestor, test whether its
/// diff overlaps the function's line range, switching names at the scripted
/// rename commits. Pure file renames do not count as modifications.
pub fn replay_function_history(
    repo: &Path,
    start: &CommitId,
    file: &str,
    func: &str,
    script: &[RenameScript],
) -> Vec<CommitId> {
    let mut cur_file = file.to_string();
    let mut cur_func = func.to_string();
    let mut out = Vec::new();
    for c in ordered_ancestors(repo, start) {
        let touches = commit_touches(repo, &c);
        let Some(ft) = touches.iter().find(|f| f.new_path == cur_file) else {
            continue;
        };
        let parent = git(repo, &["rev-parse", &format!("{c}^1")]).map(|s| s.trim().to_string());

        // Scripted function rename handling: the commit shows the new name.
        let scripted_fn_old: Option<String> = script.iter().find_map(|s| {
            if s.commit == c {
                if let ScriptedRename::Function { old, new } = &s.rename {
                    if *new == cur_func {
                        return Some(old.clone());
                    }
                }
            }
            None
        });

        let new_content = show_file(repo, c.as_str(), &ft.new_path);
        let new_range = new_content
            .as_deref()
            .and_then(|t| function_range(t, &cur_func));
        let old_name = scripted_fn_old.clone().unwrap_or_else(|| cur_func.clone());
        let old_content = parent
            .as_deref()
            .and_then(|p| show_file(repo, p, &ft.old_path));
        let old_range = old_content
            .as_deref()
            .and_then(|t| function_range(t, &old_name));

        let added_hit = match new_range {
            Some((s, e)) => ft.added_linenos.iter().any(|&n| n >= s && n <= e),
            None => false,
        };
        let deleted_hit = match old_range {
            Some((s, e)) => ft.deleted_linenos.iter().any(|&n| n >= s && n <= e),
            None => false,
        };
        if added_hit || deleted_hit {
            out.push(c.clone());
        }

        if let Some(old) = scripted_fn_old {
            cur_func = old;
        }
        if ft.renamed {
            cur_file = ft.old_path.clone();
        }
        // Creation point: the function exists here but not at the parent.
        if new_range.is_some() && old_range.is_none() && ft.created {
            break;
        }
    }
    out
}

/// Replay oracle for file history: any diff entry touching the tracked name
/// counts, including pure renames; stops at the creation commit.
pub fn replay_file_history(repo: &Path, start: &CommitId, file: &str) -> Vec<CommitId> {
    let mut cur = file.to_string();
    let mut out = Vec::new();
    for c in ordered_ancestors(repo, start) {
        let touches = commit_touches(repo, &c);
        let Some(ft) = touches.iter().find(|f| f.new_path == cur) else {
            continue;
        };
        out.push(c.clone());
        if ft.renamed {
            cur = ft.old_path.clone();
        }
        if ft.created {
            break;
        }
    }
    out
}
