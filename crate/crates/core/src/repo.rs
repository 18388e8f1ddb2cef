//! Read-only repository access over the system `git` binary: commit
//! metadata, first-parent diffs with exact function attribution, and
//! rename-following function/file history.

use std::collections::{BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diff::{parse_unified_diff, FileChangeKind, LineKind, PatchDiff};
use crate::lang::{normalize_ws, LanguageProfile, SourceMap};
use crate::types::{CommitId, FunctionBody, FunctionLocator};

#[derive(Debug, Error)]
pub enum RepoError {
    #[error("repository not found at {0}")]
    RepoNotFound(PathBuf),
    #[error("ref {0:?} is ambiguous")]
    AmbiguousRef(String),
    #[error("ref {0:?} not found")]
    UnknownRef(String),
    #[error("function {0} not found on the ancestry path")]
    FunctionNotFound(FunctionLocator),
    #[error("file {0:?} not found on the ancestry path")]
    FileNotFound(String),
    #[error("git {args:?} failed: {stderr}")]
    Git { args: Vec<String>, stderr: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("bad diff in commit {0}: {1}")]
    BadDiff(CommitId, crate::diff::DiffError),
}

/// A fully-loaded commit: metadata plus the parsed first-parent diff.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Commit {
    pub id: CommitId,
    pub parent_ids: Vec<CommitId>,
    /// Author time, seconds since epoch (UTC).
    pub author_time: i64,
    pub message: String,
    pub diff: PatchDiff,
}

impl Commit {
    pub fn first_parent(&self) -> Option<&CommitId> {
        self.parent_ids.first()
    }

    pub fn is_merge(&self) -> bool {
        self.parent_ids.len() > 1
    }
}

/// One rename event discovered while walking history: at `commit` the
/// function known as `new` was previously `old`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenameEvent {
    pub commit: CommitId,
    pub old: FunctionLocator,
    pub new: FunctionLocator,
}

/// Commits that modified one function, newest first, with the rename chain
/// followed to reach them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FunctionHistory {
    pub locator: FunctionLocator,
    pub commits: Vec<CommitId>,
    pub rename_chain: Vec<RenameEvent>,
}

#[derive(Debug, Default)]
struct Caches {
    commits: HashMap<CommitId, Arc<Commit>>,
    files: HashMap<(CommitId, String), Option<Arc<String>>>,
    maps: HashMap<(CommitId, String), Arc<SourceMap>>,
    ancestors: HashMap<CommitId, Arc<Vec<(CommitId, i64)>>>,
    renames: Vec<RenameEvent>,
    empty_tree: Option<String>,
    /// Batch-loaded commit metadata: parents, author time, message.
    meta: HashMap<CommitId, (Vec<CommitId>, i64, String)>,
    /// Batch-loaded raw first-parent diff text, parsed lazily.
    diff_text: HashMap<CommitId, String>,
}

/// Ancestor counts up to this many get their diffs fetched in one batched
/// `git log -p` call instead of one subprocess per commit.
const DIFF_PRELOAD_LIMIT: usize = 4096;

/// Long-running `git cat-file --batch` child serving file reads over a pipe.
#[derive(Debug)]
struct BatchCat {
    child: std::process::Child,
    stdin: std::process::ChildStdin,
    stdout: std::io::BufReader<std::process::ChildStdout>,
}

impl BatchCat {
    fn spawn(repo: &Path) -> Option<BatchCat> {
        let mut child = Command::new("git")
            .arg("-C")
            .arg(repo)
            .args(["cat-file", "--batch"])
            .stdin(std::process::Stdio::piped())
            .stdout(std::process::Stdio::piped())
            .stderr(std::process::Stdio::null())
            .spawn()
            .ok()?;
        let stdin = child.stdin.take()?;
        let stdout = std::io::BufReader::new(child.stdout.take()?);
        Some(BatchCat {
            child,
            stdin,
            stdout,
        })
    }

    /// Fetch one object by `<rev>:<path>` spec; None when the path is absent.
    fn fetch(&mut self, spec: &str) -> std::io::Result<Option<Vec<u8>>> {
        use std::io::{BufRead, Read, Write};
        writeln!(self.stdin, "{spec}")?;
        self.stdin.flush()?;
        let mut header = String::new();
        self.stdout.read_line(&mut header)?;
        let header = header.trim_end();
        if header.ends_with(" missing")
            || header.ends_with(" ambiguous")
            || header.is_empty()
        {
            return Ok(None);
        }
        let size: usize = header
            .rsplit(' ')
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| std::io::Error::other(format!("bad cat-file header {header:?}")))?;
        let mut buf = vec![0u8; size + 1]; // content plus trailing newline
        self.stdout.read_exact(&mut buf)?;
        buf.pop();
        Ok(Some(buf))
    }
}

impl Drop for BatchCat {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Handle on an on-disk git repository. All operations are read-only; the
/// internal cache is synchronized so a handle can be shared across threads.
#[derive(Debug)]
pub struct Repo {
    path: PathBuf,
    profile: LanguageProfile,
    caches: Mutex<Caches>,
    cat: Mutex<Option<BatchCat>>,
}

impl Repo {
    pub fn open(path: impl AsRef<Path>) -> Result<Repo, RepoError> {
        let path = path.as_ref().to_path_buf();
        let probe = Command::new("git")
            .arg("-C")
            .arg(&path)
            .args(["rev-parse", "--git-dir"])
            .output();
        match probe {
            Ok(out) if out.status.success() => Ok(Repo {
                path,
                profile: LanguageProfile::CLike,
                caches: Mutex::new(Caches::default()),
                cat: Mutex::new(None),
            }),
            _ => Err(RepoError::RepoNotFound(path)),
        }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn git(&self, args: &[&str]) -> Result<String, RepoError> {
        let out = Command::new("git")
            .arg("-C")
            .arg(&self.path)
            .args(args)
            .output()?;
        if !out.status.success() {
            return Err(RepoError::Git {
                args: args.iter().map(|s| s.to_string()).collect(),
                stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
            });
        }
        Ok(String::from_utf8_lossy(&out.stdout).into_owned())
    }

    /// Resolve a hash prefix or symbolic ref to a fully-populated commit.
    pub fn resolve_commit(&self, reference: &str) -> Result<Commit, RepoError> {
        let spec = format!("{reference}^{{commit}}");
        let out = Command::new("git")
            .arg("-C")
            .arg(&self.path)
            .args(["rev-parse", "--verify", &spec])
            .output()?;
        if !out.status.success() {
            let stderr = String::from_utf8_lossy(&out.stderr);
            if stderr.contains("ambiguous") {
                return Err(RepoError::AmbiguousRef(reference.to_string()));
            }
            return Err(RepoError::UnknownRef(reference.to_string()));
        }
        let hash = String::from_utf8_lossy(&out.stdout).trim().to_string();
        let id = CommitId::new(hash).map_err(|_| RepoError::UnknownRef(reference.to_string()))?;
        Ok((*self.commit(&id)?).clone())
    }

    /// Cached commit lookup by full id.
    pub fn commit(&self, id: &CommitId) -> Result<Arc<Commit>, RepoError> {
        if let Some(hit) = self.caches.lock().unwrap().commits.get(id) {
            return Ok(hit.clone());
        }
        let loaded = Arc::new(self.load_commit(id)?);
        self.caches
            .lock()
            .unwrap()
            .commits
            .insert(id.clone(), loaded.clone());
        Ok(loaded)
    }

    fn load_commit(&self, id: &CommitId) -> Result<Commit, RepoError> {
        let preloaded_meta = self.caches.lock().unwrap().meta.get(id).cloned();
        let (parent_ids, author_time, message) = match preloaded_meta {
            Some(m) => m,
            None => {
                let meta =
                    self.git(&["show", "-s", "--format=%H%x00%P%x00%at%x00%B", id.as_str()])?;
                let mut parts = meta.splitn(4, '\0');
                let hash = parts.next().unwrap_or("").trim().to_string();
                let parents_raw = parts.next().unwrap_or("").trim().to_string();
                let time_raw = parts.next().unwrap_or("0").trim().to_string();
                let message = parts.next().unwrap_or("").trim_end().to_string();
                CommitId::new(hash).map_err(|_| RepoError::UnknownRef(id.to_string()))?;
                let parent_ids: Vec<CommitId> = parents_raw
                    .split_whitespace()
                    .filter_map(|p| CommitId::new(p).ok())
                    .collect();
                (parent_ids, time_raw.parse().unwrap_or(0), message)
            }
        };

        let preloaded_diff = self.caches.lock().unwrap().diff_text.remove(id);
        let diff_text = match preloaded_diff {
            Some(text) => text,
            None => match parent_ids.first() {
                Some(p1) => self.git(&[
                    "diff",
                    "--no-color",
                    "--unified=3",
                    "-M",
                    p1.as_str(),
                    id.as_str(),
                ])?,
                None => {
                    let empty = self.empty_tree()?;
                    self.git(&[
                        "diff",
                        "--no-color",
                        "--unified=3",
                        "-M",
                        &empty,
                        id.as_str(),
                    ])?
                }
            },
        };
        let mut diff =
            parse_unified_diff(&diff_text).map_err(|e| RepoError::BadDiff(id.clone(), e))?;
        self.refine(&mut diff, id, parent_ids.first())?;

        Ok(Commit {
            id: id.clone(),
            parent_ids,
            author_time,
            message,
            diff,
        })
    }

    fn refine(
        &self,
        diff: &mut PatchDiff,
        id: &CommitId,
        parent: Option<&CommitId>,
    ) -> Result<(), RepoError> {
        let files: Vec<(String, String, FileChangeKind)> = diff
            .files
            .iter()
            .map(|f| (f.old_path.clone(), f.new_path.clone(), f.kind))
            .collect();
        for (old_path, new_path, kind) in files {
            let old_content = match (parent, kind) {
                (Some(p), k) if k != FileChangeKind::Added => self.file_at(p, &old_path)?,
                _ => None,
            };
            let new_content = if kind != FileChangeKind::Deleted {
                self.file_at(id, &new_path)?
            } else {
                None
            };
            let target = if kind == FileChangeKind::Deleted {
                old_path.clone()
            } else {
                new_path.clone()
            };
            diff.refine_attribution(
                &target,
                old_content.as_deref().map(|s| s as &str),
                new_content.as_deref().map(|s| s as &str),
                self.profile,
            );
        }
        Ok(())
    }

    fn empty_tree(&self) -> Result<String, RepoError> {
        if let Some(t) = &self.caches.lock().unwrap().empty_tree {
            return Ok(t.clone());
        }
        let out = self.git(&["hash-object", "-t", "tree", "/dev/null"])?;
        let tree = out.trim().to_string();
        self.caches.lock().unwrap().empty_tree = Some(tree.clone());
        Ok(tree)
    }

    /// File content at a commit, or None when the path does not exist there.
    /// Served through a persistent `cat-file --batch` pipe; falls back to a
    /// one-shot `git show` if the pipe misbehaves.
    pub fn file_at(&self, commit: &CommitId, path: &str) -> Result<Option<Arc<String>>, RepoError> {
        let key = (commit.clone(), path.to_string());
        if let Some(hit) = self.caches.lock().unwrap().files.get(&key) {
            return Ok(hit.clone());
        }
        let spec = format!("{}:{}", commit.as_str(), path);

        let mut value: Option<Option<Arc<String>>> = None;
        {
            let mut cat = self.cat.lock().unwrap();
            if cat.is_none() {
                *cat = BatchCat::spawn(&self.path);
            }
            if let Some(batch) = cat.as_mut() {
                match batch.fetch(&spec) {
                    Ok(bytes) => {
                        value = Some(
                            bytes.map(|b| Arc::new(String::from_utf8_lossy(&b).into_owned())),
                        );
                    }
                    Err(_) => *cat = None, // broken pipe: fall back below
                }
            }
        }
        let value = match value {
            Some(v) => v,
            None => {
                let out = Command::new("git")
                    .arg("-C")
                    .arg(&self.path)
                    .args(["show", &spec])
                    .output()?;
                if out.status.success() {
                    Some(Arc::new(String::from_utf8_lossy(&out.stdout).into_owned()))
                } else {
                    None
                }
            }
        };
        self.caches
            .lock()
            .unwrap()
            .files
            .insert(key, value.clone());
        Ok(value)
    }

    fn source_map_at(
        &self,
        commit: &CommitId,
        path: &str,
    ) -> Result<Option<Arc<SourceMap>>, RepoError> {
        let key = (commit.clone(), path.to_string());
        if let Some(hit) = self.caches.lock().unwrap().maps.get(&key) {
            return Ok(Some(hit.clone()));
        }
        let Some(content) = self.file_at(commit, path)? else {
            return Ok(None);
        };
        let map = Arc::new(SourceMap::scan(&content, self.profile));
        self.caches
            .lock()
            .unwrap()
            .maps
            .insert(key, map.clone());
        Ok(Some(map))
    }

    /// All ancestors of `start` (inclusive), ordered by
    /// (author_time, hash) descending. The first walk batch-loads commit
    /// metadata, and raw diffs too when the history is modest, so later
    /// per-commit loads spawn no subprocesses.
    pub fn ancestors_sorted(
        &self,
        start: &CommitId,
    ) -> Result<Arc<Vec<(CommitId, i64)>>, RepoError> {
        if let Some(hit) = self.caches.lock().unwrap().ancestors.get(start) {
            return Ok(hit.clone());
        }
        let out = self.git(&[
            "log",
            "--format=%H%x00%P%x00%at%x00%B%x1e",
            start.as_str(),
        ])?;
        let mut list: Vec<(CommitId, i64)> = Vec::new();
        {
            let mut caches = self.caches.lock().unwrap();
            for record in out.split('\u{1e}') {
                let record = record.trim_start_matches(['\n', '\r']);
                if record.trim().is_empty() {
                    continue;
                }
                let mut parts = record.splitn(4, '\0');
                let Ok(id) = CommitId::new(parts.next().unwrap_or("").trim()) else {
                    continue;
                };
                let parents: Vec<CommitId> = parts
                    .next()
                    .unwrap_or("")
                    .split_whitespace()
                    .filter_map(|p| CommitId::new(p).ok())
                    .collect();
                let time: i64 = parts.next().unwrap_or("0").trim().parse().unwrap_or(0);
                let message = parts.next().unwrap_or("").trim_end().to_string();
                list.push((id.clone(), time));
                caches.meta.entry(id).or_insert((parents, time, message));
            }
        }
        if list.len() <= DIFF_PRELOAD_LIMIT {
            self.preload_diffs(start)?;
        }
        list.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| b.0.cmp(&a.0)));
        let arc = Arc::new(list);
        self.caches
            .lock()
            .unwrap()
            .ancestors
            .insert(start.clone(), arc.clone());
        Ok(arc)
    }

    /// One `git log -p` call fetching every ancestor's first-parent diff.
    /// Blocks are delimited by `\x01<hash>` lines, which cannot occur inside
    /// diff content.
    fn preload_diffs(&self, start: &CommitId) -> Result<(), RepoError> {
        let out = self.git(&[
            "log",
            "--format=%x01%H",
            "-p",
            "--diff-merges=first-parent",
            "--no-color",
            "--unified=3",
            "-M",
            start.as_str(),
        ])?;
        let mut caches = self.caches.lock().unwrap();
        for block in out.split('\u{1}').skip(1) {
            let Some((hash_line, rest)) = block.split_once('\n') else {
                continue;
            };
            let Ok(id) = CommitId::new(hash_line.trim()) else {
                continue;
            };
            if caches.commits.contains_key(&id) {
                continue;
            }
            let diff = rest.trim_start_matches('\n').to_string();
            caches.diff_text.entry(id).or_insert(diff);
        }
        Ok(())
    }

    /// True when `anc` is an ancestor of (or equal to) `desc`.
    pub fn is_ancestor(&self, anc: &CommitId, desc: &CommitId) -> Result<bool, RepoError> {
        let out = Command::new("git")
            .arg("-C")
            .arg(&self.path)
            .args(["merge-base", "--is-ancestor", anc.as_str(), desc.as_str()])
            .output()?;
        match out.status.code() {
            Some(0) => Ok(true),
            Some(1) => Ok(false),
            _ => Err(RepoError::Git {
                args: vec!["merge-base".into(), "--is-ancestor".into()],
                stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
            }),
        }
    }

    /// Complete source of a function at a commit. Falls back to the rename
    /// chains discovered by previous history walks when the current name does
    /// not exist that far back.
    pub fn function_body_at(
        &self,
        commit: &CommitId,
        locator: &FunctionLocator,
    ) -> Result<FunctionBody, RepoError> {
        if let Some(body) = self.try_body(commit, locator)? {
            return Ok(body);
        }
        // Rename fallback: any recorded rename whose new side matches and
        // whose commit is strictly newer than `commit` on the ancestry path.
        let events: Vec<RenameEvent> = self.caches.lock().unwrap().renames.clone();
        let mut seen = vec![locator.clone()];
        let mut frontier = vec![locator.clone()];
        while let Some(cur) = frontier.pop() {
            for ev in events.iter().filter(|e| e.new == cur) {
                if seen.contains(&ev.old) {
                    continue;
                }
                if self.is_ancestor(commit, &ev.commit)? && ev.commit != *commit {
                    if let Some(body) = self.try_body(commit, &ev.old)? {
                        return Ok(body);
                    }
                    seen.push(ev.old.clone());
                    frontier.push(ev.old.clone());
                }
            }
        }
        Err(RepoError::FunctionNotFound(locator.clone()))
    }

    fn try_body(
        &self,
        commit: &CommitId,
        locator: &FunctionLocator,
    ) -> Result<Option<FunctionBody>, RepoError> {
        let Some(map) = self.source_map_at(commit, &locator.filename)? else {
            return Ok(None);
        };
        let Some(span) = map.find_function(&locator.functionname) else {
            return Ok(None);
        };
        let content = self
            .file_at(commit, &locator.filename)?
            .expect("content exists when map exists");
        let text: Vec<&str> = content
            .lines()
            .skip(span.start_line as usize - 1)
            .take((span.end_line - span.start_line + 1) as usize)
            .collect();
        Ok(Some(FunctionBody {
            locator: locator.clone(),
            start_line: span.start_line,
            text: text.join("\n"),
        }))
    }

    /// Every ancestor commit of `start` whose diff touches the function body,
    /// following file and function renames; newest first. Pure file renames
    /// are recorded in the chain but excluded from `commits`.
    pub fn function_history(
        &self,
        start: &CommitId,
        locator: &FunctionLocator,
    ) -> Result<FunctionHistory, RepoError> {
        let ancestors = self.ancestors_sorted(start)?;
        let mut current = locator.clone();
        let mut commits = Vec::new();
        let mut rename_chain = Vec::new();
        let mut ever_seen = self.try_body(start, locator)?.is_some();

        'walk: for (cid, _time) in ancestors.iter() {
            let commit = self.commit(cid)?;
            if commit.is_merge() && commit.diff.files.is_empty() {
                continue;
            }
            let Some(fd) = commit
                .diff
                .files
                .iter()
                .find(|f| f.new_path == current.filename)
            else {
                continue;
            };

            let file_renamed = fd.is_rename();
            let old_file = fd.old_path.clone();

            // Function presence on both sides decides creation vs rename.
            let new_map = self.source_map_at(cid, &fd.new_path)?;
            let exists_now = new_map
                .as_ref()
                .map(|m| m.find_function(&current.functionname).is_some())
                .unwrap_or(false);
            let old_map = match commit.first_parent() {
                Some(p) if fd.kind != FileChangeKind::Added => {
                    self.source_map_at(p, &old_file)?
                }
                _ => None,
            };
            let existed_before = old_map
                .as_ref()
                .map(|m| m.find_function(&current.functionname).is_some())
                .unwrap_or(false);

            let mut tracked_old_name = current.functionname.clone();
            if exists_now && !existed_before {
                // Created here, or renamed from a similar function removed here.
                if let (Some(old_map), Some(new_map)) = (&old_map, &new_map) {
                    if let Some(prev_name) = find_rename_source(
                        self,
                        cid,
                        commit.first_parent(),
                        &old_file,
                        &fd.new_path,
                        old_map,
                        new_map,
                        &current.functionname,
                    )? {
                        let old_loc = FunctionLocator::new(&old_file, &prev_name);
                        let event = RenameEvent {
                            commit: cid.clone(),
                            old: old_loc.clone(),
                            new: FunctionLocator::new(&fd.new_path, &current.functionname),
                        };
                        rename_chain.push(event.clone());
                        self.caches.lock().unwrap().renames.push(event);
                        tracked_old_name = prev_name;
                        ever_seen = true;
                        // The signature line changed, which counts as a body
                        // change; the rename commit is always included.
                        commits.push(cid.clone());
                        current = old_loc;
                        continue;
                    }
                }
                // True creation point: include and stop walking.
                ever_seen = true;
                commits.push(cid.clone());
                break 'walk;
            }

            let body_changed = fd.hunks.iter().any(|h| {
                h.lines.iter().any(|l| match l.kind {
                    LineKind::Added => l.functionname == current.functionname,
                    LineKind::Deleted => l.functionname == tracked_old_name,
                    LineKind::Context => false,
                })
            });

            if body_changed {
                ever_seen = true;
                commits.push(cid.clone());
            }

            if file_renamed {
                let event = RenameEvent {
                    commit: cid.clone(),
                    old: FunctionLocator::new(&old_file, &current.functionname),
                    new: current.clone(),
                };
                rename_chain.push(event.clone());
                self.caches.lock().unwrap().renames.push(event);
                current = FunctionLocator::new(&old_file, &current.functionname);
            }
        }

        if !ever_seen && commits.is_empty() {
            return Err(RepoError::FunctionNotFound(locator.clone()));
        }
        Ok(FunctionHistory {
            locator: locator.clone(),
            commits,
            rename_chain,
        })
    }

    /// Ancestor commits touching `filename`, following renames, newest first.
    /// Rename-only commits are included (they touch the file).
    pub fn file_history(
        &self,
        start: &CommitId,
        filename: &str,
    ) -> Result<Vec<CommitId>, RepoError> {
        let ancestors = self.ancestors_sorted(start)?;
        let mut current = filename.to_string();
        let mut out = Vec::new();
        let mut ever_seen = self.file_at(start, filename)?.is_some();

        for (cid, _time) in ancestors.iter() {
            let commit = self.commit(cid)?;
            if commit.is_merge() && commit.diff.files.is_empty() {
                continue;
            }
            let Some(fd) = commit.diff.files.iter().find(|f| {
                f.new_path == current
                    || (f.kind == FileChangeKind::Deleted && f.old_path == current)
            }) else {
                continue;
            };
            ever_seen = true;
            out.push(cid.clone());
            if fd.is_rename() {
                current = fd.old_path.clone();
            }
            if fd.kind == FileChangeKind::Added {
                break;
            }
        }
        if out.is_empty() && !ever_seen {
            return Err(RepoError::FileNotFound(filename.to_string()));
        }
        Ok(out)
    }
}

/// Look for a deleted function whose body matches the newly-appeared one.
/// Returns the previous name when the overlap is convincing.
#[allow(clippy::too_many_arguments)]
fn find_rename_source(
    repo: &Repo,
    commit: &CommitId,
    parent: Option<&CommitId>,
    old_file: &str,
    new_file: &str,
    old_map: &SourceMap,
    new_map: &SourceMap,
    new_name: &str,
) -> Result<Option<String>, RepoError> {
    let Some(parent) = parent else {
        return Ok(None);
    };
    let removed: Vec<String> = old_map
        .functions
        .iter()
        .filter(|f| new_map.find_function(&f.name).is_none())
        .map(|f| f.name.clone())
        .collect();
    if removed.is_empty() {
        return Ok(None);
    }
    let new_body = repo
        .try_body(commit, &FunctionLocator::new(new_file, new_name))?
        .map(|b| body_line_set(&b.text, new_name))
        .unwrap_or_default();
    if new_body.is_empty() {
        return Ok(None);
    }
    let mut best: Option<(String, f64)> = None;
    for name in removed {
        let Some(old_body) = repo.try_body(parent, &FunctionLocator::new(old_file, &name))? else {
            continue;
        };
        let old_set = body_line_set(&old_body.text, &name);
        if old_set.is_empty() {
            continue;
        }
        let common = old_set.iter().filter(|l| new_body.contains(*l)).count();
        let score = common as f64 / old_set.len().max(new_body.len()) as f64;
        if score >= 0.5 {
            let better = match &best {
                Some((bn, bs)) => score > *bs || (score == *bs && name < *bn),
                None => true,
            };
            if better {
                best = Some((name, score));
            }
        }
    }
    Ok(best.map(|(n, _)| n))
}

/// Normalized non-signature lines of a body, used for rename similarity.
fn body_line_set(text: &str, name: &str) -> BTreeSet<String> {
    text.lines()
        .skip(1)
        .map(normalize_ws)
        .filter(|norm| !norm.is_empty() && !norm.contains(name))
        .collect()
}
