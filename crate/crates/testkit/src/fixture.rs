//! Deterministic on-disk git repositories for tests. Commit timestamps tick
//! by a fixed stride so (author_time, hash) ordering is reproducible.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use bisectr_core::CommitId;
use tempfile::TempDir;

use crate::sha1::git_object_id;

const EPOCH_BASE: i64 = 1_600_000_000;
const TICK: i64 = 100;

/// A scratch git repository rooted in a tempdir.
pub struct FixtureRepo {
    dir: TempDir,
    next_tick: i64,
}

impl FixtureRepo {
    pub fn new() -> FixtureRepo {
        let dir = TempDir::new().expect("create tempdir");
        let repo = FixtureRepo { dir, next_tick: 0 };
        repo.git(&["init", "-q", "-b", "main"]);
        repo.git(&["config", "user.name", "fixture"]);
        repo.git(&["config", "user.email", "fixture@example.invalid"]);
        repo.git(&["config", "commit.gpgsign", "false"]);
        repo
    }

    pub fn path(&self) -> &Path {
        self.dir.path()
    }

    fn timestamp(&mut self) -> i64 {
        let t = EPOCH_BASE + self.next_tick * TICK;
        self.next_tick += 1;
        t
    }

    pub fn git(&self, args: &[&str]) -> String {
        let out = Command::new("git")
            .arg("-C")
            .arg(self.dir.path())
            .args(args)
            .env("GIT_CONFIG_GLOBAL", "/dev/null")
            .env("GIT_CONFIG_SYSTEM", "/dev/null")
            .output()
            .expect("run git");
        assert!(
            out.status.success(),
            "git {:?} failed: {}",
            args,
            String::from_utf8_lossy(&out.stderr)
        );
        String::from_utf8_lossy(&out.stdout).into_owned()
    }

    fn git_at(&self, time: i64, args: &[&str]) -> String {
        let date = format!("{time} +0000");
        let out = Command::new("git")
            .arg("-C")
            .arg(self.dir.path())
            .args(args)
            .env("GIT_CONFIG_GLOBAL", "/dev/null")
            .env("GIT_CONFIG_SYSTEM", "/dev/null")
            .env("GIT_AUTHOR_DATE", &date)
            .env("GIT_COMMITTER_DATE", &date)
            .env("GIT_AUTHOR_NAME", "fixture")
            .env("GIT_AUTHOR_EMAIL", "fixture@example.invalid")
            .env("GIT_COMMITTER_NAME", "fixture")
            .env("GIT_COMMITTER_EMAIL", "fixture@example.invalid")
            .output()
            .expect("run git");
        assert!(
            out.status.success(),
            "git {:?} failed: {}",
            args,
            String::from_utf8_lossy(&out.stderr)
        );
        String::from_utf8_lossy(&out.stdout).into_owned()
    }

    pub fn write(&self, rel: &str, content: &str) {
        let path: PathBuf = self.dir.path().join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).expect("mkdir");
        }
        fs::write(path, content).expect("write file");
    }

    pub fn remove(&self, rel: &str) {
        fs::remove_file(self.dir.path().join(rel)).expect("remove file");
    }

    /// Stage everything and commit with the next deterministic timestamp.
    pub fn commit(&mut self, message: &str) -> CommitId {
        let t = self.timestamp();
        self.git(&["add", "-A"]);
        self.git_at(t, &["commit", "-q", "--allow-empty", "-m", message]);
        self.head()
    }

    /// Write one file and commit it.
    pub fn commit_file(&mut self, rel: &str, content: &str, message: &str) -> CommitId {
        self.write(rel, content);
        self.commit(message)
    }

    /// `git mv` plus commit; content untouched unless `new_content` is given.
    pub fn rename_file(
        &mut self,
        old: &str,
        new: &str,
        new_content: Option<&str>,
        message: &str,
    ) -> CommitId {
        if let Some(parent) = Path::new(new).parent() {
            if !parent.as_os_str().is_empty() {
                fs::create_dir_all(self.dir.path().join(parent)).expect("mkdir");
            }
        }
        self.git(&["mv", old, new]);
        if let Some(c) = new_content {
            self.write(new, c);
        }
        self.commit(message)
    }

    pub fn branch(&self, name: &str) {
        self.git(&["checkout", "-q", "-b", name]);
    }

    pub fn checkout(&self, name: &str) {
        self.git(&["checkout", "-q", name]);
    }

    /// Merge `branch` into the current branch with `--no-ff`.
    pub fn merge(&mut self, branch: &str, message: &str) -> CommitId {
        let t = self.timestamp();
        self.git_at(t, &["merge", "-q", "--no-ff", "--no-edit", "-m", message, branch]);
        self.head()
    }

    pub fn head(&self) -> CommitId {
        let hash = self.git(&["rev-parse", "HEAD"]).trim().to_string();
        CommitId::new(hash).expect("valid head hash")
    }

    pub fn rev_parse(&self, spec: &str) -> CommitId {
        let hash = self.git(&["rev-parse", spec]).trim().to_string();
        CommitId::new(hash).expect("valid hash")
    }

    /// Create a dangling commit object whose hash shares `prefix_len` leading
    /// hex chars with `target`. Message salting is brute-forced in process,
    /// then the single matching object is written through git.
    pub fn plant_prefix_collision(&mut self, target: &CommitId, prefix_len: usize) -> CommitId {
        let prefix = &target.as_str()[..prefix_len];
        let tree = self.git(&["rev-parse", "HEAD^{tree}"]).trim().to_string();
        let parent = self.head();
        let t = self.timestamp();
        let author = format!("fixture <fixture@example.invalid> {t} +0000");
        for salt in 0u64.. {
            let message = format!("salted filler {salt}\n");
            let body = format!(
                "tree {tree}\nparent {parent}\nauthor {author}\ncommitter {author}\n\n{message}"
            );
            let id = git_object_id("commit", body.as_bytes());
            if id.starts_with(prefix) {
                let out = self.git_at(
                    t,
                    &[
                        "commit-tree",
                        &tree,
                        "-p",
                        parent.as_str(),
                        "-m",
                        message.trim_end(),
                    ],
                );
                let created = CommitId::new(out.trim().to_string()).expect("valid hash");
                assert_eq!(created.as_str(), id, "predicted object id must match git's");
                return created;
            }
        }
        unreachable!()
    }
}

impl Default for FixtureRepo {
    fn default() -> Self {
        FixtureRepo::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn commits_are_deterministically_ordered() {
        let mut repo = FixtureRepo::new();
        let a = repo.commit_file("f.c", "int x;\n", "first");
        let b = repo.commit_file("f.c", "int x;\nint y;\n", "second");
        assert_ne!(a, b);
        assert_eq!(repo.head(), b);
    }

    #[test]
    fn prefix_collision_resolves_ambiguously() {
        let mut repo = FixtureRepo::new();
        let a = repo.commit_file("f.c", "int x;\n", "first");
        let b = repo.plant_prefix_collision(&a, 4);
        assert_eq!(&a.as_str()[..4], &b.as_str()[..4]);
        assert_ne!(a, b);
    }
}

/// Commit labels for [`history_fixture`]: 12 commits over two files with one
/// pure file rename, one function rename, and one merge.
pub struct HistoryFixture {
    pub a_create_alpha: CommitId,
    pub b_edit_foo: CommitId,
    pub c_create_beta: CommitId,
    pub d_edit_bar: CommitId,
    pub e_rename_alpha: CommitId,
    pub f_edit_foo: CommitId,
    pub g_side_edit_baz: CommitId,
    pub h_edit_bar: CommitId,
    pub i_merge: CommitId,
    pub j_rename_foo: CommitId,
    pub k_edit_foo_ex: CommitId,
    pub m_two_hunks: CommitId,
}

pub const ALPHA_V1: &str = "\
#include <stub.h>

int foo(int a) {
    int r = a + 1;
    r = r * 2;
    log_value(r);
    return r;
}

void bar(void) {
    reset_state();
}
";

pub const BETA_V1: &str = "\
struct cfg {
    int enabled;
    int level;
};

static int limit = 10;

void baz(void) {
    init();
    run_loop();
    finish();
}
";

/// Build the bundled history fixture. Timestamps tick deterministically in
/// commit order, so (author_time, hash) descending equals reverse commit
/// order.
pub fn history_fixture() -> (FixtureRepo, HistoryFixture) {
    let mut repo = FixtureRepo::new();

    let a_create_alpha = repo.commit_file("alpha.c", ALPHA_V1, "add alpha with foo and bar");

    let b_edit_foo = repo.commit_file(
        "alpha.c",
        &ALPHA_V1.replace("r = r * 2;", "r = r * 3;"),
        "foo: triple instead of double",
    );

    let c_create_beta = repo.commit_file("beta.c", BETA_V1, "add beta with cfg and baz");

    let alpha_v2 = ALPHA_V1.replace("r = r * 2;", "r = r * 3;");
    let alpha_v3 = alpha_v2.replace("    reset_state();\n", "    reset_state();\n    clear_queue();\n");
    let d_edit_bar = repo.commit_file("alpha.c", &alpha_v3, "bar: clear the queue too");

    let e_rename_alpha = repo.rename_file("alpha.c", "core/alpha.c", None, "move alpha into core/");

    let alpha_v4 = alpha_v3.replace("    log_value(r);\n", "    log_value(r);\n    audit(r);\n");
    let f_edit_foo = repo.commit_file("core/alpha.c", &alpha_v4, "foo: audit the result");

    repo.branch("side");
    let beta_v2 = BETA_V1.replace("run_loop();", "run_loop_fast();");
    let g_side_edit_baz = repo.commit_file("beta.c", &beta_v2, "baz: use the fast loop");
    repo.checkout("main");

    let alpha_v5 = alpha_v4.replace("    clear_queue();\n", "    clear_queue();\n    drop_refs();\n");
    let h_edit_bar = repo.commit_file("core/alpha.c", &alpha_v5, "bar: drop refs on reset");

    let i_merge = repo.merge("side", "merge side loop work");

    let alpha_v6 = alpha_v5.replace("int foo(int a) {", "int foo_ex(int a) {");
    let j_rename_foo = repo.commit_file("core/alpha.c", &alpha_v6, "rename foo to foo_ex");

    let alpha_v7 = alpha_v6.replace("log_value(r);", "log_value2(r);");
    let k_edit_foo_ex = repo.commit_file("core/alpha.c", &alpha_v7, "foo_ex: new logger");

    let beta_v3 = beta_v2
        .replace("    int level;\n", "    int level;\n    int verbose;\n")
        .replace("    finish();\n", "    step();\n    finish();\n");
    let m_two_hunks = repo.commit_file("beta.c", &beta_v3, "cfg: verbose flag; baz: extra step");

    (
        repo,
        HistoryFixture {
            a_create_alpha,
            b_edit_foo,
            c_create_beta,
            d_edit_bar,
            e_rename_alpha,
            f_edit_foo,
            g_side_edit_baz,
            h_edit_bar,
            i_merge,
            j_rename_foo,
            k_edit_foo_ex,
            m_two_hunks,
        },
    )
}

/// Commit labels for [`case_study_fixture`]: generator sizes 3/2/35 with the
/// scripted true BIC living only in the message-keyword set.
pub struct CaseStudyFixture {
    pub a_create_frob: CommitId,
    pub b_edit_frob: CommitId,
    pub k_create_gate: CommitId,
    pub helper_edits: Vec<CommitId>,
    pub fix: CommitId,
    /// The scripted true BIC: the 20th helper edit.
    pub true_bic: CommitId,
}

pub const FROB_V1: &str = "\
int frob_state(int n) {
    int acc = n;
    acc += base_offset;
    stale_flush();
    audit_acc(acc);
    return acc;
}
";

pub const GATE_V1: &str = "\
struct mux_state {
    int dead;
};

void helper_requeue(void) {
    queue_work();
    queue_delay = 0;
}

void gate_entry(void) {
    open_gate();
}
";

/// Build the case-study shaped repository: the fix patches `frob_state` and
/// `gate_entry`, while 35 earlier commits rework `helper_requeue`, which the
/// fix only names in its message.
pub fn case_study_fixture() -> (FixtureRepo, CaseStudyFixture) {
    let mut repo = FixtureRepo::new();

    let a_create_frob = repo.commit_file("a.c", FROB_V1, "add frob_state accumulator");

    let frob_v2 = FROB_V1.replace("acc += base_offset;", "acc += base_offset * 2;");
    let b_edit_frob = repo.commit_file("a.c", &frob_v2, "frob_state: double the offset");

    let k_create_gate = repo.commit_file("b.c", GATE_V1, "add mux gate and requeue helper");

    let mut helper_edits = Vec::with_capacity(35);
    let mut gate = GATE_V1.to_string();
    for i in 1..=35 {
        let prev = format!("queue_delay = {};", i - 1);
        let next = format!("queue_delay = {};", i);
        gate = gate.replace(&prev, &next);
        let id = repo.commit_file("b.c", &gate, &format!("helper_requeue: retune delay to {i}"));
        helper_edits.push(id);
    }

    let frob_v3 = frob_v2.replace("    stale_flush();\n", "    guard_state();\n");
    repo.write("a.c", &frob_v3);
    let gate_fixed = gate.replace("open_gate();", "open_gate_checked();");
    repo.write("b.c", &gate_fixed);
    let fix = repo.commit(
        "Prevent requeue after teardown\n\nThe helper_requeue() path re-arms the work item \
         after the mux is marked dead, so the gate must check state before opening.",
    );

    let true_bic = helper_edits[19].clone();
    (
        repo,
        CaseStudyFixture {
            a_create_frob,
            b_edit_frob,
            k_create_gate,
            helper_edits,
            fix,
            true_bic,
        },
    )
}
