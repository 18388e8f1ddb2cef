//! Repository access against deterministic fixtures: resolution, histories
//! with renames, function bodies, and agreement with the replay oracle.

use bisectr_core::repo::{Repo, RepoError};
use bisectr_core::{CommitId, FunctionLocator};
use bisectr_testkit::fixture::{history_fixture, FixtureRepo};
use bisectr_testkit::oracle::{
    replay_file_history, replay_function_history, RenameScript, ScriptedRename,
};

#[test]
fn resolve_head_has_two_hunks() {
    let (fx, ids) = history_fixture();
    let repo = Repo::open(fx.path()).unwrap();
    let head = repo.resolve_commit("HEAD").unwrap();
    assert_eq!(head.id, ids.m_two_hunks);
    let hunks: Vec<_> = head.diff.hunks().collect();
    assert_eq!(hunks.len(), 2);
}

#[test]
fn resolve_unknown_ref() {
    let (fx, _) = history_fixture();
    let repo = Repo::open(fx.path()).unwrap();
    match repo.resolve_commit("zzzzzzz") {
        Err(RepoError::UnknownRef(r)) => assert_eq!(r, "zzzzzzz"),
        other => panic!("expected UnknownRef, got {other:?}"),
    }
}

#[test]
fn resolve_ambiguous_prefix() {
    let mut fx = FixtureRepo::new();
    let a = fx.commit_file("f.c", "int x;\n", "first");
    fx.commit_file("f.c", "int x;\nint y;\n", "second");
    let twin = fx.plant_prefix_collision(&a, 4);
    let prefix = &a.as_str()[..4];
    assert_eq!(prefix, &twin.as_str()[..4]);

    let repo = Repo::open(fx.path()).unwrap();
    match repo.resolve_commit(prefix) {
        Err(RepoError::AmbiguousRef(r)) => assert_eq!(r, prefix),
        other => panic!("expected AmbiguousRef, got {other:?}"),
    }
    // A longer unique prefix still resolves.
    let full = repo.resolve_commit(a.as_str()).unwrap();
    assert_eq!(full.id, a);
}

#[test]
fn open_missing_repo() {
    match Repo::open("/nonexistent/path/to/repo") {
        Err(RepoError::RepoNotFound(_)) => {}
        other => panic!("expected RepoNotFound, got {other:?}"),
    }
}

#[test]
fn function_history_follows_renames() {
    let (fx, ids) = history_fixture();
    let repo = Repo::open(fx.path()).unwrap();
    let loc = FunctionLocator::new("core/alpha.c", "foo_ex");
    let hist = repo.function_history(&ids.m_two_hunks, &loc).unwrap();

    // Pure file rename (E) excluded; function rename (J) included because the
    // signature line changed.
    assert_eq!(
        hist.commits,
        vec![
            ids.k_edit_foo_ex.clone(),
            ids.j_rename_foo.clone(),
            ids.f_edit_foo.clone(),
            ids.b_edit_foo.clone(),
            ids.a_create_alpha.clone(),
        ]
    );
    let chain_commits: Vec<_> = hist.rename_chain.iter().map(|e| e.commit.clone()).collect();
    assert!(chain_commits.contains(&ids.j_rename_foo));
    assert!(chain_commits.contains(&ids.e_rename_alpha));
    let j = hist
        .rename_chain
        .iter()
        .find(|e| e.commit == ids.j_rename_foo)
        .unwrap();
    assert_eq!(j.old.functionname, "foo");
    assert_eq!(j.new.functionname, "foo_ex");
}

#[test]
fn function_history_single_writer() {
    let (fx, ids) = history_fixture();
    let repo = Repo::open(fx.path()).unwrap();
    // baz is edited on the side branch; the merge carries it to main, so the
    // merge's first-parent diff also touches it.
    let hist = repo
        .function_history(&ids.m_two_hunks, &FunctionLocator::new("beta.c", "baz"))
        .unwrap();
    assert_eq!(
        hist.commits,
        vec![
            ids.m_two_hunks.clone(),
            ids.i_merge.clone(),
            ids.g_side_edit_baz.clone(),
            ids.c_create_beta.clone(),
        ]
    );

    // A function modified only at creation.
    let mut fx2 = FixtureRepo::new();
    let only = fx2.commit_file("solo.c", "void once(void) {\n    run();\n}\n", "add once");
    fx2.commit_file("other.c", "int unrelated;\n", "noise");
    let repo2 = Repo::open(fx2.path()).unwrap();
    let hist2 = repo2
        .function_history(&fx2.head(), &FunctionLocator::new("solo.c", "once"))
        .unwrap();
    assert_eq!(hist2.commits, vec![only]);
}

#[test]
fn function_history_absent_locator() {
    let (fx, ids) = history_fixture();
    let repo = Repo::open(fx.path()).unwrap();
    let err = repo.function_history(
        &ids.m_two_hunks,
        &FunctionLocator::new("core/alpha.c", "never_existed"),
    );
    assert!(matches!(err, Err(RepoError::FunctionNotFound(_))));
}

#[test]
fn file_history_includes_renames_and_stops_at_creation() {
    let (fx, ids) = history_fixture();
    let repo = Repo::open(fx.path()).unwrap();
    let hist = repo.file_history(&ids.m_two_hunks, "core/alpha.c").unwrap();
    assert_eq!(
        hist,
        vec![
            ids.k_edit_foo_ex.clone(),
            ids.j_rename_foo.clone(),
            ids.h_edit_bar.clone(),
            ids.f_edit_foo.clone(),
            ids.e_rename_alpha.clone(),
            ids.d_edit_bar.clone(),
            ids.b_edit_foo.clone(),
            ids.a_create_alpha.clone(),
        ]
    );

    // Root-created, never edited.
    let mut fx2 = FixtureRepo::new();
    let root = fx2.commit_file("keep.c", "int keep;\n", "root");
    fx2.commit_file("other.c", "int other;\n", "noise");
    let repo2 = Repo::open(fx2.path()).unwrap();
    assert_eq!(repo2.file_history(&fx2.head(), "keep.c").unwrap(), vec![root]);

    assert!(matches!(
        repo.file_history(&ids.m_two_hunks, "ghost.c"),
        Err(RepoError::FileNotFound(_))
    ));
}

#[test]
fn function_body_at_shapes() {
    let (fx, ids) = history_fixture();
    let repo = Repo::open(fx.path()).unwrap();
    let body = repo
        .function_body_at(&ids.a_create_alpha, &FunctionLocator::new("alpha.c", "foo"))
        .unwrap();
    assert_eq!(body.line_count(), 6);
    assert!(body.text.starts_with("int foo(int a) {"));
    assert_eq!(body.start_line, 3);

    assert!(matches!(
        repo.function_body_at(&ids.a_create_alpha, &FunctionLocator::new("alpha.c", "nope")),
        Err(RepoError::FunctionNotFound(_))
    ));
}

#[test]
fn function_body_resolves_through_rename_chain() {
    let (fx, ids) = history_fixture();
    let repo = Repo::open(fx.path()).unwrap();
    // Walking the history first populates the rename cache.
    let loc = FunctionLocator::new("core/alpha.c", "foo_ex");
    repo.function_history(&ids.m_two_hunks, &loc).unwrap();
    // foo_ex did not exist at B under that name or path; the chain leads to
    // (alpha.c, foo).
    let body = repo.function_body_at(&ids.b_edit_foo, &loc).unwrap();
    assert!(body.text.contains("r = r * 3;"));
    assert_eq!(body.locator.functionname, "foo");
}

#[test]
fn determinism_identical_calls() {
    let (fx, ids) = history_fixture();
    let repo = Repo::open(fx.path()).unwrap();
    let loc = FunctionLocator::new("core/alpha.c", "foo_ex");
    let h1 = repo.function_history(&ids.m_two_hunks, &loc).unwrap();
    let h2 = repo.function_history(&ids.m_two_hunks, &loc).unwrap();
    assert_eq!(h1.commits, h2.commits);
    assert_eq!(h1.rename_chain, h2.rename_chain);

    let repo_again = Repo::open(fx.path()).unwrap();
    let h3 = repo_again.function_history(&ids.m_two_hunks, &loc).unwrap();
    assert_eq!(h1.commits, h3.commits);
}

#[test]
fn histories_match_replay_oracle() {
    let (fx, ids) = history_fixture();
    let repo = Repo::open(fx.path()).unwrap();

    let script = vec![
        RenameScript {
            commit: ids.j_rename_foo.clone(),
            rename: ScriptedRename::Function {
                old: "foo".into(),
                new: "foo_ex".into(),
            },
        },
        RenameScript {
            commit: ids.e_rename_alpha.clone(),
            rename: ScriptedRename::File {
                old: "alpha.c".into(),
                new: "core/alpha.c".into(),
            },
        },
    ];

    for (file, func) in [
        ("core/alpha.c", "foo_ex"),
        ("core/alpha.c", "bar"),
        ("beta.c", "baz"),
    ] {
        let got = repo
            .function_history(&ids.m_two_hunks, &FunctionLocator::new(file, func))
            .unwrap()
            .commits;
        let want = replay_function_history(fx.path(), &ids.m_two_hunks, file, func, &script);
        assert_eq!(got, want, "function history mismatch for {file}:{func}");
    }

    for file in ["core/alpha.c", "beta.c"] {
        let got = repo.file_history(&ids.m_two_hunks, file).unwrap();
        let want = replay_file_history(fx.path(), &ids.m_two_hunks, file);
        assert_eq!(got, want, "file history mismatch for {file}");
    }
}

#[test]
fn ordering_strictly_descends() {
    let (fx, ids) = history_fixture();
    let repo = Repo::open(fx.path()).unwrap();
    let hist = repo
        .file_history(&ids.m_two_hunks, "core/alpha.c")
        .unwrap();
    let times: Vec<(i64, CommitId)> = hist
        .iter()
        .map(|c| (repo.commit(c).unwrap().author_time, c.clone()))
        .collect();
    for w in times.windows(2) {
        assert!(w[0] > w[1], "history must strictly descend: {w:?}");
    }
}
