//! End-to-end pipeline behavior over a scripted backend: stage flow, vote
//! tallies, ablation modes, failure policies, and determinism.

use std::collections::BTreeMap;

use bisectr_core::llm::{Backend, Gateway, ScriptRule, ScriptedBackend, TranscriptStore};
use bisectr_core::pipeline::{run, PipelineConfig, PipelineMode};
use bisectr_core::repo::Repo;
use bisectr_core::types::CommitId;
use bisectr_testkit::FixtureRepo;

const F_V1: &str = "\
int alpha(int n) {
    int acc = n;
    acc += base;
    stale_flush();
    audit(acc);
    return acc;
}

void beta(void) {
    run_beta();
}

void gamma(void) {
    spin();
}
";

struct PipeFixture {
    repo: FixtureRepo,
    p1: CommitId,
    p2: CommitId,
    p3: CommitId,
    fix: CommitId,
}

/// C1 = {p2, p1} (alpha history); C2 = {p2} via a scripted critical line;
/// C3 = {p3} via the gamma() message mention.
fn pipe_fixture() -> PipeFixture {
    let mut repo = FixtureRepo::new();
    let p1 = repo.commit_file("f.c", F_V1, "add f.c");
    let v2 = F_V1.replace("    acc += base;\n", "    acc += base * 2;\n");
    let p2 = repo.commit_file("f.c", &v2, "alpha: double the base");
    let v3 = v2.replace("    spin();\n", "    spin();\n    spin_more();\n");
    let p3 = repo.commit_file("f.c", &v3, "gamma: spin more");
    let v4 = v3.replace("    stale_flush();\n", "    guarded_flush();\n");
    repo.write("f.c", &v4);
    let fix = repo.commit("Fix stale flush\n\nThe gamma() path can spin while alpha flushes stale state.");
    PipeFixture { repo, p1, p2, p3, fix }
}

fn rule(match_all: &[&str], response: &str, max_uses: Option<u32>) -> ScriptRule {
    ScriptRule {
        match_all: match_all.iter().map(|s| s.to_string()).collect(),
        response: response.to_string(),
        prompt_tokens: Some(100),
        completion_tokens: Some(10),
        max_uses,
    }
}

/// Scripted flow: pre-filter keeps p2 (C1, C2) and p3 (C3); finalize splits
/// 4:3 between p2 and p3.
fn standard_rules(fx: &PipeFixture) -> Vec<ScriptRule> {
    let p1 = fx.p1.as_str();
    let p2 = fx.p2.as_str();
    let p3 = fx.p3.as_str();
    vec![
        // Critical-line identification (prompt 1, deleted-lines class).
        rule(
            &["pick the"],
            r#"[("f.c", "alpha", 3, "acc += base * 2;")]"#,
            None,
        ),
        // Pre-filter verdicts by candidate hash.
        rule(&["whether the given commit", p1], "False", None),
        rule(
            &["whether the given commit", p2],
            "True. This commit rescaled the accumulator without a guard.",
            None,
        ),
        rule(
            &["whether the given commit", p3],
            "True. The spin loop added here races with the flush.",
            None,
        ),
        // Finalize: 4 rounds pick p2, then 3 rounds pick p3.
        rule(
            &["which commit among the list"],
            &format!("The accumulator rescale is the trigger: {p2}"),
            Some(4),
        ),
        rule(
            &["which commit among the list"],
            &format!("On reflection the spin loop did it: {p3}"),
            Some(3),
        ),
    ]
}

fn gateway(rules: Vec<ScriptRule>) -> Gateway {
    Gateway::new(Backend::Scripted(ScriptedBackend::new(rules)))
}

fn full_config() -> PipelineConfig {
    PipelineConfig::default()
}

#[test]
fn full_run_majority_vote() {
    let fx = pipe_fixture();
    let repo = Repo::open(fx.repo.path()).unwrap();
    let gw = gateway(standard_rules(&fx));
    let result = run(&repo, fx.fix.as_str(), &full_config(), &gw, None).unwrap();

    assert_eq!(result.patch_class.as_deref(), Some("DELETED_LINES"));
    assert_eq!(result.final_bic, Some(fx.p2.clone()), "4:3 majority");
    assert_eq!(result.votes_tally[&fx.p2], 4);
    assert_eq!(result.votes_tally[&fx.p3], 3);
    assert_eq!(result.completed_rounds, 7);
    assert_eq!(result.none_votes, 0);

    // Per-generator picks: C1 and C2 agree on p2; C3 picked p3.
    assert_eq!(result.per_generator_pick["C1"], Some(fx.p2.clone()));
    assert_eq!(result.per_generator_pick["C2"], Some(fx.p2.clone()));
    assert_eq!(result.per_generator_pick["C3"], Some(fx.p3.clone()));

    // Flow counts: C1 2->1->1, C2 1->1->1, C3 1->1->1.
    let c1 = &result.flow.per_generator["C1"];
    assert_eq!(
        (c1.counts.generated, c1.counts.after_pre_filter, c1.counts.after_post_filter),
        (2, 1, 1)
    );
    assert_eq!(c1.candidates, vec![fx.p2.clone(), fx.p1.clone()]);
    let c2 = &result.flow.per_generator["C2"];
    assert_eq!(c2.counts.generated, 1);
    let c3 = &result.flow.per_generator["C3"];
    assert_eq!(c3.candidates, vec![fx.p3.clone()]);
    // The final pick came from C1/C2.
    assert_eq!(c1.counts.finalized, 1);
    assert_eq!(result.flow.per_generator["C3"].counts.finalized, 0);

    // Critical lines surfaced in the report.
    assert_eq!(result.critical_lines.len(), 1);
    assert_eq!(result.critical_lines[0].line_text, "acc += base * 2;");
    assert!(result.keywords.identifiers.contains("gamma"));
}

#[test]
fn no_early_stop_call_counts() {
    let fx = pipe_fixture();
    let repo = Repo::open(fx.repo.path()).unwrap();
    let gw = gateway(standard_rules(&fx));
    let result = run(&repo, fx.fix.as_str(), &full_config(), &gw, None).unwrap();

    let count = |label: &str| {
        result
            .tokens
            .per_call
            .iter()
            .filter(|c| c.label == label)
            .count()
    };
    // Exactly |C| prompt-4 calls per generator, no early termination.
    assert_eq!(count("pre_filter:C1"), 2);
    assert_eq!(count("pre_filter:C2"), 1);
    assert_eq!(count("pre_filter:C3"), 1);
    // Single survivors go straight through post-filtering without a call.
    assert_eq!(count("post_filter:C1"), 0);
    assert_eq!(count("post_filter:C2"), 0);
    assert_eq!(count("post_filter:C3"), 0);
    // Seven voting rounds.
    let finalize_calls = result
        .tokens
        .per_call
        .iter()
        .filter(|c| c.label.starts_with("finalize:round"))
        .count();
    assert_eq!(finalize_calls, 7);
}

#[test]
fn token_accounting_is_conserved() {
    let fx = pipe_fixture();
    let repo = Repo::open(fx.repo.path()).unwrap();
    let gw = gateway(standard_rules(&fx));
    let result = run(&repo, fx.fix.as_str(), &full_config(), &gw, None).unwrap();
    let sum: u64 = result
        .tokens
        .per_call
        .iter()
        .map(|c| c.prompt_tokens + c.completion_tokens)
        .sum();
    assert_eq!(result.tokens.total, sum);
    assert_eq!(
        result.tokens.total,
        result.tokens.prompt_total + result.tokens.completion_total
    );
}

#[test]
fn determinism_byte_identical_reports() {
    let fx = pipe_fixture();
    let repo = Repo::open(fx.repo.path()).unwrap();
    let r1 = run(&repo, fx.fix.as_str(), &full_config(), &gateway(standard_rules(&fx)), None)
        .unwrap();
    let r2 = run(&repo, fx.fix.as_str(), &full_config(), &gateway(standard_rules(&fx)), None)
        .unwrap();
    assert_eq!(r1.to_json(), r2.to_json());

    // A fresh repo handle changes nothing either.
    let repo2 = Repo::open(fx.repo.path()).unwrap();
    let r3 = run(&repo2, fx.fix.as_str(), &full_config(), &gateway(standard_rules(&fx)), None)
        .unwrap();
    assert_eq!(r1.to_json(), r3.to_json());
}

#[test]
fn separation_no_cross_generator_prompts_before_finalize() {
    let fx = pipe_fixture();
    let repo = Repo::open(fx.repo.path()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let store = TranscriptStore::load(dir.path().join("t.jsonl")).unwrap();
    let gw = Gateway::new(Backend::Scripted(ScriptedBackend::new(standard_rules(&fx))))
        .record_to(store);
    let result = run(&repo, fx.fix.as_str(), &full_config(), &gw, None).unwrap();

    let store = TranscriptStore::load(dir.path().join("t.jsonl")).unwrap();
    let exclusive: BTreeMap<&str, &CommitId> = BTreeMap::from([
        ("C1", &fx.p1), // p1 appears only in C1's candidate list
        ("C3", &fx.p3),
    ]);
    for call in &result.tokens.per_call {
        let Some(stage_gen) = call.label.strip_prefix("pre_filter:") else {
            continue;
        };
        let prompt = store.get(&call.cache_key).unwrap().prompt;
        for (other_gen, other_id) in &exclusive {
            if *other_gen != stage_gen {
                assert!(
                    !prompt.contains(other_id.as_str()),
                    "{} prompt leaked {} candidate {}",
                    call.label,
                    other_gen,
                    other_id
                );
            }
        }
    }
}

#[test]
fn keep_with_flag_on_unparseable_prefilter() {
    let fx = pipe_fixture();
    let repo = Repo::open(fx.repo.path()).unwrap();
    let mut rules = standard_rules(&fx);
    // Make p1's verdict permanently unparseable.
    rules[1] = rule(
        &["whether the given commit", fx.p1.as_str()],
        "mumble mumble",
        None,
    );
    // The kept candidate forces a post-filter comparison for C1; route it to
    // p2 so the finalize rules keep their 4:3 budget.
    rules.insert(
        4,
        rule(
            &["which commit among the list", fx.p1.as_str()],
            &format!("Between these, {} is the cause.", fx.p2.as_str()),
            Some(1),
        ),
    );
    let gw = gateway(rules);
    let result = run(&repo, fx.fix.as_str(), &full_config(), &gw, None).unwrap();
    let c1 = &result.flow.per_generator["C1"];
    // p1 is kept conservatively, so C1 now has two survivors.
    assert_eq!(c1.counts.after_pre_filter, 2);
    assert!(c1.survivors.contains(&fx.p1));
    assert!(result
        .flow
        .flags
        .iter()
        .any(|f| f.contains("kept") && f.contains(fx.p1.as_str())));
    // Retries happened: 3 calls for p1 (initial + 2 re-asks) + 1 for p2.
    let c1_calls = result
        .tokens
        .per_call
        .iter()
        .filter(|c| c.label == "pre_filter:C1")
        .count();
    assert_eq!(c1_calls, 4);
}

#[test]
fn post_filter_runs_comparative_on_multiple_survivors() {
    let fx = pipe_fixture();
    let repo = Repo::open(fx.repo.path()).unwrap();
    let mut rules = standard_rules(&fx);
    // Both C1 candidates survive pre-filtering.
    rules[1] = rule(
        &["whether the given commit", fx.p1.as_str()],
        "True. Suspicious initialization.",
        None,
    );
    // Post-filter C1 must pick between p1 and p2; route it to p2. This rule
    // must outrank the finalize rules, so insert before them.
    rules.insert(
        4,
        rule(
            &["which commit among the list", fx.p1.as_str()],
            &format!("Between these, {} is the cause.", fx.p2.as_str()),
            Some(1),
        ),
    );
    let gw = gateway(rules);
    let result = run(&repo, fx.fix.as_str(), &full_config(), &gw, None).unwrap();
    let c1 = &result.flow.per_generator["C1"];
    assert_eq!(c1.counts.after_pre_filter, 2);
    assert_eq!(c1.pick, Some(fx.p2.clone()));
    let post_calls = result
        .tokens
        .per_call
        .iter()
        .filter(|c| c.label == "post_filter:C1")
        .count();
    assert_eq!(post_calls, 1);
}

#[test]
fn all_false_yields_none() {
    let fx = pipe_fixture();
    let repo = Repo::open(fx.repo.path()).unwrap();
    let rules = vec![
        rule(&["pick the"], "[]", None),
        rule(
            &["data dependency with the added lines"],
            "[]",
            None,
        ),
        rule(&["whether the given commit"], "False", None),
    ];
    let gw = gateway(rules);
    let result = run(&repo, fx.fix.as_str(), &full_config(), &gw, None).unwrap();
    assert_eq!(result.final_bic, None);
    assert_eq!(result.completed_rounds, 0);
    assert!(result.votes_tally.is_empty());
    for flow in result.flow.per_generator.values() {
        assert_eq!(flow.counts.after_pre_filter, 0);
        assert_eq!(flow.pick, None);
    }
}

#[test]
fn single_distinct_pick_skips_finalize_calls() {
    let fx = pipe_fixture();
    let repo = Repo::open(fx.repo.path()).unwrap();
    // Only p2 survives anywhere; C3 candidate answers False.
    let rules = vec![
        rule(&["pick the"], r#"[("f.c", "alpha", 3, "acc += base * 2;")]"#, None),
        rule(&["whether the given commit", fx.p2.as_str()], "True. Clear cause.", None),
        rule(&["whether the given commit"], "False", None),
    ];
    let gw = gateway(rules);
    let result = run(&repo, fx.fix.as_str(), &full_config(), &gw, None).unwrap();
    assert_eq!(result.final_bic, Some(fx.p2.clone()));
    assert_eq!(result.completed_rounds, 1);
    assert_eq!(result.votes_tally[&fx.p2], 1);
    assert!(!result
        .tokens
        .per_call
        .iter()
        .any(|c| c.label.starts_with("finalize")));
}

#[test]
fn votes_one_is_a_single_round() {
    let fx = pipe_fixture();
    let repo = Repo::open(fx.repo.path()).unwrap();
    let mut config = full_config();
    config.votes = 1;
    let gw = gateway(standard_rules(&fx));
    let result = run(&repo, fx.fix.as_str(), &config, &gw, None).unwrap();
    assert_eq!(result.completed_rounds, 1);
    assert_eq!(result.final_bic, Some(fx.p2.clone()));
    let finalize_calls = result
        .tokens
        .per_call
        .iter()
        .filter(|c| c.label.starts_with("finalize"))
        .count();
    assert_eq!(finalize_calls, 1);
}

#[test]
fn baseline_early_stop_halts_on_first_true() {
    let fx = pipe_fixture();
    let repo = Repo::open(fx.repo.path()).unwrap();
    // FP-heavy transcript: the newest candidate (p2) answers True even though
    // the scripted "truth" is p1; the baseline stops at p2.
    let rules = vec![
        rule(
            &["whether the given commit", fx.p2.as_str()],
            "True. Looks related.",
            None,
        ),
        rule(&["whether the given commit"], "True. Also related.", None),
    ];
    let mut config = full_config();
    config.mode = PipelineMode::BaselineEarlyStop;
    let gw = gateway(rules);
    let result = run(&repo, fx.fix.as_str(), &config, &gw, None).unwrap();
    assert_eq!(result.final_bic, Some(fx.p2.clone()));
    // Strict prefix: only one prompt-4 call despite two candidates.
    let calls = result
        .tokens
        .per_call
        .iter()
        .filter(|c| c.label == "pre_filter:C1")
        .count();
    assert_eq!(calls, 1);
    assert_eq!(result.mode, "baseline_early_stop");
}

#[test]
fn baseline_one_shot_single_comparative_call() {
    let fx = pipe_fixture();
    let repo = Repo::open(fx.repo.path()).unwrap();
    let rules = vec![rule(
        &["which commit among the list"],
        &format!("It is {}", fx.p1.as_str()),
        None,
    )];
    let mut config = full_config();
    config.mode = PipelineMode::BaselineOneShot;
    let gw = gateway(rules);
    let result = run(&repo, fx.fix.as_str(), &config, &gw, None).unwrap();
    assert_eq!(result.final_bic, Some(fx.p1.clone()));
    assert_eq!(result.tokens.per_call.len(), 1);
    assert_eq!(result.tokens.per_call[0].label, "baseline_one_shot");
}

#[test]
fn truth_tracking_marks_stages() {
    let fx = pipe_fixture();
    let repo = Repo::open(fx.repo.path()).unwrap();
    let gw = gateway(standard_rules(&fx));
    let result = run(
        &repo,
        fx.fix.as_str(),
        &full_config(),
        &gw,
        Some(&fx.p2),
    )
    .unwrap();
    let c1 = result.flow.per_generator["C1"].truth.as_ref().unwrap();
    assert!(c1.in_generated);
    assert!(c1.in_pre_filter_survivors);
    assert!(c1.is_post_filter_pick);
    assert!(c1.is_final);
    let c3 = result.flow.per_generator["C3"].truth.as_ref().unwrap();
    assert!(!c3.in_generated);
}

#[test]
fn bad_ref_fails_with_partial_report() {
    let fx = pipe_fixture();
    let repo = Repo::open(fx.repo.path()).unwrap();
    let gw = gateway(vec![]);
    let err = run(&repo, "zzzz-not-a-ref", &full_config(), &gw, None).unwrap_err();
    assert!(err.to_string().contains("not found"));
    assert_eq!(err.partial.final_bic, None);
}

#[test]
fn flow_counts_never_increase() {
    let fx = pipe_fixture();
    let repo = Repo::open(fx.repo.path()).unwrap();
    let gw = gateway(standard_rules(&fx));
    let result = run(&repo, fx.fix.as_str(), &full_config(), &gw, None).unwrap();
    for (label, flow) in &result.flow.per_generator {
        let c = &flow.counts;
        assert!(
            c.generated >= c.after_pre_filter
                && c.after_pre_filter >= c.after_post_filter
                && c.after_post_filter >= c.finalized,
            "flow must be monotone for {label}: {c:?}"
        );
    }
}
