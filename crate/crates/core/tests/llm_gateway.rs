//! Gateway behavior: golden prompt rendering, reply parsing, the three
//! backends, retry policy, and token accounting.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::net::TcpListener;

use bisectr_core::llm::{
    parse_binary_verdict, parse_comparative_choice, parse_critical_lines, render_prompt, Backend,
    Gateway, LiveBackend, LiveConfig, LlmError, LlmRequest, ScriptRule, ScriptedBackend,
    TemplateId, TranscriptStore,
};
use bisectr_core::CommitId;

fn params(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
    pairs
        .iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

#[test]
fn golden_prompt_rendering() {
    let cases: [(TemplateId, &str, Vec<(&str, &str)>); 5] = [
        (
            TemplateId::CritDeleted,
            include_str!("golden/prompt1_crit_deleted.txt"),
            vec![
                ("patch_content", "<PATCH>"),
                ("function_content", "<FUNCTIONS>"),
                ("num_lines", "5"),
            ],
        ),
        (
            TemplateId::CritAddedOnly,
            include_str!("golden/prompt2_crit_added_only.txt"),
            vec![("patch_content", "<PATCH>"), ("function_content", "<FUNCTIONS>")],
        ),
        (
            TemplateId::CritReorder,
            include_str!("golden/prompt3_crit_reorder.txt"),
            vec![
                ("patch_content", "<PATCH>"),
                ("function_content", "<FUNCTIONS>"),
                ("reorder_lines", "<REORDERED>"),
            ],
        ),
        (
            TemplateId::PreFilter,
            include_str!("golden/prompt4_pre_filter.txt"),
            vec![("patch_content", "<PATCH>"), ("commit_content", "<COMMIT>")],
        ),
        (
            TemplateId::Comparative,
            include_str!("golden/prompt5_comparative.txt"),
            vec![("patch_content", "<PATCH>"), ("commit_content", "<COMMITS>")],
        ),
    ];
    for (id, golden, pairs) in cases {
        let rendered = render_prompt(id, &params(&pairs)).unwrap();
        assert_eq!(rendered, golden.trim_end(), "golden mismatch for {id:?}");
        // Byte-stability across repeated renders.
        assert_eq!(rendered, render_prompt(id, &params(&pairs)).unwrap());
    }
}

#[test]
fn render_missing_slot() {
    let err = render_prompt(
        TemplateId::PreFilter,
        &params(&[("patch_content", "<PATCH>")]),
    );
    match err {
        Err(LlmError::MissingSlot(slot)) => assert_eq!(slot, "commit_content"),
        other => panic!("expected MissingSlot, got {other:?}"),
    }
}

#[test]
fn render_prompt4_contains_blocks_in_order() {
    let text = render_prompt(
        TemplateId::PreFilter,
        &params(&[("patch_content", "PATCHBLOCK"), ("commit_content", "COMMITBLOCK")]),
    )
    .unwrap();
    let p = text.find("PATCHBLOCK").unwrap();
    let c = text.find("COMMITBLOCK").unwrap();
    assert!(p < c);
}

#[test]
fn critical_line_parsing() {
    let got = parse_critical_lines(r#"[("f.c","foo",3,"x = NULL;")]"#).unwrap();
    assert_eq!(got.len(), 1);
    assert_eq!(got[0].filename, "f.c");
    assert_eq!(got[0].functionname, "foo");
    assert_eq!(got[0].linenum, 3);
    assert_eq!(got[0].line_text, "x = NULL;");

    // Prose before and after, python-ish quoting, multi-line.
    let wrapped = "Sure! Here are the lines:\n[\n  ('a.c', 'f', 10, 'if (x) {'),\n  (\"b.c\", \"g\", 2, \"y = 1;\"),\n]\nHope that helps.";
    let got = parse_critical_lines(wrapped).unwrap();
    assert_eq!(got.len(), 2);
    assert_eq!(got[1].functionname, "g");

    // Empty list means scope expansion upstream, not an error.
    assert!(parse_critical_lines("The answer is []").unwrap().is_empty());

    assert!(parse_critical_lines("no list here at all").is_err());
}

#[test]
fn binary_verdict_parsing() {
    let v = parse_binary_verdict("... Therefore: True. The commit introduced the bug.").unwrap();
    assert!(v.is_bic);
    assert!(!v.rationale.is_empty());

    let v = parse_binary_verdict("False").unwrap();
    assert!(!v.is_bic);
    assert_eq!(v.rationale, "");

    // Nearest the end wins.
    let v = parse_binary_verdict("True seems possible but the answer is False").unwrap();
    assert!(!v.is_bic);

    assert!(parse_binary_verdict("It is probably buggy").is_err());
    // Embedded in identifiers does not count.
    assert!(parse_binary_verdict("truthy falsey untrue").is_err());
}

fn ids(hashes: &[&str]) -> Vec<CommitId> {
    hashes.iter().map(|h| CommitId::new(h.to_string()).unwrap()).collect()
}

#[test]
fn comparative_choice_parsing() {
    let a = "c568f7086c6e6a7c9c0e6e0a3a1b2c3d4e5f6071";
    let b = "1111111111111111111111111111111111111111";
    let presented = ids(&[a, b]);

    let text = format!("Commit c568f7086c6e is where the mechanism is added.");
    let got = parse_comparative_choice(&text, &presented).unwrap();
    assert_eq!(got.chosen.as_ref().map(|c| c.as_str()), Some(a));

    let got = parse_comparative_choice("None of these introduced it", &presented).unwrap();
    assert!(got.chosen.is_none());

    // Only a non-presented hash named.
    let err = parse_comparative_choice("It was deadbeefdeadbeef", &presented);
    assert!(err.is_err());

    // Latest mention wins.
    let text = format!("Maybe {b}. On reflection, {a} is the one.");
    let got = parse_comparative_choice(&text, &presented).unwrap();
    assert_eq!(got.chosen.as_ref().map(|c| c.as_str()), Some(a));
}

#[test]
fn scripted_backend_serves_table() {
    let gw = Gateway::new(Backend::Scripted(ScriptedBackend::new(vec![ScriptRule {
        match_all: vec![],
        response: "True. Because reasons.".into(),
        prompt_tokens: Some(11),
        completion_tokens: Some(7),
        max_uses: None,
    }])));
    let resp = gw.complete("test", &LlmRequest::new("m", "anything")).unwrap();
    assert_eq!(resp.text, "True. Because reasons.");
    assert_eq!((resp.prompt_tokens, resp.completion_tokens), (11, 7));
}

#[test]
fn recorded_miss_is_typed() {
    let dir = tempfile::tempdir().unwrap();
    let store = TranscriptStore::load(dir.path().join("t.jsonl")).unwrap();
    let gw = Gateway::new(Backend::Recorded(store));
    match gw.complete("test", &LlmRequest::new("m", "p")) {
        Err(LlmError::TranscriptMiss(_)) => {}
        other => panic!("expected TranscriptMiss, got {other:?}"),
    }
}

#[test]
fn record_then_replay_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.jsonl");
    let req = LlmRequest::new("model-x", "the question");

    {
        let store = TranscriptStore::load(&path).unwrap();
        let gw = Gateway::new(Backend::Scripted(ScriptedBackend::new(vec![ScriptRule {
            match_all: vec![],
            response: "the answer".into(),
            prompt_tokens: Some(3),
            completion_tokens: Some(2),
            max_uses: None,
        }])))
        .record_to(store);
        gw.complete("test", &req).unwrap();
    }

    let store = TranscriptStore::load(&path).unwrap();
    assert_eq!(store.len(), 1);
    let gw = Gateway::new(Backend::Recorded(store));
    let r1 = gw.complete("test", &req).unwrap();
    let r2 = gw.complete("test", &req).unwrap();
    assert_eq!(r1.text, "the answer");
    assert_eq!(r1, r2);
}

#[test]
fn live_roundtrip_against_stub_server() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let server = std::thread::spawn(move || {
        let (mut sock, _) = listener.accept().unwrap();
        let mut buf = [0u8; 65536];
        let mut req = Vec::new();
        // Read until the JSON body closes; one read is enough for this size.
        loop {
            let n = sock.read(&mut buf).unwrap();
            req.extend_from_slice(&buf[..n]);
            let text = String::from_utf8_lossy(&req);
            if let Some(body_at) = text.find("\r\n\r\n") {
                let headers = &text[..body_at];
                let want: usize = headers
                    .lines()
                    .find_map(|l| l.to_lowercase().strip_prefix("content-length:").map(|v| v.trim().parse().unwrap()))
                    .unwrap_or(0);
                if req.len() >= body_at + 4 + want {
                    break;
                }
            }
        }
        let request_text = String::from_utf8_lossy(&req).into_owned();
        let body = serde_json::json!({
            "choices": [{"message": {"role": "assistant", "content": "stubbed reply"}}],
            "usage": {"prompt_tokens": 42, "completion_tokens": 17}
        })
        .to_string();
        let resp = format!(
            "HTTP/1.1 200 OK\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{}",
            body.len(),
            body
        );
        sock.write_all(resp.as_bytes()).unwrap();
        request_text
    });

    let gw = Gateway::new(Backend::Live(LiveBackend::new(LiveConfig {
        base_url: format!("http://{addr}/v1"),
        api_key: Some("test-key".into()),
        ..LiveConfig::default()
    })));
    let resp = gw
        .complete("test", &LlmRequest::new("model-y", "ping the stub"))
        .unwrap();
    assert_eq!(resp.text, "stubbed reply");
    assert_eq!((resp.prompt_tokens, resp.completion_tokens), (42, 17));

    let seen = server.join().unwrap();
    assert!(seen.contains("ping the stub"));
    assert!(seen.contains("model-y"));
    assert!(seen.contains("Bearer test-key"));
}

#[test]
fn retry_appends_format_reminder() {
    let gw = Gateway::new(Backend::Scripted(ScriptedBackend::new(vec![
        ScriptRule {
            match_all: vec![],
            response: "no verdict token here".into(),
            prompt_tokens: None,
            completion_tokens: None,
            max_uses: Some(1),
        },
        ScriptRule {
            match_all: vec!["Reminder 1:".into()],
            response: "False".into(),
            prompt_tokens: None,
            completion_tokens: None,
            max_uses: None,
        },
    ])));
    let req = LlmRequest::new("m", "is it the bic?");
    let (verdict, _) = gw
        .complete_parsed("test", &req, "answer True or False", |t| {
            parse_binary_verdict(t)
        })
        .unwrap();
    assert!(!verdict.is_bic);
    assert_eq!(gw.calls().len(), 2);
}

#[test]
fn retry_budget_is_bounded() {
    let gw = Gateway::new(Backend::Scripted(ScriptedBackend::new(vec![ScriptRule {
        match_all: vec![],
        response: "never a verdict".into(),
        prompt_tokens: None,
        completion_tokens: None,
        max_uses: None,
    }])));
    let req = LlmRequest::new("m", "q");
    let err = gw.complete_parsed("test", &req, "fmt", |t| parse_binary_verdict(t));
    assert!(matches!(err, Err(LlmError::Parse(_))));
    assert_eq!(gw.calls().len(), 3); // initial + 2 re-asks
}

#[test]
fn token_accounting_balances() {
    let gw = Gateway::new(Backend::Scripted(ScriptedBackend::new(vec![ScriptRule {
        match_all: vec![],
        response: "ok".into(),
        prompt_tokens: Some(5),
        completion_tokens: Some(3),
        max_uses: None,
    }])));
    for i in 0..7 {
        gw.complete("loop", &LlmRequest::new("m", format!("q{i}"))).unwrap();
    }
    let calls = gw.calls();
    let sum: u64 = calls.iter().map(|c| c.prompt_tokens + c.completion_tokens).sum();
    let (p, c) = gw.total_tokens();
    assert_eq!(p + c, sum);
    assert_eq!(sum, 7 * 8);
}

#[test]
fn fuzzed_parsers_never_panic() {
    // Deterministic xorshift byte soup plus mutated canonical outputs.
    let mut state = 0x9e3779b97f4a7c15u64;
    let mut next = move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        state
    };
    let presented = ids(&["abcdefabcdefabcdefabcdefabcdefabcdefabcd"]);
    for _ in 0..2_000 {
        let len = (next() % 160) as usize;
        let bytes: Vec<u8> = (0..len).map(|_| (next() % 256) as u8).collect();
        let text = String::from_utf8_lossy(&bytes).into_owned();
        let _ = parse_critical_lines(&text);
        let _ = parse_binary_verdict(&text);
        let _ = parse_comparative_choice(&text, &presented);

        // Mutate a canonical tuple list at one position.
        let mut canon = r#"Result: [("a.c", "f", 3, "x = 1;"), ("b.c", "g", 7, "y();")] done"#
            .as_bytes()
            .to_vec();
        if !canon.is_empty() {
            let at = (next() as usize) % canon.len();
            canon[at] = (next() % 256) as u8;
        }
        let mutated = String::from_utf8_lossy(&canon).into_owned();
        let _ = parse_critical_lines(&mutated);
    }
}
