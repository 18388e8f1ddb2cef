//! Seeded random unified diffs for classification property tests.

use rand::Rng;

/// A generated diff plus the raw changed-line texts it contains.
pub struct SynthDiff {
    pub text: String,
    pub deleted: Vec<String>,
    pub added: Vec<String>,
}

const STATEMENTS: &[&str] = &[
    "x = compute(a, b);",
    "lock(&mu);",
    "unlock(&mu);",
    "if (ptr == NULL)",
    "    return -EINVAL;",
    "count += 1;",
    "buf[i] = 0;",
    "call_handler(ctx);",
    "flags &= ~MASK;",
    "wake_up(&queue);",
];

fn reindent(rng: &mut impl Rng, s: &str) -> String {
    let pad = " ".repeat(rng.random_range(0..5));
    format!("{pad}{}", s.trim_start())
}

/// One random diff of at most `max_lines` changed lines over a single hunk.
/// `mode` biases generation: 0 = arbitrary mix, 1 = added-only,
/// 2 = reorder (deleted lines reappear re-indented), 3 = deleted-heavy.
pub fn random_diff(rng: &mut impl Rng, max_lines: usize, mode: u8) -> SynthDiff {
    let mut deleted: Vec<String> = Vec::new();
    let mut added: Vec<String> = Vec::new();
    let n = rng.random_range(1..=max_lines.max(1));
    match mode {
        1 => {
            for _ in 0..n {
                added.push(STATEMENTS[rng.random_range(0..STATEMENTS.len())].to_string());
            }
        }
        2 => {
            for _ in 0..n.div_ceil(2) {
                let s = STATEMENTS[rng.random_range(0..STATEMENTS.len())];
                deleted.push(s.to_string());
                added.push(reindent(rng, s));
            }
            // Occasionally break the bijection so both outcomes appear.
            if rng.random_bool(0.3) {
                deleted.push("extra_stmt();".to_string());
            }
        }
        3 => {
            for _ in 0..n {
                deleted.push(STATEMENTS[rng.random_range(0..STATEMENTS.len())].to_string());
            }
            if rng.random_bool(0.5) {
                added.push("new_check();".to_string());
            }
        }
        _ => {
            for _ in 0..n {
                let s = STATEMENTS[rng.random_range(0..STATEMENTS.len())].to_string();
                match rng.random_range(0..3) {
                    0 => deleted.push(s),
                    1 => added.push(s),
                    _ => {
                        deleted.push(s.clone());
                        if rng.random_bool(0.7) {
                            added.push(reindent(rng, &s));
                        }
                    }
                }
            }
        }
    }

    // Assemble a single-hunk diff: deletions first, then additions, wrapped
    // in one context line on each side.
    let old_count = deleted.len() as u32 + 2;
    let new_count = added.len() as u32 + 2;
    let mut text = String::from("--- a/synth.c\n+++ b/synth.c\n");
    text.push_str(&format!("@@ -10,{old_count} +10,{new_count} @@ void synth_fn(void)\n"));
    text.push_str(" begin_marker();\n");
    for d in &deleted {
        text.push_str(&format!("-{d}\n"));
    }
    for a in &added {
        text.push_str(&format!("+{a}\n"));
    }
    text.push_str(" end_marker();\n");
    SynthDiff {
        text,
        deleted,
        added,
    }
}
