//! Property tests over the diff layer: round-trip, stripping idempotence,
//! classification partition, and the reorder multiset identity.

use bisectr_core::diff::{
    classify_patch, parse_unified_diff, strip_comment_changes, LineKind, PatchClass,
};
use bisectr_core::lang::{normalize_ws, LanguageProfile};
use bisectr_testkit::synth::random_diff;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    /// Rendering a parsed diff and reparsing it yields the identical value.
    #[test]
    fn roundtrip_parse_render_parse(seed in 0u64..500) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let synth = random_diff(&mut rng, 20, (seed % 4) as u8);
        let diff = parse_unified_diff(&synth.text).unwrap();
        let reparsed = parse_unified_diff(&diff.render()).unwrap();
        prop_assert_eq!(diff, reparsed);
    }

    /// Stripping comment changes twice equals stripping once.
    #[test]
    fn strip_is_idempotent(seed in 0u64..500, profile_unknown in proptest::bool::ANY) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcdef);
        let synth = random_diff(&mut rng, 16, (seed % 4) as u8);
        let profile = if profile_unknown {
            LanguageProfile::Unknown
        } else {
            LanguageProfile::CLike
        };
        let diff = parse_unified_diff(&synth.text).unwrap();
        let once = strip_comment_changes(&diff, profile);
        let twice = strip_comment_changes(&once, profile);
        // The unknown-profile warning accumulates; compare content only.
        prop_assert_eq!(&once.files, &twice.files);
        prop_assert_eq!(&once.touched_globals, &twice.touched_globals);
    }

    /// Every non-empty patch lands in exactly one class, and reorder-only
    /// patches have equal normalized multisets of deleted and added texts.
    #[test]
    fn classification_is_a_partition(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x517e57);
        let synth = random_diff(&mut rng, 20, (seed % 4) as u8);
        let diff = parse_unified_diff(&synth.text).unwrap();
        let stripped = strip_comment_changes(&diff, LanguageProfile::CLike);
        let changed = stripped.changed_lines();
        match classify_patch(&stripped) {
            Err(_) => prop_assert!(changed.is_empty()),
            Ok(PatchClass::AddedOnly) => {
                prop_assert!(changed.iter().all(|l| l.kind == LineKind::Added));
                prop_assert!(!changed.is_empty());
            }
            Ok(PatchClass::DeletedLines) => {
                prop_assert!(changed.iter().any(|l| l.kind == LineKind::Deleted));
            }
            Ok(PatchClass::ReorderOnly { pairs }) => {
                let mut deleted: Vec<String> = changed
                    .iter()
                    .filter(|l| l.kind == LineKind::Deleted)
                    .map(|l| normalize_ws(&l.line_text))
                    .collect();
                let mut added: Vec<String> = changed
                    .iter()
                    .filter(|l| l.kind == LineKind::Added)
                    .map(|l| normalize_ws(&l.line_text))
                    .collect();
                deleted.sort();
                added.sort();
                prop_assert_eq!(&deleted, &added, "reorder multisets must match");
                prop_assert_eq!(pairs.len(), deleted.len());
                // Pairing is a bijection: each added line used exactly once.
                let mut used: Vec<(Option<u32>, String)> = pairs
                    .iter()
                    .map(|p| (p.added.new_lineno, p.added.line_text.clone()))
                    .collect();
                used.sort();
                used.dedup();
                prop_assert_eq!(used.len(), pairs.len());
            }
        }
    }
}
