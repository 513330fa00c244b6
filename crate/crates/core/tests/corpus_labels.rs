//! The synthetic corpus is the detector's hand-labeled oracle: every
//! vulnerable variant must be flagged, every safe variant must not, and the
//! safe set must exercise all four sanitizer kinds.

use std::collections::BTreeSet;
use std::path::PathBuf;

use patrol::detector::{count_sanitizer_calls, detect_traversal, SanitizerKind, Verdict};

const VULNERABLE: &[(&str, &str)] = &[
    ("v-classic-gist", "server.js"),
    ("v-const-arrow", "server.js"),
    ("v-concat", "app.js"),
    ("v-sync", "server.js"),
    ("v-stream", "server.js"),
    ("v-promise", "server.js"),
    ("v-renamed", "srv.js"),
    ("v-decode", "server.js"),
    ("v-prefix", "server.js"),
    ("v-local", "server.js"),
    ("v-deps", "server.js"),
    ("v-start", "srv.js"),
];

const SAFE: &[(&str, &str)] = &[
    ("s-dotdot-include", "server.js"),
    ("s-dotdot-indexof", "app.js"),
    ("s-normalize", "server.js"),
    ("s-prefix-resolved", "server.js"),
    ("s-allowlist", "server.js"),
    ("s-comments", "server.js"),
    ("s-decode-check", "server.js"),
    ("s-resolve-indexof", "server.js"),
];

fn corpus_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/corpus")
}

fn read(project: &str, file: &str) -> String {
    std::fs::read_to_string(corpus_root().join(project).join(file))
        .unwrap_or_else(|e| panic!("{project}/{file}: {e}"))
}

#[test]
fn all_twelve_vulnerable_variants_are_flagged() {
    for (project, file) in VULNERABLE {
        let source = read(project, file);
        let finding =
            detect_traversal(&source).unwrap_or_else(|| panic!("{project}: expected a finding"));
        assert_eq!(
            finding.verdict,
            Verdict::Vulnerable,
            "{project}: expected vulnerable, saw {finding:?}"
        );
        assert!(
            finding.sanitizers_seen.is_empty(),
            "{project}: vulnerable finding lists sanitizers {:?}",
            finding.sanitizers_seen
        );
        assert!(finding.source_span.start >= 1);
        assert!(finding.sink_span.end >= finding.sink_span.start);
    }
}

#[test]
fn no_safe_variant_is_flagged_vulnerable() {
    for (project, file) in SAFE {
        let source = read(project, file);
        match detect_traversal(&source) {
            None => {}
            Some(finding) => assert_eq!(
                finding.verdict,
                Verdict::Safe,
                "{project}: false positive {finding:?}"
            ),
        }
    }
}

#[test]
fn safe_set_covers_all_four_sanitizer_kinds() {
    let mut kinds: BTreeSet<SanitizerKind> = BTreeSet::new();
    for (project, file) in SAFE {
        if let Some(finding) = detect_traversal(&read(project, file)) {
            kinds.extend(finding.sanitizers_seen.iter().copied());
        }
    }
    for expected in [
        SanitizerKind::DotdotContainmentCheck,
        SanitizerKind::NormalizeAndCompare,
        SanitizerKind::RootPrefixCheck,
        SanitizerKind::AllowlistLookup,
    ] {
        assert!(kinds.contains(&expected), "missing {expected:?}");
    }
}

#[test]
fn sanitizer_call_counts_match_labels() {
    // unpatched vulnerable files: only v-decode carries a (bypassable)
    // dotdot check on a pathname-derived value
    assert_eq!(
        count_sanitizer_calls(&read("v-classic-gist", "server.js")),
        0
    );
    assert_eq!(count_sanitizer_calls(&read("v-decode", "server.js")), 1);
    assert_eq!(
        count_sanitizer_calls(&read("s-dotdot-include", "server.js")),
        1
    );
    // indexOf-style guard is not an includes() call
    assert_eq!(
        count_sanitizer_calls(&read("s-dotdot-indexof", "app.js")),
        0
    );
}

#[test]
fn determinism_across_runs() {
    for (project, file) in VULNERABLE.iter().chain(SAFE) {
        let source = read(project, file);
        assert_eq!(detect_traversal(&source), detect_traversal(&source));
    }
}
