//! Property tests over the pure building blocks: the lexer must be total
//! and deterministic on arbitrary input, line numbering must round-trip,
//! journal records must survive serialization, and token extraction must
//! honor its charset/length contract.

use proptest::prelude::*;

use patrol::corpus::extract_tokens;
use patrol::detector::tokenize_js;
use patrol::journal::{Artifacts, CandidateId, CandidateMeta, Record};
use patrol::patchgen::{number_lines, strip_line_numbers};
use patrol::pipeline::state::{CandidateState, StateEvent};

proptest! {
    // the lexer never panics and never loses line count, whatever bytes
    // arrive in a candidate file
    #[test]
    fn lexer_is_total_and_deterministic(src in ".{0,400}") {
        let a = tokenize_js(&src);
        let b = tokenize_js(&src);
        prop_assert_eq!(&a, &b);
        let max_line = a.iter().map(|t| t.line).max().unwrap_or(1);
        prop_assert!(max_line as usize <= src.lines().count().max(1));
    }

    #[test]
    fn numbering_roundtrip(lines in proptest::collection::vec("[ -~]{0,60}", 0..40)) {
        // '#' inside content is fine: only the 4-digit prefix is stripped
        let source = lines.join("\n");
        let numbered = number_lines(&source);
        prop_assert_eq!(strip_line_numbers(&numbered), source);
    }

    #[test]
    fn numbering_roundtrip_with_trailing_newline(lines in proptest::collection::vec("[ -~]{0,60}", 1..40)) {
        let source = format!("{}\n", lines.join("\n"));
        let numbered = number_lines(&source);
        prop_assert_eq!(numbered.lines().count(), source.lines().count());
        prop_assert_eq!(strip_line_numbers(&numbered), source);
    }

    #[test]
    fn extracted_tokens_obey_charset_and_length(src in ".{0,300}") {
        for token in extract_tokens(&src) {
            prop_assert!(token.len() >= 3);
            prop_assert!(token
                .chars()
                .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_' || c == '$'));
        }
    }

    #[test]
    fn transition_records_roundtrip_via_json(
        stars in 0u32..5000,
        repo in "[a-z]{1,8}/[a-z]{1,8}",
        note in proptest::option::of("[ -~]{0,40}"),
    ) {
        let meta = CandidateMeta {
            repo_id: repo.clone(),
            file_path: "server.js".into(),
            file_url: format!("mock://{repo}/server.js"),
            stars,
            last_commit: chrono::NaiveDate::from_ymd_opt(2024, 3, 9).unwrap(),
        };
        let records = [
            Record::Candidate {
                id: CandidateId::from_file_url(&meta.file_url),
                meta,
                content_blob: "d00d".into(),
                ts: chrono::Utc::now(),
            },
            Record::Transition {
                id: CandidateId::from_file_url("x"),
                from: CandidateState::Downloaded,
                to: CandidateState::SastVuln,
                event: StateEvent::SastVuln,
                ts: chrono::Utc::now(),
                artifacts: Artifacts {
                    note,
                    ..Artifacts::default()
                },
            },
        ];
        for record in records {
            let line = serde_json::to_string(&record).unwrap();
            let back: Record = serde_json::from_str(&line).unwrap();
            prop_assert_eq!(back, record);
        }
    }
}
