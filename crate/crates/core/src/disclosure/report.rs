//! Vulnerability report rendering.
//!
//! The report is what a maintainer actually reads: what the pattern is,
//! how to reproduce it with a client that does not normalize the path,
//! how severe it is, and the (clearly labeled machine-generated) patch.

use crate::cvss::{CvssScore, CvssVector};
use crate::detector::TaintFinding;
use crate::exploit::ExploitOutcome;

pub struct ReportInputs<'a> {
    pub repo_id: &'a str,
    pub file_path: &'a str,
    pub finding: &'a TaintFinding,
    pub outcome: &'a ExploitOutcome,
    pub vector: &'a CvssVector,
    pub score: CvssScore,
    /// Accepted unified diff, when patch synthesis succeeded.
    pub diff: Option<&'a str>,
    pub survey_url: Option<&'a str>,
}

pub fn render_report(inputs: &ReportInputs) -> String {
    let mut md = String::new();
    md.push_str(&format!(
        "# Path traversal vulnerability in {}\n\n",
        inputs.repo_id
    ));

    md.push_str("## Vulnerability description\n\n");
    md.push_str(&format!(
        "`{file}` serves files over HTTP by joining the request URL's pathname onto a base \
         directory and reading the result from disk (pathname taken around line {src}, joined \
         on line {join}, read around line {sink}). `path.join` normalizes the combined path, \
         so a pathname containing `..` segments resolves to files *outside* the directory \
         intended to be served (CWE-22). Any file readable by the server process — \
         configuration, credentials, `/etc/passwd` — can be fetched remotely.\n\n",
        file = inputs.file_path,
        src = inputs.finding.source_span.start,
        join = inputs.finding.join_span.start,
        sink = inputs.finding.sink_span.start,
    ));

    md.push_str("## Proof of concept\n\n");
    if let Some(payload) = &inputs.outcome.winning_payload {
        md.push_str(&format!(
            "The following request line, sent verbatim, returned the contents of a file \
             planted outside the served directory:\n\n```\nGET {} HTTP/1.1\n```\n\n",
            payload.printable()
        ));
    }
    md.push_str(
        "Note: browsers and most HTTP clients normalize `..` segments away before sending, \
         which makes the server look safe under casual testing. Attackers are not limited to \
         well-behaved clients; with curl, `--path-as-is` reproduces the request exactly.\n\n",
    );
    if inputs.outcome.dos {
        md.push_str(
            "The same code path also buffers whole files in memory before responding, so \
             requesting an unbounded special file crashes the process: a denial-of-service \
             vector on top of the file disclosure.\n\n",
        );
    }

    md.push_str("## Severity (CVSS v3.1)\n\n");
    md.push_str(&format!(
        "`{}` — base score **{}** ({:?}).\n\n",
        inputs.vector.vector_string(),
        inputs.score,
        inputs.score.severity_band(),
    ));

    md.push_str("## Patch\n\n");
    match inputs.diff {
        Some(diff) => {
            md.push_str(
                "The patch below was generated and validated automatically (the service keeps \
                 starting the same way, benign requests are unaffected, and the exploit no \
                 longer works). It was machine-generated: please review it before merging.\n\n",
            );
            md.push_str("```diff\n");
            md.push_str(diff);
            if !diff.ends_with('\n') {
                md.push('\n');
            }
            md.push_str("```\n\n");
        }
        None => {
            md.push_str(
                "Automatic patch generation did not produce a patch that passed validation \
                 for this project, so a manual fix is needed. The smallest robust change is \
                 to reject any request whose decoded pathname contains two consecutive dots \
                 before the path is used, returning an error status immediately.\n\n",
            );
        }
    }

    md.push_str("## Remediation guidance\n\n");
    md.push_str(
        "- Reject requests whose decoded pathname contains `..` before any filesystem use.\n\
         - Alternatively, resolve the final path and verify it still starts with the \
         intended base directory.\n\
         - Prefer streaming responses over buffering whole files in memory.\n",
    );
    if let Some(url) = inputs.survey_url {
        md.push_str(&format!(
            "\nIf you have two minutes, feedback on this report helps improve future ones: {url}\n"
        ));
    }
    md
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cvss::{Av, Avail};
    use crate::detector::{LineSpan, Verdict};
    use crate::exploit::{payload_catalog, AttackVectorKind};

    fn sample_outcome() -> ExploitOutcome {
        let catalog = payload_catalog("flag.txt");
        ExploitOutcome {
            traversal: true,
            winning_payload: Some(catalog[5].clone()),
            dos: true,
            attack_vector: AttackVectorKind::Network,
            evidence: "abc123".into(),
        }
    }

    fn sample_finding() -> TaintFinding {
        TaintFinding {
            source_span: LineSpan::new(8, 8),
            join_span: LineSpan::new(9, 9),
            sink_span: LineSpan::new(10, 10),
            sanitizers_seen: vec![],
            verdict: Verdict::Vulnerable,
        }
    }

    #[test]
    fn report_has_all_five_sections() {
        let vector = CvssVector {
            av: Av::Network,
            a: Avail::High,
        };
        let outcome = sample_outcome();
        let finding = sample_finding();
        let md = render_report(&ReportInputs {
            repo_id: "user/repo",
            file_path: "server.js",
            finding: &finding,
            outcome: &outcome,
            vector: &vector,
            score: vector.base_score(),
            diff: Some("--- a/server.js\n+++ b/server.js\n@@ -1,1 +1,2 @@\n x\n+guard\n"),
            survey_url: None,
        });
        for section in [
            "## Vulnerability description",
            "## Proof of concept",
            "## Severity (CVSS v3.1)",
            "## Patch",
            "## Remediation guidance",
        ] {
            assert!(md.contains(section), "missing {section}");
        }
        assert!(md.contains("machine-generated"));
        assert!(md.contains("--path-as-is"));
        assert!(md.contains("9.1"));
    }

    #[test]
    fn poc_reproduces_winning_payload_bytes() {
        let vector = CvssVector {
            av: Av::Network,
            a: Avail::None,
        };
        let outcome = sample_outcome();
        let finding = sample_finding();
        let md = render_report(&ReportInputs {
            repo_id: "user/repo",
            file_path: "server.js",
            finding: &finding,
            outcome: &outcome,
            vector: &vector,
            score: vector.base_score(),
            diff: None,
            survey_url: None,
        });
        let expected = outcome.winning_payload.as_ref().unwrap().printable();
        assert!(md.contains(&format!("GET {expected} HTTP/1.1")));
        // failed-patch case: no diff block, manual guidance instead
        assert!(!md.contains("```diff"));
        assert!(md.contains("manual fix"));
    }
}
