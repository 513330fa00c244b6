//! Prompt construction for the patch model.
//!
//! Replies were far more stable once every source line carried its own
//! number, so the source is rendered as `NNNN#<line>` and the model is told
//! to emit a unified diff against those numbers and nothing else.

use serde::{Deserialize, Serialize};

use crate::detector::{handler_params, TaintFinding};

pub const PATCH_TEMPERATURE: f64 = 1.2;

/// Everything sent to the chat provider for one patch attempt.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system: String,
    pub user: String,
    pub numbered_source: String,
    pub constraints: Vec<String>,
    pub temperature: f64,
}

/// Render line `i` as a zero-padded 4-digit number, `#`, and the line.
pub fn number_lines(source: &str) -> String {
    if source.is_empty() {
        return String::new();
    }
    let had_newline = source.ends_with('\n');
    let mut out: String = source
        .lines()
        .enumerate()
        .map(|(i, line)| format!("{:04}#{}\n", i + 1, line))
        .collect();
    if !had_newline {
        out.pop();
    }
    out
}

/// Reverse of [`number_lines`]; lines without the prefix pass through.
pub fn strip_line_numbers(numbered: &str) -> String {
    let had_newline = numbered.ends_with('\n');
    let mut out: String = numbered
        .lines()
        .map(|line| {
            let stripped = match line.split_once('#') {
                Some((num, rest)) if num.len() == 4 && num.chars().all(|c| c.is_ascii_digit()) => {
                    rest
                }
                _ => line,
            };
            format!("{stripped}\n")
        })
        .collect();
    if !had_newline {
        out.pop();
    }
    out
}

pub fn build_prompt(source: &str, finding: &TaintFinding) -> PromptBundle {
    let numbered_source = number_lines(source);
    let constraints = vec![
        "Reply with a single unified diff and nothing else. Use @@ hunk headers with the \
         line numbers shown in the listing and at least 3 lines of context."
            .to_string(),
        "Insert a guard that rejects any request whose pathname, as used by this code, \
         contains two consecutive dots, and return from the handler before the path is used."
            .to_string(),
        "Do not assign to any new or existing variable; only add the guard block.".to_string(),
        "Do not echo the requested path back into the response body.".to_string(),
    ];
    let (req_var, res_var) =
        handler_params(source).unwrap_or_else(|| ("req".to_string(), "res".to_string()));

    let mut user = String::new();
    user.push_str(
        "The following Node.js file serves files from disk and is exploitable by path \
         traversal: the request pathname reaches a filesystem read without sanitization.\n\n",
    );
    user.push_str(&format!(
        "Hints: the pathname is taken from the request URL around line {src}; it is joined \
         with a base directory on line {join}; the filesystem read happens around line {sink}. \
         The handler's request parameter is `{req_var}` and its response parameter is \
         `{res_var}`.\n\n",
        src = finding.source_span.start,
        join = finding.join_span.start,
        sink = finding.sink_span.start,
    ));
    user.push_str("Requirements:\n");
    for (i, c) in constraints.iter().enumerate() {
        user.push_str(&format!("{}. {}\n", i + 1, c));
    }
    user.push_str("\nSource with line numbers:\nSTART```\n");
    user.push_str(&numbered_source);
    if !numbered_source.ends_with('\n') {
        user.push('\n');
    }
    user.push_str("```END\n");

    PromptBundle {
        system: "You are a security engineer producing minimal, reviewable patches for \
                 Node.js code. You output unified diff patches only."
            .to_string(),
        user,
        numbered_source,
        constraints,
        temperature: PATCH_TEMPERATURE,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::detect_traversal;

    #[test]
    fn one_line_file() {
        assert_eq!(number_lines("x"), "0001#x");
        assert_eq!(number_lines("x\n"), "0001#x\n");
    }

    #[test]
    fn empty_file_numbers_to_empty() {
        assert_eq!(number_lines(""), "");
    }

    #[test]
    fn twelve_line_roundtrip() {
        let source: String = (1..=12).map(|i| format!("line number {i}\n")).collect();
        let numbered = number_lines(&source);
        assert!(numbered.starts_with("0001#line number 1\n"));
        assert!(numbered.contains("0012#line number 12\n"));
        assert_eq!(strip_line_numbers(&numbered), source);
    }

    #[test]
    fn roundtrip_without_trailing_newline() {
        let source = "a\nb\nc";
        assert_eq!(strip_line_numbers(&number_lines(source)), source);
    }

    #[test]
    fn prompt_carries_constraints_and_numbered_source() {
        let src = r#"
var http = require("http"), url = require("url"), path = require("path"), fs = require("fs");
http.createServer(function(req, res) {
  var uri = url.parse(req.url).pathname;
  var filename = path.join(process.cwd(), uri);
  fs.readFile(filename, function(err, data) { res.end(data); });
}).listen(8080);
"#;
        let finding = detect_traversal(src).unwrap();
        let bundle = build_prompt(src, &finding);
        assert_eq!(bundle.temperature, 1.2);
        assert_eq!(bundle.constraints.len(), 4);
        for c in &bundle.constraints {
            assert!(bundle.user.contains(c));
        }
        assert!(bundle.user.contains("START```"));
        assert!(bundle.user.contains("0004#"));
        assert!(bundle.user.contains("`req`"));
        assert!(bundle.user.contains("`res`"));
        // span hints present
        assert!(bundle
            .user
            .contains(&format!("line {}", finding.join_span.start)));
        let src_lines = src.lines().count();
        assert_eq!(bundle.numbered_source.lines().count(), src_lines);
    }
}
