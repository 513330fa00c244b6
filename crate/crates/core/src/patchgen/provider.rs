//! Chat-completion providers behind one trait.
//!
//! The scripted mock is the acceptance workhorse: it reads the same prompt a
//! real model would get and deterministically produces the canonical guard
//! patch. The HTTP adapter speaks the common chat-completions wire format
//! and is selected only through configuration.

use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detector::lexer::{tokenize_js, TokenKind};

#[derive(Debug, Error)]
pub enum ChatError {
    #[error("provider transport: {0}")]
    Transport(String),
    #[error("provider returned an empty reply")]
    EmptyReply,
    #[error("missing credential: environment variable {0} not set")]
    MissingKey(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::System,
            content: content.into(),
        }
    }
    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::User,
            content: content.into(),
        }
    }
    pub fn assistant(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

pub trait ChatProvider: Send + Sync {
    fn complete(&self, messages: &[ChatMessage], temperature: f64) -> Result<String, ChatError>;
    fn name(&self) -> &str;
}

// --- canned guard model -----------------------------------------------------

/// Deterministic stand-in for a competent patch model. It parses the
/// numbered source and hint lines out of the prompt, locates the join, and
/// replies with a unified diff inserting the early-return guard.
pub struct CannedGuardLlm;

impl ChatProvider for CannedGuardLlm {
    fn complete(&self, messages: &[ChatMessage], _temperature: f64) -> Result<String, ChatError> {
        let user = messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .ok_or(ChatError::EmptyReply)?;
        let diff = guard_diff_for_prompt(&user.content)
            .ok_or_else(|| ChatError::Transport("prompt missing expected hints".into()))?;
        Ok(format!("```diff\n{diff}```\n"))
    }

    fn name(&self) -> &str {
        "mock-guard"
    }
}

fn extract_numbered_source(user: &str) -> Option<Vec<String>> {
    let start = user.find("START```")? + "START```".len();
    let end = user[start..].find("```END")? + start;
    let mut lines = Vec::new();
    for line in user[start..end].lines() {
        if line.is_empty() && lines.is_empty() {
            continue;
        }
        let (num, rest) = line.split_once('#')?;
        if num.len() != 4 || !num.chars().all(|c| c.is_ascii_digit()) {
            return None;
        }
        lines.push(rest.to_string());
    }
    Some(lines)
}

fn extract_hint_number(user: &str, marker: &str) -> Option<usize> {
    let at = user.find(marker)? + marker.len();
    let digits: String = user[at..]
        .chars()
        .skip_while(|c| !c.is_ascii_digit())
        .take_while(|c| c.is_ascii_digit())
        .collect();
    digits.parse().ok()
}

fn extract_backticked(user: &str, marker: &str) -> Option<String> {
    let at = user.find(marker)? + marker.len();
    let rest = &user[at..];
    let open = rest.find('`')? + 1;
    let close = rest[open..].find('`')? + open;
    Some(rest[open..close].to_string())
}

/// The variable to guard: the last plain identifier used as an argument on
/// the join line (skipping well-known module objects and anything that is
/// itself called or dereferenced).
fn guard_variable(line: &str) -> Option<String> {
    const STOP: &[&str] = &[
        "path",
        "fs",
        "require",
        "process",
        "__dirname",
        "__filename",
        "console",
        "module",
        "exports",
        "global",
        "Buffer",
        "mime",
    ];
    let toks = tokenize_js(line);
    let mut best = None;
    for (i, t) in toks.iter().enumerate() {
        if t.kind != TokenKind::Identifier {
            continue;
        }
        if STOP.contains(&t.lexeme.as_str()) {
            continue;
        }
        let prev = i.checked_sub(1).map(|j| toks[j].lexeme.as_str());
        let next = toks.get(i + 1).map(|t| t.lexeme.as_str());
        if prev == Some(".") {
            continue; // member property
        }
        if matches!(next, Some(".") | Some("(") | Some("=")) {
            continue; // dereferenced, called, or being assigned
        }
        best = Some(t.lexeme.clone());
    }
    best
}

/// Build the canonical guard diff from the prompt alone.
pub fn guard_diff_for_prompt(user: &str) -> Option<String> {
    let lines = extract_numbered_source(user)?;
    let join_line = extract_hint_number(user, "joined with a base directory on line")?;
    let res_var =
        extract_backticked(user, "response parameter is ").unwrap_or_else(|| "res".into());
    if join_line == 0 || join_line > lines.len() {
        return None;
    }
    let mut insert_at = join_line - 1; // insert before this 0-based line
    let var = guard_variable(&lines[insert_at])
        .or_else(|| guard_variable(&lines[insert_at.min(lines.len() - 1)]))?;

    // a continuation line (`, filename = ...`) cannot take an insertion in
    // front of it: move past the end of the declaration statement
    if lines[insert_at].trim_start().starts_with(',') {
        let mut j = insert_at;
        while j < lines.len() && !lines[j].trim_end().ends_with(';') {
            j += 1;
        }
        insert_at = (j + 1).min(lines.len());
    }

    let indent: String = lines
        .get(insert_at)
        .or_else(|| lines.get(insert_at.saturating_sub(1)))
        .map(|l| l.chars().take_while(|c| c.is_whitespace()).collect())
        .unwrap_or_default();
    let guard = [
        format!("{indent}if ({var}.includes('..')) {{"),
        format!("{indent}  {res_var}.writeHead(403, {{ 'Content-Type': 'text/plain' }});"),
        format!("{indent}  {res_var}.end('Forbidden');"),
        format!("{indent}  return;"),
        format!("{indent}}}"),
    ];

    let ctx_before_start = insert_at.saturating_sub(3);
    let ctx_before = &lines[ctx_before_start..insert_at];
    let ctx_after_end = (insert_at + 3).min(lines.len());
    let ctx_after = &lines[insert_at..ctx_after_end];

    let old_start = ctx_before_start + 1;
    let old_count = ctx_before.len() + ctx_after.len();
    let new_count = old_count + guard.len();
    let mut diff = String::new();
    diff.push_str("--- a/server.js\n+++ b/server.js\n");
    diff.push_str(&format!(
        "@@ -{old_start},{old_count} +{old_start},{new_count} @@\n"
    ));
    for l in ctx_before {
        diff.push_str(&format!(" {l}\n"));
    }
    for l in &guard {
        diff.push_str(&format!("+{l}\n"));
    }
    for l in ctx_after {
        diff.push_str(&format!(" {l}\n"));
    }
    Some(diff)
}

// --- scripted model ----------------------------------------------------------

/// Replays a fixed list of replies; the last one repeats once the script is
/// exhausted. Conversation state per provider instance.
pub struct ScriptedLlm {
    name: String,
    replies: Vec<String>,
    cursor: Mutex<usize>,
}

impl ScriptedLlm {
    pub fn new(name: impl Into<String>, replies: Vec<String>) -> Self {
        ScriptedLlm {
            name: name.into(),
            replies,
            cursor: Mutex::new(0),
        }
    }

    pub fn calls_made(&self) -> usize {
        *self.cursor.lock().unwrap()
    }
}

impl ChatProvider for ScriptedLlm {
    fn complete(&self, _messages: &[ChatMessage], _temperature: f64) -> Result<String, ChatError> {
        let mut cursor = self.cursor.lock().unwrap();
        let reply = self
            .replies
            .get(*cursor)
            .or_else(|| self.replies.last())
            .cloned()
            .ok_or(ChatError::EmptyReply)?;
        *cursor += 1;
        Ok(reply)
    }

    fn name(&self) -> &str {
        &self.name
    }
}

// --- http adapter -------------------------------------------------------------

/// Generic chat-completions adapter: POST `{base_url}/chat/completions`
/// with the usual messages array, bearer token from the named env var.
pub struct HttpChatProvider {
    pub base_url: String,
    pub model: String,
    pub key_env: String,
    client: reqwest::blocking::Client,
}

impl HttpChatProvider {
    pub fn new(
        base_url: impl Into<String>,
        model: impl Into<String>,
        key_env: impl Into<String>,
    ) -> Self {
        HttpChatProvider {
            base_url: base_url.into(),
            model: model.into(),
            key_env: key_env.into(),
            client: reqwest::blocking::Client::new(),
        }
    }
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: Vec<WireMessage<'a>>,
    temperature: f64,
}

#[derive(Serialize)]
struct WireMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireReply,
}

#[derive(Deserialize)]
struct WireReply {
    content: String,
}

impl ChatProvider for HttpChatProvider {
    fn complete(&self, messages: &[ChatMessage], temperature: f64) -> Result<String, ChatError> {
        let key = std::env::var(&self.key_env)
            .map_err(|_| ChatError::MissingKey(self.key_env.clone()))?;
        let body = WireRequest {
            model: &self.model,
            messages: messages
                .iter()
                .map(|m| WireMessage {
                    role: match m.role {
                        Role::System => "system",
                        Role::User => "user",
                        Role::Assistant => "assistant",
                    },
                    content: &m.content,
                })
                .collect(),
            temperature,
        };
        let url = format!("{}/chat/completions", self.base_url.trim_end_matches('/'));
        let resp = self
            .client
            .post(url)
            .bearer_auth(key)
            .json(&body)
            .send()
            .map_err(|e| ChatError::Transport(e.to_string()))?
            .error_for_status()
            .map_err(|e| ChatError::Transport(e.to_string()))?;
        let parsed: WireResponse = resp
            .json()
            .map_err(|e| ChatError::Transport(e.to_string()))?;
        parsed
            .choices
            .first()
            .map(|c| c.message.content.clone())
            .ok_or(ChatError::EmptyReply)
    }

    fn name(&self) -> &str {
        "http"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::detect_traversal;
    use crate::patchgen::diff::{apply_patch, parse_patch};
    use crate::patchgen::prompt::build_prompt;

    #[test]
    fn canned_guard_produces_applicable_diff() {
        let src = r#"var http = require("http"), url = require("url"), path = require("path"), fs = require("fs");
http.createServer(function(req, res) {
  var uri = url.parse(req.url).pathname;
  var filename = path.join(process.cwd(), uri);
  fs.readFile(filename, function(err, data) {
    if (err) { res.writeHead(404); res.end(); return; }
    res.writeHead(200);
    res.end(data);
  });
}).listen(8080);
"#;
        let finding = detect_traversal(src).unwrap();
        let bundle = build_prompt(src, &finding);
        let reply = CannedGuardLlm
            .complete(
                &[
                    ChatMessage::system(&bundle.system),
                    ChatMessage::user(&bundle.user),
                ],
                1.2,
            )
            .unwrap();
        let diff = parse_patch(&reply).unwrap();
        let patched = apply_patch(src, &diff, 10).unwrap();
        assert!(patched.contains("if (uri.includes('..'))"));
        // patched source is recognized as safe by the detector
        let verdict = detect_traversal(&patched).unwrap();
        assert_eq!(verdict.verdict, crate::detector::Verdict::Safe);
    }

    #[test]
    fn canned_guard_handles_comma_chained_declarations() {
        let src = r#"var http = require("http"), url = require("url"), path = require("path"), fs = require("fs");
http.createServer(function(request, response) {
  var uri = url.parse(request.url).pathname
    , filename = path.join(process.cwd(), uri);
  fs.readFile(filename, "binary", function(err, file) {
    response.writeHead(200);
    response.end(file);
  });
}).listen(8888);
"#;
        let finding = detect_traversal(src).unwrap();
        let bundle = build_prompt(src, &finding);
        let reply = CannedGuardLlm
            .complete(&[ChatMessage::user(&bundle.user)], 1.2)
            .unwrap();
        let diff = parse_patch(&reply).unwrap();
        let patched = apply_patch(src, &diff, 10).unwrap();
        // guard lands after the full declaration, not between declarators
        let guard_at = patched.find("if (uri.includes('..'))").unwrap();
        let decl_end = patched.find("process.cwd(), uri);").unwrap();
        assert!(guard_at > decl_end);
        assert_eq!(
            detect_traversal(&patched).unwrap().verdict,
            crate::detector::Verdict::Safe
        );
    }

    #[test]
    fn scripted_llm_replays_and_repeats() {
        let s = ScriptedLlm::new("s", vec!["one".into(), "two".into()]);
        let msg = [ChatMessage::user("x")];
        assert_eq!(s.complete(&msg, 1.0).unwrap(), "one");
        assert_eq!(s.complete(&msg, 1.0).unwrap(), "two");
        assert_eq!(s.complete(&msg, 1.0).unwrap(), "two");
        assert_eq!(s.calls_made(), 3);
    }
}
