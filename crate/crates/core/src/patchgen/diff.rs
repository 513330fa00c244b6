//! Unified diff parsing and fuzzy application.
//!
//! Model replies are messy: code fences, prose around the diff, line
//! numbers that are off by a few. Parsing accepts exactly one single-file
//! diff with real context lines; application tries the stated position,
//! then nearby offsets, then a whitespace-insensitive match.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DiffError {
    #[error("malformed diff: {0}")]
    Malformed(String),
    #[error("diff touches more than one file")]
    MultipleFiles,
    #[error("diff has no hunks")]
    NoHunks,
    #[error("hunk {0} has no context lines (whole-block rewrite rejected)")]
    NoContext(usize),
    #[error("hunk {index} does not apply (tried offsets within ±{fuzz})")]
    Unplaceable { index: usize, fuzz: i64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum HunkLine {
    Context(String),
    Remove(String),
    Add(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hunk {
    pub old_start: usize,
    pub old_count: usize,
    pub new_start: usize,
    pub new_count: usize,
    pub lines: Vec<HunkLine>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnifiedDiff {
    pub old_name: Option<String>,
    pub new_name: Option<String>,
    pub hunks: Vec<Hunk>,
}

impl UnifiedDiff {
    pub fn added_loc(&self) -> u32 {
        self.hunks
            .iter()
            .flat_map(|h| &h.lines)
            .filter(|l| matches!(l, HunkLine::Add(_)))
            .count() as u32
    }

    pub fn removed_loc(&self) -> u32 {
        self.hunks
            .iter()
            .flat_map(|h| &h.lines)
            .filter(|l| matches!(l, HunkLine::Remove(_)))
            .count() as u32
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "--- {}\n+++ {}\n",
            self.old_name.as_deref().unwrap_or("a/file"),
            self.new_name.as_deref().unwrap_or("b/file"),
        ));
        for h in &self.hunks {
            out.push_str(&format!(
                "@@ -{},{} +{},{} @@\n",
                h.old_start, h.old_count, h.new_start, h.new_count
            ));
            for line in &h.lines {
                match line {
                    HunkLine::Context(s) => out.push_str(&format!(" {s}\n")),
                    HunkLine::Remove(s) => out.push_str(&format!("-{s}\n")),
                    HunkLine::Add(s) => out.push_str(&format!("+{s}\n")),
                }
            }
        }
        out
    }
}

/// Extract exactly one unified diff from a model reply.
pub fn parse_patch(reply: &str) -> Result<UnifiedDiff, DiffError> {
    let body = strip_fences(reply);
    let lines: Vec<&str> = body.lines().collect();

    let mut old_name = None;
    let mut new_name = None;
    let mut hunks: Vec<Hunk> = Vec::new();
    let mut current: Option<Hunk> = None;
    let mut file_headers = 0usize;
    let mut git_headers = 0usize;

    for line in &lines {
        if let Some(rest) = line.strip_prefix("--- ") {
            if current.is_some() || !hunks.is_empty() {
                // a second file section after hunks began
                return Err(DiffError::MultipleFiles);
            }
            file_headers += 1;
            if file_headers > 1 {
                return Err(DiffError::MultipleFiles);
            }
            old_name = Some(rest.trim().to_string());
            continue;
        }
        if let Some(rest) = line.strip_prefix("+++ ") {
            new_name = Some(rest.trim().to_string());
            continue;
        }
        if line.starts_with("diff --git") {
            git_headers += 1;
            if git_headers > 1 {
                return Err(DiffError::MultipleFiles);
            }
            continue;
        }
        if line.starts_with("@@") {
            if let Some(h) = current.take() {
                hunks.push(h);
            }
            current = Some(parse_hunk_header(line)?);
            continue;
        }
        if let Some(h) = current.as_mut() {
            if let Some(text) = line.strip_prefix(' ') {
                h.lines.push(HunkLine::Context(text.to_string()));
            } else if let Some(text) = line.strip_prefix('-') {
                h.lines.push(HunkLine::Remove(text.to_string()));
            } else if let Some(text) = line.strip_prefix('+') {
                h.lines.push(HunkLine::Add(text.to_string()));
            } else if line.starts_with('\\') {
                // "\ No newline at end of file"
                continue;
            } else if line.is_empty() {
                // tolerate a blank context line that lost its leading space
                h.lines.push(HunkLine::Context(String::new()));
            } else {
                // prose after the diff: close the hunk and stop consuming
                hunks.push(current.take().unwrap());
            }
        }
    }
    if let Some(h) = current.take() {
        hunks.push(h);
    }
    if hunks.is_empty() {
        return Err(DiffError::NoHunks);
    }
    for (i, h) in hunks.iter_mut().enumerate() {
        let ctx = h
            .lines
            .iter()
            .filter(|l| matches!(l, HunkLine::Context(_)))
            .count();
        if ctx == 0 {
            return Err(DiffError::NoContext(i));
        }
        // trust the body over the header counts, models get those wrong
        h.old_count = h
            .lines
            .iter()
            .filter(|l| !matches!(l, HunkLine::Add(_)))
            .count();
        h.new_count = h
            .lines
            .iter()
            .filter(|l| !matches!(l, HunkLine::Remove(_)))
            .count();
    }
    Ok(UnifiedDiff {
        old_name,
        new_name,
        hunks,
    })
}

/// If the reply contains fenced blocks, search them for the diff first.
fn strip_fences(reply: &str) -> String {
    let mut blocks = Vec::new();
    let mut in_block = false;
    let mut cur = String::new();
    for line in reply.lines() {
        if line.trim_start().starts_with("```") {
            if in_block {
                blocks.push(cur.clone());
                cur.clear();
            }
            in_block = !in_block;
            continue;
        }
        if in_block {
            cur.push_str(line);
            cur.push('\n');
        }
    }
    for block in &blocks {
        if block.lines().any(|l| l.starts_with("@@")) {
            return block.clone();
        }
    }
    reply.to_string()
}

fn parse_hunk_header(line: &str) -> Result<Hunk, DiffError> {
    let err = || DiffError::Malformed(format!("bad hunk header: {line}"));
    let inner = line
        .strip_prefix("@@")
        .and_then(|s| s.find("@@").map(|at| &s[..at]))
        .ok_or_else(err)?
        .trim();
    let mut parts = inner.split_whitespace();
    let old = parts
        .next()
        .and_then(|s| s.strip_prefix('-'))
        .ok_or_else(err)?;
    let new = parts
        .next()
        .and_then(|s| s.strip_prefix('+'))
        .ok_or_else(err)?;
    let parse_pair = |s: &str| -> Result<(usize, usize), DiffError> {
        match s.split_once(',') {
            Some((a, b)) => Ok((a.parse().map_err(|_| err())?, b.parse().map_err(|_| err())?)),
            None => Ok((s.parse().map_err(|_| err())?, 1)),
        }
    };
    let (old_start, old_count) = parse_pair(old)?;
    let (new_start, new_count) = parse_pair(new)?;
    Ok(Hunk {
        old_start,
        old_count,
        new_start,
        new_count,
        lines: Vec::new(),
    })
}

/// Apply a parsed diff. `fuzz` is the maximum line-offset searched when the
/// stated position does not match.
pub fn apply_patch(source: &str, diff: &UnifiedDiff, fuzz: u32) -> Result<String, DiffError> {
    let had_trailing_newline = source.ends_with('\n');
    let mut lines: Vec<String> = source.lines().map(String::from).collect();
    let mut delta: i64 = 0;

    for (index, hunk) in diff.hunks.iter().enumerate() {
        let expected: Vec<&str> = hunk
            .lines
            .iter()
            .filter_map(|l| match l {
                HunkLine::Context(s) | HunkLine::Remove(s) => Some(s.as_str()),
                HunkLine::Add(_) => None,
            })
            .collect();
        let stated = hunk.old_start as i64 - 1 + delta;
        let at = find_position(&lines, &expected, stated, fuzz).ok_or(DiffError::Unplaceable {
            index,
            fuzz: fuzz as i64,
        })?;

        let replacement: Vec<String> = hunk
            .lines
            .iter()
            .filter_map(|l| match l {
                HunkLine::Context(s) | HunkLine::Add(s) => Some(s.clone()),
                HunkLine::Remove(_) => None,
            })
            .collect();
        let removed = expected.len();
        lines.splice(at..at + removed, replacement.iter().cloned());
        delta += replacement.len() as i64 - removed as i64;
    }

    let mut out = lines.join("\n");
    if had_trailing_newline {
        out.push('\n');
    }
    Ok(out)
}

fn find_position(lines: &[String], expected: &[&str], stated: i64, fuzz: u32) -> Option<usize> {
    let matches_at = |at: i64, ws_insensitive: bool| -> bool {
        if at < 0 || at as usize + expected.len() > lines.len() {
            return false;
        }
        expected.iter().enumerate().all(|(i, want)| {
            let got = &lines[at as usize + i];
            if ws_insensitive {
                got.trim() == want.trim()
            } else {
                got == want
            }
        })
    };
    // exact content match, nearest offset first
    for d in 0..=fuzz as i64 {
        for at in [stated + d, stated - d] {
            if matches_at(at, false) {
                return Some(at as usize);
            }
        }
    }
    // last resort: ignore leading/trailing whitespace
    for d in 0..=fuzz as i64 {
        for at in [stated + d, stated - d] {
            if matches_at(at, true) {
                return Some(at as usize);
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    const SOURCE: &str = "alpha\nbravo\ncharlie\ndelta\necho\nfoxtrot\n";

    fn guard_diff(old_start: usize) -> String {
        format!(
            "--- a/server.js\n+++ b/server.js\n@@ -{old_start},2 +{old_start},3 @@\n bravo\n+INSERTED\n charlie\n"
        )
    }

    #[test]
    fn exact_line_diff_applies() {
        let diff = parse_patch(&guard_diff(2)).unwrap();
        let out = apply_patch(SOURCE, &diff, 10).unwrap();
        assert_eq!(
            out,
            "alpha\nbravo\nINSERTED\ncharlie\ndelta\necho\nfoxtrot\n"
        );
        assert_eq!(diff.added_loc(), 1);
        assert_eq!(diff.removed_loc(), 0);
    }

    #[test]
    fn shifted_line_numbers_apply_via_offset_search() {
        // stated three lines late, content match wins
        let diff = parse_patch(&guard_diff(5)).unwrap();
        let out = apply_patch(SOURCE, &diff, 10).unwrap();
        assert!(out.contains("bravo\nINSERTED\ncharlie"));
    }

    #[test]
    fn nonexistent_context_is_unplaceable() {
        let diff =
            parse_patch("--- a/f\n+++ b/f\n@@ -2,2 +2,3 @@\n NOT-THERE\n+X\n NOPE\n").unwrap();
        let err = apply_patch(SOURCE, &diff, 10).unwrap_err();
        assert!(matches!(err, DiffError::Unplaceable { .. }));
    }

    #[test]
    fn whitespace_insensitive_fallback() {
        let diff =
            parse_patch("--- a/f\n+++ b/f\n@@ -2,2 +2,3 @@\n   bravo\n+INSERTED\n charlie  \n")
                .unwrap();
        let out = apply_patch(SOURCE, &diff, 10).unwrap();
        assert!(out.contains("INSERTED"));
    }

    #[test]
    fn fenced_reply_is_unwrapped() {
        let reply = format!(
            "Here is the patch:\n\n```diff\n{}```\n\nThis inserts a guard.",
            guard_diff(2)
        );
        let diff = parse_patch(&reply).unwrap();
        assert_eq!(diff.hunks.len(), 1);
    }

    #[test]
    fn prose_only_reply_is_rejected() {
        assert_eq!(
            parse_patch("I cannot help with that request."),
            Err(DiffError::NoHunks)
        );
    }

    #[test]
    fn multi_file_diff_is_rejected() {
        let two = "--- a/x\n+++ b/x\n@@ -1,1 +1,2 @@\n a\n+b\n--- a/y\n+++ b/y\n@@ -1,1 +1,2 @@\n c\n+d\n";
        assert_eq!(parse_patch(two), Err(DiffError::MultipleFiles));
    }

    #[test]
    fn whole_file_rewrite_is_rejected() {
        let rewrite = "--- a/x\n+++ b/x\n@@ -1,3 +1,2 @@\n-alpha\n-bravo\n-charlie\n+NEW\n+FILE\n";
        assert_eq!(parse_patch(rewrite), Err(DiffError::NoContext(0)));
    }

    #[test]
    fn multiple_hunks_apply_with_cumulative_delta() {
        let diff = parse_patch(
            "--- a/f\n+++ b/f\n@@ -1,2 +1,3 @@\n alpha\n+ONE\n bravo\n@@ -5,2 +6,3 @@\n echo\n+TWO\n foxtrot\n",
        )
        .unwrap();
        let out = apply_patch(SOURCE, &diff, 10).unwrap();
        assert_eq!(
            out,
            "alpha\nONE\nbravo\ncharlie\ndelta\necho\nTWO\nfoxtrot\n"
        );
    }

    #[test]
    fn trailing_prose_after_diff_is_tolerated() {
        let reply = format!("{}\nThat guard blocks traversal attempts.\n", guard_diff(2));
        let diff = parse_patch(&reply).unwrap();
        assert_eq!(diff.hunks.len(), 1);
        assert_eq!(diff.added_loc(), 1);
    }
}
