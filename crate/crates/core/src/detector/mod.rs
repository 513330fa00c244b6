//! Static detection of the vulnerable static-file-server pattern.
//!
//! A single self-contained rule: request URL pathname, joined onto a base
//! directory, read from disk, with no traversal-blocking sanitizer in
//! between. No general-purpose JS parsing — just a total lexer and a
//! shallow flow walk tuned to the one pattern this pipeline hunts.

pub mod lexer;
mod taint;

pub use lexer::{tokenize_js, Token, TokenKind};
pub use taint::{count_sanitizer_calls, detect_traversal, handler_params};

use serde::{Deserialize, Serialize};

/// Inclusive 1-based line range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineSpan {
    pub start: u32,
    pub end: u32,
}

impl LineSpan {
    pub fn new(start: u32, end: u32) -> Self {
        Self { start, end }
    }
}

/// The recognized mitigation shapes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SanitizerKind {
    DotdotContainmentCheck,
    NormalizeAndCompare,
    RootPrefixCheck,
    AllowlistLookup,
}

impl SanitizerKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SanitizerKind::DotdotContainmentCheck => "dotdot-containment-check",
            SanitizerKind::NormalizeAndCompare => "normalize-and-compare",
            SanitizerKind::RootPrefixCheck => "root-prefix-check",
            SanitizerKind::AllowlistLookup => "allowlist-lookup",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Vulnerable,
    Safe,
}

/// Evidence of the source→join→sink flow in one file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaintFinding {
    /// Where the pathname is extracted from the request URL.
    pub source_span: LineSpan,
    /// Where it is concatenated with a base directory.
    pub join_span: LineSpan,
    /// The filesystem read the joined value reaches.
    pub sink_span: LineSpan,
    /// Sanitizers that actually guard the sink value (empty ⇒ vulnerable).
    pub sanitizers_seen: Vec<SanitizerKind>,
    pub verdict: Verdict,
}
