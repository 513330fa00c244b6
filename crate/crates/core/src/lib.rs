//! Pipeline for detecting, proving, patching, scoring, and reporting a
//! path traversal pattern in Node.js static file servers.
//!
//! The stages form a funnel: candidate files are mined from a code search
//! provider, statically screened for the vulnerable source/sink pattern,
//! executed in a sandbox, exploited over raw HTTP, patched through a
//! chat-completion provider, scored with CVSS v3.1, and finally routed
//! through a staged disclosure policy. Every stage can only shrink the
//! candidate set, and every transition is journaled so runs are resumable.

pub mod config;
pub mod corpus;
pub mod cvss;
pub mod detector;
pub mod disclosure;
pub mod exploit;
pub mod journal;
pub mod patchgen;
pub mod pipeline;
pub mod sandbox;
