//! Patch synthesis: prompt, parse, apply, validate, retry.
//!
//! A patch is accepted only when four independent checks all pass against a
//! relaunched sandbox: the project still starts the same way, the benign
//! root request returns the recorded status, the full payload catalog no
//! longer reaches the flag, and the sanitizer really was added to the
//! pathname (counted before/after, so pre-existing `includes` calls don't
//! fool it).

pub mod diff;
pub mod prompt;
pub mod provider;

pub use diff::{apply_patch, parse_patch, DiffError, UnifiedDiff};
pub use prompt::{build_prompt, number_lines, strip_line_numbers, PromptBundle, PATCH_TEMPERATURE};
pub use provider::{ChatError, ChatMessage, ChatProvider, HttpChatProvider, ScriptedLlm};

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detector::{count_sanitizer_calls, TaintFinding};
use crate::exploit::{payload_catalog, send_raw_get, try_traversal, ProbeOptions};
use crate::sandbox::{provision, LaunchStrategy, SandboxOptions};

#[derive(Debug, Error)]
pub enum SynthesisError {
    #[error("retries exhausted after {attempts} attempts")]
    RetriesExhausted { attempts: u32 },
    #[error("sandbox: {0}")]
    Sandbox(#[from] crate::sandbox::SandboxError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// The four acceptance checks, in pipeline order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub same_run_strategy: bool,
    pub root_status_unchanged: bool,
    pub exploits_blocked: bool,
    pub sanitizer_added: bool,
}

impl ValidationReport {
    pub fn accepted(&self) -> bool {
        self.same_run_strategy
            && self.root_status_unchanged
            && self.exploits_blocked
            && self.sanitizer_added
    }

    pub fn rejected() -> Self {
        ValidationReport {
            same_run_strategy: false,
            root_status_unchanged: false,
            exploits_blocked: false,
            sanitizer_added: false,
        }
    }
}

/// An accepted (or final rejected) patch with its provenance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PatchBundle {
    pub diff: String,
    pub applied_source: String,
    pub attempts: u32,
    pub validation: ValidationReport,
    pub added_loc: u32,
    pub removed_loc: u32,
}

/// Everything validation needs to relaunch the candidate.
pub struct ValidationContext<'a> {
    pub project_dir: &'a Path,
    /// Candidate file, relative to the project root.
    pub entry: &'a Path,
    pub expected_strategy: LaunchStrategy,
    /// HTTP status of `GET /` recorded before patching.
    pub baseline_root_status: u16,
    pub sandbox_opts: &'a SandboxOptions,
    pub probe: &'a ProbeOptions,
}

/// Relaunch the patched project and run the four checks. Sandbox failures
/// surface as failed checks, never as acceptance.
pub fn validate_patch(
    ctx: &ValidationContext,
    original: &str,
    patched: &str,
) -> Result<ValidationReport, SynthesisError> {
    let sanitizer_added = count_sanitizer_calls(patched) > count_sanitizer_calls(original);

    // materialize the patched project
    let staging = tempfile::Builder::new()
        .prefix("patrol-patched-")
        .tempdir()?;
    let project = staging.path().join("project");
    crate::sandbox::copy_dir_public(ctx.project_dir, &project).map_err(SynthesisError::Io)?;
    fs::write(project.join(ctx.entry), patched)?;

    let mut report = ValidationReport {
        same_run_strategy: false,
        root_status_unchanged: false,
        exploits_blocked: false,
        sanitizer_added,
    };

    let mut sandbox = provision(&project, ctx.entry, ctx.sandbox_opts)?;
    let run = sandbox.launch()?;
    report.same_run_strategy = run.alive && run.strategy == ctx.expected_strategy;
    let Some(port) = sandbox.detect_port(&run) else {
        sandbox.teardown();
        return Ok(report);
    };

    if let Ok(resp) = send_raw_get(sandbox.loopback(), port, b"/", ctx.probe.request_timeout) {
        report.root_status_unchanged = resp.status == ctx.baseline_root_status;
    }

    let catalog = payload_catalog("flag.txt");
    match try_traversal(
        sandbox.loopback(),
        port,
        &sandbox.flag_nonce,
        &catalog,
        ctx.probe,
    ) {
        Ok(outcome) => report.exploits_blocked = !outcome.traversal,
        Err(_) => report.exploits_blocked = false,
    }
    sandbox.teardown();
    Ok(report)
}

/// Prompt → parse → apply → validate, retrying with the same configuration
/// until acceptance or the retry budget runs out.
pub fn synthesize(
    llm: &dyn ChatProvider,
    ctx: &ValidationContext,
    source: &str,
    finding: &TaintFinding,
    max_retries: u32,
) -> Result<PatchBundle, SynthesisError> {
    let bundle = build_prompt(source, finding);
    let messages = [
        ChatMessage::system(&bundle.system),
        ChatMessage::user(&bundle.user),
    ];
    let mut attempts = 0;
    while attempts < max_retries {
        attempts += 1;
        let reply = match llm.complete(&messages, bundle.temperature) {
            Ok(r) => r,
            Err(e) => {
                log::debug!("attempt {attempts}: provider error: {e}");
                continue;
            }
        };
        let parsed = match parse_patch(&reply) {
            Ok(d) => d,
            Err(e) => {
                log::debug!("attempt {attempts}: malformed diff: {e}");
                continue;
            }
        };
        let patched = match apply_patch(source, &parsed, 10) {
            Ok(p) => p,
            Err(e) => {
                log::debug!("attempt {attempts}: hunk placement failed: {e}");
                continue;
            }
        };
        let validation = validate_patch(ctx, source, &patched)?;
        if validation.accepted() {
            return Ok(PatchBundle {
                diff: parsed.render(),
                applied_source: patched,
                attempts,
                validation,
                added_loc: parsed.added_loc(),
                removed_loc: parsed.removed_loc(),
            });
        }
        log::debug!("attempt {attempts}: validation rejected: {validation:?}");
    }
    Err(SynthesisError::RetriesExhausted { attempts })
}
