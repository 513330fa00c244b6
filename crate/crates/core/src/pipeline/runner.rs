//! Stage executors and the end-to-end pipeline driver.
//!
//! Each stage reads the journal projection, handles only candidates in the
//! state it owns, and appends one transition per candidate. Rerunning any
//! stage (or the whole pipeline) over an existing journal therefore skips
//! finished work — resumability is journal replay, not checkpoint files.

use std::path::PathBuf;
use std::sync::atomic::{AtomicU32, Ordering};
use std::sync::Mutex;

use chrono::{NaiveDate, Utc};
use thiserror::Error;

use crate::corpus::{search_exhaustive, DedupStore, MinerConfig, SearchProvider, SearchQuery};
use crate::cvss::infer_metrics;
use crate::detector::{detect_traversal, Verdict};
use crate::disclosure::{
    classify_disclosure, issue_body, issue_title, DisclosureAction, DisclosureArtifact, Forge,
    ForgeError, PrStatus,
};
use crate::exploit::{
    determine_attack_vector, payload_catalog, send_raw_get, try_dos, AttackVectorKind,
    ExploitOutcome, ProbeOptions,
};
use crate::journal::{
    project, Artifacts, CandidateId, CandidateMeta, CandidateRecord, Journal, JournalError,
    PatchArtifact, Record, RunArtifact,
};
use crate::patchgen::{synthesize, ChatProvider, SynthesisError, ValidationContext};
use crate::pipeline::state::{advance, CandidateState, StateEvent};
use crate::pipeline::stats::{stats_from_records, PipelineStats};
use crate::sandbox::{provision, SandboxOptions};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("journal: {0}")]
    Journal(#[from] JournalError),
    #[error("provider: {0}")]
    Provider(#[from] crate::corpus::ProviderError),
    #[error("sandbox: {0}")]
    Sandbox(#[from] crate::sandbox::SandboxError),
    #[error("synthesis: {0}")]
    Synthesis(#[from] SynthesisError),
    #[error("forge: {0}")]
    Forge(#[from] ForgeError),
    #[error("project source: {0}")]
    ProjectSource(String),
    #[error("halted by fault injection after {0} appends")]
    Halted(u32),
    #[error("illegal transition: {0}")]
    IllegalTransition(#[from] crate::pipeline::state::IllegalTransition),
}

/// Where candidate project trees come from.
pub trait ProjectSource: Send + Sync {
    fn project_dir(&self, meta: &CandidateMeta) -> Result<PathBuf, PipelineError>;
}

/// Projects laid out as `<root>/<repo_id>/…` (the synthetic corpus).
pub struct DirProjectSource(pub PathBuf);

impl ProjectSource for DirProjectSource {
    fn project_dir(&self, meta: &CandidateMeta) -> Result<PathBuf, PipelineError> {
        let dir = self.0.join(&meta.repo_id);
        if !dir.is_dir() {
            return Err(PipelineError::ProjectSource(format!(
                "no project directory for {} under {}",
                meta.repo_id,
                self.0.display()
            )));
        }
        Ok(dir)
    }
}

/// Clones real repositories into a cache with the git CLI.
pub struct GitCloneSource {
    pub cache: PathBuf,
}

impl ProjectSource for GitCloneSource {
    fn project_dir(&self, meta: &CandidateMeta) -> Result<PathBuf, PipelineError> {
        let safe = meta.repo_id.replace('/', "__");
        let dir = self.cache.join(safe);
        if dir.is_dir() {
            return Ok(dir);
        }
        std::fs::create_dir_all(&self.cache)
            .map_err(|e| PipelineError::ProjectSource(e.to_string()))?;
        let url = format!("https://github.com/{}.git", meta.repo_id);
        let status = std::process::Command::new("git")
            .args(["clone", "--depth", "1", &url])
            .arg(&dir)
            .status()
            .map_err(|e| PipelineError::ProjectSource(format!("git: {e}")))?;
        if !status.success() {
            return Err(PipelineError::ProjectSource(format!(
                "clone of {} failed",
                meta.repo_id
            )));
        }
        Ok(dir)
    }
}

/// Serialized journal appender with fault injection: after the configured
/// number of appends it refuses further writes, simulating a hard kill.
pub struct Appender<'a> {
    journal: &'a Journal,
    appended: AtomicU32,
    halt_after: Option<u32>,
}

impl<'a> Appender<'a> {
    pub fn new(journal: &'a Journal, halt_after: Option<u32>) -> Self {
        Appender {
            journal,
            appended: AtomicU32::new(0),
            halt_after,
        }
    }

    pub fn append(&self, record: &Record) -> Result<(), PipelineError> {
        let n = self.appended.fetch_add(1, Ordering::SeqCst);
        if let Some(limit) = self.halt_after {
            if n >= limit {
                return Err(PipelineError::Halted(n));
            }
        }
        self.journal.append(record)?;
        Ok(())
    }

    /// Validated state transition.
    pub fn transition(
        &self,
        id: &CandidateId,
        from: CandidateState,
        event: StateEvent,
        artifacts: Artifacts,
    ) -> Result<CandidateState, PipelineError> {
        let to = advance(from, event)?;
        self.append(&Record::Transition {
            id: id.clone(),
            from,
            to,
            event,
            ts: Utc::now(),
            artifacts,
        })?;
        Ok(to)
    }
}

#[derive(Debug, Clone)]
pub struct StageOptions {
    pub sandbox: SandboxOptions,
    pub probe: ProbeOptions,
    pub parallel: usize,
    pub max_patch_retries: u32,
    /// Policy clock, explicit so tests control time.
    pub now: NaiveDate,
    pub survey_url: Option<String>,
}

impl Default for StageOptions {
    fn default() -> Self {
        StageOptions {
            sandbox: SandboxOptions::default(),
            probe: ProbeOptions::default(),
            parallel: 4,
            max_patch_retries: 20,
            now: Utc::now().date_naive(),
            survey_url: None,
        }
    }
}

/// Order-preserving bounded-parallel map.
fn parallel_map<T, R, F>(items: Vec<T>, workers: usize, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync,
{
    let workers = workers.max(1);
    if workers == 1 || items.len() <= 1 {
        return items.into_iter().map(f).collect();
    }
    let queue: Mutex<Vec<(usize, T)>> = Mutex::new(items.into_iter().enumerate().rev().collect());
    let results: Mutex<Vec<(usize, R)>> = Mutex::new(Vec::new());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let next = queue.lock().unwrap().pop();
                match next {
                    Some((idx, item)) => {
                        let r = f(item);
                        results.lock().unwrap().push((idx, r));
                    }
                    None => break,
                }
            });
        }
    });
    let mut results = results.into_inner().unwrap();
    results.sort_by_key(|(idx, _)| *idx);
    results.into_iter().map(|(_, r)| r).collect()
}

fn candidates_in(
    journal: &Journal,
    states: &[CandidateState],
) -> Result<Vec<CandidateRecord>, PipelineError> {
    let (records, _) = journal.replay()?;
    Ok(project(&records)
        .into_iter()
        .filter(|c| states.contains(&c.state))
        .collect())
}

// --- mine --------------------------------------------------------------------

/// Discover candidates. Skipped entirely (zero provider calls) when the
/// journal already carries a completion marker for the same keyword set;
/// `force` overrides.
pub fn stage_mine(
    appender: &Appender,
    provider: &dyn SearchProvider,
    query: &SearchQuery,
    miner_cfg: &MinerConfig,
    force: bool,
) -> Result<u32, PipelineError> {
    let journal = appender.journal;
    let (records, _) = journal.replay()?;
    if !force {
        let done = records.iter().any(
            |r| matches!(r, Record::MineComplete { keywords, .. } if keywords == query.keywords()),
        );
        if done {
            log::info!("mining already complete for this keyword set; skipping");
            return Ok(0);
        }
    }
    let known_urls: Vec<String> = records
        .iter()
        .filter_map(|r| match r {
            Record::Candidate { meta, .. } => Some(meta.file_url.clone()),
            _ => None,
        })
        .collect();
    let mut store = DedupStore::preload(known_urls);
    let outcome = search_exhaustive(provider, query, &mut store, miner_cfg)?;
    if outcome.unreachable_remainder > 0 {
        log::warn!(
            "unreachable remainder: {} documents beyond any refinement",
            outcome.unreachable_remainder
        );
    }
    let blobs = journal.blobs();
    let mut registered = 0;
    for hit in &outcome.candidates {
        let id = CandidateId::from_file_url(&hit.file_url);
        let content_blob = if hit.content.is_empty() {
            String::new()
        } else {
            blobs.put(hit.content.as_bytes())?
        };
        appender.append(&Record::Candidate {
            id: id.clone(),
            meta: CandidateMeta::from_hit(hit),
            content_blob: content_blob.clone(),
            ts: Utc::now(),
        })?;
        if !content_blob.is_empty() {
            appender.transition(
                &id,
                CandidateState::Discovered,
                StateEvent::Downloaded,
                Artifacts::default(),
            )?;
        }
        registered += 1;
    }
    appender.append(&Record::MineComplete {
        keywords: query.keywords().to_vec(),
        ts: Utc::now(),
    })?;
    Ok(registered)
}

// --- scan --------------------------------------------------------------------

/// Static detection over downloaded candidates.
pub fn stage_scan(appender: &Appender, opts: &StageOptions) -> Result<u32, PipelineError> {
    let journal = appender.journal;
    let blobs = journal.blobs();
    let candidates = candidates_in(journal, &[CandidateState::Downloaded])?;
    let scanned = parallel_map(candidates, opts.parallel, |cr| {
        let content = blobs.get_string(&cr.content_blob).unwrap_or_default();
        let finding = detect_traversal(&content);
        (cr, finding)
    });
    let mut processed = 0;
    for (cr, finding) in scanned {
        let (event, artifacts) = match finding {
            Some(f) if f.verdict == Verdict::Vulnerable => (
                StateEvent::SastVuln,
                Artifacts {
                    finding: Some(f),
                    ..Artifacts::default()
                },
            ),
            Some(f) => (
                StateEvent::SastSafe,
                Artifacts {
                    finding: Some(f),
                    ..Artifacts::default()
                },
            ),
            None => (StateEvent::SastSafe, Artifacts::default()),
        };
        appender.transition(&cr.id, cr.state, event, artifacts)?;
        processed += 1;
    }
    Ok(processed)
}

// --- run ---------------------------------------------------------------------

/// Launch statically vulnerable candidates and record how they run.
pub fn stage_run(
    appender: &Appender,
    projects: &dyn ProjectSource,
    opts: &StageOptions,
) -> Result<u32, PipelineError> {
    let candidates = candidates_in(appender.journal, &[CandidateState::SastVuln])?;
    let results = parallel_map(candidates, opts.parallel, |cr| {
        let run = run_candidate(&cr, projects, opts);
        (cr, run)
    });
    let mut processed = 0;
    for (cr, run) in results {
        if run.is_ok() {
            if let Ok(project_dir) = projects.project_dir(&cr.meta) {
                if let Some(history) = crate::pipeline::history::GitHistory::open(&project_dir) {
                    let year = crate::pipeline::vuln_intro_date(&history, &cr.meta.file_path);
                    if year.is_some() {
                        appender.append(&Record::Annotation {
                            id: cr.id.clone(),
                            intro_year: year,
                            disclosure: None,
                            ts: Utc::now(),
                        })?;
                    }
                }
            }
        }
        let (event, artifacts) = match run {
            Ok(artifact) => (
                StateEvent::RunOk,
                Artifacts {
                    run: Some(artifact),
                    ..Artifacts::default()
                },
            ),
            Err(note) => (
                StateEvent::RunFail,
                Artifacts {
                    note: Some(note),
                    ..Artifacts::default()
                },
            ),
        };
        appender.transition(&cr.id, cr.state, event, artifacts)?;
        processed += 1;
    }
    Ok(processed)
}

fn run_candidate(
    cr: &CandidateRecord,
    projects: &dyn ProjectSource,
    opts: &StageOptions,
) -> Result<RunArtifact, String> {
    let project_dir = projects
        .project_dir(&cr.meta)
        .map_err(|e| format!("project source: {e}"))?;
    let entry = PathBuf::from(&cr.meta.file_path);
    let mut sandbox =
        provision(&project_dir, &entry, &opts.sandbox).map_err(|e| format!("provision: {e}"))?;
    let run = sandbox.launch().map_err(|e| format!("launch: {e}"))?;
    if !run.alive {
        sandbox.teardown();
        return Err(format!(
            "no strategy kept the process alive\n{}",
            run.startup_log
        ));
    }
    let Some(port) = sandbox.detect_port(&run) else {
        sandbox.teardown();
        return Err("process alive but no listening port within grace".into());
    };
    let baseline = send_raw_get(sandbox.loopback(), port, b"/", opts.probe.request_timeout)
        .map(|r| r.status)
        .unwrap_or(0);
    sandbox.teardown();
    Ok(RunArtifact {
        strategy: run.strategy,
        port,
        baseline_root_status: baseline,
    })
}

// --- exploit -----------------------------------------------------------------

/// Prove (or fail to prove) exploitability for runnable candidates.
pub fn stage_exploit(
    appender: &Appender,
    projects: &dyn ProjectSource,
    opts: &StageOptions,
) -> Result<u32, PipelineError> {
    let candidates = candidates_in(appender.journal, &[CandidateState::RunOk])?;
    let results = parallel_map(candidates, opts.parallel, |cr| {
        let outcome = exploit_candidate(&cr, projects, opts);
        (cr, outcome)
    });
    let mut processed = 0;
    for (cr, outcome) in results {
        let (event, artifacts) = match outcome {
            Ok(o) if o.traversal => (
                StateEvent::ExploitSuccess,
                Artifacts {
                    outcome: Some(o),
                    ..Artifacts::default()
                },
            ),
            Ok(o) => (
                StateEvent::ExploitFail,
                Artifacts {
                    outcome: Some(o),
                    ..Artifacts::default()
                },
            ),
            Err(note) => (
                StateEvent::ExploitFail,
                Artifacts {
                    note: Some(note),
                    ..Artifacts::default()
                },
            ),
        };
        appender.transition(&cr.id, cr.state, event, artifacts)?;
        processed += 1;
    }
    Ok(processed)
}

fn exploit_candidate(
    cr: &CandidateRecord,
    projects: &dyn ProjectSource,
    opts: &StageOptions,
) -> Result<ExploitOutcome, String> {
    let project_dir = projects
        .project_dir(&cr.meta)
        .map_err(|e| format!("project source: {e}"))?;
    let entry = PathBuf::from(&cr.meta.file_path);

    let mut sandbox =
        provision(&project_dir, &entry, &opts.sandbox).map_err(|e| format!("provision: {e}"))?;
    let run = sandbox.launch().map_err(|e| format!("launch: {e}"))?;
    let Some(port) = sandbox.detect_port(&run) else {
        sandbox.teardown();
        return Err("endpoint unavailable on exploit relaunch".into());
    };
    let catalog = payload_catalog("flag.txt");
    let (av, mut outcome) =
        match determine_attack_vector(&sandbox, port, &sandbox.flag_nonce, &catalog, &opts.probe) {
            Ok(pair) => pair,
            Err(e) => {
                sandbox.teardown();
                return Err(format!("unstable during probing: {e}"));
            }
        };
    sandbox.teardown();
    if av == AttackVectorKind::None {
        return Ok(ExploitOutcome::not_exploited());
    }

    // DoS probe on a fresh capped sandbox, same launch method
    let winning = outcome
        .winning_payload
        .clone()
        .expect("traversal implies payload");
    let mut dos_opts = opts.sandbox.clone();
    dos_opts.dos_mode = true;
    match provision(&project_dir, &entry, &dos_opts) {
        Ok(mut dos_sandbox) => {
            let dos = match dos_sandbox.launch() {
                Ok(dos_run) if dos_run.alive => match dos_sandbox.detect_port(&dos_run) {
                    Some(dos_port) => try_dos(&mut dos_sandbox, dos_port, &winning, &opts.probe),
                    None => false,
                },
                _ => false,
            };
            dos_sandbox.teardown();
            outcome.dos = dos;
        }
        Err(e) => {
            log::warn!("dos provisioning failed for {}: {e}", cr.meta.repo_id);
            outcome.dos = false;
        }
    }
    Ok(outcome)
}

// --- patch -------------------------------------------------------------------

/// Synthesize and validate patches for exploited candidates.
pub fn stage_patch(
    appender: &Appender,
    projects: &dyn ProjectSource,
    llm: &dyn ChatProvider,
    opts: &StageOptions,
) -> Result<u32, PipelineError> {
    let journal = appender.journal;
    let blobs = journal.blobs();
    let candidates = candidates_in(journal, &[CandidateState::Exploited])?;
    let results = parallel_map(candidates, opts.parallel, |cr| {
        let patched = patch_candidate(&cr, projects, llm, opts);
        (cr, patched)
    });
    let mut processed = 0;
    for (cr, patched) in results {
        let (event, artifacts) = match patched {
            Ok(bundle) => {
                let diff_blob = blobs.put(bundle.diff.as_bytes())?;
                // also keep a plain unified-diff file next to the journal
                let diff_dir = journal
                    .path()
                    .parent()
                    .unwrap_or_else(|| std::path::Path::new("."))
                    .join("diffs");
                std::fs::create_dir_all(&diff_dir).map_err(JournalError::Io)?;
                let name = cr.meta.repo_id.replace('/', "__");
                std::fs::write(diff_dir.join(format!("{name}.diff")), &bundle.diff)
                    .map_err(JournalError::Io)?;
                (
                    StateEvent::PatchAccepted,
                    Artifacts {
                        patch: Some(PatchArtifact {
                            diff_blob,
                            attempts: bundle.attempts,
                            validation: bundle.validation,
                            added_loc: bundle.added_loc,
                            removed_loc: bundle.removed_loc,
                        }),
                        ..Artifacts::default()
                    },
                )
            }
            Err(PatchFailure::Exhausted(attempts)) => (
                StateEvent::PatchFailed,
                Artifacts {
                    patch: Some(PatchArtifact {
                        diff_blob: String::new(),
                        attempts,
                        validation: crate::patchgen::ValidationReport::rejected(),
                        added_loc: 0,
                        removed_loc: 0,
                    }),
                    ..Artifacts::default()
                },
            ),
            Err(PatchFailure::Other(note)) => (
                StateEvent::PatchFailed,
                Artifacts {
                    note: Some(note),
                    ..Artifacts::default()
                },
            ),
        };
        appender.transition(&cr.id, cr.state, event, artifacts)?;
        processed += 1;
    }
    Ok(processed)
}

enum PatchFailure {
    Exhausted(u32),
    Other(String),
}

fn patch_candidate(
    cr: &CandidateRecord,
    projects: &dyn ProjectSource,
    llm: &dyn ChatProvider,
    opts: &StageOptions,
) -> Result<crate::patchgen::PatchBundle, PatchFailure> {
    let run = cr
        .run
        .as_ref()
        .ok_or_else(|| PatchFailure::Other("missing run artifact".into()))?;
    let finding = cr
        .finding
        .as_ref()
        .ok_or_else(|| PatchFailure::Other("missing finding".into()))?;
    let project_dir = projects
        .project_dir(&cr.meta)
        .map_err(|e| PatchFailure::Other(e.to_string()))?;
    let source = std::fs::read_to_string(project_dir.join(&cr.meta.file_path))
        .map_err(|e| PatchFailure::Other(format!("read source: {e}")))?;
    let entry = PathBuf::from(&cr.meta.file_path);
    let ctx = ValidationContext {
        project_dir: &project_dir,
        entry: &entry,
        expected_strategy: run.strategy,
        baseline_root_status: run.baseline_root_status,
        sandbox_opts: &opts.sandbox,
        probe: &opts.probe,
    };
    match synthesize(llm, &ctx, &source, finding, opts.max_patch_retries) {
        Ok(bundle) => Ok(bundle),
        Err(SynthesisError::RetriesExhausted { attempts }) => {
            Err(PatchFailure::Exhausted(attempts))
        }
        Err(e) => Err(PatchFailure::Other(e.to_string())),
    }
}

// --- report ------------------------------------------------------------------

/// Apply the disclosure policy and drive the forge for exploited candidates
/// that have a patch verdict. Forge calls are strictly sequential.
pub fn stage_report(
    appender: &Appender,
    forge: &mut dyn Forge,
    opts: &StageOptions,
) -> Result<u32, PipelineError> {
    let journal = appender.journal;
    let blobs = journal.blobs();
    let candidates = candidates_in(
        journal,
        &[CandidateState::Patched, CandidateState::PatchFailed],
    )?;
    let mut processed = 0;
    for cr in candidates {
        let Some(outcome) = cr.outcome.as_ref().filter(|o| o.traversal) else {
            // unreachable by the state machine, but never disclose unverified
            log::error!(
                "{} in {} without exploit outcome; skipping",
                cr.id,
                cr.state
            );
            continue;
        };
        let plan = classify_disclosure(cr.meta.stars, cr.meta.last_commit, opts.now);
        let vector = infer_metrics(outcome).expect("exploited candidates score");
        let score = vector.base_score();

        let diff_text = cr
            .patch
            .as_ref()
            .filter(|p| p.validation.accepted())
            .and_then(|p| blobs.get_string(&p.diff_blob).ok());
        let finding = cr.finding.clone().unwrap_or(crate::detector::TaintFinding {
            source_span: crate::detector::LineSpan::new(0, 0),
            join_span: crate::detector::LineSpan::new(0, 0),
            sink_span: crate::detector::LineSpan::new(0, 0),
            sanitizers_seen: vec![],
            verdict: Verdict::Vulnerable,
        });
        let report_md = crate::disclosure::render_report(&crate::disclosure::ReportInputs {
            repo_id: &cr.meta.repo_id,
            file_path: &cr.meta.file_path,
            finding: &finding,
            outcome,
            vector: &vector,
            score,
            diff: diff_text.as_deref(),
            survey_url: opts.survey_url.as_deref(),
        });
        let report_blob = blobs.put(report_md.as_bytes())?;

        let mut artifact = DisclosureArtifact {
            action: plan.action,
            reason: plan.reason.clone(),
            cvss_vector: vector.vector_string(),
            cvss_score_tenths: score.tenths(),
            report_blob,
            issue_id: None,
            issue_opened_at: None,
            pr_id: None,
            pr_opened_at: None,
            fixed_at: None,
            pr_status: PrStatus::None,
        };

        let event = match plan.action {
            DisclosureAction::Skip => StateEvent::ReportSkipped,
            DisclosureAction::PrivateManual => {
                // manual path: report file on disk, never a forge call
                let dir = journal
                    .path()
                    .parent()
                    .unwrap_or_else(|| std::path::Path::new("."))
                    .join("reports");
                std::fs::create_dir_all(&dir).map_err(JournalError::Io)?;
                let name = cr.meta.repo_id.replace('/', "__");
                std::fs::write(dir.join(format!("{name}.md")), &report_md)
                    .map_err(JournalError::Io)?;
                StateEvent::ReportSent
            }
            DisclosureAction::IssueThenPr => {
                let title = issue_title(&cr.id.0);
                match forge.open_issue(&cr.meta.repo_id, &title, &issue_body()) {
                    Ok(issue_id) => {
                        artifact.issue_id = Some(issue_id);
                        artifact.issue_opened_at = Some(opts.now);
                    }
                    Err(ForgeError::Duplicate { existing }) => {
                        // already opened in an interrupted run; adopt it
                        artifact.issue_id = Some(existing);
                        artifact.issue_opened_at = Some(opts.now);
                    }
                    Err(e) => {
                        log::error!("forge rejected issue for {}: {e}", cr.meta.repo_id);
                        appender.transition(
                            &cr.id,
                            cr.state,
                            StateEvent::ReportSkipped,
                            Artifacts {
                                note: Some(format!("forge rejection: {e}")),
                                disclosure: Some(artifact),
                                ..Artifacts::default()
                            },
                        )?;
                        processed += 1;
                        continue;
                    }
                }
                StateEvent::ReportSent
            }
        };
        appender.transition(
            &cr.id,
            cr.state,
            event,
            Artifacts {
                disclosure: Some(artifact),
                ..Artifacts::default()
            },
        )?;
        processed += 1;
    }
    Ok(processed)
}

/// The 30-day escalation pass over reported cases.
pub fn stage_escalate(
    appender: &Appender,
    forge: &mut dyn Forge,
    now: NaiveDate,
) -> Result<u32, PipelineError> {
    let journal = appender.journal;
    let blobs = journal.blobs();
    let candidates = candidates_in(journal, &[CandidateState::Reported])?;
    let mut acted = 0;
    for cr in candidates {
        let Some(mut case) = cr.disclosure.clone() else {
            continue;
        };
        if case.action != DisclosureAction::IssueThenPr {
            continue;
        }
        let report_md = blobs.get_string(&case.report_blob).unwrap_or_default();
        let diff_text = cr
            .patch
            .as_ref()
            .filter(|p| p.validation.accepted())
            .and_then(|p| blobs.get_string(&p.diff_blob).ok());
        let outcome = crate::disclosure::escalate(
            forge,
            &mut case,
            &cr.meta.repo_id,
            &cr.meta.file_path,
            &cr.id.0,
            diff_text.as_deref(),
            &report_md,
            now,
        )?;
        match outcome {
            crate::disclosure::EscalationOutcome::PrOpened(_) => {
                appender.append(&Record::Annotation {
                    id: cr.id.clone(),
                    intro_year: None,
                    disclosure: Some(case),
                    ts: Utc::now(),
                })?;
                acted += 1;
            }
            crate::disclosure::EscalationOutcome::AlreadyFixed => {
                appender.transition(
                    &cr.id,
                    cr.state,
                    StateEvent::FixedConfirmed,
                    Artifacts {
                        disclosure: Some(case),
                        ..Artifacts::default()
                    },
                )?;
                acted += 1;
            }
            crate::disclosure::EscalationOutcome::NoAction => {}
        }
    }
    Ok(acted)
}

/// Poll remediation status: re-check files and PR states for open cases.
pub fn stage_status(
    appender: &Appender,
    forge: &mut dyn Forge,
    now: NaiveDate,
) -> Result<u32, PipelineError> {
    let journal = appender.journal;
    let candidates = candidates_in(journal, &[CandidateState::Reported])?;
    let mut updated = 0;
    for cr in candidates {
        let Some(mut case) = cr.disclosure.clone() else {
            continue;
        };
        if let (Some(pr_id), PrStatus::Open) = (case.pr_id, case.pr_status) {
            if let Ok(state) = forge.pr_state(&cr.meta.repo_id, pr_id) {
                case.pr_status = match state {
                    crate::disclosure::PrState::Open => PrStatus::Open,
                    crate::disclosure::PrState::Accepted => PrStatus::Accepted,
                    crate::disclosure::PrState::Closed => PrStatus::Closed,
                };
            }
        }
        match crate::disclosure::check_fixed(forge, &cr.meta.repo_id, &cr.meta.file_path) {
            Ok(true) => {
                case.fixed_at = Some(now);
                appender.transition(
                    &cr.id,
                    cr.state,
                    StateEvent::FixedConfirmed,
                    Artifacts {
                        disclosure: Some(case),
                        ..Artifacts::default()
                    },
                )?;
                updated += 1;
            }
            Ok(false) | Err(_) => {
                if cr.disclosure.as_ref() != Some(&case) {
                    appender.append(&Record::Annotation {
                        id: cr.id.clone(),
                        intro_year: None,
                        disclosure: Some(case),
                        ts: Utc::now(),
                    })?;
                    updated += 1;
                }
            }
        }
    }
    Ok(updated)
}

// --- full pipeline -------------------------------------------------------------

pub struct PipelineInputs<'a> {
    pub journal: &'a Journal,
    pub search: &'a dyn SearchProvider,
    pub query: SearchQuery,
    pub miner: MinerConfig,
    pub projects: &'a dyn ProjectSource,
    pub llm: &'a dyn ChatProvider,
    pub forge: &'a mut dyn Forge,
    pub opts: StageOptions,
    pub halt_after: Option<u32>,
}

/// Drive every stage in order and return the recomputed statistics.
pub fn run_pipeline(inputs: PipelineInputs) -> Result<PipelineStats, PipelineError> {
    let appender = Appender::new(inputs.journal, inputs.halt_after);
    stage_mine(
        &appender,
        inputs.search,
        &inputs.query,
        &inputs.miner,
        false,
    )?;
    stage_scan(&appender, &inputs.opts)?;
    stage_run(&appender, inputs.projects, &inputs.opts)?;
    stage_exploit(&appender, inputs.projects, &inputs.opts)?;
    stage_patch(&appender, inputs.projects, inputs.llm, &inputs.opts)?;
    stage_report(&appender, inputs.forge, &inputs.opts)?;
    let (records, corrupt) = inputs.journal.replay()?;
    Ok(stats_from_records(&records, corrupt))
}
