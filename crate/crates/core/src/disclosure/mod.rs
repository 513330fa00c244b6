//! Staged disclosure policy and remediation tracking.
//!
//! Popular projects (200+ stars) are handled off-forge: a report file is
//! written for manual delivery through a private channel, because opening
//! issues on widely watched repositories tips off exactly the wrong
//! audience. Maintained mid-tier projects get an issue first — with no
//! exploit details, only a request for a private channel — and a pull
//! request with the fix if nothing happens for 30 days. Tiny or abandoned
//! projects are skipped.

pub mod forge;
pub mod report;

pub use forge::{Forge, ForgeError, GithubForge, MockForge, PrState};
pub use report::{render_report, ReportInputs};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::detector::detect_traversal;
use crate::detector::Verdict;

/// Stars at and above which disclosure goes through a private channel.
pub const PRIVATE_MANUAL_STARS: u32 = 200;
/// Strictly more stars than this are required for any forge contact.
pub const MIN_STARS: u32 = 5;
/// A project is "maintained" when its last commit is at most this old.
pub const MAINTAINED_WITHIN_DAYS: i64 = 365;
/// Days after the issue before a pull request is sent.
pub const ESCALATION_DAYS: i64 = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DisclosureAction {
    Skip,
    IssueThenPr,
    PrivateManual,
}

/// Pure policy decision with its trace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DisclosurePlan {
    pub action: DisclosureAction,
    pub reason: String,
}

/// Policy over (stars, maintenance age) only.
///
/// "More than 5 stars" is strict, "within 365 days" is inclusive, and
/// "200+" means ≥ 200.
pub fn classify_disclosure(stars: u32, last_commit: NaiveDate, now: NaiveDate) -> DisclosurePlan {
    let age_days = (now - last_commit).num_days();
    if stars >= PRIVATE_MANUAL_STARS {
        return DisclosurePlan {
            action: DisclosureAction::PrivateManual,
            reason: format!("{stars} stars ≥ {PRIVATE_MANUAL_STARS}: private channel only"),
        };
    }
    if stars > MIN_STARS && age_days <= MAINTAINED_WITHIN_DAYS {
        return DisclosurePlan {
            action: DisclosureAction::IssueThenPr,
            reason: format!(
                "{stars} stars > {MIN_STARS} and last commit {age_days} days ago (≤ {MAINTAINED_WITHIN_DAYS})"
            ),
        };
    }
    let reason = if stars <= MIN_STARS {
        format!("{stars} stars ≤ {MIN_STARS}: likely not used in production")
    } else {
        format!("last commit {age_days} days ago > {MAINTAINED_WITHIN_DAYS}: unmaintained")
    };
    DisclosurePlan {
        action: DisclosureAction::Skip,
        reason,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PrStatus {
    #[default]
    None,
    Open,
    Accepted,
    Closed,
}

/// Journal-carried disclosure case state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisclosureArtifact {
    pub action: DisclosureAction,
    pub reason: String,
    pub cvss_vector: String,
    pub cvss_score_tenths: u16,
    /// Blob digest of the rendered report.
    pub report_blob: String,
    pub issue_id: Option<u64>,
    pub issue_opened_at: Option<NaiveDate>,
    pub pr_id: Option<u64>,
    pub pr_opened_at: Option<NaiveDate>,
    pub fixed_at: Option<NaiveDate>,
    pub pr_status: PrStatus,
}

/// Re-fetch the candidate file at the default branch head. Fixed means the
/// detector no longer flags it, or the file was removed entirely
/// (remediation by removal).
pub fn check_fixed(forge: &dyn Forge, repo: &str, path: &str) -> Result<bool, ForgeError> {
    match forge.fetch_file(repo, path)? {
        None => Ok(true),
        Some(content) => match detect_traversal(&content) {
            Some(finding) => Ok(finding.verdict == Verdict::Safe),
            None => Ok(true),
        },
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EscalationOutcome {
    /// 30 days elapsed, still vulnerable: PR opened.
    PrOpened(u64),
    /// Vulnerability gone; case closes without a PR.
    AlreadyFixed,
    /// Too early or nothing to do.
    NoAction,
}

/// The 30-day escalation step. Requires an open issue and no PR yet; the
/// clock starts at issue creation and runs on UTC dates.
#[allow(clippy::too_many_arguments)]
pub fn escalate(
    forge: &mut dyn Forge,
    case: &mut DisclosureArtifact,
    repo: &str,
    file_path: &str,
    candidate_tag: &str,
    diff: Option<&str>,
    report_md: &str,
    now: NaiveDate,
) -> Result<EscalationOutcome, ForgeError> {
    let Some(issue_opened) = case.issue_opened_at else {
        return Ok(EscalationOutcome::NoAction);
    };
    if case.pr_opened_at.is_some() {
        return Ok(EscalationOutcome::NoAction);
    }
    if (now - issue_opened).num_days() < ESCALATION_DAYS {
        return Ok(EscalationOutcome::NoAction);
    }
    if check_fixed(forge, repo, file_path)? {
        case.fixed_at = Some(now);
        return Ok(EscalationOutcome::AlreadyFixed);
    }
    let branch = format!("security-fix-{candidate_tag}");
    let mut body = String::new();
    if let Some(issue) = case.issue_id {
        body.push_str(&format!(
            "Follow-up to issue #{issue}, opened {issue_opened} with no resolution.\n\n"
        ));
    }
    body.push_str(report_md);
    let diff_text = diff.unwrap_or("(no machine-generated patch available)");
    let pr_id = forge.open_pull_request(repo, &branch, diff_text, &body)?;
    case.pr_id = Some(pr_id);
    case.pr_opened_at = Some(now);
    case.pr_status = PrStatus::Open;
    Ok(EscalationOutcome::PrOpened(pr_id))
}

/// Issue title unique per candidate but free of any vulnerability detail.
pub fn issue_title(candidate_tag: &str) -> String {
    format!("Security disclosure request ({candidate_tag})")
}

/// Issue body: a private-channel request, nothing else.
pub fn issue_body() -> String {
    "Hello! While researching a class of security issues in open-source projects, we \
     identified something in this repository that we would like to disclose responsibly.\n\n\
     Could you enable private vulnerability reporting on this repository, or reply with a \
     preferred private channel? We will share full details, an assessment, and a suggested \
     fix there.\n\n\
     We are intentionally not posting any specifics in this public issue.\n"
        .to_string()
}
