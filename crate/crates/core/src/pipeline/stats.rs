//! Summary statistics, recomputable from the journal alone.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::cvss::infer_metrics;
use crate::disclosure::PrStatus;
use crate::exploit::PayloadFamily;
use crate::journal::{project, CandidateRecord, Record};
use crate::pipeline::state::CandidateState;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PipelineStats {
    /// Candidates that ever *entered* each state.
    pub entered: BTreeMap<CandidateState, u32>,
    pub dos_count: u32,
    pub pr_sent: u32,
    pub pr_accepted: u32,
    pub pr_closed: u32,
    pub manual_fixes: u32,
    pub total_fixed: u32,
    /// Base score tenths → count.
    pub cvss_histogram: BTreeMap<u16, u32>,
    pub patch_added_loc: Vec<u32>,
    pub patch_removed_loc: Vec<u32>,
    pub patch_attempts: Vec<u32>,
    pub payload_summary: BTreeMap<PayloadFamily, u32>,
    /// Year the vulnerable pattern was introduced → count.
    pub commit_years: BTreeMap<i32, u32>,
    pub corrupt_records: u32,
}

impl PipelineStats {
    pub fn entered(&self, state: CandidateState) -> u32 {
        self.entered.get(&state).copied().unwrap_or(0)
    }

    /// The funnel property: every stage admits at most as many candidates
    /// as the stage before it.
    pub fn funnel_monotone(&self) -> bool {
        let e = |s: CandidateState| self.entered(s);
        use CandidateState as S;
        let discovered = e(S::Discovered);
        let downloaded = e(S::Downloaded);
        let scanned = e(S::SastVuln) + e(S::SastSafe);
        let ran = e(S::RunOk) + e(S::RunFail);
        let exploited_stage = e(S::Exploited) + e(S::NotExploited);
        let patched_stage = e(S::Patched) + e(S::PatchFailed);
        let reported_stage = e(S::Reported) + e(S::ReportSkipped);
        downloaded <= discovered
            && scanned <= downloaded
            && ran <= e(S::SastVuln)
            && exploited_stage <= e(S::RunOk)
            && patched_stage <= e(S::Exploited)
            && reported_stage <= patched_stage
            && e(S::Fixed) <= e(S::Reported)
    }
}

/// Fold journal records into statistics.
pub fn stats_from_records(records: &[Record], corrupt: u32) -> PipelineStats {
    let mut stats = PipelineStats {
        corrupt_records: corrupt,
        ..PipelineStats::default()
    };
    for record in records {
        match record {
            Record::Candidate { .. } => {
                *stats.entered.entry(CandidateState::Discovered).or_insert(0) += 1;
            }
            Record::Transition { to, .. } => {
                *stats.entered.entry(*to).or_insert(0) += 1;
            }
            Record::Annotation { intro_year, .. } => {
                if let Some(year) = intro_year {
                    *stats.commit_years.entry(*year).or_insert(0) += 1;
                }
            }
            Record::MineComplete { .. } => {}
        }
    }
    for cr in project(records) {
        fold_candidate(&mut stats, &cr);
    }
    stats
}

fn fold_candidate(stats: &mut PipelineStats, cr: &CandidateRecord) {
    if let Some(outcome) = &cr.outcome {
        if outcome.traversal {
            if outcome.dos {
                stats.dos_count += 1;
            }
            if let Some(payload) = &outcome.winning_payload {
                *stats.payload_summary.entry(payload.family).or_insert(0) += 1;
            }
            if let Ok(vector) = infer_metrics(outcome) {
                let tenths = vector.base_score().tenths();
                *stats.cvss_histogram.entry(tenths).or_insert(0) += 1;
            }
        }
    }
    if let Some(patch) = &cr.patch {
        if patch.validation.accepted() {
            stats.patch_added_loc.push(patch.added_loc);
            stats.patch_removed_loc.push(patch.removed_loc);
        }
        stats.patch_attempts.push(patch.attempts);
    }
    if let Some(d) = &cr.disclosure {
        match d.pr_status {
            PrStatus::Open => stats.pr_sent += 1,
            PrStatus::Accepted => {
                stats.pr_sent += 1;
                stats.pr_accepted += 1;
            }
            PrStatus::Closed => {
                stats.pr_sent += 1;
                stats.pr_closed += 1;
            }
            PrStatus::None => {}
        }
        if d.fixed_at.is_some() && d.pr_status != PrStatus::Accepted {
            stats.manual_fixes += 1;
        }
    }
    if cr.state == CandidateState::Fixed {
        stats.total_fixed += 1;
    }
}

fn quartiles(values: &[u32]) -> Option<(u32, u32, u32, u32, u32)> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_unstable();
    let q = |f: f64| sorted[((sorted.len() - 1) as f64 * f).round() as usize];
    Some((
        sorted[0],
        q(0.25),
        q(0.5),
        q(0.75),
        sorted[sorted.len() - 1],
    ))
}

/// Human-readable rendering: the summary table, patch sizes, payload
/// summary, and the score histogram.
pub fn render_stats(stats: &PipelineStats) -> String {
    let mut out = String::new();
    let e = |s: CandidateState| stats.entered(s);
    use CandidateState as S;

    out.push_str("Summary of vulnerabilities\n");
    out.push_str("--------------------------------------------------------\n");
    let rows = [
        ("Candidates discovered", e(S::Discovered)),
        ("Candidates downloaded", e(S::Downloaded)),
        ("SAST vulnerable samples", e(S::SastVuln)),
        ("SAST safe samples", e(S::SastSafe)),
        ("Automatic running failed", e(S::RunFail)),
        ("Successful exploitation", e(S::Exploited)),
        ("Not exploited", e(S::NotExploited)),
        ("DoS-vulnerable among exploited", stats.dos_count),
        ("Generated valid patches", e(S::Patched)),
        ("Patch generation failed", e(S::PatchFailed)),
        ("Reports sent", e(S::Reported)),
        ("Reports skipped by policy", e(S::ReportSkipped)),
        ("Pull requests sent", stats.pr_sent),
        ("Pull requests accepted", stats.pr_accepted),
        ("Pull requests closed", stats.pr_closed),
        ("Manual fixes by maintainers", stats.manual_fixes),
        ("Total fixed", stats.total_fixed),
    ];
    for (label, count) in rows {
        out.push_str(&format!("{label:<44}{count:>8}\n"));
    }
    if stats.corrupt_records > 0 {
        out.push_str(&format!(
            "{:<44}{:>8}\n",
            "Corrupt journal lines skipped", stats.corrupt_records
        ));
    }

    out.push_str("\nPatch sizes (lines of code)\n");
    out.push_str("--------------------------------------------------------\n");
    out.push_str("statistic      added   removed\n");
    match (
        quartiles(&stats.patch_added_loc),
        quartiles(&stats.patch_removed_loc),
    ) {
        (Some(a), Some(r)) => {
            for (name, av, rv) in [
                ("min", a.0, r.0),
                ("q1", a.1, r.1),
                ("median", a.2, r.2),
                ("q3", a.3, r.3),
                ("max", a.4, r.4),
            ] {
                out.push_str(&format!("{name:<12}{av:>8}{rv:>10}\n"));
            }
        }
        _ => out.push_str("(no accepted patches)\n"),
    }

    out.push_str("\nSuccessful exploit payloads by family\n");
    out.push_str("--------------------------------------------------------\n");
    if stats.payload_summary.is_empty() {
        out.push_str("(none)\n");
    }
    for (family, count) in &stats.payload_summary {
        out.push_str(&format!("{:<24}{count:>8}\n", family.as_str()));
    }

    out.push_str("\nCVSS base score distribution\n");
    out.push_str("--------------------------------------------------------\n");
    if stats.cvss_histogram.is_empty() {
        out.push_str("(none)\n");
    }
    for (tenths, count) in &stats.cvss_histogram {
        out.push_str(&format!(
            "{:>4}.{}  {}\n",
            tenths / 10,
            tenths % 10,
            "#".repeat((*count as usize).min(60))
        ));
    }

    out.push_str("\nPatch attempts distribution\n");
    out.push_str("--------------------------------------------------------\n");
    let mut attempts_hist: BTreeMap<u32, u32> = BTreeMap::new();
    for a in &stats.patch_attempts {
        *attempts_hist.entry(*a).or_insert(0) += 1;
    }
    if attempts_hist.is_empty() {
        out.push_str("(none)\n");
    }
    for (attempts, count) in attempts_hist {
        out.push_str(&format!("{attempts:>4} attempt(s): {count}\n"));
    }

    if !stats.commit_years.is_empty() {
        out.push_str("\nVulnerable-pattern introduction year\n");
        out.push_str("--------------------------------------------------------\n");
        for (year, count) in &stats.commit_years {
            out.push_str(&format!("{year}  {}\n", "#".repeat(*count as usize)));
        }
    }
    out
}
