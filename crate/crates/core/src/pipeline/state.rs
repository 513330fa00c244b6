//! Per-candidate state machine.
//!
//! Candidates only ever move forward along the funnel:
//!
//! ```text
//! DISCOVERED → DOWNLOADED → {SAST_SAFE | SAST_VULN}
//!   SAST_VULN → {RUN_FAIL | RUN_OK}
//!   RUN_OK    → {NOT_EXPLOITED | EXPLOITED}
//!   EXPLOITED → {PATCH_FAILED | PATCHED}
//!   either    → {REPORT_SKIPPED | REPORTED}
//!   REPORTED  → FIXED
//! ```
//!
//! Everything else is terminal. An illegal (state, event) pair is a bug in
//! the caller, reported with a diagnostic, never applied.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CandidateState {
    Discovered,
    Downloaded,
    SastSafe,
    SastVuln,
    RunFail,
    RunOk,
    NotExploited,
    Exploited,
    PatchFailed,
    Patched,
    ReportSkipped,
    Reported,
    Fixed,
}

impl CandidateState {
    pub const ALL: [CandidateState; 13] = [
        CandidateState::Discovered,
        CandidateState::Downloaded,
        CandidateState::SastSafe,
        CandidateState::SastVuln,
        CandidateState::RunFail,
        CandidateState::RunOk,
        CandidateState::NotExploited,
        CandidateState::Exploited,
        CandidateState::PatchFailed,
        CandidateState::Patched,
        CandidateState::ReportSkipped,
        CandidateState::Reported,
        CandidateState::Fixed,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            CandidateState::Discovered => "DISCOVERED",
            CandidateState::Downloaded => "DOWNLOADED",
            CandidateState::SastSafe => "SAST_SAFE",
            CandidateState::SastVuln => "SAST_VULN",
            CandidateState::RunFail => "RUN_FAIL",
            CandidateState::RunOk => "RUN_OK",
            CandidateState::NotExploited => "NOT_EXPLOITED",
            CandidateState::Exploited => "EXPLOITED",
            CandidateState::PatchFailed => "PATCH_FAILED",
            CandidateState::Patched => "PATCHED",
            CandidateState::ReportSkipped => "REPORT_SKIPPED",
            CandidateState::Reported => "REPORTED",
            CandidateState::Fixed => "FIXED",
        }
    }

    /// Terminal states absorb every event.
    pub fn is_terminal(&self) -> bool {
        matches!(
            self,
            CandidateState::SastSafe
                | CandidateState::RunFail
                | CandidateState::NotExploited
                | CandidateState::ReportSkipped
                | CandidateState::Fixed
        )
    }
}

impl std::fmt::Display for CandidateState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateEvent {
    Downloaded,
    SastSafe,
    SastVuln,
    RunOk,
    RunFail,
    ExploitSuccess,
    ExploitFail,
    PatchAccepted,
    PatchFailed,
    ReportSent,
    ReportSkipped,
    FixedConfirmed,
}

impl StateEvent {
    pub const ALL: [StateEvent; 12] = [
        StateEvent::Downloaded,
        StateEvent::SastSafe,
        StateEvent::SastVuln,
        StateEvent::RunOk,
        StateEvent::RunFail,
        StateEvent::ExploitSuccess,
        StateEvent::ExploitFail,
        StateEvent::PatchAccepted,
        StateEvent::PatchFailed,
        StateEvent::ReportSent,
        StateEvent::ReportSkipped,
        StateEvent::FixedConfirmed,
    ];
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("illegal transition: {event:?} in state {state}")]
pub struct IllegalTransition {
    pub state: CandidateState,
    pub event: StateEvent,
}

/// Pure transition function.
pub fn advance(
    state: CandidateState,
    event: StateEvent,
) -> Result<CandidateState, IllegalTransition> {
    use CandidateState as S;
    use StateEvent as E;
    let next = match (state, event) {
        (S::Discovered, E::Downloaded) => S::Downloaded,
        (S::Downloaded, E::SastSafe) => S::SastSafe,
        (S::Downloaded, E::SastVuln) => S::SastVuln,
        (S::SastVuln, E::RunOk) => S::RunOk,
        (S::SastVuln, E::RunFail) => S::RunFail,
        (S::RunOk, E::ExploitSuccess) => S::Exploited,
        (S::RunOk, E::ExploitFail) => S::NotExploited,
        (S::Exploited, E::PatchAccepted) => S::Patched,
        (S::Exploited, E::PatchFailed) => S::PatchFailed,
        (S::Patched, E::ReportSent) => S::Reported,
        (S::Patched, E::ReportSkipped) => S::ReportSkipped,
        (S::PatchFailed, E::ReportSent) => S::Reported,
        (S::PatchFailed, E::ReportSkipped) => S::ReportSkipped,
        (S::Reported, E::FixedConfirmed) => S::Fixed,
        _ => return Err(IllegalTransition { state, event }),
    };
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn happy_path_transitions() {
        use CandidateState as S;
        use StateEvent as E;
        assert_eq!(advance(S::SastVuln, E::RunOk), Ok(S::RunOk));
        assert_eq!(advance(S::Exploited, E::PatchAccepted), Ok(S::Patched));
        assert_eq!(advance(S::PatchFailed, E::ReportSent), Ok(S::Reported));
        assert_eq!(advance(S::Reported, E::FixedConfirmed), Ok(S::Fixed));
    }

    #[test]
    fn illegal_transitions_rejected() {
        use CandidateState as S;
        use StateEvent as E;
        assert!(advance(S::SastSafe, E::ExploitSuccess).is_err());
        assert!(advance(S::Discovered, E::PatchAccepted).is_err());
        assert!(advance(S::Fixed, E::Downloaded).is_err());
    }

    // Exhaustive table: every (state, event) pair is either the single legal
    // next state or a rejection — full branch coverage of `advance`.
    #[test]
    fn exhaustive_transition_table() {
        use CandidateState as S;
        use StateEvent as E;
        let legal: &[(S, E, S)] = &[
            (S::Discovered, E::Downloaded, S::Downloaded),
            (S::Downloaded, E::SastSafe, S::SastSafe),
            (S::Downloaded, E::SastVuln, S::SastVuln),
            (S::SastVuln, E::RunOk, S::RunOk),
            (S::SastVuln, E::RunFail, S::RunFail),
            (S::RunOk, E::ExploitSuccess, S::Exploited),
            (S::RunOk, E::ExploitFail, S::NotExploited),
            (S::Exploited, E::PatchAccepted, S::Patched),
            (S::Exploited, E::PatchFailed, S::PatchFailed),
            (S::Patched, E::ReportSent, S::Reported),
            (S::Patched, E::ReportSkipped, S::ReportSkipped),
            (S::PatchFailed, E::ReportSent, S::Reported),
            (S::PatchFailed, E::ReportSkipped, S::ReportSkipped),
            (S::Reported, E::FixedConfirmed, S::Fixed),
        ];
        let mut legal_count = 0;
        for state in CandidateState::ALL {
            for event in StateEvent::ALL {
                match advance(state, event) {
                    Ok(next) => {
                        legal_count += 1;
                        assert!(
                            legal.contains(&(state, event, next)),
                            "unexpected legal transition {state} + {event:?} -> {next}"
                        );
                    }
                    Err(err) => {
                        assert_eq!(err, IllegalTransition { state, event });
                        assert!(!legal.iter().any(|(s, e, _)| *s == state && *e == event));
                    }
                }
            }
        }
        assert_eq!(legal_count, legal.len());
    }

    #[test]
    fn terminal_states_absorb_everything() {
        for state in CandidateState::ALL.into_iter().filter(|s| s.is_terminal()) {
            for event in StateEvent::ALL {
                assert!(advance(state, event).is_err(), "{state} must absorb");
            }
        }
    }
}
