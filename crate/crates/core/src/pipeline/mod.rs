//! Orchestration: the per-candidate state machine, journaled stage
//! executors, statistics, history dating, and the contamination study.

pub mod history;
pub mod runner;
pub mod state;
pub mod stats;
pub mod study;

pub use history::{vuln_intro_date, GitHistory, MemHistory, VcsHistory};
pub use runner::{
    run_pipeline, stage_escalate, stage_exploit, stage_mine, stage_patch, stage_report, stage_run,
    stage_scan, stage_status, Appender, DirProjectSource, GitCloneSource, PipelineError,
    PipelineInputs, ProjectSource, StageOptions,
};
pub use state::{advance, CandidateState, IllegalTransition, StateEvent};
pub use stats::{render_stats, stats_from_records, PipelineStats};
pub use study::{llm_contamination_study, render_study, PanelResult, StudyRow, DEFAULT_REPS};
