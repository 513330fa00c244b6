//! Command-line entry point: the per-stage commands, the full pipeline,
//! statistics, and the model-contamination study.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use patrol::config::Config;
use patrol::corpus::{GithubSearchProvider, MockSearchProvider, SearchProvider, SearchQuery};
use patrol::cvss::{infer_metrics, CvssVector};
use patrol::disclosure::{classify_disclosure, Forge, GithubForge, MockForge};
use patrol::journal::{project, Journal};
use patrol::patchgen::provider::CannedGuardLlm;
use patrol::patchgen::ChatProvider;
use patrol::pipeline::{
    self, llm_contamination_study, render_stats, render_study, stats_from_records, Appender,
    DirProjectSource, GitCloneSource, PipelineInputs, ProjectSource, StageOptions,
};

#[derive(Parser)]
#[command(
    name = "patrol",
    about = "Find, prove, patch, score, and report a path traversal pattern in Node.js static file servers",
    version
)]
struct Cli {
    /// Journal file (append-only, single source of truth).
    #[arg(long, global = true, default_value = "patrol.jsonl")]
    journal: PathBuf,
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker pool bound for sandbox-owning stages.
    #[arg(long, global = true)]
    parallel: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Discover candidate files from the code search provider.
    Mine {
        /// Override the configured provider (mock|github).
        #[arg(long)]
        provider: Option<String>,
        /// Corpus directory for the mock provider.
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Re-mine even if a completed run is recorded.
        #[arg(long)]
        force: bool,
    },
    /// Statically detect the vulnerable pattern in downloaded candidates.
    Scan,
    /// Launch statically vulnerable candidates in the sandbox.
    Run {
        /// Override the configured backend (subprocess|container).
        #[arg(long)]
        backend: Option<String>,
    },
    /// Prove exploitability of runnable candidates.
    Exploit,
    /// Generate and validate patches for exploited candidates.
    Patch {
        /// Override the configured chat provider (mock|http).
        #[arg(long)]
        provider: Option<String>,
        #[arg(long)]
        max_retries: Option<u32>,
    },
    /// Print CVSS vectors and scores.
    Score {
        /// Score one ad-hoc vector string instead of the journal.
        #[arg(long)]
        vector: Option<String>,
    },
    /// Disclosure workflow.
    Report {
        #[command(subcommand)]
        action: ReportAction,
    },
    /// All stages in order.
    Pipeline,
    /// Recompute and print statistics from the journal.
    Stats,
    /// Run the model-contamination study.
    LlmStudy {
        #[arg(long, default_value_t = pipeline::DEFAULT_REPS)]
        reps: u32,
        /// Comma-separated provider names
        /// (mock-vulnerable|mock-safe|mock-mixed|http).
        #[arg(long, default_value = "mock-vulnerable,mock-safe,mock-mixed")]
        providers: String,
    },
}

#[derive(Subcommand)]
enum ReportAction {
    /// Print the disclosure decision for each eligible candidate.
    Plan {
        #[arg(long)]
        now: Option<chrono::NaiveDate>,
    },
    /// Render report files for exploited candidates.
    Render,
    /// Open issues / write manual reports per policy.
    Issue {
        #[arg(long)]
        now: Option<chrono::NaiveDate>,
    },
    /// Escalate 30-day-old unfixed cases to pull requests.
    #[command(alias = "pr")]
    Escalate {
        #[arg(long)]
        now: Option<chrono::NaiveDate>,
    },
    /// Re-check remediation status of reported cases.
    Status {
        #[arg(long)]
        now: Option<chrono::NaiveDate>,
    },
}

/// Print without panicking when stdout is a closed pipe (`patrol … | head`).
/// SIGPIPE stays ignored process-wide because the DoS feeder thread depends
/// on seeing EPIPE as an error.
macro_rules! outln {
    ($($arg:tt)*) => {{
        use std::io::Write;
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(err) = run() {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

fn search_provider(
    cfg: &Config,
    override_name: Option<&str>,
    corpus: Option<&PathBuf>,
) -> Result<Box<dyn SearchProvider>> {
    let name = override_name.unwrap_or(&cfg.mine.provider);
    match name {
        "mock" => {
            let dir = corpus
                .cloned()
                .or_else(|| cfg.mine.corpus_dir.clone())
                .context("mock provider needs --corpus or [mine].corpus_dir")?;
            Ok(Box::new(MockSearchProvider::from_corpus_dir(&dir)?))
        }
        "github" => Ok(Box::new(GithubSearchProvider::from_env(
            &cfg.mine.token_env,
        )?)),
        other => bail!("unknown search provider {other:?}"),
    }
}

fn chat_provider(cfg: &Config, override_name: Option<&str>) -> Result<Box<dyn ChatProvider>> {
    let name = override_name.unwrap_or(&cfg.patch.provider);
    match name {
        "mock" => Ok(Box::new(CannedGuardLlm)),
        "http" => Ok(Box::new(patrol::patchgen::HttpChatProvider::new(
            cfg.patch.base_url.clone(),
            cfg.patch.model.clone(),
            cfg.patch.key_env.clone(),
        ))),
        other => bail!("unknown chat provider {other:?}"),
    }
}

/// The mock forge is seeded from the corpus so fixed-checks can re-fetch
/// candidate files.
fn forge(cfg: &Config) -> Result<Box<dyn Forge>> {
    match cfg.report.forge.as_str() {
        "mock" => {
            let mock = MockForge::new();
            if let Some(dir) = &cfg.mine.corpus_dir {
                if let Ok(provider) = MockSearchProvider::from_corpus_dir(dir) {
                    let page = provider.search(&SearchQuery::base_pattern(), 1)?;
                    for hit in &page.hits {
                        mock.seed_file(&hit.repo_id, &hit.file_path, &hit.content);
                    }
                }
            }
            Ok(Box::new(mock))
        }
        "github" => Ok(Box::new(GithubForge::from_env(&cfg.report.token_env)?)),
        other => bail!("unknown forge {other:?}"),
    }
}

fn project_source(cfg: &Config) -> Box<dyn ProjectSource> {
    match &cfg.mine.corpus_dir {
        Some(dir) => Box::new(DirProjectSource(dir.clone())),
        None => Box::new(GitCloneSource {
            cache: cfg.pipeline.project_cache.clone(),
        }),
    }
}

fn stage_options(cfg: &Config, cli: &Cli, now: Option<chrono::NaiveDate>) -> StageOptions {
    StageOptions {
        sandbox: cfg.sandbox.sandbox_options(),
        probe: cfg.exploit.probe_options(),
        parallel: cli.parallel.unwrap_or(cfg.pipeline.parallel),
        max_patch_retries: cfg.patch.max_retries,
        now: now.unwrap_or_else(|| chrono::Utc::now().date_naive()),
        survey_url: cfg.report.survey_url.clone(),
    }
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    let mut cfg = Config::load_or_default(cli.config.as_deref())?;
    let journal = Journal::open(&cli.journal)?;

    match &cli.command {
        Command::Mine {
            provider,
            corpus,
            force,
        } => {
            if let Some(dir) = corpus {
                cfg.mine.corpus_dir = Some(dir.clone());
            }
            let provider = search_provider(&cfg, provider.as_deref(), corpus.as_ref())?;
            let appender = Appender::new(&journal, None);
            let n = pipeline::stage_mine(
                &appender,
                provider.as_ref(),
                &SearchQuery::base_pattern(),
                &cfg.mine.miner_config(),
                *force,
            )?;
            outln!("registered {n} new candidates");
        }
        Command::Scan => {
            let appender = Appender::new(&journal, None);
            let opts = stage_options(&cfg, &cli, None);
            let n = pipeline::stage_scan(&appender, &opts)?;
            outln!("scanned {n} candidates");
        }
        Command::Run { backend } => {
            if let Some(b) = backend {
                cfg.sandbox.backend = b.clone();
            }
            let appender = Appender::new(&journal, None);
            let opts = stage_options(&cfg, &cli, None);
            let projects = project_source(&cfg);
            let n = pipeline::stage_run(&appender, projects.as_ref(), &opts)?;
            outln!("ran {n} candidates");
        }
        Command::Exploit => {
            let appender = Appender::new(&journal, None);
            let opts = stage_options(&cfg, &cli, None);
            let projects = project_source(&cfg);
            let n = pipeline::stage_exploit(&appender, projects.as_ref(), &opts)?;
            outln!("probed {n} candidates");
        }
        Command::Patch {
            provider,
            max_retries,
        } => {
            if let Some(m) = max_retries {
                cfg.patch.max_retries = *m;
            }
            let llm = chat_provider(&cfg, provider.as_deref())?;
            let appender = Appender::new(&journal, None);
            let opts = stage_options(&cfg, &cli, None);
            let projects = project_source(&cfg);
            let n = pipeline::stage_patch(&appender, projects.as_ref(), llm.as_ref(), &opts)?;
            outln!("patched (or exhausted retries for) {n} candidates");
        }
        Command::Score { vector } => {
            if let Some(v) = vector {
                let parsed = CvssVector::parse(v)?;
                outln!("{parsed} = {}", parsed.base_score());
                return Ok(());
            }
            let (records, _) = journal.replay()?;
            for cr in project(&records) {
                if let Some(outcome) = cr.outcome.as_ref().filter(|o| o.traversal) {
                    let vector = infer_metrics(outcome)?;
                    outln!(
                        "{}  {}  {}  {}",
                        cr.id,
                        cr.meta.repo_id,
                        vector,
                        vector.base_score()
                    );
                }
            }
        }
        Command::Report { action } => run_report(&cfg, &cli, &journal, action)?,
        Command::Pipeline => {
            let provider = search_provider(&cfg, None, None)?;
            let llm = chat_provider(&cfg, None)?;
            let mut forge = forge(&cfg)?;
            let projects = project_source(&cfg);
            let opts = stage_options(&cfg, &cli, None);
            let stats = pipeline::run_pipeline(PipelineInputs {
                journal: &journal,
                search: provider.as_ref(),
                query: SearchQuery::base_pattern(),
                miner: cfg.mine.miner_config(),
                projects: projects.as_ref(),
                llm: llm.as_ref(),
                forge: forge.as_mut(),
                opts,
                halt_after: None,
            })?;
            outln!("{}", render_stats(&stats));
        }
        Command::Stats => {
            let (records, corrupt) = journal.replay()?;
            let stats = stats_from_records(&records, corrupt);
            outln!("{}", render_stats(&stats));
        }
        Command::LlmStudy { reps, providers } => {
            let mut boxed: Vec<Box<dyn ChatProvider>> = Vec::new();
            for name in providers.split(',') {
                boxed.push(match name.trim() {
                    "mock-vulnerable" => pipeline::study::scripted_always_vulnerable(),
                    "mock-safe" => pipeline::study::scripted_always_guarded(),
                    "mock-mixed" => pipeline::study::scripted_mixed_7_of_10(),
                    "http" => chat_provider(&cfg, Some("http"))?,
                    other => bail!("unknown study provider {other:?}"),
                });
            }
            let rows = llm_contamination_study(
                &boxed,
                *reps,
                &cfg.sandbox.sandbox_options(),
                &cfg.exploit.probe_options(),
            );
            outln!("{}", render_study(&rows, *reps));
        }
    }
    Ok(())
}

fn run_report(cfg: &Config, cli: &Cli, journal: &Journal, action: &ReportAction) -> Result<()> {
    match action {
        ReportAction::Plan { now } => {
            let now = now.unwrap_or_else(|| chrono::Utc::now().date_naive());
            let (records, _) = journal.replay()?;
            for cr in project(&records) {
                use patrol::pipeline::CandidateState as S;
                if matches!(
                    cr.state,
                    S::Patched | S::PatchFailed | S::Reported | S::ReportSkipped | S::Fixed
                ) {
                    let plan = classify_disclosure(cr.meta.stars, cr.meta.last_commit, now);
                    outln!("{}  {:?}  ({})", cr.meta.repo_id, plan.action, plan.reason);
                }
            }
        }
        ReportAction::Render => {
            let (records, _) = journal.replay()?;
            let blobs = journal.blobs();
            let dir = journal
                .path()
                .parent()
                .unwrap_or_else(|| std::path::Path::new("."))
                .join("reports");
            std::fs::create_dir_all(&dir)?;
            let mut written = 0;
            for cr in project(&records) {
                let Some(case) = &cr.disclosure else { continue };
                let report = blobs.get_string(&case.report_blob)?;
                let name = cr.meta.repo_id.replace('/', "__");
                std::fs::write(dir.join(format!("{name}.md")), report)?;
                written += 1;
            }
            outln!("wrote {written} report files under {}", dir.display());
        }
        ReportAction::Issue { now } => {
            let mut forge = forge(cfg)?;
            let appender = Appender::new(journal, None);
            let opts = stage_options(cfg, cli, *now);
            let n = pipeline::stage_report(&appender, forge.as_mut(), &opts)?;
            outln!("processed {n} disclosure cases");
        }
        ReportAction::Escalate { now } => {
            let mut forge = forge(cfg)?;
            let appender = Appender::new(journal, None);
            let now = now.unwrap_or_else(|| chrono::Utc::now().date_naive());
            let n = pipeline::stage_escalate(&appender, forge.as_mut(), now)?;
            outln!("escalated {n} cases");
        }
        ReportAction::Status { now } => {
            let mut forge = forge(cfg)?;
            let appender = Appender::new(journal, None);
            let now = now.unwrap_or_else(|| chrono::Utc::now().date_naive());
            let n = pipeline::stage_status(&appender, forge.as_mut(), now)?;
            outln!("updated {n} cases");
        }
    }
    Ok(())
}
