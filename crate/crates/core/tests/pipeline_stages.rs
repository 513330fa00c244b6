//! Stage-executor edge paths that the happy-path corpus run never hits:
//! an empty mining result, a candidate that refuses to run, and a candidate
//! whose content blob went missing.

use std::sync::Mutex;
use std::time::Duration;

use chrono::NaiveDate;
use patrol::corpus::{MinerConfig, MockSearchProvider, SearchHit, SearchQuery};
use patrol::disclosure::MockForge;
use patrol::journal::{project, Journal};
use patrol::patchgen::provider::CannedGuardLlm;
use patrol::pipeline::state::CandidateState;
use patrol::pipeline::{
    run_pipeline, stage_mine, stage_run, stage_scan, Appender, DirProjectSource, PipelineInputs,
    StageOptions,
};
use patrol::sandbox::SandboxOptions;

static SANDBOX_LOCK: Mutex<()> = Mutex::new(());

fn fast_opts() -> StageOptions {
    StageOptions {
        sandbox: SandboxOptions {
            grace: Duration::from_millis(1500),
            poll_interval: Duration::from_millis(100),
            ..SandboxOptions::default()
        },
        parallel: 1,
        now: NaiveDate::from_ymd_opt(2026, 1, 1).unwrap(),
        ..StageOptions::default()
    }
}

#[test]
fn empty_input_yields_zero_stats() {
    let dir = tempfile::tempdir().unwrap();
    let journal = Journal::open(&dir.path().join("j.jsonl")).unwrap();
    let provider = MockSearchProvider::new(Vec::new());
    let projects = DirProjectSource(dir.path().to_path_buf());
    let mut forge = MockForge::new();
    let stats = run_pipeline(PipelineInputs {
        journal: &journal,
        search: &provider,
        query: SearchQuery::base_pattern(),
        miner: MinerConfig::fast(),
        projects: &projects,
        llm: &CannedGuardLlm,
        forge: &mut forge,
        opts: fast_opts(),
        halt_after: None,
    })
    .unwrap();
    assert_eq!(stats.entered(CandidateState::Discovered), 0);
    assert_eq!(stats, patrol::pipeline::PipelineStats {
        corrupt_records: 0,
        ..Default::default()
    });
}

/// Statically vulnerable but refuses to start under any launch method:
/// lands in RUN_FAIL with the accumulated logs, and the funnel stays sound.
#[test]
fn unrunnable_candidate_becomes_run_fail() {
    let _guard = SANDBOX_LOCK.lock().unwrap();
    let corpus = tempfile::tempdir().unwrap();
    let project_dir = corpus.path().join("brittle");
    std::fs::create_dir_all(&project_dir).unwrap();
    // the pattern is present, but the process bails out before listening
    std::fs::write(
        project_dir.join("server.js"),
        r#"var http = require("http"), url = require("url"), path = require("path"), fs = require("fs");
if (!process.env.LEGACY_RUNTIME) {
  console.error("this tool requires the legacy runtime");
  process.exit(2);
}
http.createServer(function (req, res) {
  var uri = url.parse(req.url).pathname;
  var filename = path.join(process.cwd(), uri);
  fs.readFile(filename, function (err, data) { res.end(data); });
}).listen(18931);
"#,
    )
    .unwrap();
    std::fs::write(
        corpus.path().join("manifest.toml"),
        "[projects.brittle]\nentry = \"server.js\"\nstars = 10\nlast_commit = \"2025-10-01\"\n",
    )
    .unwrap();

    let dir = tempfile::tempdir().unwrap();
    let journal = Journal::open(&dir.path().join("j.jsonl")).unwrap();
    let provider = MockSearchProvider::from_corpus_dir(corpus.path()).unwrap();
    let appender = Appender::new(&journal, None);
    let opts = fast_opts();
    stage_mine(
        &appender,
        &provider,
        &SearchQuery::base_pattern(),
        &MinerConfig::fast(),
        false,
    )
    .unwrap();
    stage_scan(&appender, &opts).unwrap();
    let projects = DirProjectSource(corpus.path().to_path_buf());
    stage_run(&appender, &projects, &opts).unwrap();

    let (records, _) = journal.replay().unwrap();
    let projected = project(&records);
    assert_eq!(projected.len(), 1);
    assert_eq!(projected[0].state, CandidateState::RunFail);
    let stats = patrol::pipeline::stats_from_records(&records, 0);
    assert_eq!(stats.entered(CandidateState::RunFail), 1);
    assert!(stats.funnel_monotone());
}

/// A candidate whose content blob disappeared scans as safe instead of
/// wedging the stage.
#[test]
fn missing_blob_scans_safe() {
    let dir = tempfile::tempdir().unwrap();
    let journal = Journal::open(&dir.path().join("j.jsonl")).unwrap();
    let appender = Appender::new(&journal, None);
    let hit = SearchHit {
        repo_id: "gone/repo".into(),
        file_path: "server.js".into(),
        file_url: "mock://gone/repo/server.js".into(),
        content: "var x = 1;".into(),
        stars: 1,
        last_commit: NaiveDate::from_ymd_opt(2025, 1, 1).unwrap(),
    };
    let provider = MockSearchProvider::new(vec![hit]);
    let query = SearchQuery::new(["var"], "javascript");
    stage_mine(&appender, &provider, &query, &MinerConfig::fast(), false).unwrap();

    // blow away the blob store behind the journal's back
    std::fs::remove_dir_all(dir.path().join("j.blobs")).unwrap();
    std::fs::create_dir_all(dir.path().join("j.blobs")).unwrap();

    stage_scan(&appender, &fast_opts()).unwrap();
    let (records, _) = journal.replay().unwrap();
    let projected = project(&records);
    assert_eq!(projected[0].state, CandidateState::SastSafe);
}

#[test]
fn run_fail_log_carries_strategy_attempts() {
    let _guard = SANDBOX_LOCK.lock().unwrap();
    // launch a crashing project directly and read back the concatenated log
    let src = tempfile::tempdir().unwrap();
    std::fs::write(
        src.path().join("boom.js"),
        "console.error('nope'); process.exit(7);\n",
    )
    .unwrap();
    let opts = fast_opts().sandbox;
    let mut sbx = patrol::sandbox::provision(src.path(), std::path::Path::new("boom.js"), &opts)
        .unwrap();
    let run = sbx.launch().unwrap();
    sbx.teardown();
    assert!(!run.alive);
    for strategy in ["direct-node", "install-then-node", "install-then-npm-start"] {
        assert!(
            run.startup_log.contains(strategy),
            "log should mention {strategy}:\n{}",
            run.startup_log
        );
    }
    assert!(run.startup_log.contains("nope"));
}
