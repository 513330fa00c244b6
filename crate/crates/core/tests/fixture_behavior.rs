//! Per-fixture behavior checks: each launch strategy, each payload family,
//! both attack vectors, both DoS behaviors, and the dynamic no-go on a
//! sanitized server. Finer-grained than the acceptance run, so a corpus
//! regression points at the exact fixture that broke.

use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration;

use patrol::detector::detect_traversal;
use patrol::exploit::{
    determine_attack_vector, payload_catalog, try_dos, try_traversal, AttackVectorKind,
    PayloadFamily, ProbeOptions,
};
use patrol::patchgen::provider::guard_diff_for_prompt;
use patrol::patchgen::{build_prompt, synthesize, ScriptedLlm, ValidationContext};
use patrol::sandbox::{provision, LaunchStrategy, SandboxOptions};

static SANDBOX_LOCK: Mutex<()> = Mutex::new(());

fn corpus() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/corpus")
}

fn opts() -> SandboxOptions {
    SandboxOptions {
        poll_interval: Duration::from_millis(100),
        ..SandboxOptions::default()
    }
}

fn probe() -> ProbeOptions {
    ProbeOptions::default()
}

fn exploit_fixture(
    name: &str,
    entry: &str,
    expect_strategy: LaunchStrategy,
) -> (AttackVectorKind, Option<PayloadFamily>) {
    let _guard = SANDBOX_LOCK.lock().unwrap();
    let mut sbx = provision(&corpus().join(name), Path::new(entry), &opts()).unwrap();
    let run = sbx.launch().unwrap();
    assert!(run.alive, "{name}: died\n{}", run.startup_log);
    assert_eq!(run.strategy, expect_strategy, "{name}");
    let port = sbx
        .detect_port(&run)
        .unwrap_or_else(|| panic!("{name}: no port"));
    let catalog = payload_catalog("flag.txt");
    let (av, outcome) =
        determine_attack_vector(&sbx, port, &sbx.flag_nonce, &catalog, &probe()).unwrap();
    sbx.teardown();
    (av, outcome.winning_payload.map(|p| p.family))
}

#[test]
fn classic_gist_network_plain() {
    let (av, family) = exploit_fixture("v-classic-gist", "server.js", LaunchStrategy::DirectNode);
    assert_eq!(av, AttackVectorKind::Network);
    assert_eq!(family, Some(PayloadFamily::Plain));
}

#[test]
fn local_bind_is_local_av() {
    let (av, family) = exploit_fixture("v-local", "server.js", LaunchStrategy::DirectNode);
    assert_eq!(av, AttackVectorKind::Local);
    assert_eq!(family, Some(PayloadFamily::Plain));
}

#[test]
fn decode_fixture_needs_url_encoding() {
    let (av, family) = exploit_fixture("v-decode", "server.js", LaunchStrategy::DirectNode);
    assert_eq!(av, AttackVectorKind::Network);
    assert_eq!(family, Some(PayloadFamily::UrlEncoded));
}

#[test]
fn prefix_fixture_needs_nested_payload() {
    let (av, family) = exploit_fixture("v-prefix", "server.js", LaunchStrategy::DirectNode);
    assert_eq!(av, AttackVectorKind::Network);
    assert_eq!(family, Some(PayloadFamily::NestedPrefix));
}

#[test]
fn deps_fixture_uses_install_then_node() {
    let (av, family) = exploit_fixture("v-deps", "server.js", LaunchStrategy::InstallThenNode);
    assert_eq!(av, AttackVectorKind::Network);
    assert_eq!(family, Some(PayloadFamily::Plain));
}

#[test]
fn start_fixture_uses_npm_start() {
    let (av, family) = exploit_fixture("v-start", "srv.js", LaunchStrategy::InstallThenNpmStart);
    assert_eq!(av, AttackVectorKind::Network);
    assert_eq!(family, Some(PayloadFamily::Plain));
}

#[test]
fn dos_whole_read_dies_streaming_survives() {
    let _guard = SANDBOX_LOCK.lock().unwrap();
    let catalog = payload_catalog("flag.txt");
    let mut dos_opts = opts();
    dos_opts.dos_mode = true;

    // whole-file read: must die inside the 10 s window
    let mut sbx = provision(
        &corpus().join("v-const-arrow"),
        Path::new("server.js"),
        &dos_opts,
    )
    .unwrap();
    let run = sbx.launch().unwrap();
    let port = sbx.detect_port(&run).expect("port");
    let winning = catalog
        .iter()
        .find(|p| p.family == PayloadFamily::Plain && p.depth == 2)
        .unwrap();
    let started = std::time::Instant::now();
    let died = try_dos(&mut sbx, port, winning, &probe());
    sbx.teardown();
    assert!(died, "whole-file read survived the memory cap");
    assert!(started.elapsed() <= Duration::from_secs(11));

    // streaming: must survive the full window
    let mut sbx = provision(
        &corpus().join("v-stream"),
        Path::new("server.js"),
        &dos_opts,
    )
    .unwrap();
    let run = sbx.launch().unwrap();
    let port = sbx.detect_port(&run).expect("port");
    let winning = catalog
        .iter()
        .find(|p| p.family == PayloadFamily::Plain && p.depth == 1)
        .unwrap();
    let died = try_dos(&mut sbx, port, winning, &probe());
    sbx.teardown();
    assert!(!died, "streaming server died under DoS probe");
}

#[test]
fn sanitized_fixture_rejects_every_payload() {
    let _guard = SANDBOX_LOCK.lock().unwrap();
    let dir = corpus().join("s-dotdot-include");
    let mut sbx = provision(&dir, Path::new("server.js"), &opts()).unwrap();
    let run = sbx.launch().unwrap();
    let port = sbx.detect_port(&run).expect("port");
    let catalog = payload_catalog("flag.txt");
    let outcome = try_traversal(sbx.loopback(), port, &sbx.flag_nonce, &catalog, &probe()).unwrap();
    assert!(
        !outcome.traversal,
        "guarded server must reject the whole catalog"
    );
    let (av, _) = determine_attack_vector(&sbx, port, &sbx.flag_nonce, &catalog, &probe()).unwrap();
    sbx.teardown();
    assert_eq!(av, AttackVectorKind::None);
}

#[test]
fn evidence_excerpt_contains_the_nonce() {
    let _guard = SANDBOX_LOCK.lock().unwrap();
    let dir = corpus().join("v-sync");
    let mut sbx = provision(&dir, Path::new("server.js"), &opts()).unwrap();
    let run = sbx.launch().unwrap();
    let port = sbx.detect_port(&run).expect("port");
    let catalog = payload_catalog("flag.txt");
    let outcome = try_traversal(sbx.loopback(), port, &sbx.flag_nonce, &catalog, &probe()).unwrap();
    sbx.teardown();
    assert!(outcome.traversal);
    assert!(outcome.evidence.contains(&sbx.flag_nonce));
}

#[test]
fn synthesize_counts_failed_attempts() {
    let _guard = SANDBOX_LOCK.lock().unwrap();
    let dir = corpus().join("v-sync");
    let source = std::fs::read_to_string(dir.join("server.js")).unwrap();
    let finding = detect_traversal(&source).unwrap();

    // run facts for validation
    let mut sbx = provision(&dir, Path::new("server.js"), &opts()).unwrap();
    let run = sbx.launch().unwrap();
    let port = sbx.detect_port(&run).expect("port");
    let status = patrol::exploit::send_raw_get(sbx.loopback(), port, b"/", Duration::from_secs(5))
        .unwrap()
        .status;
    let strategy = run.strategy;
    sbx.teardown();

    // three garbage replies, then the canonical guard diff
    let good = guard_diff_for_prompt(&build_prompt(&source, &finding).user).unwrap();
    let llm = ScriptedLlm::new(
        "flaky",
        vec![
            "no diff here".into(),
            "```\nstill prose\n```".into(),
            "--- a/x\n+++ b/x\n@@ -999,2 +999,3 @@\n NOPE\n+X\n NOPE2\n".into(),
            format!("```diff\n{good}```"),
        ],
    );
    let sandbox_opts = opts();
    let probe_opts = probe();
    let ctx = ValidationContext {
        project_dir: &dir,
        entry: Path::new("server.js"),
        expected_strategy: strategy,
        baseline_root_status: status,
        sandbox_opts: &sandbox_opts,
        probe: &probe_opts,
    };
    let bundle = synthesize(&llm, &ctx, &source, &finding, 20).unwrap();
    assert_eq!(bundle.attempts, 4, "three failures then success");
    assert!(bundle.validation.accepted());
}
