//! Isolated execution of candidate projects.
//!
//! Two backends share one surface: a plain-subprocess backend that works
//! anywhere a Node.js toolchain is on PATH, and an OCI-container backend
//! for full filesystem fidelity. The flag oracle — a fresh random nonce
//! planted *outside* the served directory — is what later turns an HTTP
//! response into incontrovertible proof of traversal.
//!
//! In DoS mode the flag becomes an unbounded random source and the server
//! runs under a 1 GiB address-space cap, so a whole-file read dies and a
//! streaming implementation survives.

mod container;
pub mod port;

use std::fs;
use std::io::Write;
use std::net::{IpAddr, Ipv4Addr, UdpSocket};
use std::os::unix::process::CommandExt;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, OnceLock};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use rand::rngs::SmallRng;
use rand::{Rng, RngCore, SeedableRng};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use container::ContainerConfig;

#[derive(Debug, Error)]
pub enum SandboxError {
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("copy failed: {0}")]
    Copy(std::io::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("flag provisioning failed: {0}")]
    Flag(String),
    #[error("sandbox already torn down")]
    TornDown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Subprocess,
    Container,
}

/// Launch methods, fastest first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LaunchStrategy {
    DirectNode,
    InstallThenNode,
    InstallThenNpmStart,
}

impl LaunchStrategy {
    pub const ALL: [LaunchStrategy; 3] = [
        LaunchStrategy::DirectNode,
        LaunchStrategy::InstallThenNode,
        LaunchStrategy::InstallThenNpmStart,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            LaunchStrategy::DirectNode => "direct-node",
            LaunchStrategy::InstallThenNode => "install-then-node",
            LaunchStrategy::InstallThenNpmStart => "install-then-npm-start",
        }
    }

    fn needs_install(&self) -> bool {
        !matches!(self, LaunchStrategy::DirectNode)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunResult {
    pub strategy: LaunchStrategy,
    pub port: Option<u16>,
    pub alive: bool,
    pub startup_log: String,
}

#[derive(Debug, Clone)]
pub struct SandboxOptions {
    pub backend: Backend,
    /// DoS mode: 1 GiB cap and an unbounded flag source.
    pub dos_mode: bool,
    /// How long a strategy may take to come up.
    pub grace: Duration,
    pub poll_interval: Duration,
    pub install_timeout: Duration,
    pub node_cmd: String,
    pub npm_cmd: String,
    pub container: ContainerConfig,
}

impl Default for SandboxOptions {
    fn default() -> Self {
        SandboxOptions {
            backend: Backend::Subprocess,
            dos_mode: false,
            grace: Duration::from_secs(10),
            poll_interval: Duration::from_millis(250),
            install_timeout: Duration::from_secs(120),
            node_cmd: "node".into(),
            npm_cmd: "npm".into(),
            container: ContainerConfig::default(),
        }
    }
}

pub const DOS_MEM_LIMIT: u64 = 1 << 30;

/// Serializes the spawn→port-attribution window process-wide so snapshot
/// diffing attributes new listeners correctly.
static LAUNCH_LOCK: Mutex<()> = Mutex::new(());

struct ProcessTree {
    child: Child,
    pgid: i32,
}

struct Feeder {
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

impl Feeder {
    fn stop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(handle) = self.handle.take() {
            let _ = handle.join();
        }
    }
}

pub struct Sandbox {
    pub id: String,
    pub backend: Backend,
    /// Project root inside the sandbox; also the server's working directory.
    pub project_root: PathBuf,
    pub flag_path: PathBuf,
    pub flag_nonce: String,
    pub mem_limit: Option<u64>,
    root: Option<tempfile::TempDir>,
    source_dir: PathBuf,
    entry: PathBuf,
    opts: SandboxOptions,
    tree: Option<ProcessTree>,
    feeder: Option<Feeder>,
    container_id: Option<String>,
    torn_down: bool,
}

/// Copy a candidate project into a fresh sandbox and plant the flag oracle.
pub fn provision(
    project_dir: &Path,
    entry: &Path,
    opts: &SandboxOptions,
) -> Result<Sandbox, SandboxError> {
    match opts.backend {
        Backend::Subprocess => provision_subprocess(project_dir, entry, opts),
        Backend::Container => container::provision(project_dir, entry, opts),
    }
}

fn fresh_nonce() -> String {
    let mut bytes = [0u8; 16];
    rand::thread_rng().fill_bytes(&mut bytes);
    hex::encode(bytes)
}

fn provision_subprocess(
    project_dir: &Path,
    entry: &Path,
    opts: &SandboxOptions,
) -> Result<Sandbox, SandboxError> {
    let root = tempfile::Builder::new()
        .prefix("patrol-sbx-")
        .tempdir()
        .map_err(SandboxError::Io)?;
    let project_root = root.path().join("project");
    copy_dir(project_dir, &project_root).map_err(SandboxError::Copy)?;

    let nonce = fresh_nonce();
    let flag_path = root.path().join("flag.txt");
    let mut feeder = None;
    if opts.dos_mode {
        make_fifo(&flag_path)?;
        feeder = Some(spawn_feeder(flag_path.clone()));
    } else {
        // nonce written twice so a partial read still matches
        fs::write(&flag_path, format!("{nonce}\n{nonce}\n"))?;
    }
    let id = format!("sbx-{}", &nonce[..8]);
    crate::exploit::register_nonce(&nonce, &id);

    Ok(Sandbox {
        id,
        backend: Backend::Subprocess,
        project_root,
        flag_path,
        flag_nonce: nonce,
        mem_limit: opts.dos_mode.then_some(DOS_MEM_LIMIT),
        root: Some(root),
        source_dir: project_dir.to_path_buf(),
        entry: entry.to_path_buf(),
        opts: opts.clone(),
        tree: None,
        feeder,
        container_id: None,
        torn_down: false,
    })
}

impl Sandbox {
    /// Try the three launch methods in order; the first whose process
    /// survives (or binds a port) within the grace period wins.
    pub fn launch(&mut self) -> Result<RunResult, SandboxError> {
        if self.torn_down {
            return Err(SandboxError::TornDown);
        }
        if self.backend == Backend::Container {
            return container::launch(self);
        }
        let mut logs = String::new();
        for strategy in LaunchStrategy::ALL {
            match self.attempt_strategy(strategy) {
                Ok(Some(result)) => {
                    logs.push_str(&result.startup_log);
                    return Ok(RunResult {
                        startup_log: logs,
                        ..result
                    });
                }
                Ok(None) => {
                    logs.push_str(&format!("--- strategy {} failed\n", strategy.as_str()));
                    logs.push_str(&self.read_logs());
                    self.kill_tree();
                }
                Err(e) => {
                    logs.push_str(&format!("--- strategy {} error: {e}\n", strategy.as_str()));
                    self.kill_tree();
                }
            }
        }
        Ok(RunResult {
            strategy: LaunchStrategy::InstallThenNpmStart,
            port: None,
            alive: false,
            startup_log: logs,
        })
    }

    /// One strategy attempt against a clean project copy.
    fn attempt_strategy(
        &mut self,
        strategy: LaunchStrategy,
    ) -> Result<Option<RunResult>, SandboxError> {
        self.reset_project()?;
        if strategy.needs_install() && !self.run_install()? {
            return Ok(None);
        }

        let stdout = fs::File::create(self.log_path("stdout"))?;
        let stderr = fs::File::create(self.log_path("stderr"))?;
        let mut cmd = match strategy {
            LaunchStrategy::DirectNode | LaunchStrategy::InstallThenNode => {
                let mut c = Command::new(&self.opts.node_cmd);
                c.arg(&self.entry);
                c
            }
            LaunchStrategy::InstallThenNpmStart => {
                let mut c = Command::new(&self.opts.npm_cmd);
                c.args(["run", "start"]);
                c
            }
        };
        cmd.current_dir(&self.project_root)
            .stdin(Stdio::null())
            .stdout(stdout)
            .stderr(stderr)
            .process_group(0);
        if let Some(limit) = self.mem_limit {
            unsafe {
                cmd.pre_exec(move || {
                    let rl = libc::rlimit {
                        rlim_cur: limit,
                        rlim_max: limit,
                    };
                    if libc::setrlimit(libc::RLIMIT_AS, &rl) != 0 {
                        return Err(std::io::Error::last_os_error());
                    }
                    Ok(())
                });
            }
        }

        // hold the launch lock across spawn + port attribution
        let guard = LAUNCH_LOCK.lock().unwrap();
        let before = port::listening_ports();
        let child = cmd.spawn()?;
        let pgid = child.id() as i32;
        self.tree = Some(ProcessTree { child, pgid });

        let deadline = Instant::now() + self.opts.grace;
        loop {
            if !self.tree_alive() {
                drop(guard);
                return Ok(None);
            }
            if let Some(port) = port::detect_new_port(pgid, &before) {
                drop(guard);
                return Ok(Some(RunResult {
                    strategy,
                    port: Some(port),
                    alive: true,
                    startup_log: self.read_logs(),
                }));
            }
            if Instant::now() >= deadline {
                drop(guard);
                // survived the grace period without binding anything
                return Ok(Some(RunResult {
                    strategy,
                    port: None,
                    alive: true,
                    startup_log: self.read_logs(),
                }));
            }
            std::thread::sleep(self.opts.poll_interval);
        }
    }

    fn run_install(&self) -> Result<bool, SandboxError> {
        let stdout = fs::File::create(self.log_path("npm-stdout"))?;
        let stderr = fs::File::create(self.log_path("npm-stderr"))?;
        let mut child = Command::new(&self.opts.npm_cmd)
            .args(["install", "--no-audit", "--no-fund", "--loglevel=error"])
            .current_dir(&self.project_root)
            .stdin(Stdio::null())
            .stdout(stdout)
            .stderr(stderr)
            .process_group(0)
            .spawn()?;
        let deadline = Instant::now() + self.opts.install_timeout;
        loop {
            match child.try_wait()? {
                Some(status) => return Ok(status.success()),
                None if Instant::now() >= deadline => {
                    let pgid = child.id() as i32;
                    unsafe {
                        libc::killpg(pgid, libc::SIGKILL);
                    }
                    let _ = child.wait();
                    return Ok(false);
                }
                None => std::thread::sleep(Duration::from_millis(50)),
            }
        }
    }

    fn reset_project(&mut self) -> Result<(), SandboxError> {
        self.kill_tree();
        if self.project_root.exists() {
            fs::remove_dir_all(&self.project_root)?;
        }
        copy_dir(&self.source_dir, &self.project_root).map_err(SandboxError::Copy)
    }

    fn log_path(&self, name: &str) -> PathBuf {
        self.root
            .as_ref()
            .map(|r| r.path().join(format!("{name}.log")))
            .unwrap_or_else(|| std::env::temp_dir().join(format!("{}-{name}.log", self.id)))
    }

    fn read_logs(&self) -> String {
        let mut out = String::new();
        for name in ["npm-stdout", "npm-stderr", "stdout", "stderr"] {
            if let Ok(text) = fs::read_to_string(self.log_path(name)) {
                if !text.trim().is_empty() {
                    out.push_str(&format!("[{name}]\n{text}\n"));
                }
            }
        }
        out
    }

    fn tree_alive(&mut self) -> bool {
        match &mut self.tree {
            Some(tree) => match tree.child.try_wait() {
                Ok(Some(_)) => false,
                Ok(None) => true,
                Err(_) => false,
            },
            None => false,
        }
    }

    /// Liveness of the launched process tree.
    pub fn is_alive(&mut self) -> bool {
        if self.torn_down {
            return false;
        }
        if self.backend == Backend::Container {
            return container::is_alive(self);
        }
        self.tree_alive()
    }

    /// Poll for a LISTEN port owned by the launched tree.
    pub fn detect_port(&mut self, run: &RunResult) -> Option<u16> {
        if let Some(port) = run.port {
            return Some(port);
        }
        if !run.alive || self.torn_down {
            return None;
        }
        if self.backend == Backend::Container {
            return container::detect_port(self);
        }
        let pgid = self.tree.as_ref()?.pgid;
        let deadline = Instant::now() + self.opts.grace;
        // only inode attribution on re-poll; the spawn window is long gone
        while Instant::now() < deadline {
            let owned = port::ports_of_group(pgid);
            if let Some(&port) = owned.first() {
                return Some(port);
            }
            if !self.tree_alive() {
                return None;
            }
            std::thread::sleep(self.opts.poll_interval);
        }
        None
    }

    pub fn loopback(&self) -> IpAddr {
        match self.backend {
            Backend::Subprocess => IpAddr::V4(Ipv4Addr::LOCALHOST),
            Backend::Container => {
                container::address(self).unwrap_or(IpAddr::V4(Ipv4Addr::LOCALHOST))
            }
        }
    }

    /// Address reachable from outside the sandbox, when one exists.
    pub fn external_address(&self) -> Option<IpAddr> {
        match self.backend {
            Backend::Subprocess => host_external_ip(),
            Backend::Container => container::address(self),
        }
    }

    fn kill_tree(&mut self) {
        if let Some(mut tree) = self.tree.take() {
            unsafe {
                libc::killpg(tree.pgid, libc::SIGKILL);
            }
            let _ = tree.child.wait();
            // sweep stragglers that escaped the direct wait
            for pid in port::pids_in_group(tree.pgid) {
                unsafe {
                    libc::kill(pid, libc::SIGKILL);
                }
            }
        }
    }

    /// Idempotent resource release: kill the tree, stop the DoS feeder,
    /// remove the temp root.
    pub fn teardown(&mut self) {
        if self.torn_down {
            return;
        }
        self.torn_down = true;
        if self.backend == Backend::Container {
            container::teardown(self);
        }
        self.kill_tree();
        if let Some(mut feeder) = self.feeder.take() {
            feeder.stop();
        }
        if let Some(root) = self.root.take() {
            let _ = root.close();
        }
    }
}

impl Drop for Sandbox {
    fn drop(&mut self) {
        self.teardown();
    }
}

/// The host's primary non-loopback address, if any. Detected once with a
/// connected UDP socket; no packets leave the machine.
pub fn host_external_ip() -> Option<IpAddr> {
    static CACHE: OnceLock<Option<IpAddr>> = OnceLock::new();
    *CACHE.get_or_init(|| {
        let socket = UdpSocket::bind("0.0.0.0:0").ok()?;
        socket.connect("10.254.254.254:9").ok()?;
        let addr = socket.local_addr().ok()?.ip();
        if addr.is_loopback() {
            None
        } else {
            Some(addr)
        }
    })
}

/// Recursive project copy, also used when staging patched candidates.
pub(crate) fn copy_dir_public(from: &Path, to: &Path) -> Result<(), std::io::Error> {
    copy_dir(from, to)
}

fn copy_dir(from: &Path, to: &Path) -> Result<(), std::io::Error> {
    fs::create_dir_all(to)?;
    for entry in walkdir::WalkDir::new(from).follow_links(false) {
        let entry = entry.map_err(std::io::Error::other)?;
        let rel = entry
            .path()
            .strip_prefix(from)
            .map_err(std::io::Error::other)?;
        if rel.as_os_str().is_empty() {
            continue;
        }
        let dest = to.join(rel);
        if entry.file_type().is_dir() {
            fs::create_dir_all(&dest)?;
        } else if entry.file_type().is_file() {
            fs::copy(entry.path(), &dest)?;
        }
    }
    Ok(())
}

fn make_fifo(path: &Path) -> Result<(), SandboxError> {
    let cpath = std::ffi::CString::new(path.to_string_lossy().as_bytes())
        .map_err(|e| SandboxError::Flag(e.to_string()))?;
    let rc = unsafe { libc::mkfifo(cpath.as_ptr(), 0o644) };
    if rc != 0 {
        return Err(SandboxError::Flag(format!(
            "mkfifo: {}",
            std::io::Error::last_os_error()
        )));
    }
    Ok(())
}

/// Pumps random bytes into the FIFO whenever a reader is attached, so a
/// whole-file read never sees EOF.
fn spawn_feeder(path: PathBuf) -> Feeder {
    let stop = Arc::new(AtomicBool::new(false));
    let stop_flag = Arc::clone(&stop);
    let handle = std::thread::spawn(move || {
        use std::os::unix::fs::OpenOptionsExt;
        let mut rng = SmallRng::from_entropy();
        let mut block = vec![0u8; 1 << 20];
        rng.fill(block.as_mut_slice());
        while !stop_flag.load(Ordering::SeqCst) {
            // O_NONBLOCK: opening a FIFO for write fails with ENXIO until a
            // reader appears, which keeps this thread stoppable
            let file = fs::OpenOptions::new()
                .write(true)
                .custom_flags(libc::O_NONBLOCK)
                .open(&path);
            let mut file = match file {
                Ok(f) => f,
                Err(_) => {
                    std::thread::sleep(Duration::from_millis(20));
                    continue;
                }
            };
            loop {
                if stop_flag.load(Ordering::SeqCst) {
                    return;
                }
                match file.write(&block) {
                    Ok(_) => {}
                    Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                        std::thread::sleep(Duration::from_millis(1));
                    }
                    Err(_) => break, // reader went away
                }
            }
        }
    });
    Feeder {
        stop,
        handle: Some(handle),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Read;

    fn fixture(dir: &Path, name: &str, content: &str) {
        fs::create_dir_all(dir).unwrap();
        fs::write(dir.join(name), content).unwrap();
    }

    fn opts_fast() -> SandboxOptions {
        SandboxOptions {
            grace: Duration::from_secs(8),
            poll_interval: Duration::from_millis(100),
            ..SandboxOptions::default()
        }
    }

    #[test]
    fn provision_writes_doubled_nonce_flag() {
        let src = tempfile::tempdir().unwrap();
        fixture(src.path(), "server.js", "setTimeout(() => {}, 1000);\n");
        let sbx = provision(src.path(), Path::new("server.js"), &opts_fast()).unwrap();
        let content = fs::read_to_string(&sbx.flag_path).unwrap();
        assert_eq!(content.len(), 66); // 2 x 32 hex + 2 newlines
        let lines: Vec<&str> = content.lines().collect();
        assert_eq!(
            lines,
            vec![sbx.flag_nonce.as_str(), sbx.flag_nonce.as_str()]
        );
        assert_eq!(sbx.flag_nonce.len(), 32);
        // flag lives next to, not inside, the project
        assert!(!sbx.flag_path.starts_with(&sbx.project_root));
    }

    #[test]
    fn nonces_are_never_reused() {
        let src = tempfile::tempdir().unwrap();
        fixture(src.path(), "a.js", "1;\n");
        let a = provision(src.path(), Path::new("a.js"), &opts_fast()).unwrap();
        let b = provision(src.path(), Path::new("a.js"), &opts_fast()).unwrap();
        assert_ne!(a.flag_nonce, b.flag_nonce);
    }

    #[test]
    fn dos_mode_flag_never_reaches_eof() {
        let src = tempfile::tempdir().unwrap();
        fixture(src.path(), "a.js", "1;\n");
        let mut o = opts_fast();
        o.dos_mode = true;
        let mut sbx = provision(src.path(), Path::new("a.js"), &o).unwrap();
        assert_eq!(sbx.mem_limit, Some(DOS_MEM_LIMIT));
        let mut f = fs::File::open(&sbx.flag_path).unwrap();
        let mut buf = vec![0u8; 1 << 20];
        let mut total = 0usize;
        while total < (4 << 20) {
            let n = f.read(&mut buf).unwrap();
            assert!(n > 0, "unbounded source must not EOF");
            total += n;
        }
        drop(f);
        sbx.teardown();
    }

    #[test]
    fn launch_direct_node_and_find_port() {
        let src = tempfile::tempdir().unwrap();
        fixture(
            src.path(),
            "server.js",
            "require('http').createServer((q, s) => s.end('ok')).listen(19901);\n",
        );
        let mut sbx = provision(src.path(), Path::new("server.js"), &opts_fast()).unwrap();
        let run = sbx.launch().unwrap();
        assert_eq!(run.strategy, LaunchStrategy::DirectNode);
        assert!(run.alive);
        assert_eq!(run.port, Some(19901));
        assert!(sbx.is_alive());
        sbx.teardown();
        assert!(!sbx.is_alive());
        // teardown twice is a no-op
        sbx.teardown();
        // port released after teardown
        std::thread::sleep(Duration::from_millis(200));
        assert!(!port::listening_ports().contains(&19901));
    }

    #[test]
    fn never_listening_process_yields_no_port() {
        let src = tempfile::tempdir().unwrap();
        fixture(src.path(), "busy.js", "setInterval(() => {}, 1000);\n");
        let mut o = opts_fast();
        o.grace = Duration::from_millis(1200);
        let mut sbx = provision(src.path(), Path::new("busy.js"), &o).unwrap();
        let run = sbx.launch().unwrap();
        assert!(run.alive);
        assert_eq!(run.port, None);
        assert_eq!(sbx.detect_port(&run), None);
        sbx.teardown();
    }

    #[test]
    fn delayed_bind_is_caught_by_polling() {
        let src = tempfile::tempdir().unwrap();
        fixture(
            src.path(),
            "slow.js",
            "setTimeout(() => require('http').createServer((q,s)=>s.end('x')).listen(19902), 1500);\n",
        );
        let mut sbx = provision(src.path(), Path::new("slow.js"), &opts_fast()).unwrap();
        let run = sbx.launch().unwrap();
        assert_eq!(run.port, Some(19902));
        sbx.teardown();
    }

    #[test]
    fn crashing_entry_reports_dead() {
        let src = tempfile::tempdir().unwrap();
        fixture(src.path(), "boom.js", "process.exit(3);\n");
        let mut o = opts_fast();
        o.grace = Duration::from_millis(900);
        o.install_timeout = Duration::from_secs(30);
        let mut sbx = provision(src.path(), Path::new("boom.js"), &o).unwrap();
        let run = sbx.launch().unwrap();
        assert!(!run.alive);
        assert_eq!(run.port, None);
        sbx.teardown();
    }
}
