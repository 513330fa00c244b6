//! OCI-container backend, driven through the `docker` CLI.
//!
//! Full-fidelity variant of the sandbox: the flag really lives at
//! `/flag.txt`, the memory cap is a cgroup limit, and the DoS flag source is
//! a bind-mounted `/dev/urandom`. Needs a reachable container daemon, so
//! everything here is gated behind configuration; CI runs the subprocess
//! backend.

use std::net::IpAddr;
use std::path::Path;
use std::process::Command;

use super::{
    fresh_nonce, Backend, LaunchStrategy, RunResult, Sandbox, SandboxError, SandboxOptions,
};

#[derive(Debug, Clone)]
pub struct ContainerConfig {
    pub image: String,
    pub docker_cmd: String,
}

impl Default for ContainerConfig {
    fn default() -> Self {
        ContainerConfig {
            image: "node:20".into(),
            docker_cmd: "docker".into(),
        }
    }
}

fn docker(opts: &SandboxOptions, args: &[&str]) -> Result<String, SandboxError> {
    let out = Command::new(&opts.container.docker_cmd)
        .args(args)
        .output()
        .map_err(|e| SandboxError::BackendUnavailable(format!("docker: {e}")))?;
    if !out.status.success() {
        return Err(SandboxError::BackendUnavailable(format!(
            "docker {}: {}",
            args.first().unwrap_or(&""),
            String::from_utf8_lossy(&out.stderr)
        )));
    }
    Ok(String::from_utf8_lossy(&out.stdout).trim().to_string())
}

pub fn provision(
    project_dir: &Path,
    entry: &Path,
    opts: &SandboxOptions,
) -> Result<Sandbox, SandboxError> {
    let nonce = fresh_nonce();
    let name = format!("patrol-sbx-{}", &nonce[..8]);
    let mut args: Vec<String> = vec![
        "run".into(),
        "-d".into(),
        "--name".into(),
        name.clone(),
        "-w".into(),
        "/app".into(),
    ];
    if opts.dos_mode {
        args.push("--memory".into());
        args.push("1g".into());
        args.push("-v".into());
        args.push("/dev/urandom:/flag.txt:ro".into());
    }
    args.push(opts.container.image.clone());
    args.extend(["sleep".into(), "86400".into()]);
    let arg_refs: Vec<&str> = args.iter().map(String::as_str).collect();
    docker(opts, &arg_refs)?;

    docker(
        opts,
        &[
            "cp",
            &project_dir.to_string_lossy(),
            &format!("{name}:/app"),
        ],
    )?;
    if !opts.dos_mode {
        docker(
            opts,
            &[
                "exec",
                &name,
                "sh",
                "-c",
                &format!("printf '%s\\n%s\\n' {nonce} {nonce} > /flag.txt"),
            ],
        )?;
    }
    crate::exploit::register_nonce(&nonce, &name);

    Ok(Sandbox {
        id: name.clone(),
        backend: Backend::Container,
        project_root: "/app".into(),
        flag_path: "/flag.txt".into(),
        flag_nonce: nonce,
        mem_limit: opts.dos_mode.then_some(super::DOS_MEM_LIMIT),
        root: None,
        source_dir: project_dir.to_path_buf(),
        entry: entry.to_path_buf(),
        opts: opts.clone(),
        tree: None,
        feeder: None,
        container_id: Some(name),
        torn_down: false,
    })
}

pub fn launch(sandbox: &mut Sandbox) -> Result<RunResult, SandboxError> {
    let Some(name) = sandbox.container_id.clone() else {
        return Err(SandboxError::TornDown);
    };
    let entry = sandbox.entry.to_string_lossy().to_string();
    let mut log = String::new();
    for strategy in LaunchStrategy::ALL {
        // clean slate per strategy
        docker(
            &sandbox.opts,
            &["exec", &name, "sh", "-c", "rm -rf /app && mkdir /app"],
        )?;
        docker(
            &sandbox.opts,
            &[
                "cp",
                &sandbox.source_dir.to_string_lossy(),
                &format!("{name}:/app"),
            ],
        )?;
        let script = match strategy {
            LaunchStrategy::DirectNode => format!("cd /app && node {entry}"),
            LaunchStrategy::InstallThenNode => format!(
                "cd /app && npm install --no-audit --no-fund --loglevel=error && node {entry}"
            ),
            LaunchStrategy::InstallThenNpmStart => {
                "cd /app && npm install --no-audit --no-fund --loglevel=error && npm run start"
                    .to_string()
            }
        };
        docker(&sandbox.opts, &["exec", "-d", &name, "sh", "-c", &script])?;
        let deadline = std::time::Instant::now() + sandbox.opts.grace;
        while std::time::Instant::now() < deadline {
            if let Some(port) = detect_port(sandbox) {
                return Ok(RunResult {
                    strategy,
                    port: Some(port),
                    alive: true,
                    startup_log: log,
                });
            }
            if !is_alive(sandbox) {
                break;
            }
            std::thread::sleep(sandbox.opts.poll_interval);
        }
        log.push_str(&format!("--- strategy {} failed\n", strategy.as_str()));
        let _ = docker(&sandbox.opts, &["exec", &name, "pkill", "-9", "node"]);
    }
    Ok(RunResult {
        strategy: LaunchStrategy::InstallThenNpmStart,
        port: None,
        alive: false,
        startup_log: log,
    })
}

pub fn detect_port(sandbox: &Sandbox) -> Option<u16> {
    let name = sandbox.container_id.as_ref()?;
    let text = docker(
        &sandbox.opts,
        &[
            "exec",
            name,
            "sh",
            "-c",
            "cat /proc/net/tcp /proc/net/tcp6 2>/dev/null",
        ],
    )
    .ok()?;
    for line in text.lines() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() >= 4 && fields[3] == "0A" {
            if let Some(hex) = fields[1].rsplit(':').next() {
                if let Ok(port) = u16::from_str_radix(hex, 16) {
                    return Some(port);
                }
            }
        }
    }
    None
}

pub fn is_alive(sandbox: &Sandbox) -> bool {
    let Some(name) = sandbox.container_id.as_ref() else {
        return false;
    };
    docker(&sandbox.opts, &["exec", name, "pgrep", "node"]).is_ok()
}

pub fn address(sandbox: &Sandbox) -> Option<IpAddr> {
    let name = sandbox.container_id.as_ref()?;
    let ip = docker(
        &sandbox.opts,
        &[
            "inspect",
            "-f",
            "{{range .NetworkSettings.Networks}}{{.IPAddress}}{{end}}",
            name,
        ],
    )
    .ok()?;
    ip.parse().ok()
}

pub fn teardown(sandbox: &mut Sandbox) {
    if let Some(name) = sandbox.container_id.take() {
        let _ = docker(&sandbox.opts, &["rm", "-f", &name]);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Exercises the real container daemon; run with
    // `cargo test -- --ignored container_round_trip` on a docker host.
    #[test]
    #[ignore = "requires a container daemon"]
    fn container_round_trip() {
        let src = tempfile::tempdir().unwrap();
        std::fs::write(
            src.path().join("server.js"),
            "require('http').createServer((q,s)=>s.end('ok')).listen(8080);",
        )
        .unwrap();
        let opts = SandboxOptions {
            backend: Backend::Container,
            ..SandboxOptions::default()
        };
        let mut sbx = provision(src.path(), Path::new("server.js"), &opts).unwrap();
        let run = launch(&mut sbx).unwrap();
        assert!(run.alive);
        sbx.teardown();
    }
}
