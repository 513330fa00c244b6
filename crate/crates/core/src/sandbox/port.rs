//! Discovery of TCP ports in LISTEN state, attributed to a process group.
//!
//! Attribution tries socket-inode matching against `/proc/<pid>/fd` first.
//! Some sandboxed kernels (gVisor and friends) present socket inodes in
//! `/proc/net/tcp*` that do not line up with fd link targets; for those a
//! snapshot diff taken around the spawn works instead — the caller holds a
//! process-wide launch lock so new listeners in the window are ours.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

/// (port, socket inode) of every listening TCP socket.
pub fn listening_sockets() -> Vec<(u16, u64)> {
    let mut out = Vec::new();
    for file in ["/proc/net/tcp", "/proc/net/tcp6"] {
        let Ok(text) = fs::read_to_string(file) else {
            continue;
        };
        for line in text.lines().skip(1) {
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() < 10 {
                continue;
            }
            // state 0A = LISTEN
            if fields[3] != "0A" {
                continue;
            }
            let Some(port_hex) = fields[1].rsplit(':').next() else {
                continue;
            };
            let Ok(port) = u16::from_str_radix(port_hex, 16) else {
                continue;
            };
            let Ok(inode) = fields[9].parse::<u64>() else {
                continue;
            };
            out.push((port, inode));
        }
    }
    out
}

pub fn listening_ports() -> HashSet<u16> {
    listening_sockets().into_iter().map(|(p, _)| p).collect()
}

/// All pids whose process group matches `pgid`.
pub fn pids_in_group(pgid: i32) -> Vec<i32> {
    let mut pids = Vec::new();
    let Ok(entries) = fs::read_dir("/proc") else {
        return pids;
    };
    for entry in entries.flatten() {
        let name = entry.file_name();
        let Some(pid) = name.to_str().and_then(|s| s.parse::<i32>().ok()) else {
            continue;
        };
        let stat_path = format!("/proc/{pid}/stat");
        let Ok(stat) = fs::read_to_string(&stat_path) else {
            continue;
        };
        // field 5 (1-based) after the parenthesized comm is the pgrp
        let Some(close) = stat.rfind(')') else {
            continue;
        };
        let rest: Vec<&str> = stat[close + 1..].split_whitespace().collect();
        if rest.len() >= 3 && rest[2].parse::<i32>() == Ok(pgid) {
            pids.push(pid);
        }
    }
    pids
}

/// Ports owned by the process group, via fd socket-inode matching.
pub fn ports_of_group(pgid: i32) -> Vec<u16> {
    let sockets = listening_sockets();
    let mut ports = Vec::new();
    for pid in pids_in_group(pgid) {
        let fd_dir = format!("/proc/{pid}/fd");
        let Ok(entries) = fs::read_dir(Path::new(&fd_dir)) else {
            continue;
        };
        for entry in entries.flatten() {
            let Ok(target) = fs::read_link(entry.path()) else {
                continue;
            };
            let target = target.to_string_lossy();
            let Some(inode_text) = target
                .strip_prefix("socket:[")
                .and_then(|s| s.strip_suffix(']'))
            else {
                continue;
            };
            let Ok(inode) = inode_text.parse::<u64>() else {
                continue;
            };
            if let Some(&(port, _)) = sockets.iter().find(|&&(_, ino)| ino == inode) {
                if !ports.contains(&port) {
                    ports.push(port);
                }
            }
        }
    }
    ports.sort_unstable();
    ports
}

/// Best available attribution: inode match first, then snapshot diff.
pub fn detect_new_port(pgid: i32, before: &std::collections::HashSet<u16>) -> Option<u16> {
    let owned = ports_of_group(pgid);
    if let Some(&port) = owned.first() {
        return Some(port);
    }
    let now = listening_ports();
    let mut fresh: Vec<u16> = now.difference(before).copied().collect();
    fresh.sort_unstable();
    fresh.first().copied()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::net::TcpListener;

    #[test]
    fn own_listener_is_visible() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let port = listener.local_addr().unwrap().port();
        assert!(listening_ports().contains(&port));
        drop(listener);
    }

    #[test]
    fn snapshot_diff_finds_new_listener() {
        let before = listening_ports();
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let port = listener.local_addr().unwrap().port();
        let after = listening_ports();
        assert!(after.difference(&before).any(|&p| p == port));
    }

    #[test]
    fn own_process_group_is_listed() {
        let me = std::process::id() as i32;
        let pgid = unsafe { libc::getpgid(me) };
        assert!(pids_in_group(pgid).contains(&me));
    }
}
