//! Proving exploitability over the wire.
//!
//! The whole point of the raw client is that it does *not* behave like a
//! browser or curl: request paths go on the wire byte-for-byte, with no
//! dot-segment removal and no percent re-encoding. Well-behaved clients
//! normalize `..` away, which is precisely why this bug class looks safe
//! when tested by hand.

mod payloads;
mod rawhttp;

pub use payloads::{payload_catalog, Payload, PayloadFamily};
pub use rawhttp::{send_raw_get, HttpResponse, RawHttpError};

use std::collections::HashMap;
use std::net::IpAddr;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sandbox::Sandbox;

#[derive(Debug, Error)]
pub enum ExploitError {
    #[error("endpoint died while probing (payload {payload:?}): possible crash, not a traversal")]
    EndpointDied { payload: String },
    #[error("nonce from a different sandbox observed in response; cross-sandbox confusion")]
    CrossSandboxConfusion,
    #[error("exploit budget of {0:?} exhausted")]
    BudgetExhausted(Duration),
}

/// Where the exploit was proven to work from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackVectorKind {
    Network,
    Local,
    None,
}

/// Facts proven by probing a live candidate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExploitOutcome {
    pub traversal: bool,
    pub winning_payload: Option<Payload>,
    pub dos: bool,
    pub attack_vector: AttackVectorKind,
    /// Response excerpt around the nonce, empty when traversal is false.
    pub evidence: String,
}

impl ExploitOutcome {
    pub fn not_exploited() -> Self {
        ExploitOutcome {
            traversal: false,
            winning_payload: None,
            dos: false,
            attack_vector: AttackVectorKind::None,
            evidence: String::new(),
        }
    }
}

/// Tuning knobs; defaults match the pipeline-wide budgets.
#[derive(Debug, Clone)]
pub struct ProbeOptions {
    pub request_timeout: Duration,
    pub budget: Duration,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        ProbeOptions {
            request_timeout: Duration::from_secs(5),
            budget: Duration::from_secs(60),
        }
    }
}

// Every nonce ever planted in this process, so a response carrying some
// *other* sandbox's nonce trips an assertion instead of a false positive.
static ISSUED_NONCES: Mutex<Option<HashMap<String, String>>> = Mutex::new(None);

pub(crate) fn register_nonce(nonce: &str, sandbox_id: &str) {
    let mut lock = ISSUED_NONCES.lock().unwrap();
    lock.get_or_insert_with(HashMap::new)
        .insert(nonce.to_string(), sandbox_id.to_string());
}

fn foreign_nonce_in(body: &[u8], expected: &str) -> bool {
    let lock = ISSUED_NONCES.lock().unwrap();
    let Some(map) = lock.as_ref() else {
        return false;
    };
    let text = String::from_utf8_lossy(body);
    map.keys()
        .any(|nonce| nonce != expected && text.contains(nonce.as_str()))
}

/// Walk the catalog in order against one endpoint; first response whose body
/// carries the flag nonce wins.
pub fn try_traversal(
    host: IpAddr,
    port: u16,
    flag_nonce: &str,
    catalog: &[Payload],
    opts: &ProbeOptions,
) -> Result<ExploitOutcome, ExploitError> {
    let started = Instant::now();
    let mut seen_alive = false;
    for payload in catalog {
        if started.elapsed() > opts.budget {
            return Err(ExploitError::BudgetExhausted(opts.budget));
        }
        match send_raw_get(host, port, &payload.raw_path, opts.request_timeout) {
            Ok(resp) => {
                seen_alive = true;
                if foreign_nonce_in(&resp.body, flag_nonce) {
                    return Err(ExploitError::CrossSandboxConfusion);
                }
                let text = String::from_utf8_lossy(&resp.body);
                if let Some(at) = text.find(flag_nonce) {
                    let start = at.saturating_sub(16);
                    let end = (at + flag_nonce.len() + 16).min(text.len());
                    return Ok(ExploitOutcome {
                        traversal: true,
                        winning_payload: Some(payload.clone()),
                        dos: false,
                        attack_vector: AttackVectorKind::None,
                        evidence: text[start..end].to_string(),
                    });
                }
            }
            Err(RawHttpError::Connect(_)) if !seen_alive => {
                // endpoint not reachable from here at all; report cleanly
                return Ok(ExploitOutcome::not_exploited());
            }
            Err(_) if seen_alive => {
                return Err(ExploitError::EndpointDied {
                    payload: payload.printable(),
                });
            }
            Err(_) => return Ok(ExploitOutcome::not_exploited()),
        }
    }
    Ok(ExploitOutcome::not_exploited())
}

/// Memory-exhaustion probe. The sandbox must be provisioned in DoS mode
/// (capped memory, unbounded flag source) and traversal must already be
/// proven. Returns true iff the server process dies within 10 seconds of
/// receiving the winning payload.
pub fn try_dos(sandbox: &mut Sandbox, port: u16, winning: &Payload, opts: &ProbeOptions) -> bool {
    let host = sandbox.loopback();
    // fire and forget: a whole-file read never responds, so ignore the result
    let _ = send_raw_get(host, port, &winning.raw_path, opts.request_timeout);
    let deadline = Instant::now() + Duration::from_secs(10);
    while Instant::now() < deadline {
        if !sandbox.is_alive() {
            return true;
        }
        std::thread::sleep(Duration::from_millis(100));
    }
    !sandbox.is_alive()
}

/// Decide the CVSS attack vector by trying the exploit from outside the
/// sandbox first, then from loopback.
pub fn determine_attack_vector(
    sandbox: &Sandbox,
    port: u16,
    flag_nonce: &str,
    catalog: &[Payload],
    opts: &ProbeOptions,
) -> Result<(AttackVectorKind, ExploitOutcome), ExploitError> {
    if let Some(external) = sandbox.external_address() {
        let outcome = try_traversal(external, port, flag_nonce, catalog, opts)?;
        if outcome.traversal {
            let mut outcome = outcome;
            outcome.attack_vector = AttackVectorKind::Network;
            return Ok((AttackVectorKind::Network, outcome));
        }
    }
    let outcome = try_traversal(sandbox.loopback(), port, flag_nonce, catalog, opts)?;
    if outcome.traversal {
        let mut outcome = outcome;
        outcome.attack_vector = AttackVectorKind::Local;
        return Ok((AttackVectorKind::Local, outcome));
    }
    Ok((AttackVectorKind::None, ExploitOutcome::not_exploited()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{Read, Write};
    use std::net::{Ipv4Addr, TcpListener};

    #[test]
    fn foreign_nonce_match_is_flagged_not_a_success() {
        // a server that echoes some *other* sandbox's nonce must trip the
        // confusion check instead of counting as a traversal
        register_nonce("aaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaa", "sbx-ours");
        register_nonce("ffffffffffffffffffffffffffffffff", "sbx-theirs");
        let listener = TcpListener::bind((Ipv4Addr::LOCALHOST, 0)).unwrap();
        let port = listener.local_addr().unwrap().port();
        std::thread::spawn(move || {
            for conn in listener.incoming().take(1) {
                let Ok(mut conn) = conn else { return };
                let mut buf = [0u8; 1024];
                let _ = conn.read(&mut buf);
                let body = "ffffffffffffffffffffffffffffffff";
                let _ = conn.write_all(
                    format!(
                        "HTTP/1.1 200 OK\r\nContent-Length: {}\r\n\r\n{body}",
                        body.len()
                    )
                    .as_bytes(),
                );
            }
        });
        let catalog = payload_catalog("flag.txt");
        let err = try_traversal(
            Ipv4Addr::LOCALHOST.into(),
            port,
            "aaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaa",
            &catalog[..1],
            &ProbeOptions {
                request_timeout: Duration::from_secs(2),
                budget: Duration::from_secs(5),
            },
        )
        .unwrap_err();
        assert!(matches!(err, ExploitError::CrossSandboxConfusion));
    }
}
