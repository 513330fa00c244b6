//! Minimal HTTP/1.1 client that transmits the request path verbatim.
//!
//! One connection per request, one request per connection. The path bytes
//! are spliced into the request line untouched: no percent (re)encoding, no
//! dot-segment removal, no canonicalization of any kind.

use std::io::{Read, Write};
use std::net::{IpAddr, SocketAddr, TcpStream};
use std::time::{Duration, Instant};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum RawHttpError {
    #[error("connect failed: {0}")]
    Connect(std::io::Error),
    #[error("i/o during exchange: {0}")]
    Io(#[from] std::io::Error),
    #[error("read timed out")]
    ReadTimeout,
    #[error("malformed response: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone)]
pub struct HttpResponse {
    pub status: u16,
    pub headers: Vec<(String, String)>,
    pub body: Vec<u8>,
}

impl HttpResponse {
    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }
}

/// Send `GET <raw_path> HTTP/1.1` and parse the response.
pub fn send_raw_get(
    host: IpAddr,
    port: u16,
    raw_path: &[u8],
    timeout: Duration,
) -> Result<HttpResponse, RawHttpError> {
    let addr = SocketAddr::new(host, port);
    let mut stream = TcpStream::connect_timeout(&addr, timeout).map_err(RawHttpError::Connect)?;
    stream.set_read_timeout(Some(timeout))?;
    stream.set_write_timeout(Some(timeout))?;

    let mut request = Vec::with_capacity(raw_path.len() + 64);
    request.extend_from_slice(b"GET ");
    request.extend_from_slice(raw_path);
    request.extend_from_slice(b" HTTP/1.1\r\nHost: ");
    request.extend_from_slice(format_host(host, port).as_bytes());
    request.extend_from_slice(b"\r\nConnection: close\r\n\r\n");
    stream.write_all(&request)?;

    let deadline = Instant::now() + timeout;
    let raw = read_until_close(&mut stream, deadline)?;
    parse_response(&raw)
}

fn format_host(host: IpAddr, port: u16) -> String {
    match host {
        IpAddr::V4(v4) => format!("{v4}:{port}"),
        IpAddr::V6(v6) => format!("[{v6}]:{port}"),
    }
}

fn read_until_close(stream: &mut TcpStream, deadline: Instant) -> Result<Vec<u8>, RawHttpError> {
    let mut buf = Vec::new();
    let mut chunk = [0u8; 8192];
    loop {
        if Instant::now() > deadline {
            return Err(RawHttpError::ReadTimeout);
        }
        match stream.read(&mut chunk) {
            Ok(0) => return Ok(buf),
            Ok(n) => {
                buf.extend_from_slice(&chunk[..n]);
                // responses the fixtures produce are small; 16 MiB is a
                // generous stop so a runaway body cannot wedge the prober
                if buf.len() > 16 * 1024 * 1024 {
                    return Ok(buf);
                }
            }
            Err(e)
                if e.kind() == std::io::ErrorKind::WouldBlock
                    || e.kind() == std::io::ErrorKind::TimedOut =>
            {
                // server kept the connection open without sending more;
                // return what we have if the head is already parseable
                if buf.is_empty() {
                    return Err(RawHttpError::ReadTimeout);
                }
                return Ok(buf);
            }
            Err(e) if e.kind() == std::io::ErrorKind::ConnectionReset && !buf.is_empty() => {
                return Ok(buf);
            }
            Err(e) => return Err(RawHttpError::Io(e)),
        }
    }
}

fn parse_response(raw: &[u8]) -> Result<HttpResponse, RawHttpError> {
    let head_end = find_subslice(raw, b"\r\n\r\n")
        .ok_or_else(|| RawHttpError::Malformed("no header terminator".into()))?;
    let head = std::str::from_utf8(&raw[..head_end])
        .map_err(|_| RawHttpError::Malformed("non-utf8 header block".into()))?;
    let mut lines = head.split("\r\n");
    let status_line = lines
        .next()
        .ok_or_else(|| RawHttpError::Malformed("empty response".into()))?;
    let mut parts = status_line.splitn(3, ' ');
    let version = parts.next().unwrap_or("");
    if !version.starts_with("HTTP/") {
        return Err(RawHttpError::Malformed(format!(
            "bad status line: {status_line}"
        )));
    }
    let status: u16 = parts
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| RawHttpError::Malformed(format!("bad status code in: {status_line}")))?;
    let headers: Vec<(String, String)> = lines
        .filter_map(|l| {
            l.split_once(':')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        })
        .collect();

    let payload = &raw[head_end + 4..];
    let body = decode_body(&headers, payload)?;
    Ok(HttpResponse {
        status,
        headers,
        body,
    })
}

fn decode_body(headers: &[(String, String)], payload: &[u8]) -> Result<Vec<u8>, RawHttpError> {
    let header = |name: &str| {
        headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    };
    if header("transfer-encoding").is_some_and(|v| v.to_ascii_lowercase().contains("chunked")) {
        return decode_chunked(payload);
    }
    if let Some(len) = header("content-length").and_then(|v| v.parse::<usize>().ok()) {
        return Ok(payload[..len.min(payload.len())].to_vec());
    }
    // connection-close delimited
    Ok(payload.to_vec())
}

fn decode_chunked(mut payload: &[u8]) -> Result<Vec<u8>, RawHttpError> {
    let mut body = Vec::new();
    loop {
        let line_end = match find_subslice(payload, b"\r\n") {
            Some(at) => at,
            // truncated tail (e.g. server killed mid-stream): keep what we have
            None => return Ok(body),
        };
        let size_text = std::str::from_utf8(&payload[..line_end])
            .map_err(|_| RawHttpError::Malformed("bad chunk size line".into()))?
            .trim();
        let size_text = size_text.split(';').next().unwrap_or("").trim();
        let size = usize::from_str_radix(size_text, 16)
            .map_err(|_| RawHttpError::Malformed(format!("bad chunk size: {size_text}")))?;
        payload = &payload[line_end + 2..];
        if size == 0 {
            return Ok(body);
        }
        if payload.len() < size {
            body.extend_from_slice(payload);
            return Ok(body);
        }
        body.extend_from_slice(&payload[..size]);
        payload = &payload[size..];
        if payload.starts_with(b"\r\n") {
            payload = &payload[2..];
        }
    }
}

fn find_subslice(haystack: &[u8], needle: &[u8]) -> Option<usize> {
    haystack
        .windows(needle.len())
        .position(|window| window == needle)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::net::{Ipv4Addr, TcpListener};
    use std::sync::mpsc;
    use std::thread;

    /// One-shot capture server: records the raw request line, replies with a
    /// fixed response.
    fn capture_server(response: &'static [u8]) -> (u16, mpsc::Receiver<Vec<u8>>) {
        let listener = TcpListener::bind((Ipv4Addr::LOCALHOST, 0)).unwrap();
        let port = listener.local_addr().unwrap().port();
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            if let Ok((mut conn, _)) = listener.accept() {
                let mut buf = [0u8; 4096];
                let n = conn.read(&mut buf).unwrap_or(0);
                let line_end = buf[..n].windows(2).position(|w| w == b"\r\n").unwrap_or(n);
                let _ = tx.send(buf[..line_end].to_vec());
                let _ = conn.write_all(response);
            }
        });
        (port, rx)
    }

    #[test]
    fn path_bytes_go_on_the_wire_verbatim() {
        let (port, rx) = capture_server(b"HTTP/1.1 200 OK\r\nContent-Length: 2\r\n\r\nok");
        let resp = send_raw_get(
            Ipv4Addr::LOCALHOST.into(),
            port,
            b"/../../flag.txt",
            Duration::from_secs(2),
        )
        .unwrap();
        assert_eq!(resp.status, 200);
        assert_eq!(resp.body, b"ok");
        let line = rx.recv().unwrap();
        assert_eq!(line, b"GET /../../flag.txt HTTP/1.1".to_vec());
    }

    #[test]
    fn percent_sequences_untouched() {
        let (port, rx) = capture_server(b"HTTP/1.1 404 Not Found\r\nContent-Length: 0\r\n\r\n");
        let resp = send_raw_get(
            Ipv4Addr::LOCALHOST.into(),
            port,
            b"/%2e%2e/x",
            Duration::from_secs(2),
        )
        .unwrap();
        assert_eq!(resp.status, 404);
        assert_eq!(rx.recv().unwrap(), b"GET /%2e%2e/x HTTP/1.1".to_vec());
    }

    #[test]
    fn chunked_body_is_decoded() {
        let (port, _rx) = capture_server(
            b"HTTP/1.1 200 OK\r\nTransfer-Encoding: chunked\r\n\r\n5\r\nhello\r\n6\r\n world\r\n0\r\n\r\n",
        );
        let resp = send_raw_get(
            Ipv4Addr::LOCALHOST.into(),
            port,
            b"/",
            Duration::from_secs(2),
        )
        .unwrap();
        assert_eq!(resp.body, b"hello world");
    }

    #[test]
    fn connect_refused_is_a_connect_error() {
        // bind-then-drop to get a port that refuses connections
        let port = {
            let l = TcpListener::bind((Ipv4Addr::LOCALHOST, 0)).unwrap();
            l.local_addr().unwrap().port()
        };
        let err = send_raw_get(
            Ipv4Addr::LOCALHOST.into(),
            port,
            b"/",
            Duration::from_millis(500),
        )
        .unwrap_err();
        assert!(matches!(err, RawHttpError::Connect(_)));
    }

    #[test]
    fn malformed_status_line_rejected() {
        let (port, _rx) = capture_server(b"BANANA\r\n\r\n");
        let err = send_raw_get(
            Ipv4Addr::LOCALHOST.into(),
            port,
            b"/",
            Duration::from_secs(2),
        )
        .unwrap_err();
        assert!(matches!(err, RawHttpError::Malformed(_)));
    }
}
