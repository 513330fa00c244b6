//! Real code-search adapter. Config-gated; the acceptance suite never
//! touches the network.

use chrono::NaiveDate;
use serde::Deserialize;

use super::{
    ProviderError, SearchHit, SearchPage, SearchProvider, SearchQuery, MAX_PAGES, PAGE_SIZE,
};

pub struct GithubSearchProvider {
    token: String,
    api_base: String,
    client: reqwest::blocking::Client,
}

impl GithubSearchProvider {
    /// Token read from the named environment variable.
    pub fn from_env(token_env: &str) -> Result<Self, ProviderError> {
        let token = std::env::var(token_env)
            .map_err(|_| ProviderError::Transport(format!("{token_env} not set")))?;
        Ok(GithubSearchProvider {
            token,
            api_base: "https://api.github.com".into(),
            client: reqwest::blocking::Client::builder()
                .user_agent("patrol-research-crawler")
                .build()
                .map_err(|e| ProviderError::Transport(e.to_string()))?,
        })
    }
}

#[derive(Deserialize)]
struct CodeSearchResponse {
    total_count: u64,
    items: Vec<CodeSearchItem>,
}

#[derive(Deserialize)]
struct CodeSearchItem {
    path: String,
    html_url: String,
    url: String,
    repository: RepoInfo,
}

#[derive(Deserialize)]
struct RepoInfo {
    full_name: String,
    #[serde(default)]
    stargazers_count: u32,
    #[serde(default)]
    pushed_at: Option<String>,
}

#[derive(Deserialize)]
struct ContentResponse {
    #[serde(default)]
    content: String,
    #[serde(default)]
    encoding: String,
}

impl SearchProvider for GithubSearchProvider {
    fn search(&self, query: &SearchQuery, page: u32) -> Result<SearchPage, ProviderError> {
        if page > MAX_PAGES {
            return Err(ProviderError::CapExceeded { page });
        }
        let q = format!(
            "{} language:{}",
            query.keywords().join(" "),
            query.language_filter
        );
        let url = format!(
            "{}/search/code?q={}&per_page={}&page={}",
            self.api_base,
            urlencode(&q),
            PAGE_SIZE,
            page
        );
        let resp = self
            .client
            .get(&url)
            .bearer_auth(&self.token)
            .header("Accept", "application/vnd.github+json")
            .send()
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        if resp.status().as_u16() == 403 || resp.status().as_u16() == 429 {
            let retry_after_ms = resp
                .headers()
                .get("retry-after")
                .and_then(|v| v.to_str().ok())
                .and_then(|v| v.parse::<u64>().ok())
                .map(|s| s * 1000)
                .unwrap_or(60_000);
            return Err(ProviderError::RateLimited { retry_after_ms });
        }
        let resp = resp
            .error_for_status()
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        let parsed: CodeSearchResponse = resp
            .json()
            .map_err(|e| ProviderError::Transport(e.to_string()))?;

        let mut hits = Vec::new();
        for item in parsed.items {
            let content = self.fetch_content(&item.url)?;
            if content.is_empty() {
                continue;
            }
            let last_commit = item
                .repository
                .pushed_at
                .as_deref()
                .and_then(|ts| ts.get(..10))
                .and_then(|d| NaiveDate::parse_from_str(d, "%Y-%m-%d").ok())
                .unwrap_or(NaiveDate::MIN);
            hits.push(SearchHit {
                repo_id: item.repository.full_name,
                file_path: item.path,
                file_url: item.html_url,
                content,
                stars: item.repository.stargazers_count,
                last_commit,
            });
        }
        Ok(SearchPage {
            total: parsed.total_count,
            hits,
        })
    }
}

impl GithubSearchProvider {
    fn fetch_content(&self, contents_url: &str) -> Result<String, ProviderError> {
        let resp = self
            .client
            .get(contents_url)
            .bearer_auth(&self.token)
            .header("Accept", "application/vnd.github+json")
            .send()
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        if !resp.status().is_success() {
            return Ok(String::new()); // download failure; candidate stays DISCOVERED
        }
        let parsed: ContentResponse = resp
            .json()
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        if parsed.encoding != "base64" {
            return Ok(String::new());
        }
        let joined: String = parsed.content.split_whitespace().collect();
        let bytes = base64_decode(&joined).unwrap_or_default();
        Ok(String::from_utf8_lossy(&bytes).into_owned())
    }
}

fn urlencode(s: &str) -> String {
    let mut out = String::new();
    for b in s.bytes() {
        match b {
            b'A'..=b'Z' | b'a'..=b'z' | b'0'..=b'9' | b'-' | b'_' | b'.' | b'~' => {
                out.push(b as char)
            }
            _ => out.push_str(&format!("%{b:02X}")),
        }
    }
    out
}

fn base64_decode(s: &str) -> Option<Vec<u8>> {
    const TABLE: &[u8; 64] = b"ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    let mut rev = [255u8; 256];
    for (i, &c) in TABLE.iter().enumerate() {
        rev[c as usize] = i as u8;
    }
    let clean: Vec<u8> = s.bytes().filter(|&b| b != b'=').collect();
    let mut out = Vec::with_capacity(clean.len() * 3 / 4);
    for chunk in clean.chunks(4) {
        let mut acc = 0u32;
        let mut bits = 0u32;
        for &c in chunk {
            let v = rev[c as usize];
            if v == 255 {
                return None;
            }
            acc = (acc << 6) | u32::from(v);
            bits += 6;
        }
        while bits >= 8 {
            bits -= 8;
            out.push((acc >> bits) as u8);
        }
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn base64_roundtrip() {
        assert_eq!(base64_decode("aGVsbG8=").unwrap(), b"hello");
        assert_eq!(base64_decode("aGVsbG8gd29ybGQ=").unwrap(), b"hello world");
    }

    #[test]
    fn urlencode_spaces_and_dots() {
        assert_eq!(urlencode("a b.c"), "a%20b.c");
    }
}
