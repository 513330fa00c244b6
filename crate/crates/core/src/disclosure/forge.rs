//! Forge abstraction: the in-memory mock for tests, a REST adapter for
//! production. Mass parallel disclosure reads as spam, so callers drive
//! these sequentially.

use std::collections::HashMap;
use std::sync::Mutex;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ForgeError {
    #[error("duplicate artifact; existing id {existing}")]
    Duplicate { existing: u64 },
    #[error("forge rejected the request: {0}")]
    Rejected(String),
    #[error("unknown repository {0}")]
    UnknownRepo(String),
    #[error("transport: {0}")]
    Transport(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrState {
    Open,
    Accepted,
    Closed,
}

pub trait Forge: Send {
    fn open_issue(&mut self, repo: &str, title: &str, body: &str) -> Result<u64, ForgeError>;
    fn open_pull_request(
        &mut self,
        repo: &str,
        branch: &str,
        diff: &str,
        body: &str,
    ) -> Result<u64, ForgeError>;
    /// File content at the default branch head; None when removed.
    fn fetch_file(&self, repo: &str, path: &str) -> Result<Option<String>, ForgeError>;
    fn pr_state(&self, repo: &str, pr_id: u64) -> Result<PrState, ForgeError>;
}

#[derive(Debug, Clone)]
pub struct IssueRecord {
    pub id: u64,
    pub repo: String,
    pub title: String,
    pub body: String,
}

#[derive(Debug, Clone)]
pub struct PrRecord {
    pub id: u64,
    pub repo: String,
    pub branch: String,
    pub diff: String,
    pub body: String,
    pub state: PrState,
}

#[derive(Default)]
struct MockState {
    repos: std::collections::HashSet<String>,
    files: HashMap<(String, String), String>,
    issues: Vec<IssueRecord>,
    prs: Vec<PrRecord>,
    next_id: u64,
}

/// In-memory forge with duplicate detection by (repo, title) for issues and
/// (repo, branch) for pull requests.
#[derive(Default)]
pub struct MockForge {
    state: Mutex<MockState>,
}

impl MockForge {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn seed_file(&self, repo: &str, path: &str, content: &str) {
        let mut state = self.state.lock().unwrap();
        state.repos.insert(repo.to_string());
        state
            .files
            .insert((repo.to_string(), path.to_string()), content.to_string());
    }

    /// Simulate a maintainer editing (or deleting) the file.
    pub fn update_file(&self, repo: &str, path: &str, content: Option<&str>) {
        let mut state = self.state.lock().unwrap();
        let key = (repo.to_string(), path.to_string());
        match content {
            Some(c) => {
                state.files.insert(key, c.to_string());
            }
            None => {
                state.files.remove(&key);
            }
        }
    }

    pub fn set_pr_state(&self, pr_id: u64, new_state: PrState) {
        let mut state = self.state.lock().unwrap();
        if let Some(pr) = state.prs.iter_mut().find(|p| p.id == pr_id) {
            pr.state = new_state;
        }
    }

    pub fn issues(&self) -> Vec<IssueRecord> {
        self.state.lock().unwrap().issues.clone()
    }

    pub fn prs(&self) -> Vec<PrRecord> {
        self.state.lock().unwrap().prs.clone()
    }
}

impl Forge for MockForge {
    fn open_issue(&mut self, repo: &str, title: &str, body: &str) -> Result<u64, ForgeError> {
        let mut state = self.state.lock().unwrap();
        if let Some(existing) = state
            .issues
            .iter()
            .find(|i| i.repo == repo && i.title == title)
        {
            return Err(ForgeError::Duplicate {
                existing: existing.id,
            });
        }
        state.next_id += 1;
        let id = state.next_id;
        state.issues.push(IssueRecord {
            id,
            repo: repo.to_string(),
            title: title.to_string(),
            body: body.to_string(),
        });
        Ok(id)
    }

    fn open_pull_request(
        &mut self,
        repo: &str,
        branch: &str,
        diff: &str,
        body: &str,
    ) -> Result<u64, ForgeError> {
        let mut state = self.state.lock().unwrap();
        if let Some(existing) = state
            .prs
            .iter()
            .find(|p| p.repo == repo && p.branch == branch)
        {
            return Err(ForgeError::Duplicate {
                existing: existing.id,
            });
        }
        state.next_id += 1;
        let id = state.next_id;
        state.prs.push(PrRecord {
            id,
            repo: repo.to_string(),
            branch: branch.to_string(),
            diff: diff.to_string(),
            body: body.to_string(),
            state: PrState::Open,
        });
        Ok(id)
    }

    fn fetch_file(&self, repo: &str, path: &str) -> Result<Option<String>, ForgeError> {
        let state = self.state.lock().unwrap();
        if !state.repos.contains(repo) {
            return Err(ForgeError::UnknownRepo(repo.to_string()));
        }
        Ok(state
            .files
            .get(&(repo.to_string(), path.to_string()))
            .cloned())
    }

    fn pr_state(&self, _repo: &str, pr_id: u64) -> Result<PrState, ForgeError> {
        let state = self.state.lock().unwrap();
        state
            .prs
            .iter()
            .find(|p| p.id == pr_id)
            .map(|p| p.state)
            .ok_or(ForgeError::Rejected(format!("no such pr {pr_id}")))
    }
}

/// REST adapter for the real forge. Fork + branch + commit + PR is driven
/// through the HTTP API; config-gated, never exercised by the test suite.
pub struct GithubForge {
    token: String,
    api_base: String,
    client: reqwest::blocking::Client,
}

impl GithubForge {
    pub fn from_env(token_env: &str) -> Result<Self, ForgeError> {
        let token = std::env::var(token_env)
            .map_err(|_| ForgeError::Transport(format!("{token_env} not set")))?;
        Ok(GithubForge {
            token,
            api_base: "https://api.github.com".into(),
            client: reqwest::blocking::Client::builder()
                .user_agent("patrol-disclosure")
                .build()
                .map_err(|e| ForgeError::Transport(e.to_string()))?,
        })
    }

    fn post(&self, url: &str, body: serde_json::Value) -> Result<serde_json::Value, ForgeError> {
        let resp = self
            .client
            .post(url)
            .bearer_auth(&self.token)
            .header("Accept", "application/vnd.github+json")
            .json(&body)
            .send()
            .map_err(|e| ForgeError::Transport(e.to_string()))?;
        if resp.status().as_u16() == 422 {
            return Err(ForgeError::Rejected(
                "validation failed (duplicate?)".into(),
            ));
        }
        let resp = resp
            .error_for_status()
            .map_err(|e| ForgeError::Transport(e.to_string()))?;
        resp.json()
            .map_err(|e| ForgeError::Transport(e.to_string()))
    }
}

impl Forge for GithubForge {
    fn open_issue(&mut self, repo: &str, title: &str, body: &str) -> Result<u64, ForgeError> {
        let url = format!("{}/repos/{repo}/issues", self.api_base);
        let resp = self.post(&url, serde_json::json!({ "title": title, "body": body }))?;
        resp["number"]
            .as_u64()
            .ok_or_else(|| ForgeError::Transport("no issue number in response".into()))
    }

    fn open_pull_request(
        &mut self,
        repo: &str,
        branch: &str,
        _diff: &str,
        body: &str,
    ) -> Result<u64, ForgeError> {
        // assumes the fork/branch/commit was pushed out of band by the
        // caller; this call only opens the PR itself
        let (owner, _) = repo
            .split_once('/')
            .ok_or_else(|| ForgeError::Rejected(format!("bad repo id {repo}")))?;
        let url = format!("{}/repos/{repo}/pulls", self.api_base);
        let resp = self.post(
            &url,
            serde_json::json!({
                "title": "Fix path handling in static file serving",
                "head": format!("{owner}:{branch}"),
                "base": "HEAD",
                "body": body,
            }),
        )?;
        resp["number"]
            .as_u64()
            .ok_or_else(|| ForgeError::Transport("no pr number in response".into()))
    }

    fn fetch_file(&self, repo: &str, path: &str) -> Result<Option<String>, ForgeError> {
        let url = format!("{}/repos/{repo}/contents/{path}", self.api_base);
        let resp = self
            .client
            .get(&url)
            .bearer_auth(&self.token)
            .header("Accept", "application/vnd.github.raw+json")
            .send()
            .map_err(|e| ForgeError::Transport(e.to_string()))?;
        if resp.status().as_u16() == 404 {
            return Ok(None);
        }
        let resp = resp
            .error_for_status()
            .map_err(|e| ForgeError::Transport(e.to_string()))?;
        resp.text()
            .map(Some)
            .map_err(|e| ForgeError::Transport(e.to_string()))
    }

    fn pr_state(&self, repo: &str, pr_id: u64) -> Result<PrState, ForgeError> {
        let url = format!("{}/repos/{repo}/pulls/{pr_id}", self.api_base);
        let resp = self
            .client
            .get(&url)
            .bearer_auth(&self.token)
            .header("Accept", "application/vnd.github+json")
            .send()
            .map_err(|e| ForgeError::Transport(e.to_string()))?
            .error_for_status()
            .map_err(|e| ForgeError::Transport(e.to_string()))?;
        let v: serde_json::Value = resp
            .json()
            .map_err(|e| ForgeError::Transport(e.to_string()))?;
        Ok(match (v["state"].as_str(), v["merged_at"].is_string()) {
            (_, true) => PrState::Accepted,
            (Some("closed"), false) => PrState::Closed,
            _ => PrState::Open,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mock_forge_duplicate_detection() {
        let mut forge = MockForge::new();
        forge.seed_file("u/r", "server.js", "content");
        let id = forge
            .open_issue("u/r", "Security disclosure request (x)", "body")
            .unwrap();
        let err = forge
            .open_issue("u/r", "Security disclosure request (x)", "body")
            .unwrap_err();
        assert!(matches!(err, ForgeError::Duplicate { existing } if existing == id));

        let pr = forge
            .open_pull_request("u/r", "fix-1", "diff", "body")
            .unwrap();
        assert!(matches!(
            forge.open_pull_request("u/r", "fix-1", "diff", "body"),
            Err(ForgeError::Duplicate { existing }) if existing == pr
        ));
        assert_eq!(forge.pr_state("u/r", pr).unwrap(), PrState::Open);
    }

    #[test]
    fn mock_forge_file_lifecycle() {
        let forge = MockForge::new();
        forge.seed_file("u/r", "a.js", "one");
        assert_eq!(forge.fetch_file("u/r", "a.js").unwrap().unwrap(), "one");
        forge.update_file("u/r", "a.js", Some("two"));
        assert_eq!(forge.fetch_file("u/r", "a.js").unwrap().unwrap(), "two");
        forge.update_file("u/r", "a.js", None);
        // removal reads back as absent, not as an error
        assert_eq!(forge.fetch_file("u/r", "a.js").unwrap(), None);
        assert!(forge.fetch_file("other/repo", "a.js").is_err());
    }
}
