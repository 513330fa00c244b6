//! In-memory search provider that faithfully emulates the real provider's
//! contract, including the 1,000-result cap, and records every query it
//! serves so tests can audit the miner's behavior.

use std::sync::Mutex;

use super::{
    ProviderError, SearchHit, SearchPage, SearchProvider, SearchQuery, MAX_PAGES, PAGE_SIZE,
    RESULT_CAP,
};

pub struct MockSearchProvider {
    docs: Vec<SearchHit>,
    state: Mutex<MockState>,
}

#[derive(Default)]
struct MockState {
    query_log: Vec<(Vec<String>, u32)>,
    /// Remaining number of requests to refuse with a rate-limit signal.
    rate_limit_budget: u32,
}

impl MockSearchProvider {
    pub fn new(docs: Vec<SearchHit>) -> Self {
        MockSearchProvider {
            docs,
            state: Mutex::new(MockState::default()),
        }
    }

    /// Index a corpus directory: one project per subdirectory, candidate
    /// file and repository metadata from `manifest.toml`.
    pub fn from_corpus_dir(root: &std::path::Path) -> Result<Self, ProviderError> {
        #[derive(serde::Deserialize)]
        struct Manifest {
            projects: std::collections::BTreeMap<String, Project>,
        }
        #[derive(serde::Deserialize)]
        struct Project {
            entry: String,
            stars: u32,
            last_commit: chrono::NaiveDate,
        }
        let manifest_path = root.join("manifest.toml");
        let text = std::fs::read_to_string(&manifest_path)
            .map_err(|e| ProviderError::Transport(format!("{}: {e}", manifest_path.display())))?;
        let manifest: Manifest = toml::from_str(&text)
            .map_err(|e| ProviderError::Transport(format!("manifest: {e}")))?;
        let mut docs = Vec::new();
        for (name, project) in manifest.projects {
            let file = root.join(&name).join(&project.entry);
            let content = std::fs::read_to_string(&file)
                .map_err(|e| ProviderError::Transport(format!("{}: {e}", file.display())))?;
            docs.push(SearchHit {
                repo_id: name.clone(),
                file_path: project.entry.clone(),
                file_url: format!("corpus://{name}/{}", project.entry),
                content,
                stars: project.stars,
                last_commit: project.last_commit,
            });
        }
        Ok(MockSearchProvider::new(docs))
    }

    /// Make the next `n` requests fail with a rate-limit signal.
    pub fn rate_limit_next(&self, n: u32) {
        self.state.lock().unwrap().rate_limit_budget = n;
    }

    /// Every (keywords, page) pair served, in order.
    pub fn query_log(&self) -> Vec<(Vec<String>, u32)> {
        self.state.lock().unwrap().query_log.clone()
    }

    pub fn doc_count(&self) -> usize {
        self.docs.len()
    }

    /// Keyword match mirrors the real provider's lexical index: a compound
    /// keyword like `http.createServer` matches when each of its word parts
    /// appears, in any position.
    fn matches(doc: &SearchHit, query: &SearchQuery) -> bool {
        let content = doc.content.to_lowercase();
        query.keywords().iter().all(|kw| {
            kw.to_lowercase()
                .split(|c: char| !c.is_ascii_alphanumeric() && c != '_' && c != '$')
                .filter(|part| !part.is_empty())
                .all(|part| content.contains(part))
        })
    }
}

impl SearchProvider for MockSearchProvider {
    fn search(&self, query: &SearchQuery, page: u32) -> Result<SearchPage, ProviderError> {
        assert!(page >= 1, "pages are 1-based");
        {
            let mut state = self.state.lock().unwrap();
            if state.rate_limit_budget > 0 {
                state.rate_limit_budget -= 1;
                return Err(ProviderError::RateLimited { retry_after_ms: 1 });
            }
            state.query_log.push((query.keywords().to_vec(), page));
        }
        if page > MAX_PAGES {
            return Err(ProviderError::CapExceeded { page });
        }
        let matching: Vec<&SearchHit> = self
            .docs
            .iter()
            .filter(|d| Self::matches(d, query))
            .collect();
        let total = matching.len() as u64;
        let retrievable = total.min(RESULT_CAP) as usize;
        let start = ((page - 1) as usize) * PAGE_SIZE;
        let end = (start + PAGE_SIZE).min(retrievable);
        let hits = if start >= retrievable {
            Vec::new()
        } else {
            matching[start..end].iter().map(|&h| h.clone()).collect()
        };
        Ok(SearchPage { total, hits })
    }
}

#[cfg(test)]
pub(crate) fn synthetic_doc(i: usize, extra_tokens: &[&str]) -> SearchHit {
    // every doc carries the base keywords; extra tokens distinguish subsets
    let content = format!(
        "var http = require('http');\nvar fs = require('fs');\nvar path = require('path');\n\
         // URL read helper {extras}\nhttp.createServer(function(q, s) {{ s.end('{i}'); }}).listen(0);\n",
        extras = extra_tokens.join(" "),
    );
    SearchHit {
        repo_id: format!("user{i}/repo{i}"),
        file_path: "server.js".into(),
        file_url: format!("mock://user{i}/repo{i}/server.js"),
        content,
        stars: (i % 50) as u32,
        last_commit: chrono::NaiveDate::from_ymd_opt(2024, 1, 1).unwrap(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn provider(n: usize) -> MockSearchProvider {
        MockSearchProvider::new((0..n).map(|i| synthetic_doc(i, &[])).collect())
    }

    #[test]
    fn under_cap_single_page() {
        let p = provider(37);
        let page = p.search(&SearchQuery::base_pattern(), 1).unwrap();
        assert_eq!(page.total, 37);
        assert_eq!(page.hits.len(), 37);
    }

    #[test]
    fn cap_enforced_at_ten_pages() {
        let p = provider(3500);
        let q = SearchQuery::base_pattern();
        let page10 = p.search(&q, 10).unwrap();
        assert_eq!(page10.total, 3500);
        assert_eq!(page10.hits.len(), 100);
        let err = p.search(&q, 11).unwrap_err();
        assert!(matches!(err, ProviderError::CapExceeded { page: 11 }));
    }

    #[test]
    fn zero_matches_is_empty_not_error() {
        let p = provider(5);
        let q = SearchQuery::new(["zebra_pattern_never_present"], "javascript");
        let page = p.search(&q, 1).unwrap();
        assert_eq!(page.total, 0);
        assert!(page.hits.is_empty());
    }

    #[test]
    fn rate_limit_injection() {
        let p = provider(5);
        p.rate_limit_next(1);
        let q = SearchQuery::base_pattern();
        assert!(matches!(
            p.search(&q, 1),
            Err(ProviderError::RateLimited { .. })
        ));
        assert!(p.search(&q, 1).is_ok());
    }

    #[test]
    fn refinement_monotonicity_on_mock() {
        // every doc a refined query returns contains all the query's keywords
        let docs: Vec<SearchHit> = (0..200)
            .map(|i| {
                synthetic_doc(
                    i,
                    if i % 2 == 0 {
                        &["mimetype"]
                    } else {
                        &["favicon"]
                    },
                )
            })
            .collect();
        let p = MockSearchProvider::new(docs);
        let refined = SearchQuery::base_pattern().refined("mimetype");
        let page = p.search(&refined, 1).unwrap();
        assert_eq!(page.total, 100);
        for hit in &page.hits {
            let lower = hit.content.to_lowercase();
            for kw in refined.keywords() {
                assert!(lower.contains(&kw.to_lowercase()));
            }
        }
    }
}
