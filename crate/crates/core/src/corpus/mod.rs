//! Candidate mining from a code-search provider.
//!
//! Code search providers cap results per query (1,000 — ten pages of one
//! hundred — no matter how many documents match). The miner works around
//! the cap by recursively narrowing queries with extra keywords mined from
//! already-downloaded documents: adding a keyword can only shrink the
//! result set, so the union over refined queries recovers most of what a
//! single capped query cannot return.

mod github;
mod keywords;
mod miner;
mod mock;

pub use github::GithubSearchProvider;
pub use keywords::{
    df_ranked_tokens, extract_tokens, rank_expansion_keywords, HitEstimator, ProbeEstimator,
    COMMONNESS_CEILING, MAX_EXPANSION_PROBES, RARITY_FLOOR,
};
pub use miner::{search_exhaustive, DedupStore, MinerConfig, MiningOutcome, Refinement};
pub use mock::MockSearchProvider;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Per-page hit limit the provider contract imposes.
pub const PAGE_SIZE: usize = 100;
/// Pages retrievable per query, no matter the total.
pub const MAX_PAGES: u32 = 10;
/// The hard result cap: `PAGE_SIZE * MAX_PAGES`.
pub const RESULT_CAP: u64 = (PAGE_SIZE as u64) * (MAX_PAGES as u64);

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("rate limited; retry after {retry_after_ms} ms")]
    RateLimited { retry_after_ms: u64 },
    #[error("cap exceeded: page {page} is beyond the provider limit of {MAX_PAGES} pages")]
    CapExceeded { page: u32 },
    #[error("transport: {0}")]
    Transport(String),
}

/// An ordered keyword set with a language tag.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SearchQuery {
    keywords: Vec<String>,
    pub language_filter: String,
}

impl SearchQuery {
    /// Panics on an empty set, duplicates, or degenerate keywords — those
    /// are construction bugs, not runtime conditions. The base tuple keeps
    /// the short module name `fs`; refinement keywords mined from content
    /// are always ≥ 3 characters (see [`extract_tokens`]).
    pub fn new<I, S>(keywords: I, language_filter: &str) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let keywords: Vec<String> = keywords.into_iter().map(Into::into).collect();
        assert!(!keywords.is_empty(), "query needs at least one keyword");
        for (i, kw) in keywords.iter().enumerate() {
            assert!(kw.len() >= 2, "keyword {kw:?} shorter than 2 chars");
            assert!(
                !keywords[..i].contains(kw),
                "duplicate keyword {kw:?} in query"
            );
        }
        SearchQuery {
            keywords,
            language_filter: language_filter.to_string(),
        }
    }

    /// The primary keyword tuple for the studied pattern.
    pub fn base_pattern() -> Self {
        SearchQuery::new(
            ["http.createServer", "fs", "read", "URL", "path"],
            "javascript",
        )
    }

    pub fn keywords(&self) -> &[String] {
        &self.keywords
    }

    pub fn contains(&self, keyword: &str) -> bool {
        self.keywords.iter().any(|k| k == keyword)
    }

    /// New query with one more keyword appended.
    pub fn refined(&self, keyword: &str) -> SearchQuery {
        assert!(
            keyword.len() >= 3,
            "refinement keyword {keyword:?} too short"
        );
        assert!(
            !self.contains(keyword),
            "refinement keyword already present"
        );
        let mut keywords = self.keywords.clone();
        keywords.push(keyword.to_string());
        SearchQuery {
            keywords,
            language_filter: self.language_filter.clone(),
        }
    }
}

/// One discovered file plus repository metadata.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchHit {
    pub repo_id: String,
    pub file_path: String,
    /// Canonical URL; the dedup key.
    pub file_url: String,
    pub content: String,
    pub stars: u32,
    pub last_commit: NaiveDate,
}

#[derive(Debug, Clone)]
pub struct SearchPage {
    /// Total matching documents (may exceed what is retrievable).
    pub total: u64,
    pub hits: Vec<SearchHit>,
}

/// Ranking statistic for one candidate expansion keyword.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeywordStats {
    pub token: String,
    pub doc_frequency: u32,
    /// `doc_frequency / corpus size`, in [0, 1].
    pub df_ratio: f64,
    /// Provider-estimated results for `base ∪ {token}`.
    pub est_hits: u64,
}

pub trait SearchProvider {
    /// `page` is 1-based; at most [`PAGE_SIZE`] hits come back per page and
    /// pages beyond [`MAX_PAGES`] are a [`ProviderError::CapExceeded`].
    fn search(&self, query: &SearchQuery, page: u32) -> Result<SearchPage, ProviderError>;
}
