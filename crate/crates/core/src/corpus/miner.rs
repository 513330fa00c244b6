//! Recursive cap-busting search with deduplicated registration.

use std::collections::HashSet;
use std::time::Duration;

use super::keywords::{rank_expansion_keywords, ProbeEstimator};
use super::{ProviderError, SearchHit, SearchProvider, SearchQuery, MAX_PAGES, RESULT_CAP};

#[derive(Debug, Clone)]
pub struct MinerConfig {
    /// Added keywords per branch; bounds the API budget.
    pub max_depth: u32,
    /// Retry attempts per page on rate-limit signals.
    pub max_retries: u32,
    /// First backoff delay; doubles per retry.
    pub retry_base: Duration,
    /// Hard stop on total queries issued.
    pub max_queries: u32,
}

impl Default for MinerConfig {
    fn default() -> Self {
        MinerConfig {
            max_depth: 6,
            max_retries: 5,
            retry_base: Duration::from_secs(1),
            max_queries: 2000,
        }
    }
}

impl MinerConfig {
    /// Millisecond backoff for tests.
    pub fn fast() -> Self {
        MinerConfig {
            retry_base: Duration::from_millis(1),
            ..MinerConfig::default()
        }
    }
}

/// File-URL registry; the single shared mutable state of the crawl.
#[derive(Debug, Default)]
pub struct DedupStore {
    seen: HashSet<String>,
}

impl DedupStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn preload<I: IntoIterator<Item = String>>(urls: I) -> Self {
        DedupStore {
            seen: urls.into_iter().collect(),
        }
    }

    /// True iff the URL was unseen; the URL is recorded either way.
    pub fn register(&mut self, file_url: &str) -> bool {
        self.seen.insert(file_url.to_string())
    }

    pub fn len(&self) -> usize {
        self.seen.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seen.is_empty()
    }
}

/// A refinement the miner actually issued, with the estimate that
/// justified it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Refinement {
    pub token: String,
    pub est_hits: u64,
    pub depth: u32,
}

#[derive(Debug, Default)]
pub struct MiningOutcome {
    pub candidates: Vec<SearchHit>,
    /// Documents known to exist but not reachable through any refinement.
    pub unreachable_remainder: u64,
    pub queries_issued: u32,
    pub refinements: Vec<Refinement>,
}

/// Union over the base query and every refined query, registered exactly
/// once per file URL.
pub fn search_exhaustive(
    provider: &dyn SearchProvider,
    base: &SearchQuery,
    store: &mut DedupStore,
    config: &MinerConfig,
) -> Result<MiningOutcome, ProviderError> {
    let mut outcome = MiningOutcome::default();
    let mut estimator = ProbeEstimator::new(provider);
    explore(
        provider,
        base,
        store,
        config,
        &mut outcome,
        &mut estimator,
        0,
    )?;
    outcome.queries_issued += estimator.probes_issued;
    Ok(outcome)
}

fn explore(
    provider: &dyn SearchProvider,
    query: &SearchQuery,
    store: &mut DedupStore,
    config: &MinerConfig,
    outcome: &mut MiningOutcome,
    estimator: &mut ProbeEstimator,
    depth: u32,
) -> Result<(), ProviderError> {
    let (total, docs) = match fetch_all_pages(provider, query, config, outcome) {
        Ok(ok) => ok,
        Err(e @ ProviderError::RateLimited { .. }) if depth > 0 => {
            // give up on this branch, siblings continue
            log::warn!("abandoning refined query after retries: {e}");
            return Ok(());
        }
        Err(e) => return Err(e),
    };
    for hit in &docs {
        if store.register(&hit.file_url) {
            outcome.candidates.push(hit.clone());
        }
    }
    if total <= RESULT_CAP {
        return Ok(());
    }
    if depth >= config.max_depth {
        log::warn!("depth cap at {depth}; {total} results remain under-covered");
        outcome.unreachable_remainder += total - docs.len() as u64;
        return Ok(());
    }
    let ranked = rank_expansion_keywords(&docs, query, estimator)?;
    if ranked.is_empty() {
        outcome.unreachable_remainder += total - docs.len() as u64;
        return Ok(());
    }
    for stats in &ranked {
        if outcome.queries_issued >= config.max_queries {
            log::warn!("query budget exhausted at {}", outcome.queries_issued);
            return Ok(());
        }
        outcome.refinements.push(Refinement {
            token: stats.token.clone(),
            est_hits: stats.est_hits,
            depth: depth + 1,
        });
        let refined = query.refined(&stats.token);
        explore(
            provider,
            &refined,
            store,
            config,
            outcome,
            estimator,
            depth + 1,
        )?;
    }
    Ok(())
}

/// Fetch up to the page cap, with exponential backoff per page.
fn fetch_all_pages(
    provider: &dyn SearchProvider,
    query: &SearchQuery,
    config: &MinerConfig,
    outcome: &mut MiningOutcome,
) -> Result<(u64, Vec<SearchHit>), ProviderError> {
    let mut docs = Vec::new();
    let mut total = 0u64;
    for page in 1..=MAX_PAGES {
        let result = fetch_page_with_retry(provider, query, page, config, outcome)?;
        total = result.0;
        let hits = result.1;
        let n = hits.len();
        docs.extend(hits);
        if docs.len() as u64 >= total.min(RESULT_CAP) || n == 0 {
            break;
        }
    }
    Ok((total, docs))
}

fn fetch_page_with_retry(
    provider: &dyn SearchProvider,
    query: &SearchQuery,
    page: u32,
    config: &MinerConfig,
    outcome: &mut MiningOutcome,
) -> Result<(u64, Vec<SearchHit>), ProviderError> {
    let mut delay = config.retry_base;
    let mut last_err = None;
    for attempt in 0..=config.max_retries {
        if attempt > 0 {
            std::thread::sleep(delay);
            delay *= 2;
        }
        outcome.queries_issued += 1;
        match provider.search(query, page) {
            Ok(result) => return Ok((result.total, result.hits)),
            Err(e @ ProviderError::RateLimited { .. }) => {
                log::debug!("rate limited on page {page}, attempt {attempt}");
                last_err = Some(e);
            }
            Err(e) => return Err(e),
        }
    }
    Err(last_err.unwrap_or(ProviderError::Transport("retries exhausted".into())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::mock::{synthetic_doc, MockSearchProvider};

    fn partitioned_corpus(n: usize, partitions: &[&str]) -> Vec<SearchHit> {
        // round-robin partition keyword so any capped window sees them all
        (0..n)
            .map(|i| synthetic_doc(i, &[partitions[i % partitions.len()]]))
            .collect()
    }

    #[test]
    fn under_cap_single_query() {
        let p = MockSearchProvider::new(partitioned_corpus(800, &["widget"]));
        let mut store = DedupStore::new();
        let outcome = search_exhaustive(
            &p,
            &SearchQuery::base_pattern(),
            &mut store,
            &MinerConfig::fast(),
        )
        .unwrap();
        assert_eq!(outcome.candidates.len(), 800);
        assert_eq!(outcome.unreachable_remainder, 0);
        assert!(outcome.refinements.is_empty());
    }

    #[test]
    fn cap_workaround_recovers_partitioned_corpus() {
        let partitions = ["mimetka", "favikon", "wwwroot", "statdir", "cachier"];
        let p = MockSearchProvider::new(partitioned_corpus(3500, &partitions));
        let mut store = DedupStore::new();
        let outcome = search_exhaustive(
            &p,
            &SearchQuery::base_pattern(),
            &mut store,
            &MinerConfig::fast(),
        )
        .unwrap();
        let recovered = outcome.candidates.len() as f64 / 3500.0;
        assert!(
            recovered >= 0.95,
            "only {recovered:.3} of the corpus recovered"
        );
        // every refinement promised enough hits
        assert!(outcome.refinements.iter().all(|r| r.est_hits >= 100));
        // never paged past the cap
        assert!(p.query_log().iter().all(|(_, page)| *page <= MAX_PAGES));

        // second run over the same store registers nothing new
        let second = search_exhaustive(
            &p,
            &SearchQuery::base_pattern(),
            &mut store,
            &MinerConfig::fast(),
        )
        .unwrap();
        assert_eq!(second.candidates.len(), 0);
    }

    #[test]
    fn dedup_register_semantics() {
        let mut store = DedupStore::new();
        assert!(store.register("mock://a/b/file.js"));
        assert!(!store.register("mock://a/b/file.js"));
        // same repo, different path is a different key
        assert!(store.register("mock://a/b/other.js"));
        assert_eq!(store.len(), 2);
    }

    #[test]
    fn rate_limit_retries_then_succeeds() {
        let p = MockSearchProvider::new(partitioned_corpus(50, &["widget"]));
        p.rate_limit_next(2);
        let mut store = DedupStore::new();
        let outcome = search_exhaustive(
            &p,
            &SearchQuery::base_pattern(),
            &mut store,
            &MinerConfig::fast(),
        )
        .unwrap();
        assert_eq!(outcome.candidates.len(), 50);
        assert!(outcome.queries_issued >= 3); // two refusals + one success
    }

    #[test]
    fn base_query_rate_limit_exhaustion_propagates() {
        let p = MockSearchProvider::new(partitioned_corpus(10, &["widget"]));
        p.rate_limit_next(1000);
        let mut store = DedupStore::new();
        let err = search_exhaustive(
            &p,
            &SearchQuery::base_pattern(),
            &mut store,
            &MinerConfig::fast(),
        )
        .unwrap_err();
        assert!(matches!(err, ProviderError::RateLimited { .. }));
    }

    #[test]
    fn unreachable_remainder_logged_when_no_refinement_exists() {
        // 1500 docs, but the only distinguishing tokens are unique per doc
        // (too rare) — nothing can partition the corpus. Delimited so no
        // token is a substring of another.
        let docs: Vec<SearchHit> = (0..1500)
            .map(|i| {
                let unique = format!("zq{i}zq");
                synthetic_doc(i, &[unique.as_str()])
            })
            .collect();
        let p = MockSearchProvider::new(docs);
        let mut store = DedupStore::new();
        let outcome = search_exhaustive(
            &p,
            &SearchQuery::base_pattern(),
            &mut store,
            &MinerConfig::fast(),
        )
        .unwrap();
        assert_eq!(outcome.candidates.len(), 1000); // the cap
        assert_eq!(outcome.unreachable_remainder, 500);
    }
}
