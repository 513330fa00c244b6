//! Expansion-keyword ranking from downloaded documents.
//!
//! Ubiquitous tokens (`require`, `const`, …) appear in nearly every file
//! and cannot shrink a result set, so anything above the commonness ceiling
//! is dropped. Tokens too rare to be worth an API query are dropped against
//! the rarity floor using a one-page probe of the provider (memoized). The
//! underlying document-frequency ranking is pure and oracle-checkable.

use std::collections::{BTreeSet, HashMap};

use super::{KeywordStats, ProviderError, SearchHit, SearchProvider, SearchQuery};

/// Tokens present in more than this fraction of documents will not narrow
/// anything.
pub const COMMONNESS_CEILING: f64 = 0.8;
/// Keywords must promise at least this many provider results.
pub const RARITY_FLOOR: u64 = 100;
/// Probe budget per ranking call: only this many top-ranked tokens are
/// estimated against the provider.
pub const MAX_EXPANSION_PROBES: usize = 64;

/// Lowercased maximal runs of `[a-z0-9_$]`, length ≥ 3. Comments and string
/// contents count: the provider's index is just as lexical.
pub fn extract_tokens(content: &str) -> BTreeSet<String> {
    let lower = content.to_lowercase();
    let mut tokens = BTreeSet::new();
    let mut cur = String::new();
    for c in lower.chars() {
        if c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_' || c == '$' {
            cur.push(c);
        } else if !cur.is_empty() {
            if cur.len() >= 3 {
                tokens.insert(std::mem::take(&mut cur));
            } else {
                cur.clear();
            }
        }
    }
    if cur.len() >= 3 {
        tokens.insert(cur);
    }
    tokens
}

/// Document frequency of every token across `docs`, excluding tokens of the
/// base query, ordered by frequency descending with lexicographic
/// tie-breaks. Pure: same inputs, same output.
pub fn df_ranked_tokens(docs: &[SearchHit], base: &SearchQuery) -> Vec<(String, u32)> {
    let base_tokens: BTreeSet<String> = base
        .keywords()
        .iter()
        .flat_map(|kw| extract_tokens(kw))
        .collect();
    let mut df: HashMap<String, u32> = HashMap::new();
    for doc in docs {
        for token in extract_tokens(&doc.content) {
            if !base_tokens.contains(&token) {
                *df.entry(token).or_insert(0) += 1;
            }
        }
    }
    let mut ranked: Vec<(String, u32)> = df.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked
}

/// Estimates provider hits for `base ∪ {token}`.
pub trait HitEstimator {
    fn estimate(&mut self, base: &SearchQuery, token: &str) -> Result<u64, ProviderError>;
}

/// One-page probe against a live provider, memoized per refined query.
pub struct ProbeEstimator<'a> {
    provider: &'a dyn SearchProvider,
    memo: HashMap<String, u64>,
    pub probes_issued: u32,
}

impl<'a> ProbeEstimator<'a> {
    pub fn new(provider: &'a dyn SearchProvider) -> Self {
        ProbeEstimator {
            provider,
            memo: HashMap::new(),
            probes_issued: 0,
        }
    }
}

impl HitEstimator for ProbeEstimator<'_> {
    fn estimate(&mut self, base: &SearchQuery, token: &str) -> Result<u64, ProviderError> {
        let key = format!("{}|{}", base.keywords().join(","), token);
        if let Some(&hits) = self.memo.get(&key) {
            return Ok(hits);
        }
        let page = self.provider.search(&base.refined(token), 1)?;
        self.probes_issued += 1;
        self.memo.insert(key, page.total);
        Ok(page.total)
    }
}

/// Exact-count estimator for tests.
#[cfg(test)]
pub(crate) struct TableEstimator(pub HashMap<String, u64>);

#[cfg(test)]
impl HitEstimator for TableEstimator {
    fn estimate(&mut self, _base: &SearchQuery, token: &str) -> Result<u64, ProviderError> {
        Ok(self.0.get(token).copied().unwrap_or(0))
    }
}

/// The ranked, filtered expansion keyword list.
///
/// Deterministic given a deterministic estimator; with the provider-backed
/// estimator the result depends only on `(docs, base)` because probes are
/// memoized queries over the same corpus.
pub fn rank_expansion_keywords(
    docs: &[SearchHit],
    base: &SearchQuery,
    estimator: &mut dyn HitEstimator,
) -> Result<Vec<KeywordStats>, ProviderError> {
    if docs.is_empty() {
        return Ok(Vec::new());
    }
    let corpus_size = docs.len() as u32;
    let mut out = Vec::new();
    let mut probes = 0usize;
    for (token, df) in df_ranked_tokens(docs, base) {
        if probes >= MAX_EXPANSION_PROBES {
            break;
        }
        let df_ratio = f64::from(df) / f64::from(corpus_size);
        if df_ratio > COMMONNESS_CEILING {
            continue;
        }
        probes += 1;
        let est_hits = estimator.estimate(base, &token)?;
        if est_hits < RARITY_FLOOR {
            continue;
        }
        out.push(KeywordStats {
            token,
            doc_frequency: df,
            df_ratio,
            est_hits,
        });
    }
    Ok(out)
}
