//! Exact k-nearest-neighbour retrieval. Relevance is the negative distance
//! to the query.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::catalog::Catalog;
use crate::distance::Metric;
use crate::error::{Error, Result};

/// Default number of candidates handed to the re-ranker.
pub const DEFAULT_POOL_SIZE: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredCandidate {
    pub id: String,
    pub relevance: f64,
    pub distance: f64,
}

impl ScoredCandidate {
    pub fn from_distance(id: impl Into<String>, distance: f64) -> Self {
        Self { id: id.into(), relevance: -distance, distance }
    }
}

/// Relevance descending, then id ascending.
pub(crate) fn canonical_order(a: &ScoredCandidate, b: &ScoredCandidate) -> Ordering {
    b.relevance.total_cmp(&a.relevance).then_with(|| a.id.cmp(&b.id))
}

/// Relevance-ranked candidates for one query, in canonical order.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidatePool {
    query_id: Option<String>,
    candidates: Vec<ScoredCandidate>,
}

impl CandidatePool {
    /// Sorts `candidates` canonically and validates them. The input order is
    /// irrelevant.
    pub fn new(query_id: Option<String>, mut candidates: Vec<ScoredCandidate>) -> Result<Self> {
        for c in &candidates {
            if !c.relevance.is_finite() || !c.distance.is_finite() {
                return Err(Error::NonFinite { id: c.id.clone(), index: 0 });
            }
            if query_id.as_deref() == Some(c.id.as_str()) {
                return Err(Error::InvalidParameter(alloc::format!(
                    "query `{}` appears among its own candidates",
                    c.id
                )));
            }
        }
        candidates.sort_by(canonical_order);
        let mut ids: Vec<&str> = candidates.iter().map(|c| c.id.as_str()).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::DuplicateId(w[0].to_string()));
        }
        Ok(Self { query_id, candidates })
    }

    pub fn query_id(&self) -> Option<&str> {
        self.query_id.as_deref()
    }

    pub fn candidates(&self) -> &[ScoredCandidate] {
        &self.candidates
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> + '_ {
        self.candidates.iter().map(|c| c.id.as_str())
    }

    /// The first `k` candidates as a plain id list.
    pub fn top_ids(&self, k: usize) -> Vec<String> {
        self.ids().take(k).map(String::from).collect()
    }
}

/// Returns the `pool_size` items nearest to `query` (ties by id ascending),
/// skipping `exclude` if it is present in the catalog.
pub fn knn(
    catalog: &Catalog,
    query: &[f64],
    pool_size: usize,
    metric: Metric,
    exclude: Option<&str>,
) -> Result<CandidatePool> {
    if catalog.is_empty() {
        return Err(Error::EmptyCatalog);
    }
    if pool_size == 0 {
        return Err(Error::InvalidParameter(String::from("pool size must be at least 1")));
    }
    catalog.check_dimension(exclude.unwrap_or("<query>"), query)?;

    let mut scored: Vec<(f64, &str)> = catalog
        .iter()
        .filter(|it| Some(it.id.as_str()) != exclude)
        .map(|it| (metric.eval(query, &it.vector), it.id.as_str()))
        .collect();
    let by_distance = |a: &(f64, &str), b: &(f64, &str)| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1));
    if pool_size < scored.len() {
        scored.select_nth_unstable_by(pool_size - 1, by_distance);
        scored.truncate(pool_size);
    }
    scored.sort_unstable_by(by_distance);

    let query_id = exclude.filter(|id| catalog.get(id).is_some()).map(String::from);
    let candidates = scored.into_iter().map(|(d, id)| ScoredCandidate::from_distance(id, d)).collect();
    Ok(CandidatePool { query_id, candidates })
}

/// KNN for an in-catalog query item, excluding the item itself.
pub fn knn_for_item(catalog: &Catalog, id: &str, pool_size: usize, metric: Metric) -> Result<CandidatePool> {
    let item = catalog.item(id)?;
    knn(catalog, &item.vector, pool_size, metric, Some(id))
}
