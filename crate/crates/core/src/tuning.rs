//! Grid search for the trade-off parameter lambda.
//!
//! For one query, every grid lambda whose precision@k stays within a relative
//! degradation `d` of the unreranked (`lambda = 1`) precision is feasible;
//! among those the one with the best fairness wins, ties going to the larger
//! lambda. Per-query winners are averaged into one overall lambda.

use alloc::string::String;
use alloc::vec::Vec;

use crate::catalog::{Catalog, EmbeddingItem};
use crate::distance::Metric;
use crate::error::{Error, Result};
use crate::metrics::{self, evaluate_query, QueryEvaluation, DEFAULT_K};
use crate::representations::RepresentationSet;
use crate::rerank::{rerank, Kernel, RankedResult, RerankConfig};
use crate::retrieval::{knn, CandidatePool, DEFAULT_POOL_SIZE};

pub const DEFAULT_GRID_SIZE: usize = 50;
pub const DEFAULT_DEGRADATION: f64 = 0.25;

/// Slack for comparing precision against the degradation bound and for
/// fairness ties; metric values are ratios of small integers.
const EPS: f64 = 1e-12;

/// What "best fairness" means during tuning.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FairnessObjective {
    /// Minimize `|fr@k - 0.5|` for the ordered pair.
    Ratio { first: String, second: String },
    /// Maximize entropy@k over all declared groups.
    Entropy,
}

impl FairnessObjective {
    /// Ratio over the first two groups for a two-group mapping, entropy
    /// otherwise.
    pub fn for_catalog(catalog: &Catalog) -> Result<Self> {
        match catalog.mapping().groups() {
            [a, b] => Ok(FairnessObjective::Ratio { first: a.clone(), second: b.clone() }),
            gs if gs.len() > 2 => Ok(FairnessObjective::Entropy),
            _ => Err(Error::InvalidParameter(String::from("fairness needs at least two groups"))),
        }
    }

    /// The ordered group pair of a ratio objective.
    pub fn pair(&self) -> Option<(&str, &str)> {
        match self {
            FairnessObjective::Ratio { first, second } => Some((first, second)),
            FairnessObjective::Entropy => None,
        }
    }

    /// Lower is better; `None` when fairness is undefined.
    fn badness(&self, point: &CurvePoint) -> Option<f64> {
        match self {
            FairnessObjective::Ratio { .. } => point.fr_at_k.map(|fr| libm::fabs(fr - 0.5)),
            FairnessObjective::Entropy => point.entropy_at_k.map(|h| -h),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuningConfig {
    pub grid_size: usize,
    pub degradation: f64,
    pub k: usize,
    pub pool_size: usize,
    pub metric: Metric,
    pub normalize: bool,
    pub objective: FairnessObjective,
}

impl TuningConfig {
    /// Defaults: 50 grid points, `d = 0.25`, `k = 10`, pool of 50,
    /// Euclidean distance, raw score scales.
    pub fn new(objective: FairnessObjective) -> Self {
        Self {
            grid_size: DEFAULT_GRID_SIZE,
            degradation: DEFAULT_DEGRADATION,
            k: DEFAULT_K,
            pool_size: DEFAULT_POOL_SIZE,
            metric: Metric::Euclidean,
            normalize: false,
            objective,
        }
    }

    pub fn for_catalog(catalog: &Catalog) -> Result<Self> {
        FairnessObjective::for_catalog(catalog).map(Self::new)
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid_size == 0 || self.k == 0 || self.pool_size == 0 {
            return Err(Error::InvalidParameter(String::from("grid size, k and pool size must be at least 1")));
        }
        if !(0.0..=1.0).contains(&self.degradation) {
            return Err(Error::InvalidParameter(alloc::format!(
                "degradation ratio {} is outside [0, 1]",
                self.degradation
            )));
        }
        Ok(())
    }

    /// `grid_size` evenly spaced points in `[0, 1)`, starting at 0.
    pub fn grid(&self) -> Vec<f64> {
        (0..self.grid_size).map(|i| i as f64 / self.grid_size as f64).collect()
    }

    fn rerank_config(&self, lambda: f64, kernel: Kernel) -> Result<RerankConfig> {
        Ok(RerankConfig::new(lambda, self.k, kernel)?.with_metric(self.metric).with_normalization(self.normalize))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub lambda: f64,
    pub p_at_k: Option<f64>,
    pub fr_at_k: Option<f64>,
    pub entropy_at_k: Option<f64>,
}

impl CurvePoint {
    fn from_eval(lambda: f64, ev: &QueryEvaluation) -> Self {
        Self { lambda, p_at_k: ev.p_at_k, fr_at_k: ev.fr_at_k, entropy_at_k: ev.entropy_at_k }
    }
}

/// Outcome of the grid search for one query.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryTuning {
    pub query_id: String,
    pub lambda: f64,
    /// No grid point met the precision bound with a defined fairness value;
    /// `lambda` fell back to 1.
    pub constraint_binding: bool,
    pub baseline: CurvePoint,
    pub chosen: CurvePoint,
    pub curve: Vec<CurvePoint>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuningResult {
    pub per_query: Vec<QueryTuning>,
    /// Arithmetic mean of the per-query lambdas.
    pub overall_lambda: f64,
    /// Queries without tags, excluded from the average.
    pub skipped: Vec<String>,
}

impl TuningResult {
    /// Folds per-query outcomes; untagged queries are skipped, any other
    /// error is propagated.
    pub fn from_outcomes<I>(outcomes: I) -> Result<Self>
    where
        I: IntoIterator<Item = Result<QueryTuning>>,
    {
        let mut per_query = Vec::new();
        let mut skipped = Vec::new();
        for outcome in outcomes {
            match outcome {
                Ok(t) => per_query.push(t),
                Err(Error::UntaggedQuery(id)) => skipped.push(id),
                Err(e) => return Err(e),
            }
        }
        let lambdas: Vec<f64> = per_query.iter().map(|t| t.lambda).collect();
        let overall_lambda = metrics::mean(&lambdas).ok_or(Error::NoTunableQueries)?;
        Ok(Self { per_query, overall_lambda, skipped })
    }

    pub fn per_query_best_lambda(&self) -> alloc::collections::BTreeMap<String, f64> {
        self.per_query.iter().map(|t| (t.query_id.clone(), t.lambda)).collect()
    }

    pub fn constraint_binding_count(&self) -> usize {
        self.per_query.iter().filter(|t| t.constraint_binding).count()
    }
}

/// Candidate pool for an item used as a query; the item itself is excluded.
pub fn query_pool(query: &EmbeddingItem, catalog: &Catalog, pool_size: usize, metric: Metric) -> Result<CandidatePool> {
    knn(catalog, &query.vector, pool_size, metric, Some(&query.id))
}

/// Re-ranks a precomputed pool at `config` and evaluates the result.
pub fn evaluate_pool(
    query: &EmbeddingItem,
    pool: &CandidatePool,
    catalog: &Catalog,
    reps: Option<&RepresentationSet>,
    config: &RerankConfig,
    pair: Option<(&str, &str)>,
) -> Result<(RankedResult, QueryEvaluation)> {
    let ranked = rerank(pool, catalog, reps, config)?;
    let ids = ranked.ids();
    let eval = evaluate_query(query, &ids, catalog, config.k, pair)?;
    Ok((ranked, eval))
}

fn grid_search(
    query: &EmbeddingItem,
    pool: &CandidatePool,
    catalog: &Catalog,
    reps: Option<&RepresentationSet>,
    tuning: &TuningConfig,
    kernel: Kernel,
) -> Result<QueryTuning> {
    let pair = tuning.objective.pair();
    let point = |lambda: f64| -> Result<CurvePoint> {
        let cfg = tuning.rerank_config(lambda, kernel)?;
        let (_, ev) = evaluate_pool(query, pool, catalog, reps, &cfg, pair)?;
        Ok(CurvePoint::from_eval(lambda, &ev))
    };

    let baseline = point(1.0)?;
    let floor = match baseline.p_at_k {
        Some(p) => (1.0 - tuning.degradation) * p,
        None => return Err(Error::UntaggedQuery(query.id.clone())),
    };
    let curve = tuning.grid().into_iter().map(point).collect::<Result<Vec<_>>>()?;

    let scored: Vec<(f64, &CurvePoint)> = curve
        .iter()
        .filter(|pt| pt.p_at_k.is_some_and(|p| p >= floor - EPS))
        .filter_map(|pt| tuning.objective.badness(pt).map(|b| (b, pt)))
        .collect();
    let best = largest_lambda_within(&scored);
    let (lambda, chosen, constraint_binding) = match best {
        Some(pt) => (pt.lambda, *pt, false),
        None => (1.0, baseline, true),
    };
    Ok(QueryTuning { query_id: query.id.clone(), lambda, constraint_binding, baseline, chosen, curve })
}

/// Among `(badness, point)` pairs with ascending lambda, the last one whose
/// badness ties the minimum.
fn largest_lambda_within<'a, T>(scored: &[(f64, &'a T)]) -> Option<&'a T> {
    let min = scored.iter().map(|(b, _)| *b).fold(f64::INFINITY, f64::min);
    scored.iter().rev().find(|(b, _)| *b <= min + EPS).map(|(_, pt)| *pt)
}

/// Best grid lambda for one query under the degradation constraint.
pub fn best_lambda_for_query(
    query: &EmbeddingItem,
    catalog: &Catalog,
    reps: Option<&RepresentationSet>,
    tuning: &TuningConfig,
    kernel: Kernel,
) -> Result<QueryTuning> {
    tuning.validate()?;
    if query.tags.is_empty() {
        return Err(Error::UntaggedQuery(query.id.clone()));
    }
    let pool = query_pool(query, catalog, tuning.pool_size, tuning.metric)?;
    grid_search(query, &pool, catalog, reps, tuning, kernel)
}

/// Tunes every query and averages the per-query lambdas.
pub fn tune(
    queries: &[&EmbeddingItem],
    catalog: &Catalog,
    reps: Option<&RepresentationSet>,
    tuning: &TuningConfig,
    kernel: Kernel,
) -> Result<TuningResult> {
    tuning.validate()?;
    TuningResult::from_outcomes(queries.iter().map(|q| best_lambda_for_query(q, catalog, reps, tuning, kernel)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchedLambda {
    pub lambda: f64,
    /// Mean fr@k over the queries at `lambda`.
    pub mean_fr: f64,
}

/// Classic-MMR grid lambda whose mean fr@k over `queries` is closest to
/// `target_fr` (ties to the larger lambda).
pub fn matched_fairness_lambda(
    queries: &[&EmbeddingItem],
    catalog: &Catalog,
    tuning: &TuningConfig,
    target_fr: f64,
) -> Result<MatchedLambda> {
    tuning.validate()?;
    if !(0.0..=1.0).contains(&target_fr) {
        return Err(Error::InvalidParameter(alloc::format!("target fr {target_fr} is outside [0, 1]")));
    }
    let pair = tuning
        .objective
        .pair()
        .ok_or_else(|| Error::InvalidParameter(String::from("matching fairness needs a two-group ratio objective")))?;
    let pools =
        queries.iter().map(|q| query_pool(q, catalog, tuning.pool_size, tuning.metric)).collect::<Result<Vec<_>>>()?;

    let mut matches = Vec::with_capacity(tuning.grid_size);
    for lambda in tuning.grid() {
        let cfg = tuning.rerank_config(lambda, Kernel::ClassicMmr)?;
        let mut frs = Vec::with_capacity(queries.len());
        for (q, pool) in queries.iter().zip(&pools) {
            let (_, ev) = evaluate_pool(q, pool, catalog, None, &cfg, Some(pair))?;
            frs.extend(ev.fr_at_k);
        }
        if let Some(mean_fr) = metrics::mean(&frs) {
            matches.push(MatchedLambda { lambda, mean_fr });
        }
    }
    let scored: Vec<(f64, &MatchedLambda)> = matches.iter().map(|m| (libm::fabs(m.mean_fr - target_fr), m)).collect();
    let best = largest_lambda_within(&scored).copied();
    best.ok_or(Error::NoTunableQueries)
}
