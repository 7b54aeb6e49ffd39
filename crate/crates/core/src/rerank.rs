//! Greedy maximal-marginal-relevance re-ranking with pluggable similarity
//! kernels.
//!
//! At every step the engine picks, among the unselected candidates, the one
//! maximizing
//!
//! ```text
//! lambda * rel(i) + (1 - lambda) * gain(i, S)
//! gain(i, S) = -max_{s in S} sim(i, s)      (0 while S is empty)
//! ```
//!
//! Two kernels are provided:
//!
//! * [`Kernel::ClassicMmr`]: `sim(x, y) = -d(x, y)`, penalizing near duplicates.
//! * [`Kernel::Fmmr`]: `sim(x, y) = sum_v -|d(x, v) - d(y, v)|` over the
//!   fairness representations `v`. Two items are "similar" when they sit at
//!   the same distances from every group representation, so the gain favours
//!   items whose distance profile differs from everything already selected.
//!
//! Both kernels are non-positive, so `gain` is the minimum kernel distance
//! to the current selection. The engine caches that minimum per candidate
//! and updates it once per step, giving `O(k * n)` kernel evaluations.
//! Ties on the objective are broken by ascending id.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::catalog::Catalog;
use crate::distance::{distance, Metric};
use crate::error::{Error, Result};
use crate::representations::RepresentationSet;
use crate::retrieval::CandidatePool;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kernel {
    /// Negative pairwise distance.
    ClassicMmr,
    /// Negative L1 distance between distance profiles to the fairness
    /// representations.
    Fmmr,
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Kernel::ClassicMmr => "mmr",
            Kernel::Fmmr => "fmmr",
        })
    }
}

impl FromStr for Kernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mmr" | "classic_mmr" | "classic" => Ok(Kernel::ClassicMmr),
            "fmmr" => Ok(Kernel::Fmmr),
            other => Err(Error::InvalidParameter(alloc::format!("unknown kernel `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RerankConfig {
    pub lambda: f64,
    pub k: usize,
    pub kernel: Kernel,
    pub metric: Metric,
    /// Min-max normalize relevance and gain to `[0, 1]` per pool before
    /// combining them. Off by default: the raw scales are combined as is.
    pub normalize: bool,
}

impl RerankConfig {
    pub fn new(lambda: f64, k: usize, kernel: Kernel) -> Result<Self> {
        let config = Self { lambda, k, kernel, metric: Metric::Euclidean, normalize: false };
        config.validate()?;
        Ok(config)
    }

    pub fn with_metric(mut self, metric: Metric) -> Self {
        self.metric = metric;
        self
    }

    pub fn with_normalization(mut self, normalize: bool) -> Self {
        self.normalize = normalize;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::InvalidLambda(self.lambda));
        }
        if self.k == 0 {
            return Err(Error::InvalidParameter(String::from("k must be at least 1")));
        }
        Ok(())
    }
}

/// One selection step.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedEntry {
    pub id: String,
    /// Objective value at the step the item was selected.
    pub objective: f64,
    /// Relevance term as used in the objective.
    pub relevance: f64,
    /// Diversity (or fairness) gain term as used in the objective.
    pub diversity_gain: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedResult {
    pub entries: Vec<RankedEntry>,
    /// Set when `k` exceeded the pool size and the whole pool was returned.
    pub truncated: bool,
}

impl RankedResult {
    pub fn ids(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.id.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> core::slice::Iter<'_, RankedEntry> {
        self.entries.iter()
    }
}

fn check_reps(reps: &RepresentationSet, dim: usize) -> Result<()> {
    if reps.is_empty() {
        return Err(Error::EmptyRepresentations);
    }
    if reps.dimension() != dim {
        return Err(Error::DimensionMismatch {
            id: String::from("<representations>"),
            expected: dim,
            found: reps.dimension(),
        });
    }
    Ok(())
}

fn profile(x: &[f64], reps: &RepresentationSet, metric: Metric) -> Vec<f64> {
    reps.vectors().map(|v| metric.eval(x, v)).collect()
}

fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| libm::fabs(p - q)).sum()
}

/// Fairness similarity: `sum_v -|d(x, v) - d(y, v)|`. Always `<= 0`.
pub fn fsim(x: &[f64], y: &[f64], reps: &RepresentationSet, metric: Metric) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch { id: String::from("<vector>"), expected: x.len(), found: y.len() });
    }
    check_reps(reps, x.len())?;
    Ok(reps.vectors().map(|v| -libm::fabs(metric.eval(x, v) - metric.eval(y, v))).sum())
}

/// Classic similarity: the negative distance.
pub fn classic_sim(x: &[f64], y: &[f64], metric: Metric) -> Result<f64> {
    distance(x, y, metric).map(|d| -d)
}

/// Per-candidate features the kernel distance is computed from: the raw
/// vector for the classic kernel, the distance profile for FMMR.
struct KernelSpace {
    features: Vec<Vec<f64>>,
    kernel: Kernel,
    metric: Metric,
}

impl KernelSpace {
    /// `-sim(i, j)`, i.e. a non-negative kernel distance.
    fn dist(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (&self.features[i], &self.features[j]);
        match self.kernel {
            Kernel::ClassicMmr => self.metric.eval(a, b),
            Kernel::Fmmr => l1(a, b),
        }
    }

    fn max_pairwise(&self) -> f64 {
        let n = self.features.len();
        let mut max = 0.0f64;
        for i in 0..n {
            for j in i + 1..n {
                max = max.max(self.dist(i, j));
            }
        }
        max
    }
}

/// Re-ranks `pool` greedily. `reps` is required for [`Kernel::Fmmr`] and
/// ignored otherwise. If `k` exceeds the pool, the full pool is returned and
/// [`RankedResult::truncated`] is set.
pub fn rerank(
    pool: &CandidatePool,
    catalog: &Catalog,
    reps: Option<&RepresentationSet>,
    config: &RerankConfig,
) -> Result<RankedResult> {
    config.validate()?;
    if pool.is_empty() {
        return Err(Error::EmptyPool);
    }
    let candidates = pool.candidates();
    let vectors =
        candidates.iter().map(|c| catalog.item(&c.id).map(|it| it.vector.as_slice())).collect::<Result<Vec<_>>>()?;

    let features = match config.kernel {
        Kernel::ClassicMmr => vectors.iter().map(|v| v.to_vec()).collect(),
        Kernel::Fmmr => {
            let reps = reps.ok_or(Error::MissingRepresentations)?;
            check_reps(reps, catalog.dimension())?;
            vectors.iter().map(|v| profile(v, reps, config.metric)).collect()
        }
    };
    let space = KernelSpace { features, kernel: config.kernel, metric: config.metric };

    let mut relevance: Vec<f64> = candidates.iter().map(|c| c.relevance).collect();
    let mut gain_scale = 1.0;
    if config.normalize {
        let (lo, hi) = relevance.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &r| (lo.min(r), hi.max(r)));
        let span = hi - lo;
        for r in &mut relevance {
            *r = if span > 0.0 { (*r - lo) / span } else { 0.0 };
        }
        let max = space.max_pairwise();
        gain_scale = if max > 0.0 { 1.0 / max } else { 0.0 };
    }

    let n = candidates.len();
    let k = config.k.min(n);
    let lambda = config.lambda;
    let mut selected = alloc::vec![false; n];
    // Minimum kernel distance from each candidate to the current selection.
    let mut nearest = alloc::vec![f64::INFINITY; n];
    let mut entries = Vec::with_capacity(k);

    for step in 0..k {
        let mut best: Option<(usize, f64, f64)> = None;
        for i in (0..n).filter(|&i| !selected[i]) {
            let gain = if step == 0 { 0.0 } else { nearest[i] * gain_scale };
            let objective = lambda * relevance[i] + (1.0 - lambda) * gain;
            let better = match best {
                None => true,
                Some((b, obj, _)) => objective > obj || (objective == obj && candidates[i].id < candidates[b].id),
            };
            if better {
                best = Some((i, objective, gain));
            }
        }
        let (pick, objective, gain) = best.expect("at least one unselected candidate remains");
        selected[pick] = true;
        for i in (0..n).filter(|&i| !selected[i]) {
            let d = space.dist(i, pick);
            if d < nearest[i] {
                nearest[i] = d;
            }
        }
        entries.push(RankedEntry {
            id: candidates[pick].id.clone(),
            objective,
            relevance: relevance[pick],
            diversity_gain: gain,
        });
    }

    Ok(RankedResult { entries, truncated: config.k > n })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::GroupMapping;
    use crate::representations::FairnessRepresentation;
    use crate::retrieval::ScoredCandidate;
    use alloc::string::ToString;
    use alloc::vec;

    fn reps(vs: &[&[f64]]) -> RepresentationSet {
        RepresentationSet::new(
            vs.iter()
                .enumerate()
                .map(|(i, v)| FairnessRepresentation::external(alloc::format!("g{i}"), v.to_vec()))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn fsim_examples() {
        let r = reps(&[&[0.0, 0.0], &[2.0, 0.0]]);
        assert_eq!(fsim(&[0.0, 0.0], &[1.0, 0.0], &r, Metric::Euclidean).unwrap(), -2.0);
        assert_eq!(fsim(&[3.0, -1.0], &[3.0, -1.0], &r, Metric::Euclidean).unwrap(), 0.0);
        let origin = reps(&[&[0.0, 0.0]]);
        assert_eq!(fsim(&[1.0, 0.0], &[-1.0, 0.0], &origin, Metric::Euclidean).unwrap(), 0.0);
        assert!(fsim(&[1.0], &[1.0, 2.0], &r, Metric::Euclidean).is_err());
        assert!(matches!(fsim(&[1.0], &[2.0], &r, Metric::Euclidean), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn classic_sim_examples() {
        assert_eq!(classic_sim(&[0.0, 0.0], &[3.0, 4.0], Metric::Euclidean).unwrap(), -5.0);
        assert_eq!(classic_sim(&[1.5, 2.0], &[1.5, 2.0], Metric::Manhattan).unwrap(), 0.0);
        let chosen = [0.0, 0.0];
        let near = classic_sim(&chosen, &[1.0, 0.0], Metric::Euclidean).unwrap();
        let far = classic_sim(&chosen, &[9.0, 0.0], Metric::Euclidean).unwrap();
        assert!(near > far);
    }

    fn line_catalog() -> Catalog {
        // Query at the origin; a, b on the left, c, d on the right.
        Catalog::from_records(
            vec![
                ("a".to_string(), vec![-1.0, 0.0]),
                ("b".to_string(), vec![-1.2, 0.1]),
                ("c".to_string(), vec![2.0, 0.0]),
                ("d".to_string(), vec![2.5, 0.0]),
            ],
            Vec::<(String, Vec<&str>)>::new(),
            GroupMapping::new(["g0", "g1"], Vec::<(&str, &str)>::new()).unwrap(),
        )
        .unwrap()
    }

    fn pool_for(cat: &Catalog) -> CandidatePool {
        crate::retrieval::knn(cat, &[0.0, 0.0], 10, Metric::Euclidean, None).unwrap()
    }

    #[test]
    fn lambda_one_is_relevance_order() {
        let cat = line_catalog();
        let pool = pool_for(&cat);
        let r = reps(&[&[-1.0, 0.0], &[2.0, 0.0]]);
        for kernel in [Kernel::ClassicMmr, Kernel::Fmmr] {
            let cfg = RerankConfig::new(1.0, 3, kernel).unwrap();
            let out = rerank(&pool, &cat, Some(&r), &cfg).unwrap();
            assert_eq!(out.ids(), pool.top_ids(3));
            assert!(!out.truncated);
        }
    }

    #[test]
    fn low_lambda_diversifies() {
        let cat = line_catalog();
        let pool = pool_for(&cat);
        let cfg = RerankConfig::new(0.3, 2, Kernel::ClassicMmr).unwrap();
        let out = rerank(&pool, &cat, None, &cfg).unwrap();
        assert_eq!(out.ids(), ["a", "d"]);
        let r = reps(&[&[-1.0, 0.0], &[2.0, 0.0]]);
        let cfg = RerankConfig::new(0.3, 2, Kernel::Fmmr).unwrap();
        let out = rerank(&pool, &cat, Some(&r), &cfg).unwrap();
        // c and d are both 6 away from a in profile space; c is closer.
        assert_eq!(out.ids(), ["a", "c"]);
        assert_eq!(out.entries[1].diversity_gain, 6.0);
        for e in &out.entries {
            assert_eq!(e.objective, 0.3 * e.relevance + 0.7 * e.diversity_gain);
        }
        assert_eq!(out.entries[0].diversity_gain, 0.0);
    }

    #[test]
    fn oversized_k_is_flagged() {
        let cat = line_catalog();
        let pool = pool_for(&cat);
        let cfg = RerankConfig::new(0.5, 9, Kernel::ClassicMmr).unwrap();
        let out = rerank(&pool, &cat, None, &cfg).unwrap();
        assert_eq!(out.len(), 4);
        assert!(out.truncated);
    }

    #[test]
    fn errors() {
        let cat = line_catalog();
        let pool = pool_for(&cat);
        let cfg = RerankConfig::new(0.5, 2, Kernel::Fmmr).unwrap();
        assert_eq!(rerank(&pool, &cat, None, &cfg), Err(Error::MissingRepresentations));
        let wrong_dim = reps(&[&[0.0], &[1.0]]);
        assert!(matches!(rerank(&pool, &cat, Some(&wrong_dim), &cfg), Err(Error::DimensionMismatch { .. })));
        assert_eq!(RerankConfig::new(1.5, 2, Kernel::Fmmr), Err(Error::InvalidLambda(1.5)));
        assert!(RerankConfig::new(0.5, 0, Kernel::Fmmr).is_err());
        let empty = CandidatePool::new(None, vec![]).unwrap();
        assert_eq!(
            rerank(&empty, &cat, None, &RerankConfig::new(0.5, 1, Kernel::ClassicMmr).unwrap()),
            Err(Error::EmptyPool)
        );
        let unknown = CandidatePool::new(None, vec![ScoredCandidate::from_distance("zz", 1.0)]).unwrap();
        assert!(matches!(
            rerank(&unknown, &cat, None, &RerankConfig::new(0.5, 1, Kernel::ClassicMmr).unwrap()),
            Err(Error::UnknownItem(_))
        ));
    }

    #[test]
    fn normalized_terms_stay_in_unit_interval() {
        let cat = line_catalog();
        let pool = pool_for(&cat);
        let r = reps(&[&[-1.0, 0.0], &[2.0, 0.0]]);
        for kernel in [Kernel::ClassicMmr, Kernel::Fmmr] {
            let cfg = RerankConfig::new(0.4, 4, kernel).unwrap().with_normalization(true);
            let out = rerank(&pool, &cat, Some(&r), &cfg).unwrap();
            assert_eq!(out.entries[0].id, "a");
            assert_eq!(out.entries[0].relevance, 1.0);
            for e in &out.entries {
                assert!((0.0..=1.0).contains(&e.relevance));
                assert!((0.0..=1.0).contains(&e.diversity_gain));
            }
        }
    }

    #[test]
    fn kernel_names() {
        assert_eq!("mmr".parse::<Kernel>().unwrap(), Kernel::ClassicMmr);
        assert_eq!("FMMR".parse::<Kernel>().unwrap(), Kernel::Fmmr);
        assert_eq!(Kernel::Fmmr.to_string(), "fmmr");
        assert!("dpp".parse::<Kernel>().is_err());
    }
}
